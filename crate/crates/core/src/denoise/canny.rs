//! Canny edge detection on `f64` grids with thresholds relative to the
//! strongest gradient.

use std::collections::VecDeque;

/// Separable Gaussian blur, radius `ceil(3 * sigma)`, replicated borders.
pub(crate) fn gaussian_blur(data: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                acc += k * data[i * w + clamp(j as isize + t as isize - radius, w)];
            }
            tmp[i * w + j] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                acc += k * tmp[clamp(i as isize + t as isize - radius, h) * w + j];
            }
            out[i * w + j] = acc;
        }
    }
    out
}

/// Sobel derivatives `(gx, gy)` with replicated borders.
fn sobel(data: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |i: isize, j: isize| {
        let i = i.clamp(0, h as isize - 1) as usize;
        let j = j.clamp(0, w as isize - 1) as usize;
        data[i * w + j]
    };
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let idx = i as usize * w + j as usize;
            gx[idx] = (at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i, j - 1) + at(i + 1, j - 1));
            gy[idx] = (at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i - 1, j) + at(i - 1, j + 1));
        }
    }
    (gx, gy)
}

/// Binary edge map (`true` on edges).
///
/// `low` and `high` are fractions of the largest gradient magnitude. Along
/// the gradient direction a pixel survives non-maximum suppression when it
/// beats its predecessor strictly and its successor or ties it, so a
/// symmetric ridge two pixels wide keeps exactly one of them.
pub(crate) fn canny(data: &[f64], h: usize, w: usize, sigma: f64, low: f64, high: f64) -> Vec<bool> {
    let blurred = gaussian_blur(data, h, w, sigma);
    let (gx, gy) = sobel(&blurred, h, w);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    let max = mag.iter().copied().fold(0.0, f64::max);
    let mut edges = vec![false; h * w];
    if max <= 0.0 {
        return edges;
    }
    let (low, high) = (low * max, high * max);

    let m = |i: isize, j: isize| {
        if i < 0 || j < 0 || i >= h as isize || j >= w as isize {
            0.0
        } else {
            mag[i as usize * w + j as usize]
        }
    };
    let mut thin = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let idx = i as usize * w + j as usize;
            let v = mag[idx];
            if v <= 0.0 {
                continue;
            }
            let mut angle = gy[idx].atan2(gx[idx]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            // (di, dj) points along the gradient
            let (di, dj) = if !(22.5..157.5).contains(&angle) {
                (0, 1)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (1, 0)
            } else {
                (1, -1)
            };
            let before = m(i - di, j - dj);
            let after = m(i + di, j + dj);
            if v > before && v >= after {
                thin[idx] = v;
            }
        }
    }

    let mut queue = VecDeque::new();
    for (idx, &v) in thin.iter().enumerate() {
        if v >= high && v > 0.0 {
            edges[idx] = true;
            queue.push_back(idx);
        }
    }
    while let Some(idx) = queue.pop_front() {
        let (i, j) = ((idx / w) as isize, (idx % w) as isize);
        for di in -1..=1 {
            for dj in -1..=1 {
                let (ni, nj) = (i + di, j + dj);
                if ni < 0 || nj < 0 || ni >= h as isize || nj >= w as isize {
                    continue;
                }
                let n = ni as usize * w + nj as usize;
                if !edges[n] && thin[n] >= low && thin[n] > 0.0 {
                    edges[n] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    edges
}
