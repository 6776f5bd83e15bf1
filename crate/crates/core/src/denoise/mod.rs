//! Speckle-reducing anisotropic diffusion.
//!
//! Each iteration measures local homogeneity with the instantaneous
//! coefficient of variation `q`, slows diffusion where `q` exceeds the
//! speckle reference `q0` and further on Canny edges, takes one explicit
//! diffusion step, and then restores the original intensity histogram.

mod canny;
mod histogram;

pub use histogram::binned_cdf;

use crate::config::{DenoiseConfig, Q0Region};
use crate::error::{Error, Result};
use crate::grid::{ImageGrid, Rect, ValueDomain, MEMBERSHIP_THRESHOLD};

/// Floor applied to intensities before evaluating `q`.
pub const MIN_INTENSITY: f64 = 1.0 / 255.0;

/// Lower bound on the estimated `q0`; a perfectly flat window would
/// otherwise give zero.
pub const MIN_Q0: f64 = 1e-6;

/// Side of the square window searched by [`Q0Region::Auto`].
pub const AUTO_WINDOW: usize = 11;

/// Instantaneous coefficient of variation.
///
/// Central differences for the gradient, the 4-neighbor Laplacian, and
/// replicated borders. Samples are floored at [`MIN_INTENSITY`] and the
/// radicand at zero.
pub fn icov(image: &ImageGrid) -> ImageGrid {
    let (h, w) = image.dims();
    let px = |i: isize, j: isize| {
        let i = i.clamp(0, h as isize - 1) as usize;
        let j = j.clamp(0, w as isize - 1) as usize;
        image.get(i, j).max(MIN_INTENSITY)
    };
    let mut q = Vec::with_capacity(h * w);
    for i in 0..h as isize {
        for j in 0..w as isize {
            let c = px(i, j);
            let (n, s, e, wv) = (px(i - 1, j), px(i + 1, j), px(i, j + 1), px(i, j - 1));
            let gx = (e - wv) / 2.0;
            let gy = (s - n) / 2.0;
            let grad = (gx * gx + gy * gy).sqrt() / c;
            let lap = (n + s + e + wv - 4.0 * c) / c;
            let num = 0.5 * grad * grad - (1.0 / 16.0) * lap * lap;
            let den = (1.0 + 0.25 * lap).powi(2);
            q.push((num / den).max(0.0).sqrt());
        }
    }
    ImageGrid::from_clamped(h, w, q, ValueDomain::Unconstrained)
}

/// `1 / (1 + (q^2 - q0^2) / (q0^2 (1 + q0^2)))`, scaled by `c_canny` on
/// edge pixels and clamped to `[0, 1]`.
pub fn diffusion_coefficient(q: &ImageGrid, q0: f64, edge_mask: &ImageGrid, c_canny: f64) -> Result<ImageGrid> {
    if !(q0 > 0.0 && q0.is_finite()) {
        return Err(Error::param("q0", "must be finite and > 0"));
    }
    q.ensure_same_dims(edge_mask)?;
    let q0sq = q0 * q0;
    let scale = q0sq * (1.0 + q0sq);
    let data = q
        .data()
        .iter()
        .zip(edge_mask.data())
        .map(|(&qv, &e)| {
            let c = 1.0 / (1.0 + (qv * qv - q0sq) / scale);
            let c = if e > MEMBERSHIP_THRESHOLD { c * c_canny } else { c };
            c.clamp(0.0, 1.0)
        })
        .collect();
    Ok(ImageGrid::from_clamped(
        q.height(),
        q.width(),
        data,
        ValueDomain::Unconstrained,
    ))
}

/// Binary Canny edge map (1 on edges).
pub fn canny_edges(image: &ImageGrid, cfg: &DenoiseConfig) -> ImageGrid {
    let (h, w) = image.dims();
    let edges = canny::canny(image.data(), h, w, cfg.canny_sigma, cfg.canny_low, cfg.canny_high);
    ImageGrid::from_clamped(
        h,
        w,
        edges.into_iter().map(|e| if e { 1.0 } else { 0.0 }).collect(),
        ValueDomain::Probability,
    )
}

/// Mean of `q` over the region, or over the 11x11 window of least variance.
pub fn estimate_q0(q: &ImageGrid, region: &Q0Region) -> Result<f64> {
    let rect = match region {
        Q0Region::Rect(r) => {
            r.check_bounds(q.height(), q.width())?;
            *r
        }
        Q0Region::Auto => min_variance_window(q),
    };
    let vals = q.region(&rect)?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

fn min_variance_window(q: &ImageGrid) -> Rect {
    let (h, w) = q.dims();
    let (wh, ww) = (AUTO_WINDOW.min(h), AUTO_WINDOW.min(w));
    // summed-area tables of q and q^2
    let stride = w + 1;
    let mut s1 = vec![0.0; (h + 1) * stride];
    let mut s2 = vec![0.0; (h + 1) * stride];
    for i in 0..h {
        for j in 0..w {
            let v = q.get(i, j);
            let idx = (i + 1) * stride + j + 1;
            s1[idx] = v + s1[idx - 1] + s1[idx - stride] - s1[idx - stride - 1];
            s2[idx] = v * v + s2[idx - 1] + s2[idx - stride] - s2[idx - stride - 1];
        }
    }
    let n = (wh * ww) as f64;
    let mut best = (f64::INFINITY, Rect::new(0, 0, wh, ww));
    for r0 in 0..=h - wh {
        for c0 in 0..=w - ww {
            let (r1, c1) = (r0 + wh, c0 + ww);
            let sum = |s: &[f64]| s[r1 * stride + c1] - s[r0 * stride + c1] - s[r1 * stride + c0] + s[r0 * stride + c0];
            let mean = sum(&s1) / n;
            let var = sum(&s2) / n - mean * mean;
            if var < best.0 {
                best = (var, Rect::new(r0, c0, r1, c1));
            }
        }
    }
    best.1
}

/// One explicit step `I + dt * div(c grad I)` with zero-flux borders.
///
/// The flux between a pixel and its south/east neighbor uses the
/// neighbor's coefficient, the flux to the north/west uses the pixel's own.
/// With `c` in `[0, 1]` and `dt <= 0.25` every output is a convex
/// combination of the input neighborhood.
pub fn diffusion_step(image: &ImageGrid, c: &ImageGrid, dt: f64) -> Result<ImageGrid> {
    image.ensure_same_dims(c)?;
    let (h, w) = image.dims();
    let at = |g: &ImageGrid, i: usize, j: usize| g.get(i.min(h - 1), j.min(w - 1));
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let v = image.get(i, j);
            let cc = c.get(i, j);
            let north = if i > 0 { image.get(i - 1, j) } else { v };
            let west = if j > 0 { image.get(i, j - 1) } else { v };
            let south = at(image, i + 1, j);
            let east = at(image, i, j + 1);
            let div = at(c, i + 1, j) * (south - v) + cc * (north - v) + at(c, i, j + 1) * (east - v) + cc * (west - v);
            out.push(v + dt * div);
        }
    }
    Ok(ImageGrid::from_clamped(h, w, out, image.domain()))
}

/// Diffusion followed by histogram matching against the original input,
/// repeated `cfg.iterations` times.
pub fn denoise(image: &ImageGrid, cfg: &DenoiseConfig) -> Result<ImageGrid> {
    cfg.validate()?;
    if let Q0Region::Rect(r) = &cfg.q0_region {
        r.check_bounds(image.height(), image.width())?;
    }
    let (h, w) = image.dims();
    let original = image.data();
    let mut current = image.clone().with_domain(ValueDomain::Intensity)?;
    for t in 0..cfg.iterations {
        let q = icov(&current);
        let q0 = (estimate_q0(&q, &cfg.q0_region)? * (-cfg.q0_decay_rho * t as f64).exp()).max(MIN_Q0);
        let edges = canny_edges(&current, cfg);
        let c = diffusion_coefficient(&q, q0, &edges, cfg.c_canny)?;
        let diffused = diffusion_step(&current, &c, cfg.time_step)?;
        let matched = histogram::match_histogram(diffused.data(), original, cfg.histogram_bins);
        current = ImageGrid::from_clamped(h, w, matched, ValueDomain::Intensity);
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Eq-by-eq evaluation of `q` at one pixel from its 3x3 neighborhood,
    /// written out independently of [`icov`].
    fn q_at(nb: [[f64; 3]; 3]) -> f64 {
        let i = nb[1][1];
        let grad_sq = ((nb[1][2] - nb[1][0]) / 2.0).powi(2) + ((nb[2][1] - nb[0][1]) / 2.0).powi(2);
        let lap = nb[0][1] + nb[2][1] + nb[1][0] + nb[1][2] - 4.0 * i;
        let top = 0.5 * (grad_sq.sqrt() / i).powi(2) - (1.0 / 4.0f64.powi(2)) * (lap / i).powi(2);
        let bottom = (1.0 + 0.25 * (lap / i)).powi(2);
        (top / bottom).max(0.0).sqrt()
    }

    #[test]
    fn icov_constant_is_zero() {
        let img = ImageGrid::filled(6, 5, 0.4, ValueDomain::Intensity).unwrap();
        assert!(icov(&img).data().iter().all(|&q| q == 0.0));
    }

    #[test]
    fn icov_bright_pixel_matches_hand_evaluation() {
        let mut data = vec![0.5; 25];
        data[12] = 1.0;
        let img = ImageGrid::new(5, 5, data, ValueDomain::Intensity).unwrap();
        let q = icov(&img);
        // center: gradient 0, Laplacian -2 -> lap/I = -2
        // radicand = (0 - 4/16) / (1 - 0.5)^2 = -1 -> clamped, q = 0
        assert_eq!(q.get(2, 2), 0.0);
        assert_eq!(q.get(2, 2), q_at([[0.5, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 0.5]]));
        // north neighbor: gy = (1.0 - 0.5)/2 = 0.25, lap = 0.5
        let expected = q_at([[0.5, 0.5, 0.5], [0.5, 0.5, 0.5], [0.5, 1.0, 0.5]]);
        let grad: f64 = 0.25 / 0.5;
        let lap: f64 = 1.0;
        let hand = ((0.5 * grad * grad - lap * lap / 16.0) / (1.0 + 0.25 * lap).powi(2)).sqrt();
        assert!((expected - hand).abs() < 1e-15);
        assert!((q.get(1, 2) - hand).abs() < 1e-15);
    }

    #[test]
    fn icov_speckle_mean_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut draw = || {
            let n: f64 = StandardNormal.sample(&mut rng);
            (0.5 * (1.0 + 0.13 * n)).clamp(0.0, 1.0)
        };
        // oracle: i.i.d. 3x3 neighborhoods, 10^4 draws
        let mut oracle = 0.0;
        for _ in 0..10_000 {
            let mut nb = [[0.0; 3]; 3];
            for row in &mut nb {
                for v in row.iter_mut() {
                    *v = draw();
                }
            }
            oracle += q_at(nb);
        }
        oracle /= 10_000.0;

        let img = ImageGrid::from_fn(96, 96, ValueDomain::Intensity, |_, _| draw()).unwrap();
        let q = icov(&img);
        let interior = q.region(&Rect::new(1, 1, 95, 95)).unwrap();
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        let q0 = estimate_q0(&q, &Q0Region::Rect(Rect::new(1, 1, 95, 95))).unwrap();
        assert!((mean - oracle).abs() <= 0.2 * oracle, "mean {mean} oracle {oracle}");
        assert!((mean - q0).abs() <= 0.2 * q0);
    }

    #[test]
    fn diffusion_coefficient_examples() {
        let q0 = 0.25;
        let q = ImageGrid::new(2, 2, vec![q0, q0, 1e9, 0.0], ValueDomain::Unconstrained).unwrap();
        let edges = ImageGrid::new(2, 2, vec![0.0, 1.0, 0.0, 0.0], ValueDomain::Probability).unwrap();
        let c = diffusion_coefficient(&q, q0, &edges, 0.3).unwrap();
        assert!((c.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((c.get(0, 1) - 0.3).abs() < 1e-15);
        assert!(c.get(1, 0) < 1e-12);
        assert_eq!(c.get(1, 1), 1.0);
        assert!(diffusion_coefficient(&q, 0.0, &edges, 0.3).is_err());
    }

    fn step_image(h: usize, w: usize, at: usize, lo: f64, hi: f64) -> ImageGrid {
        ImageGrid::from_fn(h, w, ValueDomain::Intensity, |_, j| if j < at { lo } else { hi }).unwrap()
    }

    #[test]
    fn canny_constant_is_empty() {
        let img = ImageGrid::filled(16, 16, 0.3, ValueDomain::Intensity).unwrap();
        assert!(canny_edges(&img, &DenoiseConfig::default())
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn canny_step_gives_single_column() {
        let img = step_image(24, 32, 16, 0.25, 0.75);
        let e = canny_edges(&img, &DenoiseConfig::default());
        for i in 0..24 {
            let cols: Vec<usize> = (0..32).filter(|&j| e.get(i, j) == 1.0).collect();
            assert_eq!(cols, vec![15], "row {i}");
        }
    }

    #[test]
    fn canny_faint_step_is_dropped() {
        // strong step at column 8, faint one (below canny_low of the max) at 24
        let img = ImageGrid::from_fn(24, 32, ValueDomain::Intensity, |_, j| {
            if j < 8 {
                0.1
            } else if j < 24 {
                0.8
            } else {
                0.84
            }
        })
        .unwrap();
        let e = canny_edges(&img, &DenoiseConfig::default());
        for i in 0..24 {
            assert_eq!(e.get(i, 7), 1.0);
            for j in 16..32 {
                assert_eq!(e.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn zero_iterations_is_identity() {
        let img = step_image(12, 12, 5, 0.2, 0.6);
        let cfg = DenoiseConfig {
            iterations: 0,
            ..DenoiseConfig::default()
        };
        assert_eq!(denoise(&img, &cfg).unwrap(), img);
    }

    #[test]
    fn constant_is_fixed_point() {
        let img = ImageGrid::filled(20, 20, 0.37, ValueDomain::Intensity).unwrap();
        let out = denoise(&img, &DenoiseConfig::default()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn region_out_of_bounds() {
        let img = ImageGrid::filled(10, 10, 0.5, ValueDomain::Intensity).unwrap();
        let cfg = DenoiseConfig {
            q0_region: Q0Region::Rect(Rect::new(0, 0, 11, 5)),
            ..DenoiseConfig::default()
        };
        assert!(matches!(denoise(&img, &cfg), Err(Error::RegionOutOfBounds { .. })));
    }

    #[test]
    fn histogram_match_reproduces_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let template: Vec<f64> = (0..500)
            .map(|_| {
                let n: f64 = StandardNormal.sample(&mut rng);
                (0.4 + 0.1 * n).clamp(0.0, 1.0)
            })
            .collect();
        let source: Vec<f64> = template.iter().map(|v| (v * 0.5 + 0.2).sqrt()).collect();
        let out = histogram::match_histogram(&source, &template, 64);
        assert_eq!(binned_cdf(&out, 64), binned_cdf(&template, 64));
        // rank order of the source is preserved
        for a in 0..source.len() {
            for b in 0..source.len() {
                if source[a] < source[b] {
                    assert!(out[a] <= out[b]);
                }
            }
        }
    }

    #[test]
    fn diffusion_respects_maximum_principle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = ImageGrid::from_fn(20, 20, ValueDomain::Intensity, |_, _| {
            let n: f64 = StandardNormal.sample(&mut rng);
            (0.5 + 0.2 * n).clamp(0.0, 1.0)
        })
        .unwrap();
        let c = ImageGrid::from_fn(20, 20, ValueDomain::Unconstrained, |i, j| {
            ((i * 7 + j) % 5) as f64 / 4.0
        })
        .unwrap();
        let (lo, hi) = img.min_max();
        let out = diffusion_step(&img, &c, 0.25).unwrap();
        assert!(out.data().iter().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn denoise_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = ImageGrid::from_fn(24, 24, ValueDomain::Intensity, |_, j| {
            let n: f64 = StandardNormal.sample(&mut rng);
            ((if j < 12 { 0.3 } else { 0.7 }) * (1.0 + 0.13 * n)).clamp(0.0, 1.0)
        })
        .unwrap();
        let cfg = DenoiseConfig {
            iterations: 5,
            ..DenoiseConfig::default()
        };
        assert_eq!(denoise(&img, &cfg).unwrap(), denoise(&img, &cfg).unwrap());
    }
}
