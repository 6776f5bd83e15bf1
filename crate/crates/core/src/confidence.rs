//! Intensity confidence by top-down propagation over a layered directed graph.
//!
//! Every pixel of row `i + 1` collects confidence from the `2 * kappa + 1`
//! pixels above it. The edge from `(i, j + k)` down to `(i + 1, j)` has
//! lateral offset `d = -k` and carries the weight
//! `exp(-gamma * g(i, j + k, -k)^beta * exp(-alpha * (i + 1) / h))`, where
//! `g` is the gradient along that edge divided by the mean gradient of the
//! row pair in the same direction. The top row starts at 1.

use std::f64::consts::SQRT_2;

use crate::artifact;
use crate::config::{CalibrationSign, ConfidenceConfig};
use crate::error::{Error, Result};
use crate::grid::{ImageGrid, ProbMask, ValueDomain};

/// Standard normal cumulative distribution function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Discretized normal kernel spreading confidence laterally between rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilWeights {
    kappa: usize,
    weights: Vec<f64>,
}

impl StencilWeights {
    pub fn kappa(&self) -> usize {
        self.kappa
    }

    /// Weights for offsets `-kappa..=kappa`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, k: isize) -> f64 {
        self.weights[(k + self.kappa as isize) as usize]
    }

    pub fn taps(&self) -> usize {
        self.weights.len()
    }
}

/// Integrates the unit-width bins of `N(0, sigma^2)` for `|k| < kappa`
/// and splits the remaining mass evenly between the two outermost taps.
pub fn make_stencil(kappa: usize, sigma: f64) -> Result<StencilWeights> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", "must be finite and > 0"));
    }
    if kappa == 0 {
        return Ok(StencilWeights {
            kappa,
            weights: vec![1.0],
        });
    }
    let kk = kappa as isize;
    let mut weights = vec![0.0; 2 * kappa + 1];
    let mut inner = 0.0;
    for k in (1 - kk)..kk {
        let k = k as f64;
        let w = std_normal_cdf((k + 0.5) / sigma) - std_normal_cdf((k - 0.5) / sigma);
        weights[(k as isize + kk) as usize] = w;
        inner += w;
    }
    let tail = (1.0 - inner) / 2.0;
    weights[0] = tail;
    weights[2 * kappa] = tail;
    Ok(StencilWeights { kappa, weights })
}

/// Per-edge scalars `g(i, j, d)` for source row `i in 0..h-1`, source column
/// `j`, and lateral offset `d in -kappa..=kappa`.
///
/// Entries whose target column `j + d` falls outside the image are unused
/// and hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeGradientField {
    rows: usize,
    width: usize,
    kappa: usize,
    data: Vec<f64>,
}

impl RelativeGradientField {
    fn zeros(rows: usize, width: usize, kappa: usize) -> Self {
        RelativeGradientField {
            rows,
            width,
            kappa,
            data: vec![0.0; rows * width * (2 * kappa + 1)],
        }
    }

    /// Number of source rows (`h - 1`).
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn taps(&self) -> usize {
        2 * self.kappa + 1
    }

    #[inline]
    fn index(&self, i: usize, j: usize, d: isize) -> usize {
        (i * self.width + j) * self.taps() + (d + self.kappa as isize) as usize
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, d: isize) -> f64 {
        self.data[self.index(i, j, d)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, d: isize, value: f64) {
        let idx = self.index(i, j, d);
        self.data[idx] = value;
    }

    /// Whether `(j, d)` addresses a target column inside the image.
    #[inline]
    pub fn is_valid(&self, j: usize, d: isize) -> bool {
        let t = j as isize + d;
        t >= 0 && (t as usize) < self.width
    }

    /// All offsets for source row `i`, laid out `[j][d + kappa]`.
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.width * self.taps();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    fn map_in_place(&mut self, mut f: impl FnMut(usize, f64) -> f64) {
        let per_row = self.width * self.taps();
        for (idx, v) in self.data.iter_mut().enumerate() {
            *v = f(idx / per_row, *v);
        }
    }
}

/// Valid source columns `k` for offset `d`: both `k` and `k + d` in `[0, width)`.
#[inline]
fn column_range(width: usize, d: isize) -> std::ops::Range<usize> {
    if d >= 0 {
        0..width - d as usize
    } else {
        (-d) as usize..width
    }
}

/// Gradient along each edge divided by the mean gradient of its row pair and
/// direction.
///
/// With `exclude`, edges touching a pixel whose reverberation probability
/// exceeds 0.5 are left out of the mean. A mean below `eps` makes the whole
/// `(i, d)` slice neutral (`g = 1`).
pub fn relative_gradient(
    image: &ImageGrid,
    kappa: usize,
    exclude: Option<&ProbMask>,
    eps: f64,
) -> Result<RelativeGradientField> {
    let (h, a) = image.dims();
    if 2 * kappa + 1 > a {
        return Err(Error::StencilTooWide {
            stencil: 2 * kappa + 1,
            width: a,
        });
    }
    if let Some(mask) = exclude {
        mask.ensure_matches(image)?;
    }
    let mut field = RelativeGradientField::zeros(h - 1, a, kappa);
    let kk = kappa as isize;
    for i in 0..h - 1 {
        let upper = image.row(i);
        let lower = image.row(i + 1);
        for d in -kk..=kk {
            let cols = column_range(a, d);
            let mut sum = 0.0;
            let mut count = 0usize;
            for k in cols.clone() {
                let t = (k as isize + d) as usize;
                if let Some(mask) = exclude {
                    if mask.is_reverb(i, k) || mask.is_reverb(i + 1, t) {
                        continue;
                    }
                }
                sum += (lower[t] - upper[k]).abs();
                count += 1;
            }
            let mean = if count > 0 { sum / count as f64 } else { 0.0 };
            if mean < eps {
                for j in cols {
                    field.set(i, j, d, 1.0);
                }
            } else {
                for j in cols {
                    let t = (j as isize + d) as usize;
                    field.set(i, j, d, (lower[t] - upper[j]).abs() / mean);
                }
            }
        }
    }
    Ok(field)
}

/// `g' = g^beta * exp(-alpha * (i + 1) / h)` for every entry.
pub fn beer_lambert_adjust(mut g: RelativeGradientField, alpha: f64, beta: f64, h: usize) -> RelativeGradientField {
    let depth: Vec<f64> = (0..g.rows())
        .map(|i| (-alpha * (i + 1) as f64 / h as f64).exp())
        .collect();
    if beta == 1.0 {
        g.map_in_place(|i, v| v * depth[i]);
    } else {
        g.map_in_place(|i, v| v.powf(beta) * depth[i]);
    }
    g
}

/// Scale that maps the depth-weighted gradient sum onto `-ln(xi)`.
pub fn gamma_coefficient(alpha: f64, h: usize, xi: f64, sign: CalibrationSign) -> f64 {
    let hf = h as f64;
    let norm: f64 = match sign {
        CalibrationSign::AsPrinted => (1..=h).map(|i| (alpha * i as f64 / hf).exp()).sum(),
        CalibrationSign::Consistent => (1..h).map(|m| (-alpha * m as f64 / hf).exp()).sum(),
    };
    -xi.ln() / norm
}

#[inline]
pub fn edge_weight(g_adj: f64, gamma: f64) -> f64 {
    (-gamma * g_adj).exp()
}

/// Edge weights `w(i, j, d)` for an image: relative gradient, artifact
/// overrides when a mask is given, depth adjustment, exponential weighting.
pub fn edge_weights(
    image: &ImageGrid,
    cfg: &ConfidenceConfig,
    mask: Option<&ProbMask>,
) -> Result<RelativeGradientField> {
    cfg.validate()?;
    cfg.check_width(image.width())?;
    let mut g = relative_gradient(image, cfg.kappa, mask, cfg.epsilon_mean)?;
    if let Some(mask) = mask {
        let edges = artifact::needle_edge_map(mask);
        g = artifact::override_gradients(g, image, mask, &edges, cfg.epsilon_mean)?;
    }
    let h = image.height();
    let mut w = beer_lambert_adjust(g, cfg.alpha, cfg.beta, h);
    let gamma = gamma_coefficient(cfg.alpha, h, cfg.xi, cfg.calibration_sign);
    w.map_in_place(|_, v| edge_weight(v, gamma));
    Ok(w)
}

/// Runs the row recursion over precomputed edge weights.
///
/// `top` seeds row 0. After each row is complete (row 0 included),
/// `after_row(i, row)` may rewrite it before it feeds the next row. Stencil
/// taps that fall outside the image are dropped and the surviving weights
/// renormalized to sum to one.
pub fn propagate_weights(
    weights: &RelativeGradientField,
    stencil: &StencilWeights,
    top: &[f64],
    mut after_row: impl FnMut(usize, &mut [f64]),
) -> Vec<f64> {
    let a = weights.width();
    let h = weights.rows() + 1;
    let kappa = stencil.kappa();
    assert_eq!(weights.kappa(), kappa, "stencil and weight field disagree on kappa");
    assert_eq!(top.len(), a, "seed row width");
    let taps = 2 * kappa + 1;
    let psi = stencil.weights();

    // Per-column stencil, renormalized where taps leave the image.
    let mut col_psi = vec![0.0; a * taps];
    for j in 0..a {
        let lo = kappa.saturating_sub(j);
        let hi = (taps - 1).min(kappa + a - 1 - j);
        let total: f64 = psi[lo..=hi].iter().sum();
        let interior = lo == 0 && hi == taps - 1;
        for t in lo..=hi {
            col_psi[j * taps + t] = if interior { psi[t] } else { psi[t] / total };
        }
    }

    let mut out = vec![0.0; h * a];
    out[..a].copy_from_slice(top);
    after_row(0, &mut out[..a]);
    for i in 0..h - 1 {
        let (done, rest) = out.split_at_mut((i + 1) * a);
        let prev = &done[i * a..];
        let next = &mut rest[..a];
        let wrow = weights.row(i);
        for (j, slot) in next.iter_mut().enumerate() {
            let lo = kappa.saturating_sub(j);
            let hi = (taps - 1).min(kappa + a - 1 - j);
            let coeffs = &col_psi[j * taps..(j + 1) * taps];
            let mut acc = 0.0;
            for t in lo..=hi {
                // tap t reads source column j + k with k = t - kappa; the edge
                // from there to column j has offset d = -k, stored at slot
                // d + kappa = taps - 1 - t.
                let src = j + t - kappa;
                acc += coeffs[t] * wrow[src * taps + (taps - 1 - t)] * prev[src];
            }
            *slot = acc;
        }
        after_row(i + 1, next);
    }
    out
}

/// Intensity confidence map of `image`.
///
/// With `mask`, the relative gradients are remodeled for needle and
/// reverberation pixels before weighting; the final artifact suppression is
/// a separate step (see [`crate::artifact::suppress_artifacts`]).
pub fn propagate(image: &ImageGrid, cfg: &ConfidenceConfig, mask: Option<&ProbMask>) -> Result<ImageGrid> {
    let weights = edge_weights(image, cfg, mask)?;
    let stencil = make_stencil(cfg.kappa, cfg.sigma)?;
    let top = vec![1.0; image.width()];
    let data = propagate_weights(&weights, &stencil, &top, |_, _| {});
    Ok(ImageGrid::from_clamped(
        image.height(),
        image.width(),
        data,
        ValueDomain::Confidence,
    ))
}
