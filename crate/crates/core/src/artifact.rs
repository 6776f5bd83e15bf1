//! Needle and reverberation remodeling of the relative gradients, and the
//! final suppression of confidence on reverberation pixels.

use crate::confidence::RelativeGradientField;
use crate::error::Result;
use crate::grid::{ImageGrid, ProbMask, ValueDomain};

/// Needle pixels with at least one non-needle 4-neighbor. Positions
/// outside the image are not neighbors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeedleEdgeMap {
    height: usize,
    width: usize,
    edge: Vec<bool>,
}

impl NeedleEdgeMap {
    #[inline]
    pub fn is_edge(&self, row: usize, col: usize) -> bool {
        self.edge[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.edge.iter().filter(|&&e| e).count()
    }

    pub fn to_grid(&self) -> ImageGrid {
        ImageGrid::from_clamped(
            self.height,
            self.width,
            self.edge.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect(),
            ValueDomain::Probability,
        )
    }
}

pub fn needle_edge_map(mask: &ProbMask) -> NeedleEdgeMap {
    let (h, w) = mask.dims();
    let mut edge = vec![false; h * w];
    for i in 0..h {
        for j in 0..w {
            if !mask.is_needle(i, j) {
                continue;
            }
            edge[i * w + j] = (i > 0 && !mask.is_needle(i - 1, j))
                || (i + 1 < h && !mask.is_needle(i + 1, j))
                || (j > 0 && !mask.is_needle(i, j - 1))
                || (j + 1 < w && !mask.is_needle(i, j + 1));
        }
    }
    NeedleEdgeMap {
        height: h,
        width: w,
        edge,
    }
}

/// Rewrites the gradients leaving needle and reverberation pixels.
///
/// Needle edge pixels get the image's largest vertical gradient divided by
/// their row's mean vertical gradient (rows with a mean below `eps` fall
/// back to 1). Interior needle pixels and reverberation pixels get 1.
pub fn override_gradients(
    mut g: RelativeGradientField,
    image: &ImageGrid,
    mask: &ProbMask,
    edges: &NeedleEdgeMap,
    eps: f64,
) -> Result<RelativeGradientField> {
    mask.ensure_matches(image)?;
    let (h, a) = image.dims();
    let kk = g.kappa() as isize;

    let mut row_mean = vec![0.0; h - 1];
    let mut g_max: f64 = 0.0;
    for (i, mean) in row_mean.iter_mut().enumerate() {
        let (upper, lower) = (image.row(i), image.row(i + 1));
        let mut sum = 0.0;
        for k in 0..a {
            let diff = (lower[k] - upper[k]).abs();
            g_max = g_max.max(diff);
            sum += diff;
        }
        *mean = sum / a as f64;
    }

    for (i, &mean) in row_mean.iter().enumerate() {
        for j in 0..a {
            let value = if mask.is_needle(i, j) {
                if edges.is_edge(i, j) && mean >= eps {
                    g_max / mean
                } else {
                    1.0
                }
            } else if mask.is_reverb(i, j) {
                1.0
            } else {
                continue;
            };
            for d in -kk..=kk {
                if g.is_valid(j, d) {
                    g.set(i, j, d, value);
                }
            }
        }
    }
    Ok(g)
}

/// `C * (1 - reverb probability)` pointwise.
pub fn suppress_artifacts(conf: &ImageGrid, mask: &ProbMask) -> Result<ImageGrid> {
    mask.ensure_matches(conf)?;
    let data = conf
        .data()
        .iter()
        .zip(mask.reverb().data())
        .map(|(&c, &s)| c * (1.0 - s))
        .collect();
    Ok(ImageGrid::from_clamped(
        conf.height(),
        conf.width(),
        data,
        ValueDomain::Confidence,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::relative_gradient;

    fn mask_from(h: usize, w: usize, needle: &[(usize, usize)], reverb: &[(usize, usize)]) -> ProbMask {
        let mut n = vec![0.0; h * w];
        let mut r = vec![0.0; h * w];
        for &(i, j) in needle {
            n[i * w + j] = 1.0;
        }
        for &(i, j) in reverb {
            r[i * w + j] = 1.0;
        }
        ProbMask::new(
            ImageGrid::new(h, w, n, ValueDomain::Probability).unwrap(),
            ImageGrid::new(h, w, r, ValueDomain::Probability).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn empty_mask_no_edges() {
        let m = ProbMask::empty(5, 5).unwrap();
        assert_eq!(needle_edge_map(&m).count(), 0);
    }

    #[test]
    fn solid_block_border() {
        let block: Vec<_> = (1..4).flat_map(|i| (1..4).map(move |j| (i, j))).collect();
        let e = needle_edge_map(&mask_from(5, 5, &block, &[]));
        assert_eq!(e.count(), 8);
        assert!(!e.is_edge(2, 2));
        assert!(e.is_edge(1, 1) && e.is_edge(3, 2));
    }

    #[test]
    fn single_pixel_is_edge() {
        let e = needle_edge_map(&mask_from(4, 4, &[(2, 2)], &[]));
        assert!(e.is_edge(2, 2));
        assert_eq!(e.count(), 1);
        // a needle filling the whole image touches no outside pixel
        let all: Vec<_> = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).collect();
        assert_eq!(needle_edge_map(&mask_from(2, 2, &all, &[])).count(), 0);
    }

    #[test]
    fn no_mask_is_identity() {
        let img = ImageGrid::from_fn(6, 6, ValueDomain::Intensity, |i, j| ((i * 3 + j * 5) % 7) as f64 / 7.0).unwrap();
        let m = ProbMask::empty(6, 6).unwrap();
        let g = relative_gradient(&img, 1, None, 1e-6).unwrap();
        let out = override_gradients(g.clone(), &img, &m, &needle_edge_map(&m), 1e-6).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn reverb_pixel_gets_unit_gradient() {
        let mut data = vec![0.1; 36];
        data[2 * 6 + 3] = 1.0;
        let img = ImageGrid::new(6, 6, data, ValueDomain::Intensity).unwrap();
        let m = mask_from(6, 6, &[], &[(2, 3)]);
        let g = relative_gradient(&img, 1, None, 1e-6).unwrap();
        let out = override_gradients(g, &img, &m, &needle_edge_map(&m), 1e-6).unwrap();
        for d in -1..=1 {
            assert_eq!(out.get(2, 3, d), 1.0);
        }
    }

    #[test]
    fn needle_edge_gets_max_over_row_mean() {
        // 4 columns; rows 0->1 carry the image-wide max gradient 0.8, rows
        // 1->2 have diffs {0.4, 0, 0, 0} so their mean is 0.1.
        let img = ImageGrid::new(
            3,
            4,
            vec![0.0, 0.0, 0.0, 0.0, 0.8, 0.8, 0.8, 0.8, 0.4, 0.8, 0.8, 0.8],
            ValueDomain::Intensity,
        )
        .unwrap();
        let m = mask_from(3, 4, &[(1, 1)], &[]);
        let g = relative_gradient(&img, 0, None, 1e-6).unwrap();
        let out = override_gradients(g, &img, &m, &needle_edge_map(&m), 1e-6).unwrap();
        assert!((out.get(1, 1, 0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn needle_interior_gets_one() {
        let block: Vec<_> = (0..5).flat_map(|i| (0..3).map(move |j| (i, j + 1))).collect();
        let img = ImageGrid::from_fn(5, 5, ValueDomain::Intensity, |i, j| ((i + j) % 3) as f64 / 2.0).unwrap();
        let m = mask_from(5, 5, &block, &[]);
        let e = needle_edge_map(&m);
        assert!(!e.is_edge(2, 2));
        let g = relative_gradient(&img, 1, None, 1e-6).unwrap();
        let out = override_gradients(g, &img, &m, &e, 1e-6).unwrap();
        for d in -1..=1 {
            assert_eq!(out.get(2, 2, d), 1.0);
        }
    }

    #[test]
    fn suppression_examples() {
        let conf = ImageGrid::filled(2, 2, 0.6, ValueDomain::Confidence).unwrap();
        let reverb = ImageGrid::new(2, 2, vec![0.0, 0.5, 1.0, 0.0], ValueDomain::Probability).unwrap();
        let m = ProbMask::new(ImageGrid::filled(2, 2, 0.0, ValueDomain::Probability).unwrap(), reverb).unwrap();
        let out = suppress_artifacts(&conf, &m).unwrap();
        assert_eq!(out.get(0, 0), 0.6);
        assert!((out.get(0, 1) - 0.3).abs() < 1e-15);
        assert_eq!(out.get(1, 0), 0.0);
    }
}
