//! Structural confidence: how much of the confidence a structure-free
//! medium would retain at each pixel actually survives in the image.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::confidence::{edge_weights, make_stencil, propagate, propagate_weights};
use crate::config::ConfidenceConfig;
use crate::error::{Error, Result};
use crate::grid::{ImageGrid, ProbMask, ValueDomain};
use crate::io;

/// Confidence map of an empty phantom and its per-row maxima.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMap {
    map: ImageGrid,
    row_max: Vec<f64>,
}

impl ReferenceMap {
    pub fn from_map(map: ImageGrid) -> Result<Self> {
        let map = map.with_domain(ValueDomain::Confidence)?;
        let row_max = (0..map.height())
            .map(|i| map.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        Ok(ReferenceMap { map, row_max })
    }

    pub fn map(&self) -> &ImageGrid {
        &self.map
    }

    pub fn row_max(&self) -> &[f64] {
        &self.row_max
    }

    pub fn height(&self) -> usize {
        self.map.height()
    }

    fn check_height(&self, image: &ImageGrid) -> Result<()> {
        if image.height() == self.height() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.map.dims(),
                actual: image.dims(),
            })
        }
    }

    /// Writes the map as `raw_f32` with one extra trailing row holding
    /// `row_max` (first `min(h, w)` entries, zero padded).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (h, w) = self.map.dims();
        let mut extra = vec![0.0; w];
        for (slot, &m) in extra.iter_mut().zip(&self.row_max) {
            *slot = m;
        }
        let write = || -> std::io::Result<()> {
            let mut out = BufWriter::new(File::create(path)?);
            io::write_raw_header(h + 1, w, &mut out)?;
            io::write_raw_samples(self.map.data(), &mut out)?;
            io::write_raw_samples(&extra, &mut out)?;
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    /// Reads a file written by [`ReferenceMap::save`]. The maxima are
    /// recomputed from the map and checked against the stored row.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (rows, w, mut data) = io::read_raw_f32_parts(path)?;
        if rows < 3 {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                reason: format!("reference file has {rows} rows; expected map rows plus one"),
            });
        }
        let h = rows - 1;
        let stored = data.split_off(h * w);
        let reference = ReferenceMap::from_map(ImageGrid::new(h, w, data, ValueDomain::Confidence)?)?;
        for (i, (&s, &m)) in stored.iter().zip(&reference.row_max).enumerate() {
            if s != m {
                return Err(Error::Decode {
                    path: path.to_path_buf(),
                    reason: format!("stored maximum of row {i} ({s}) disagrees with the map ({m})"),
                });
            }
        }
        Ok(reference)
    }
}

/// Propagates confidence through a structure-free phantom image.
pub fn build_reference(phantom: &ImageGrid, cfg: &ConfidenceConfig) -> Result<ReferenceMap> {
    ReferenceMap::from_map(propagate(phantom, cfg, None)?)
}

/// Intensity propagation in which every finished row is clipped to the
/// reference's maximum for that row before it feeds the next row.
pub fn propagate_truncated(
    image: &ImageGrid,
    reference: &ReferenceMap,
    cfg: &ConfidenceConfig,
    mask: Option<&ProbMask>,
) -> Result<ImageGrid> {
    reference.check_height(image)?;
    let weights = edge_weights(image, cfg, mask)?;
    let stencil = make_stencil(cfg.kappa, cfg.sigma)?;
    let top = vec![1.0; image.width()];
    let ceiling = reference.row_max();
    let data = propagate_weights(&weights, &stencil, &top, |i, row| {
        let cap = ceiling[i];
        for v in row.iter_mut() {
            if *v > cap {
                *v = cap;
            }
        }
    });
    Ok(ImageGrid::from_clamped(
        image.height(),
        image.width(),
        data,
        ValueDomain::Confidence,
    ))
}

/// `adjusted / reference` pointwise, clamped to `[0, 1]`.
pub fn structural_map(adjusted: &ImageGrid, reference: &ReferenceMap) -> Result<ImageGrid> {
    reference.map.ensure_same_dims(adjusted)?;
    let data = adjusted
        .data()
        .iter()
        .zip(reference.map.data())
        .map(|(&c, &r)| if r > 0.0 { (c / r).clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    Ok(ImageGrid::from_clamped(
        adjusted.height(),
        adjusted.width(),
        data,
        ValueDomain::Confidence,
    ))
}
