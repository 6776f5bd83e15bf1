//! Confidence-weighted fusion of two co-registered views.

use crate::error::Result;
use crate::grid::{ImageGrid, ValueDomain};

/// `(ca * a + cb * b) / (ca + cb)` per pixel; the plain average where the
/// combined confidence is below `eps`.
pub fn fuse(
    img_a: &ImageGrid,
    conf_a: &ImageGrid,
    img_b: &ImageGrid,
    conf_b: &ImageGrid,
    eps: f64,
) -> Result<ImageGrid> {
    img_a.ensure_same_dims(conf_a)?;
    img_a.ensure_same_dims(img_b)?;
    img_a.ensure_same_dims(conf_b)?;
    let data = img_a
        .data()
        .iter()
        .zip(conf_a.data())
        .zip(img_b.data().iter().zip(conf_b.data()))
        .map(|((&a, &ca), (&b, &cb))| {
            let total = ca + cb;
            let v = if total < eps {
                (a + b) / 2.0
            } else {
                (ca * a + cb * b) / total
            };
            // rounding can step a hair outside the convex hull
            v.clamp(a.min(b), a.max(b))
        })
        .collect();
    Ok(ImageGrid::from_clamped(
        img_a.height(),
        img_a.width(),
        data,
        ValueDomain::Intensity,
    ))
}
