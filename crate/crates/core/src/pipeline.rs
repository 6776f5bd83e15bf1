//! Stage compositions shared by the CLI and the evaluation harness.

use crate::artifact::suppress_artifacts;
use crate::confidence::propagate;
use crate::config::ConfidenceConfig;
use crate::denoise::denoise;
use crate::error::Result;
use crate::eval::{check_orderings, Margins, Report};
use crate::grid::{ImageGrid, ProbMask};
use crate::phantom::{generate, Phantom, PhantomSpec};
use crate::structural::{build_reference, propagate_truncated, structural_map, ReferenceMap};

/// Denoises unless `skip` is set or the iteration count is zero.
pub fn prepare(image: &ImageGrid, cfg: &ConfidenceConfig, skip: bool) -> Result<ImageGrid> {
    if skip || cfg.denoise.iterations == 0 {
        Ok(image.clone())
    } else {
        denoise(image, &cfg.denoise)
    }
}

/// Denoise, propagate, and (with a mask) suppress reverberation pixels.
pub fn intensity_confidence(
    image: &ImageGrid,
    cfg: &ConfidenceConfig,
    mask: Option<&ProbMask>,
    skip_denoise: bool,
) -> Result<ImageGrid> {
    let prepared = prepare(image, cfg, skip_denoise)?;
    let conf = propagate(&prepared, cfg, mask)?;
    match mask {
        Some(mask) => suppress_artifacts(&conf, mask),
        None => Ok(conf),
    }
}

/// Reference map from one or more frames of a structure-free phantom;
/// several frames are averaged first.
pub fn reference_from_frames(frames: &[ImageGrid], cfg: &ConfidenceConfig, skip_denoise: bool) -> Result<ReferenceMap> {
    let mean = ImageGrid::mean_of(frames)?;
    build_reference(&prepare(&mean, cfg, skip_denoise)?, cfg)
}

/// Denoise, truncated propagation against `reference`, then the ratio.
pub fn structural_confidence(
    image: &ImageGrid,
    reference: &ReferenceMap,
    cfg: &ConfidenceConfig,
    mask: Option<&ProbMask>,
    skip_denoise: bool,
) -> Result<ImageGrid> {
    let prepared = prepare(image, cfg, skip_denoise)?;
    let adjusted = propagate_truncated(&prepared, reference, cfg, mask)?;
    structural_map(&adjusted, reference)
}

/// The scene with every element removed and a different speckle seed:
/// an empty phantom imaged under the same settings.
pub fn empty_counterpart(spec: &PhantomSpec) -> PhantomSpec {
    PhantomSpec {
        elements: Vec::new(),
        seed: spec.seed.wrapping_add(1),
        ..spec.clone()
    }
}

#[derive(Debug, Clone)]
pub struct PhantomEvaluation {
    pub phantom: Phantom,
    pub intensity: ImageGrid,
    pub structural: ImageGrid,
    pub report: Report,
}

/// Full pipeline on a synthetic scene, using its ground-truth masks and
/// auto-generated patches, against a reference from its empty counterpart.
pub fn evaluate_phantom(spec: &PhantomSpec, cfg: &ConfidenceConfig, margins: Margins) -> Result<PhantomEvaluation> {
    let phantom = generate(spec)?;
    let empty = generate(&empty_counterpart(spec))?;
    let reference = reference_from_frames(&[empty.image], cfg, false)?;
    let intensity = intensity_confidence(&phantom.image, cfg, Some(&phantom.mask), false)?;
    let structural = structural_confidence(&phantom.image, &reference, cfg, Some(&phantom.mask), false)?;
    let report = check_orderings(&intensity, &structural, &phantom.patches, margins)?;
    Ok(PhantomEvaluation {
        phantom,
        intensity,
        structural,
        report,
    })
}
