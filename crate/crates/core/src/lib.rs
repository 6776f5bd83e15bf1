//! Confidence maps for ultrasound B-mode images.
//!
//! Confidence starts at 1 on the transducer row and flows downward through
//! a layered directed graph: each pixel gathers a normally weighted share
//! of the confidence of the pixels above it, attenuated by how sharply the
//! image changes along each edge relative to the rest of the row, with
//! deeper edges counting less.
//!
//! - [`denoise`]: speckle-reducing anisotropic diffusion run before the
//!   weights are computed.
//! - [`confidence`]: the propagation itself (intensity confidence).
//! - [`artifact`]: needle and reverberation handling driven by
//!   externally supplied probability masks.
//! - [`structural`]: the ratio between an image's confidence and that of
//!   a structure-free phantom (structural confidence).
//! - [`compound`]: confidence-weighted fusion of two views.
//! - [`phantom`] and [`eval`]: synthetic scenes and the patch-median
//!   evaluation protocol.
//!
//! ```
//! use usconf::{propagate, ConfidenceConfig, ImageGrid, ValueDomain};
//!
//! let image = ImageGrid::filled(64, 64, 0.5, ValueDomain::Intensity).unwrap();
//! let conf = propagate(&image, &ConfidenceConfig::default(), None).unwrap();
//! assert_eq!(conf.get(0, 10), 1.0);
//! assert!(conf.get(63, 10) < 1.0);
//! ```

pub mod artifact;
pub mod compound;
pub mod confidence;
pub mod config;
pub mod denoise;
mod error;
pub mod eval;
mod grid;
pub mod io;
pub mod phantom;
pub mod pipeline;
pub mod structural;

pub use confidence::{propagate, StencilWeights};
pub use config::{CalibrationSign, ConfidenceConfig, DenoiseConfig, Q0Region};
pub use error::{Error, Result};
pub use grid::{ImageGrid, ProbMask, Rect, ValueDomain, MEMBERSHIP_THRESHOLD};
pub use structural::ReferenceMap;
