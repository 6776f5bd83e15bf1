//! Row-major scalar grids and the probability masks that travel with them.

use std::fmt;

use crate::error::{Error, Result};

/// Value range a grid promises to respect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueDomain {
    Intensity,
    Confidence,
    Probability,
    Unconstrained,
}

impl ValueDomain {
    pub fn is_unit_interval(self) -> bool {
        !matches!(self, ValueDomain::Unconstrained)
    }
}

/// Half-open rectangle `[row0, row1) x [col0, col1)` in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl Rect {
    pub fn new(row0: usize, col0: usize, row1: usize, col1: usize) -> Self {
        Rect { row0, col0, row1, col1 }
    }

    pub fn height(&self) -> usize {
        self.row1.saturating_sub(self.row0)
    }

    pub fn width(&self) -> usize {
        self.col1.saturating_sub(self.col0)
    }

    pub fn is_empty(&self) -> bool {
        self.height() == 0 || self.width() == 0
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.row0 <= self.row1 && self.col0 <= self.col1 && self.row1 <= height && self.col1 <= width
    }

    pub(crate) fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        if self.fits(height, width) && !self.is_empty() {
            Ok(())
        } else {
            Err(Error::RegionOutOfBounds {
                rect: *self,
                height,
                width,
            })
        }
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rows {}..{}, cols {}..{}",
            self.row0, self.row1, self.col0, self.col1
        )
    }
}

/// A validated `height x width` grid of `f64` samples stored row-major.
///
/// Construction checks the dimensions (both at least 2), rejects NaN and
/// infinities, and enforces `[0, 1]` for every domain except
/// [`ValueDomain::Unconstrained`]. Grids are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
    domain: ValueDomain,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, data: Vec<f64>, domain: ValueDomain) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::InvalidDimensions { height, width });
        }
        if data.len() != height * width {
            return Err(Error::BufferLength {
                expected: height * width,
                actual: data.len(),
            });
        }
        for (index, &value) in data.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if domain.is_unit_interval() && !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfDomain { index, value });
            }
        }
        Ok(ImageGrid {
            height,
            width,
            data,
            domain,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64, domain: ValueDomain) -> Result<Self> {
        Self::new(height, width, vec![value; height * width], domain)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        domain: ValueDomain,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self::new(height, width, data, domain)
    }

    /// Builds a grid from samples the caller has already produced in range.
    /// Values are clamped into the domain and non-finite values panic in
    /// debug builds; used by internal stages whose math guarantees validity.
    pub(crate) fn from_clamped(height: usize, width: usize, mut data: Vec<f64>, domain: ValueDomain) -> Self {
        debug_assert_eq!(data.len(), height * width);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        if domain.is_unit_interval() {
            for v in &mut data {
                *v = v.clamp(0.0, 1.0);
            }
        }
        ImageGrid {
            height,
            width,
            data,
            domain,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn domain(&self) -> ValueDomain {
        self.domain
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    /// Relabels the value domain, re-validating the samples.
    pub fn with_domain(self, domain: ValueDomain) -> Result<Self> {
        Self::new(self.height, self.width, self.data, domain)
    }

    pub fn map(&self, domain: ValueDomain, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
            domain,
        )
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Samples inside `rect`, row by row.
    pub fn region(&self, rect: &Rect) -> Result<Vec<f64>> {
        rect.check_bounds(self.height, self.width)?;
        let mut out = Vec::with_capacity(rect.height() * rect.width());
        for i in rect.row0..rect.row1 {
            out.extend_from_slice(&self.row(i)[rect.col0..rect.col1]);
        }
        Ok(out)
    }

    pub fn ensure_same_dims(&self, other: &ImageGrid) -> Result<()> {
        if self.dims() == other.dims() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            })
        }
    }

    /// Pixel-wise mean of several frames of identical size.
    pub fn mean_of(frames: &[ImageGrid]) -> Result<ImageGrid> {
        let first = frames
            .first()
            .ok_or_else(|| Error::param("frames", "at least one frame is required"))?;
        let mut acc = vec![0.0; first.data.len()];
        for frame in frames {
            first.ensure_same_dims(frame)?;
            for (a, v) in acc.iter_mut().zip(&frame.data) {
                *a += v;
            }
        }
        let n = frames.len() as f64;
        for a in &mut acc {
            *a /= n;
        }
        ImageGrid::new(first.height, first.width, acc, first.domain)
    }
}

/// Membership threshold applied to probabilities when a binary decision is needed.
pub const MEMBERSHIP_THRESHOLD: f64 = 0.5;

/// Per-pixel needle and reverberation-artifact probabilities.
///
/// A pixel carries a nonzero probability in at most one class: when both
/// inputs are positive the larger one is kept and the other zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMask {
    needle: ImageGrid,
    reverb: ImageGrid,
}

impl ProbMask {
    pub fn new(needle: ImageGrid, reverb: ImageGrid) -> Result<Self> {
        needle.ensure_same_dims(&reverb)?;
        let (h, w) = needle.dims();
        let mut n = needle.into_data();
        let mut r = reverb.into_data();
        for (a, b) in n.iter_mut().zip(r.iter_mut()) {
            if *a > 0.0 && *b > 0.0 {
                if *a >= *b {
                    *b = 0.0;
                } else {
                    *a = 0.0;
                }
            }
        }
        Ok(ProbMask {
            needle: ImageGrid::new(h, w, n, ValueDomain::Probability)?,
            reverb: ImageGrid::new(h, w, r, ValueDomain::Probability)?,
        })
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        let zero = ImageGrid::filled(height, width, 0.0, ValueDomain::Probability)?;
        Ok(ProbMask {
            needle: zero.clone(),
            reverb: zero,
        })
    }

    pub fn needle(&self) -> &ImageGrid {
        &self.needle
    }

    pub fn reverb(&self) -> &ImageGrid {
        &self.reverb
    }

    pub fn dims(&self) -> (usize, usize) {
        self.needle.dims()
    }

    pub fn is_needle(&self, row: usize, col: usize) -> bool {
        self.needle.get(row, col) > MEMBERSHIP_THRESHOLD
    }

    pub fn is_reverb(&self, row: usize, col: usize) -> bool {
        self.reverb.get(row, col) > MEMBERSHIP_THRESHOLD
    }

    pub fn ensure_matches(&self, image: &ImageGrid) -> Result<()> {
        image.ensure_same_dims(&self.needle)
    }
}
