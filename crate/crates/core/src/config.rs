//! Tunables for the denoising and propagation stages, plus the plain-text
//! `key = value` file format used by the CLI.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::Rect;

/// How the calibration constant `gamma` normalizes the depth factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationSign {
    /// Normalizer sums `exp(+alpha * i / h)` for `i = 1..=h`.
    AsPrinted,
    /// Normalizer sums `exp(-alpha * i / h)` over exactly the row transitions
    /// the propagation applies, so a homogeneous image ends at `xi`.
    Consistent,
}

impl FromStr for CalibrationSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_printed" => Ok(CalibrationSign::AsPrinted),
            "consistent" => Ok(CalibrationSign::Consistent),
            other => Err(Error::param(
                "calibration_sign",
                format!("`{other}` is not one of as_printed, consistent"),
            )),
        }
    }
}

/// Where the reference coefficient of variation `q0` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Q0Region {
    /// The 11x11 window with the smallest variance of `q`.
    Auto,
    Rect(Rect),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseConfig {
    pub iterations: usize,
    pub time_step: f64,
    pub q0_region: Q0Region,
    pub q0_decay_rho: f64,
    pub canny_low: f64,
    pub canny_high: f64,
    pub canny_sigma: f64,
    pub c_canny: f64,
    pub histogram_bins: usize,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            iterations: 20,
            time_step: 0.1,
            q0_region: Q0Region::Auto,
            q0_decay_rho: 0.05,
            canny_low: 0.1,
            canny_high: 0.25,
            canny_sigma: 1.4,
            c_canny: 0.3,
            histogram_bins: 256,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_step > 0.0 && self.time_step <= 0.25) {
            return Err(Error::param("time_step", "must lie in (0, 0.25]"));
        }
        if !(self.q0_decay_rho >= 0.0 && self.q0_decay_rho.is_finite()) {
            return Err(Error::param("q0_decay_rho", "must be finite and >= 0"));
        }
        for (name, v) in [("canny_low", self.canny_low), ("canny_high", self.canny_high)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, "must lie in [0, 1]"));
            }
        }
        if self.canny_low > self.canny_high {
            return Err(Error::param("canny_low", "must not exceed canny_high"));
        }
        if !(self.canny_sigma > 0.0 && self.canny_sigma.is_finite()) {
            return Err(Error::param("canny_sigma", "must be finite and > 0"));
        }
        if !(self.c_canny > 0.0 && self.c_canny <= 1.0) {
            return Err(Error::param("c_canny", "must lie in (0, 1]"));
        }
        if self.histogram_bins < 2 {
            return Err(Error::param("histogram_bins", "must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceConfig {
    /// Attenuation coefficient.
    pub alpha: f64,
    /// Exponent applied to the relative gradient.
    pub beta: f64,
    /// Stencil half-width.
    pub kappa: usize,
    /// Spread of the lateral stencil.
    pub sigma: f64,
    /// Target bottom-row confidence of a homogeneous image.
    pub xi: f64,
    pub calibration_sign: CalibrationSign,
    /// Row means below this are treated as degenerate.
    pub epsilon_mean: f64,
    pub denoise: DenoiseConfig,
}

impl Default for ConfidenceConfig {
    fn default() -> Self {
        ConfidenceConfig {
            alpha: 2.0,
            beta: 1.0,
            kappa: 2,
            sigma: 1.0,
            xi: 0.1,
            calibration_sign: CalibrationSign::AsPrinted,
            epsilon_mean: 1e-6,
            denoise: DenoiseConfig::default(),
        }
    }
}

impl ConfidenceConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, "must be finite and > 0"))
            }
        };
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("sigma", self.sigma)?;
        positive("epsilon_mean", self.epsilon_mean)?;
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::param("xi", "must lie in (0, 1)"));
        }
        self.denoise.validate()
    }

    /// Fails when the stencil `2 * kappa + 1` is wider than `width`.
    pub fn check_width(&self, width: usize) -> Result<()> {
        let stencil = 2 * self.kappa + 1;
        if stencil > width {
            Err(Error::StencilTooWide { stencil, width })
        } else {
            Ok(())
        }
    }

    /// Parses a config file. Every line is blank, a `#` comment, or
    /// `key = value` naming a field of this struct or of [`DenoiseConfig`];
    /// unlisted fields keep their defaults and unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ConfidenceConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                reason: format!("expected `key = value`, found `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::UnknownKey(_) => e,
                other => Error::Parse {
                    line: line_no,
                    reason: other.to_string(),
                },
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::param(key, format!("cannot parse `{value}`")))
        }
        let d = &mut self.denoise;
        match key {
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "kappa" => self.kappa = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "xi" => self.xi = num(key, value)?,
            "calibration_sign" => self.calibration_sign = value.parse()?,
            "epsilon_mean" => self.epsilon_mean = num(key, value)?,
            "iterations" => d.iterations = num(key, value)?,
            "time_step" => d.time_step = num(key, value)?,
            "q0_region" => d.q0_region = parse_region(value)?,
            "q0_decay_rho" => d.q0_decay_rho = num(key, value)?,
            "canny_low" => d.canny_low = num(key, value)?,
            "canny_high" => d.canny_high = num(key, value)?,
            "canny_sigma" => d.canny_sigma = num(key, value)?,
            "c_canny" => d.c_canny = num(key, value)?,
            "histogram_bins" => d.histogram_bins = num(key, value)?,
            other => return Err(Error::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}

/// `auto` or `row0,col0,row1,col1` (half-open).
fn parse_region(value: &str) -> Result<Q0Region> {
    if value == "auto" {
        return Ok(Q0Region::Auto);
    }
    let parts: Vec<usize> = value
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::param("q0_region", format!("cannot parse `{value}`")))?;
    match parts.as_slice() {
        &[r0, c0, r1, c1] => Ok(Q0Region::Rect(Rect::new(r0, c0, r1, c1))),
        _ => Err(Error::param(
            "q0_region",
            "expected `auto` or four comma-separated integers",
        )),
    }
}
