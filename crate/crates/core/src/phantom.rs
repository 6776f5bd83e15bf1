//! Deterministic synthetic B-mode scenes with ground-truth artifact masks
//! and evaluation patches.
//!
//! # Spec file grammar
//!
//! ```text
//! # comment
//! height = 128
//! width = 128
//! background = 0.5
//! speckle_std = 0.13
//! seed = 1
//! reflector row=40 cols=40..88 intensity=0.95 drop=0.3 [thickness=3]
//! vessel center=70,30 radii=8,12 wall=0.85 lumen=0.1 [wall_width=2]
//! needle row=30 cols=36..92 intensity=1.0 period=10 count=5 decay=0.75 [thickness=2] [drop=0.6]
//! detach cols=0..8
//! ```
//!
//! Column ranges are half-open. Header keys may appear in any order and
//! default to the values of [`PhantomSpec::default`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::eval::{PatchKind, PatchRole, PatchSpec};
use crate::grid::{ImageGrid, ProbMask, Rect, ValueDomain};

pub const SHADOW_DEMO: &str = include_str!("../phantoms/shadow-demo.spec");
pub const REVERB_DEMO: &str = include_str!("../phantoms/reverb-demo.spec");

/// Looks up a bundled spec by name (`shadow-demo`, `reverb-demo`, with or
/// without the `.spec` suffix).
pub fn bundled(name: &str) -> Option<&'static str> {
    match name.trim_end_matches(".spec") {
        "shadow-demo" => Some(SHADOW_DEMO),
        "reverb-demo" => Some(REVERB_DEMO),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    /// Bright horizontal band that shadows everything below it.
    Reflector {
        row: usize,
        cols: (usize, usize),
        intensity: f64,
        attenuation_drop: f64,
        thickness: usize,
    },
    /// Elliptical vessel: bright wall ring around a dark lumen.
    Vessel {
        center: (usize, usize),
        radii: (usize, usize),
        wall_intensity: f64,
        lumen_intensity: f64,
        wall_width: usize,
    },
    /// Horizontal needle with a train of fading reverberation copies below.
    Needle {
        row: usize,
        cols: (usize, usize),
        intensity: f64,
        reverb_period: usize,
        reverb_count: usize,
        reverb_decay: f64,
        thickness: usize,
        attenuation_drop: f64,
    },
    /// Columns where the probe has lost contact: dark from the top down.
    Detach { cols: (usize, usize) },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    pub background: f64,
    pub speckle_std: f64,
    pub seed: u64,
    pub elements: Vec<Element>,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            height: 128,
            width: 128,
            background: 0.5,
            speckle_std: 0.0,
            seed: 0,
            elements: Vec::new(),
        }
    }
}

/// A rendered scene.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub image: ImageGrid,
    pub mask: ProbMask,
    pub patches: Vec<PatchSpec>,
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::param(name, format!("{v} is outside [0, 1]")))
    }
}

fn col_range(name: &str, (c0, c1): (usize, usize), width: usize) -> Result<()> {
    if c0 < c1 && c1 <= width {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("columns {c0}..{c1} do not fit width {width}"),
        ))
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < 2 || self.width < 2 {
            return Err(Error::InvalidDimensions {
                height: self.height,
                width: self.width,
            });
        }
        unit("background", self.background)?;
        if !(self.speckle_std >= 0.0 && self.speckle_std.is_finite()) {
            return Err(Error::param("speckle_std", "must be finite and >= 0"));
        }
        let (h, w) = (self.height, self.width);
        for el in &self.elements {
            match *el {
                Element::Reflector {
                    row,
                    cols,
                    intensity,
                    attenuation_drop,
                    thickness,
                } => {
                    col_range("reflector.cols", cols, w)?;
                    unit("reflector.intensity", intensity)?;
                    unit("reflector.drop", attenuation_drop)?;
                    if thickness == 0 || row + thickness > h {
                        return Err(Error::param("reflector.row", "band does not fit the image height"));
                    }
                }
                Element::Vessel {
                    center,
                    radii,
                    wall_intensity,
                    lumen_intensity,
                    wall_width,
                } => {
                    unit("vessel.wall", wall_intensity)?;
                    unit("vessel.lumen", lumen_intensity)?;
                    if radii.0 == 0 || radii.1 == 0 || wall_width == 0 {
                        return Err(Error::param("vessel.radii", "radii and wall width must be positive"));
                    }
                    if center.0 < radii.0 || center.1 < radii.1 || center.0 + radii.0 >= h || center.1 + radii.1 >= w {
                        return Err(Error::param("vessel.center", "ellipse does not fit the image"));
                    }
                }
                Element::Needle {
                    row,
                    cols,
                    intensity,
                    reverb_period,
                    reverb_count,
                    reverb_decay,
                    thickness,
                    attenuation_drop,
                } => {
                    col_range("needle.cols", cols, w)?;
                    unit("needle.intensity", intensity)?;
                    unit("needle.decay", reverb_decay)?;
                    unit("needle.drop", attenuation_drop)?;
                    if thickness == 0 || (reverb_count > 0 && reverb_period < thickness) {
                        return Err(Error::param(
                            "needle.period",
                            "reverberation copies must not overlap the needle",
                        ));
                    }
                    if row + reverb_count * reverb_period + thickness > h {
                        return Err(Error::param(
                            "needle.row",
                            "needle and reverberations do not fit the image height",
                        ));
                    }
                }
                Element::Detach { cols } => col_range("detach.cols", cols, w)?,
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = PhantomSpec::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse { line: line_no, reason };
            let first = line.split_whitespace().next().unwrap_or("");
            if matches!(first, "reflector" | "vessel" | "needle" | "detach") {
                let element = parse_element(first, line[first.len()..].trim()).map_err(|e| err(e.to_string()))?;
                spec.elements.push(element);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value` or an element, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || err(format!("cannot parse `{value}` for `{key}`"));
            match key {
                "height" => spec.height = value.parse().map_err(|_| bad())?,
                "width" => spec.width = value.parse().map_err(|_| bad())?,
                "background" => spec.background = value.parse().map_err(|_| bad())?,
                "speckle_std" => spec.speckle_std = value.parse().map_err(|_| bad())?,
                "seed" => spec.seed = value.parse().map_err(|_| bad())?,
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

struct Fields<'a> {
    kind: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Fields<'a> {
    fn new(kind: &'a str, rest: &'a str) -> Result<Self> {
        let pairs = rest
            .split_whitespace()
            .map(|tok| {
                tok.split_once('=')
                    .ok_or_else(|| Error::param(kind, format!("expected key=value, found `{tok}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Fields { kind, pairs })
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.pairs {
            if !allowed.contains(k) {
                return Err(Error::param(self.kind, format!("unknown field `{k}`")));
            }
        }
        Ok(())
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: Option<T>) -> Result<T> {
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::param(self.kind, format!("cannot parse {key}=`{v}`"))),
            None => default.ok_or_else(|| Error::param(self.kind, format!("missing field `{key}`"))),
        }
    }

    fn pair(&self, key: &str, sep: &str) -> Result<(usize, usize)> {
        let v = self
            .raw(key)
            .ok_or_else(|| Error::param(self.kind, format!("missing field `{key}`")))?;
        let (a, b) = v
            .split_once(sep)
            .ok_or_else(|| Error::param(self.kind, format!("expected {key}=a{sep}b, found `{v}`")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::param(self.kind, format!("cannot parse {key}=`{v}`")))
        };
        Ok((parse(a)?, parse(b)?))
    }
}

fn parse_element(kind: &str, rest: &str) -> Result<Element> {
    let f = Fields::new(kind, rest)?;
    Ok(match kind {
        "reflector" => {
            f.check_keys(&["row", "cols", "intensity", "drop", "thickness"])?;
            Element::Reflector {
                row: f.get("row", None)?,
                cols: f.pair("cols", "..")?,
                intensity: f.get("intensity", None)?,
                attenuation_drop: f.get("drop", None)?,
                thickness: f.get("thickness", Some(2))?,
            }
        }
        "vessel" => {
            f.check_keys(&["center", "radii", "wall", "lumen", "wall_width"])?;
            Element::Vessel {
                center: f.pair("center", ",")?,
                radii: f.pair("radii", ",")?,
                wall_intensity: f.get("wall", None)?,
                lumen_intensity: f.get("lumen", None)?,
                wall_width: f.get("wall_width", Some(2))?,
            }
        }
        "needle" => {
            f.check_keys(&[
                "row",
                "cols",
                "intensity",
                "period",
                "count",
                "decay",
                "thickness",
                "drop",
            ])?;
            Element::Needle {
                row: f.get("row", None)?,
                cols: f.pair("cols", "..")?,
                intensity: f.get("intensity", None)?,
                reverb_period: f.get("period", None)?,
                reverb_count: f.get("count", None)?,
                reverb_decay: f.get("decay", None)?,
                thickness: f.get("thickness", Some(2))?,
                attenuation_drop: f.get("drop", Some(0.5))?,
            }
        }
        _ => {
            f.check_keys(&["cols"])?;
            Element::Detach {
                cols: f.pair("cols", "..")?,
            }
        }
    })
}

/// Vertical gap between a structure and its A/B patches.
const PATCH_GAP: usize = 4;
/// Horizontal gap between a B patch's structure and its C patch.
const LATERAL_GAP: usize = 8;
const MAX_PATCH_HEIGHT: usize = 16;

pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut img = vec![spec.background; h * w];
    let mut needle = vec![0.0; h * w];
    let mut reverb = vec![0.0; h * w];

    for el in &spec.elements {
        if let Element::Vessel {
            center,
            radii,
            wall_intensity,
            lumen_intensity,
            wall_width,
        } = *el
        {
            let (cy, cx) = (center.0 as f64, center.1 as f64);
            let (ry, rx) = (radii.0 as f64, radii.1 as f64);
            let inner = 1.0 - wall_width as f64 / ry.min(rx);
            for i in center.0 - radii.0..=center.0 + radii.0 {
                for j in center.1 - radii.1..=center.1 + radii.1 {
                    let r = (((i as f64 - cy) / ry).powi(2) + ((j as f64 - cx) / rx).powi(2)).sqrt();
                    if r <= 1.0 {
                        img[i * w + j] = if r > inner { wall_intensity } else { lumen_intensity };
                    }
                }
            }
        }
    }

    for el in &spec.elements {
        let (row, cols, thickness, drop) = match *el {
            Element::Reflector {
                row,
                cols,
                thickness,
                attenuation_drop,
                ..
            }
            | Element::Needle {
                row,
                cols,
                thickness,
                attenuation_drop,
                ..
            } => (row, cols, thickness, attenuation_drop),
            _ => continue,
        };
        for i in row + thickness..h {
            for v in &mut img[i * w + cols.0..i * w + cols.1] {
                *v *= drop;
            }
        }
    }

    for el in &spec.elements {
        match *el {
            Element::Reflector {
                row,
                cols,
                intensity,
                thickness,
                ..
            } => {
                for i in row..row + thickness {
                    img[i * w + cols.0..i * w + cols.1].fill(intensity);
                }
            }
            Element::Needle {
                row,
                cols,
                intensity,
                reverb_period,
                reverb_count,
                reverb_decay,
                thickness,
                ..
            } => {
                for i in row..row + thickness {
                    img[i * w + cols.0..i * w + cols.1].fill(intensity);
                    needle[i * w + cols.0..i * w + cols.1].fill(1.0);
                }
                for m in 1..=reverb_count {
                    let echo = intensity * reverb_decay.powi(m as i32);
                    let top = row + m * reverb_period;
                    for i in top..top + thickness {
                        for j in cols.0..cols.1 {
                            let idx = i * w + j;
                            if needle[idx] == 0.0 {
                                img[idx] = img[idx].max(echo);
                                reverb[idx] = 1.0;
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }

    for el in &spec.elements {
        if let Element::Detach { cols } = *el {
            for i in 0..h {
                img[i * w + cols.0..i * w + cols.1].fill(0.0);
            }
        }
    }

    if spec.speckle_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for v in &mut img {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v = (*v * (1.0 + spec.speckle_std * n)).clamp(0.0, 1.0);
        }
    }

    Ok(Phantom {
        image: ImageGrid::new(h, w, img, ValueDomain::Intensity)?,
        mask: ProbMask::new(
            ImageGrid::new(h, w, needle, ValueDomain::Probability)?,
            ImageGrid::new(h, w, reverb, ValueDomain::Probability)?,
        )?,
        patches: auto_patches(spec),
    })
}

/// A/B/C triples for every reflector (shadow) and needle (reverberation)
/// that leaves room for all three patches.
fn auto_patches(spec: &PhantomSpec) -> Vec<PatchSpec> {
    let (h, w) = (spec.height, spec.width);
    let mut out = Vec::new();
    for el in &spec.elements {
        let (kind, row, cols, structure_end, artifact_rows) = match *el {
            Element::Reflector {
                row, cols, thickness, ..
            } => {
                let start = row + thickness + PATCH_GAP;
                let height = MAX_PATCH_HEIGHT.min(h.saturating_sub(start) / 2);
                (PatchKind::Shadow, row, cols, row + thickness, (start, start + height))
            }
            Element::Needle {
                row,
                cols,
                thickness,
                reverb_period,
                reverb_count,
                ..
            } => {
                if reverb_count == 0 {
                    continue;
                }
                let start = row + reverb_period;
                let end = row + reverb_count * reverb_period + thickness;
                (PatchKind::Reverberation, row, cols, row + thickness, (start, end))
            }
            _ => continue,
        };
        let (b0, b1) = artifact_rows;
        if b1 <= b0 + 1 || b0 < structure_end {
            continue;
        }
        let span = cols.1 - cols.0;
        let pw = span / 2;
        if pw < 2 {
            continue;
        }
        let c0 = cols.0 + span / 4;
        let ph = b1 - b0;
        let a_rows = if row >= PATCH_GAP + 2 {
            let a1 = row - PATCH_GAP;
            (a1.saturating_sub(ph).max(1), a1)
        } else {
            continue;
        };
        let room_left = cols.0;
        let room_right = w - cols.1;
        let lateral = if room_left >= room_right && room_left >= LATERAL_GAP + pw {
            Some(cols.0 - LATERAL_GAP - pw)
        } else if room_right >= LATERAL_GAP + pw {
            Some(cols.1 + LATERAL_GAP)
        } else if room_left >= LATERAL_GAP + pw {
            Some(cols.0 - LATERAL_GAP - pw)
        } else {
            None
        };
        let Some(lc0) = lateral else { continue };
        out.push(PatchSpec::new(
            PatchRole::A,
            kind,
            Rect::new(a_rows.0, c0, a_rows.1, c0 + pw),
        ));
        out.push(PatchSpec::new(PatchRole::B, kind, Rect::new(b0, c0, b1, c0 + pw)));
        out.push(PatchSpec::new(PatchRole::C, kind, Rect::new(b0, lc0, b1, lc0 + pw)));
    }
    out
}
