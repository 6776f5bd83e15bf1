//! Patch-median evaluation of confidence maps on labeled A/B/C regions.
//!
//! `A` sits above the structure that causes an artifact, `B` inside the
//! shadow or artifact, and `C` beside `B` on the same rows without an
//! artifact. A good intensity map orders the medians `A > C > B`; a good
//! structural map keeps `A` and `C` close and `B` well below both.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatchRole {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatchKind {
    Reverberation,
    Shadow,
}

impl fmt::Display for PatchRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatchRole::A => "A",
            PatchRole::B => "B",
            PatchRole::C => "C",
        })
    }
}

impl fmt::Display for PatchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatchKind::Reverberation => "reverberation",
            PatchKind::Shadow => "shadow",
        })
    }
}

impl FromStr for PatchRole {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(PatchRole::A),
            "B" | "b" => Ok(PatchRole::B),
            "C" | "c" => Ok(PatchRole::C),
            other => Err(Error::param("role", format!("`{other}` is not A, B or C"))),
        }
    }
}

impl FromStr for PatchKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reverberation" => Ok(PatchKind::Reverberation),
            "shadow" => Ok(PatchKind::Shadow),
            other => Err(Error::param(
                "kind",
                format!("`{other}` is not reverberation or shadow"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    pub role: PatchRole,
    pub kind: PatchKind,
    pub rect: Rect,
}

impl PatchSpec {
    pub fn new(role: PatchRole, kind: PatchKind, rect: Rect) -> Self {
        PatchSpec { role, kind, rect }
    }
}

/// Median of the samples inside the patch; the mean of the two middle
/// values for an even count.
pub fn patch_median(map: &ImageGrid, patch: &PatchSpec) -> Result<f64> {
    let mut vals = map.region(&patch.rect)?;
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    Ok(if n % 2 == 1 {
        vals[n / 2]
    } else {
        (vals[n / 2 - 1] + vals[n / 2]) / 2.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    /// Required gap between structural `B` and the smaller of `A`, `C`.
    pub margin: f64,
    /// Largest allowed structural `|A - C|`.
    pub closeness: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Margins {
            margin: 0.2,
            closeness: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple {
    pub kind: PatchKind,
    pub a: PatchSpec,
    pub b: PatchSpec,
    pub c: PatchSpec,
}

/// Groups patches into triples in file order: each kind collects roles
/// until it holds one of each. A role repeated before its triple is
/// complete, mismatched B/C rows, or leftovers at the end are errors.
pub fn group_triples(patches: &[PatchSpec]) -> Result<Vec<Triple>> {
    let mut open: Vec<(PatchKind, [Option<PatchSpec>; 3])> = Vec::new();
    let mut out = Vec::new();
    for p in patches {
        let slot = match p.role {
            PatchRole::A => 0,
            PatchRole::B => 1,
            PatchRole::C => 2,
        };
        let pos = match open.iter().position(|(k, _)| *k == p.kind) {
            Some(pos) => pos,
            None => {
                open.push((p.kind, [None; 3]));
                open.len() - 1
            }
        };
        let entry = &mut open[pos].1;
        if entry[slot].is_some() {
            return Err(Error::IncompleteTriple(format!(
                "second {} patch for {} before the triple was complete",
                p.role, p.kind
            )));
        }
        entry[slot] = Some(*p);
        if let [Some(a), Some(b), Some(c)] = *entry {
            if b.rect.row0 != c.rect.row0 || b.rect.row1 != c.rect.row1 {
                return Err(Error::IncompleteTriple(format!(
                    "{} B and C patches must share rows ({} vs {})",
                    p.kind, b.rect, c.rect
                )));
            }
            out.push(Triple { kind: p.kind, a, b, c });
            open.remove(pos);
        }
    }
    if let Some((kind, _)) = open.first() {
        return Err(Error::IncompleteTriple(format!("{kind} triple is missing a role")));
    }
    if out.is_empty() {
        return Err(Error::IncompleteTriple("no patches given".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredicateResult {
    pub triple: usize,
    pub kind: PatchKind,
    pub predicate: &'static str,
    pub values: [f64; 3],
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<PredicateResult>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("triple,kind,predicate,a,c,b,passed\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.triple, r.kind, r.predicate, r.values[0], r.values[1], r.values[2], r.passed
            ));
        }
        s
    }
}

pub const INTENSITY_ORDER: &str = "intensity_a_gt_c_gt_b";
pub const STRUCTURAL_GAP: &str = "structural_b_below_a_c";
pub const STRUCTURAL_CLOSE: &str = "structural_a_close_to_c";

/// Evaluates the three ordering predicates per triple. Values in each row
/// are the patch medians in `A, C, B` order.
pub fn check_orderings(
    intensity: &ImageGrid,
    structural: &ImageGrid,
    patches: &[PatchSpec],
    margins: Margins,
) -> Result<Report> {
    intensity.ensure_same_dims(structural)?;
    let mut rows = Vec::new();
    for (idx, t) in group_triples(patches)?.iter().enumerate() {
        let med = |m: &ImageGrid| -> Result<[f64; 3]> {
            Ok([patch_median(m, &t.a)?, patch_median(m, &t.c)?, patch_median(m, &t.b)?])
        };
        let int = med(intensity)?;
        let st = med(structural)?;
        rows.push(PredicateResult {
            triple: idx,
            kind: t.kind,
            predicate: INTENSITY_ORDER,
            values: int,
            passed: int[0] > int[1] && int[1] > int[2],
        });
        rows.push(PredicateResult {
            triple: idx,
            kind: t.kind,
            predicate: STRUCTURAL_GAP,
            values: st,
            passed: st[2] + margins.margin <= st[0].min(st[1]),
        });
        rows.push(PredicateResult {
            triple: idx,
            kind: t.kind,
            predicate: STRUCTURAL_CLOSE,
            values: st,
            passed: (st[0] - st[1]).abs() <= margins.closeness,
        });
    }
    Ok(Report { rows })
}

pub fn patches_to_csv(patches: &[PatchSpec]) -> String {
    let mut s = String::from("role,kind,row0,col0,row1,col1\n");
    for p in patches {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.role, p.kind, p.rect.row0, p.rect.col0, p.rect.row1, p.rect.col1
        ));
    }
    s
}

/// Parses a patch CSV. A first line starting with `role` is a header.
pub fn parse_patches(text: &str) -> Result<Vec<PatchSpec>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("role")) {
            continue;
        }
        let err = |reason: String| Error::Parse { line: idx + 1, reason };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 6 {
            return Err(err(format!("expected 6 columns, found {}", cols.len())));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| err(format!("cannot parse `{s}`")));
        out.push(PatchSpec {
            role: cols[0].parse().map_err(|e: Error| err(e.to_string()))?,
            kind: cols[1].parse().map_err(|e: Error| err(e.to_string()))?,
            rect: Rect::new(num(cols[2])?, num(cols[3])?, num(cols[4])?, num(cols[5])?),
        });
    }
    Ok(out)
}

pub fn load_patches(path: impl AsRef<Path>) -> Result<Vec<PatchSpec>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_patches(&text)
}

pub fn save_patches(patches: &[PatchSpec], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, patches_to_csv(patches)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ValueDomain;

    fn patch(role: PatchRole, rect: Rect) -> PatchSpec {
        PatchSpec::new(role, PatchKind::Shadow, rect)
    }

    fn triple() -> Vec<PatchSpec> {
        vec![
            patch(PatchRole::A, Rect::new(0, 0, 2, 2)),
            patch(PatchRole::B, Rect::new(2, 0, 4, 2)),
            patch(PatchRole::C, Rect::new(2, 2, 4, 4)),
        ]
    }

    /// Map whose A, B, C patches hold the given constants.
    fn map(a: f64, b: f64, c: f64) -> ImageGrid {
        ImageGrid::from_fn(4, 4, ValueDomain::Confidence, |i, j| match (i < 2, j < 2) {
            (true, _) => a,
            (false, true) => b,
            (false, false) => c,
        })
        .unwrap()
    }

    #[test]
    fn median_rules() {
        let constant = ImageGrid::filled(3, 3, 0.7, ValueDomain::Confidence).unwrap();
        assert_eq!(
            patch_median(&constant, &patch(PatchRole::A, Rect::new(0, 0, 3, 3))).unwrap(),
            0.7
        );
        let row = ImageGrid::new(
            2,
            4,
            vec![0.3, 0.1, 0.4, 0.2, 0.0, 0.0, 0.0, 0.0],
            ValueDomain::Confidence,
        )
        .unwrap();
        let m = patch_median(&row, &patch(PatchRole::A, Rect::new(0, 0, 1, 4))).unwrap();
        assert!((m - 0.25).abs() < 1e-15);
        assert!(patch_median(&row, &patch(PatchRole::A, Rect::new(0, 0, 0, 4))).is_err());
    }

    #[test]
    fn constructed_maps_pass() {
        let r = check_orderings(
            &map(0.9, 0.4, 0.7),
            &map(0.95, 0.6, 0.96),
            &triple(),
            Margins::default(),
        )
        .unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r.all_passed());
    }

    #[test]
    fn intensity_inversion_fails() {
        let r = check_orderings(
            &map(0.5, 0.4, 0.7),
            &map(0.95, 0.6, 0.96),
            &triple(),
            Margins::default(),
        )
        .unwrap();
        assert!(!r.all_passed());
        let failed: Vec<_> = r.rows.iter().filter(|r| !r.passed).map(|r| r.predicate).collect();
        assert_eq!(failed, vec![INTENSITY_ORDER]);
    }

    #[test]
    fn incomplete_triples_rejected() {
        let mut p = triple();
        p.pop();
        assert!(matches!(
            check_orderings(&map(0.9, 0.4, 0.7), &map(0.9, 0.4, 0.7), &p, Margins::default()),
            Err(Error::IncompleteTriple(_))
        ));
        let mut dup = triple();
        dup.insert(1, patch(PatchRole::A, Rect::new(0, 0, 1, 1)));
        assert!(group_triples(&dup).is_err());
        let mut misaligned = triple();
        misaligned[2].rect = Rect::new(1, 2, 4, 4);
        assert!(group_triples(&misaligned).is_err());
        assert!(group_triples(&[]).is_err());
    }

    #[test]
    fn csv_roundtrip_and_report() {
        let p = triple();
        assert_eq!(parse_patches(&patches_to_csv(&p)).unwrap(), p);
        assert!(parse_patches("A,shadow,0,0,1").is_err());
        assert!(parse_patches("D,shadow,0,0,1,1").is_err());
        let r = check_orderings(&map(0.9, 0.4, 0.7), &map(0.95, 0.6, 0.96), &p, Margins::default()).unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("triple,kind,predicate,a,c,b,passed\n0,shadow,intensity_a_gt_c_gt_b,0.9,0.7,0.4,true"));
    }
}
