use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use usconf::config::ConfidenceConfig;
use usconf::denoise::denoise;
use usconf::eval::{load_patches, save_patches, Margins};
use usconf::io::{load_any, save_map_auto};
use usconf::phantom::{bundled, generate, Element, PhantomSpec};
use usconf::pipeline::{evaluate_phantom, intensity_confidence, reference_from_frames, structural_confidence};
use usconf::structural::{build_reference, propagate_truncated};
use usconf::{CalibrationSign, DenoiseConfig, ImageGrid, ReferenceMap, ValueDomain};

fn neighbour_residual_std(img: &ImageGrid, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> f64 {
    let mut v = Vec::new();
    for i in rows {
        for j in cols.clone() {
            let nb = (img.get(i - 1, j) + img.get(i + 1, j) + img.get(i, j - 1) + img.get(i, j + 1)) / 4.0;
            v.push(img.get(i, j) - nb);
        }
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

#[test]
fn denoise_64_reduces_speckle_and_keeps_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let image = ImageGrid::from_fn(64, 64, ValueDomain::Intensity, |_, j| {
        let base = if j < 32 { 0.3 } else { 0.7 };
        let n: f64 = StandardNormal.sample(&mut rng);
        (base * (1.0 + 0.13 * n)).clamp(0.0, 1.0)
    })
    .unwrap();
    let out = denoise(&image, &DenoiseConfig::default()).unwrap();
    for cols in [4..26, 38..60] {
        assert!(neighbour_residual_std(&out, 4..60, cols.clone()) < neighbour_residual_std(&image, 4..60, cols));
    }
    let mut locs: Vec<usize> = (0..64)
        .map(|i| {
            let row = out.row(i);
            (24..40)
                .max_by(|&a, &b| (row[a + 1] - row[a]).abs().total_cmp(&(row[b + 1] - row[b]).abs()))
                .unwrap()
        })
        .collect();
    locs.sort_unstable();
    assert!(locs[32].abs_diff(31) <= 1, "step found at {}", locs[32]);
}

#[test]
fn strong_reflector_lowers_adjusted_confidence_in_shadow() {
    let spec = PhantomSpec {
        height: 64,
        width: 64,
        background: 0.5,
        elements: vec![Element::Reflector {
            row: 20,
            cols: (20, 44),
            intensity: 1.0,
            attenuation_drop: 0.3,
            thickness: 3,
        }],
        ..PhantomSpec::default()
    };
    let phantom = generate(&spec).unwrap();
    let empty = generate(&PhantomSpec {
        elements: Vec::new(),
        ..spec.clone()
    })
    .unwrap();
    let cfg = ConfidenceConfig::default();
    let reference = build_reference(&empty.image, &cfg).unwrap();
    let adjusted = propagate_truncated(&phantom.image, &reference, &cfg, None).unwrap();
    // the first shadow rows; deeper rows catch up with the reference
    for i in 23..27 {
        for j in 26..38 {
            assert!(
                adjusted.get(i, j) < reference.map().get(i, j),
                "({i}, {j}): {} vs {}",
                adjusted.get(i, j),
                reference.map().get(i, j)
            );
        }
    }
}

#[test]
fn homogeneous_reference_bottom_row_max_is_xi() {
    let cfg = ConfidenceConfig {
        calibration_sign: CalibrationSign::Consistent,
        ..ConfidenceConfig::default()
    };
    let flat = ImageGrid::filled(96, 40, 0.6, ValueDomain::Intensity).unwrap();
    let reference = reference_from_frames(&[flat.clone(), flat], &cfg, false).unwrap();
    assert!((reference.row_max()[95] - 0.1).abs() < 1e-6);
}

#[test]
fn maps_survive_the_file_chain() {
    let dir = tempfile::tempdir().unwrap();
    let spec = PhantomSpec::parse(bundled("reverb-demo").unwrap()).unwrap();
    let phantom = generate(&spec).unwrap();
    let cfg = ConfidenceConfig::default();

    let conf = intensity_confidence(&phantom.image, &cfg, Some(&phantom.mask), true).unwrap();
    let conf_path = dir.path().join("c.raw");
    save_map_auto(&conf, &conf_path).unwrap();
    let back = load_any(&conf_path, ValueDomain::Confidence).unwrap();
    for (a, b) in conf.data().iter().zip(back.data()) {
        assert_eq!(*a as f32 as f64, *b);
    }

    let reference = build_reference(&phantom.image, &cfg).unwrap();
    let ref_path = dir.path().join("ref.raw");
    reference.save(&ref_path).unwrap();
    let loaded = ReferenceMap::load(&ref_path).unwrap();
    assert_eq!(loaded.height(), reference.height());

    let patches_path = dir.path().join("patches.csv");
    save_patches(&phantom.patches, &patches_path).unwrap();
    assert_eq!(load_patches(&patches_path).unwrap(), phantom.patches);
}

#[test]
fn structural_map_is_bounded_on_demo_scenes() {
    let cfg = ConfidenceConfig::default();
    for name in ["shadow-demo", "reverb-demo"] {
        let spec = PhantomSpec::parse(bundled(name).unwrap()).unwrap();
        let phantom = generate(&spec).unwrap();
        let reference = build_reference(&phantom.image, &cfg).unwrap();
        let map = structural_confidence(&phantom.image, &reference, &cfg, Some(&phantom.mask), true).unwrap();
        assert!(map.data().iter().all(|v| (0.0..=1.0).contains(v)), "{name}");
    }
}

#[test]
fn phantom_evaluation_is_deterministic() {
    let spec = PhantomSpec::parse(bundled("shadow-demo").unwrap()).unwrap();
    let cfg = ConfidenceConfig::default();
    let a = evaluate_phantom(&spec, &cfg, Margins::default()).unwrap();
    let b = evaluate_phantom(&spec, &cfg, Margins::default()).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.intensity.data(), b.intensity.data());
    assert_eq!(a.report.to_csv().lines().count(), 4);
}

#[test]
fn config_file_with_comments() {
    let text = "# sweep\nalpha = 1.5\nbeta=2 # sharper\n\ncalibration_sign = consistent\niterations = 5\nq0_region = 0,0,8,8\n";
    let cfg = ConfidenceConfig::parse(text).unwrap();
    assert_eq!(cfg.alpha, 1.5);
    assert_eq!(cfg.beta, 2.0);
    assert_eq!(cfg.calibration_sign, CalibrationSign::Consistent);
    assert_eq!(cfg.denoise.iterations, 5);
}
