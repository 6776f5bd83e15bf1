use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use usconf::compound::fuse;
use usconf::confidence::{edge_weights, make_stencil, propagate_weights};
use usconf::denoise::denoise;
use usconf::eval::{check_orderings, load_patches, save_patches, Margins};
use usconf::io::{load_any, save_map_auto};
use usconf::phantom::{bundled, generate, PhantomSpec};
use usconf::pipeline::{empty_counterpart, intensity_confidence, reference_from_frames, structural_confidence};
use usconf::{ConfidenceConfig, Error, ImageGrid, ProbMask, ReferenceMap, ValueDomain};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_PREDICATES: u8 = 3;

#[derive(Parser)]
#[command(name = "usconf", version, about = "Confidence maps for ultrasound B-mode images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Skip speckle denoising before the weights are computed
    #[arg(long)]
    no_denoise: bool,
}

#[derive(Args)]
struct MaskArgs {
    /// Needle probability mask (grayscale image or raw map)
    #[arg(long, requires = "mask_reverb")]
    mask_needle: Option<PathBuf>,
    /// Reverberation probability mask (grayscale image or raw map)
    #[arg(long, requires = "mask_needle")]
    mask_reverb: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Speckle-reducing diffusion
    Denoise {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Intensity confidence map
    Confidence {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        masks: MaskArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Structural confidence map against a reference built with `build-ref`
    Structural {
        input: PathBuf,
        reference: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        masks: MaskArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Reference map from a structure-free phantom image, or from a phantom
    /// spec (its elements are dropped and the background imaged alone)
    BuildRef {
        phantom: String,
        output: PathBuf,
        /// Further frames of the same phantom, averaged with the first
        #[arg(long = "frame")]
        frames: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Confidence-weighted fusion of two views
    Compound {
        image_a: PathBuf,
        conf_a: PathBuf,
        image_b: PathBuf,
        conf_b: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
    },
    /// Render a phantom spec (a file or a bundled name: shadow-demo, reverb-demo)
    Phantom {
        spec: String,
        output: PathBuf,
        /// Writes PREFIX_needle.png and PREFIX_reverb.png
        #[arg(long)]
        out_masks: Option<String>,
        #[arg(long)]
        out_patches: Option<PathBuf>,
    },
    /// Patch medians and ordering predicates
    Eval {
        intensity: PathBuf,
        structural: PathBuf,
        patches: PathBuf,
        report: PathBuf,
        #[arg(long, default_value_t = Margins::default().margin)]
        margin: f64,
        #[arg(long, default_value_t = Margins::default().closeness)]
        closeness: f64,
    },
    /// Time each stage on a seeded size x size phantom
    Bench {
        size: usize,
        #[arg(long, default_value_t = 5)]
        iters: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Leave the denoise stage out of the timings
        #[arg(long)]
        no_denoise: bool,
    },
}

enum Failure {
    Usage(String),
    Lib(Error),
    Predicates,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Predicates) => ExitCode::from(EXIT_PREDICATES),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { EXIT_IO } else { EXIT_USAGE })
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfidenceConfig, Failure> {
    let Some(path) = path else {
        return Ok(ConfidenceConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(ConfidenceConfig::parse(&text)?)
}

fn load_mask(masks: &MaskArgs) -> Result<Option<ProbMask>, Failure> {
    match (&masks.mask_needle, &masks.mask_reverb) {
        (Some(needle), Some(reverb)) => {
            let needle = load_any(needle, ValueDomain::Probability)?;
            let reverb = load_any(reverb, ValueDomain::Probability)?;
            Ok(Some(ProbMask::new(needle, reverb)?))
        }
        _ => Ok(None),
    }
}

fn load_spec(name: &str) -> Result<PhantomSpec, Failure> {
    let path = Path::new(name);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        return Ok(PhantomSpec::parse(&text)?);
    }
    let stem = name.strip_suffix(".spec").unwrap_or(name);
    match bundled(stem) {
        Some(text) => Ok(PhantomSpec::parse(text)?),
        None => Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or bundled phantom"),
        }
        .into()),
    }
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("png" | "pgm" | "pnm" | "raw" | "f32" | "bin")
    )
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Denoise { input, output, config } => {
            let cfg = load_config(config.as_deref())?;
            let image = load_any(&input, ValueDomain::Intensity)?;
            save_map_auto(&denoise(&image, &cfg.denoise)?, &output)?;
        }
        Command::Confidence {
            input,
            output,
            masks,
            common,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let image = load_any(&input, ValueDomain::Intensity)?;
            let mask = load_mask(&masks)?;
            let conf = intensity_confidence(&image, &cfg, mask.as_ref(), common.no_denoise)?;
            save_map_auto(&conf, &output)?;
        }
        Command::Structural {
            input,
            reference,
            output,
            masks,
            common,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let image = load_any(&input, ValueDomain::Intensity)?;
            let reference = ReferenceMap::load(&reference)?;
            let mask = load_mask(&masks)?;
            let map = structural_confidence(&image, &reference, &cfg, mask.as_ref(), common.no_denoise)?;
            save_map_auto(&map, &output)?;
        }
        Command::BuildRef {
            phantom,
            output,
            frames,
            common,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let first = Path::new(&phantom);
            let mut images = Vec::with_capacity(frames.len() + 1);
            if is_image(first) {
                images.push(load_any(first, ValueDomain::Intensity)?);
            } else {
                let spec = load_spec(&phantom)?;
                images.push(generate(&empty_counterpart(&spec))?.image);
            }
            for frame in &frames {
                images.push(load_any(frame, ValueDomain::Intensity)?);
            }
            reference_from_frames(&images, &cfg, common.no_denoise)?.save(&output)?;
        }
        Command::Compound {
            image_a,
            conf_a,
            image_b,
            conf_b,
            output,
            eps,
        } => {
            let fused = fuse(
                &load_any(&image_a, ValueDomain::Intensity)?,
                &load_any(&conf_a, ValueDomain::Confidence)?,
                &load_any(&image_b, ValueDomain::Intensity)?,
                &load_any(&conf_b, ValueDomain::Confidence)?,
                eps,
            )?;
            save_map_auto(&fused, &output)?;
        }
        Command::Phantom {
            spec,
            output,
            out_masks,
            out_patches,
        } => {
            let phantom = generate(&load_spec(&spec)?)?;
            save_map_auto(&phantom.image, &output)?;
            if let Some(prefix) = out_masks {
                save_map_auto(phantom.mask.needle(), format!("{prefix}_needle.png"))?;
                save_map_auto(phantom.mask.reverb(), format!("{prefix}_reverb.png"))?;
            }
            if let Some(path) = out_patches {
                save_patches(&phantom.patches, &path)?;
            }
        }
        Command::Eval {
            intensity,
            structural,
            patches,
            report,
            margin,
            closeness,
        } => {
            if !(margin.is_finite() && closeness.is_finite()) {
                return Err(Failure::Usage("margins must be finite".into()));
            }
            let intensity = load_any(&intensity, ValueDomain::Confidence)?;
            let structural = load_any(&structural, ValueDomain::Confidence)?;
            let patches = load_patches(&patches)?;
            let margins = Margins { margin, closeness };
            let result = check_orderings(&intensity, &structural, &patches, margins)?;
            std::fs::write(&report, result.to_csv()).map_err(|e| Error::Io {
                path: report.clone(),
                source: e,
            })?;
            for r in &result.rows {
                println!(
                    "{} {} {}: {}",
                    r.triple,
                    r.kind,
                    r.predicate,
                    if r.passed { "pass" } else { "FAIL" }
                );
            }
            if !result.all_passed() {
                return Err(Failure::Predicates);
            }
        }
        Command::Bench {
            size,
            iters,
            config,
            no_denoise,
        } => {
            let cfg = load_config(config.as_deref())?;
            bench(size, iters.max(1), &cfg, !no_denoise)?;
        }
    }
    Ok(())
}

fn time<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn bench(size: usize, iters: usize, cfg: &ConfidenceConfig, with_denoise: bool) -> Result<(), Failure> {
    let spec = PhantomSpec {
        height: size,
        width: size,
        background: 0.5,
        speckle_std: 0.13,
        seed: 1,
        ..PhantomSpec::default()
    };
    let image: ImageGrid = generate(&spec)?.image;
    let stencil = make_stencil(cfg.kappa, cfg.sigma)?;
    let top = vec![1.0; size];

    let mut stages: [(&str, Vec<Duration>); 4] = [
        ("denoise", Vec::new()),
        ("weights", Vec::new()),
        ("propagate", Vec::new()),
        ("intensity (no denoise)", Vec::new()),
    ];
    for _ in 0..iters {
        if with_denoise {
            let (denoised, t) = time(|| denoise(&image, &cfg.denoise));
            denoised?;
            stages[0].1.push(t);
        }
        let (weights, tw) = time(|| edge_weights(&image, cfg, None));
        let weights = weights?;
        stages[1].1.push(tw);
        let (_, tp) = time(|| propagate_weights(&weights, &stencil, &top, |_, _| {}));
        stages[2].1.push(tp);
        let (conf, t) = time(|| intensity_confidence(&image, cfg, None, true));
        conf?;
        stages[3].1.push(t);
    }
    println!("{size}x{size}, {iters} iteration(s)");
    for (name, times) in stages.iter().filter(|(_, t)| !t.is_empty()) {
        let best = times.iter().min().copied().unwrap_or_default();
        let mean = times.iter().sum::<Duration>() / times.len() as u32;
        println!(
            "{name:<24} min {:>10.3} ms  mean {:>10.3} ms",
            best.as_secs_f64() * 1e3,
            mean.as_secs_f64() * 1e3
        );
    }
    Ok(())
}
