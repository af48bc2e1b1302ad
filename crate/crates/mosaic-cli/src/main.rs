//! `mosaic` — build seam-minimized mosaics from overlapping frame sequences,
//! evaluate feature matching against ground truth, and generate synthetic
//! test sequences.
//!
//! Exit codes: 0 success, 2 usage error, 3 registration failure.

use clap::{Parser, Subcommand};
use mosaic::config::{BlendMode, PipelineConfig};
use mosaic::eval::{EvalConfig, GroundTruth};
use mosaic::pipeline::{build_mosaic, PipelineError};
use mosaic::raster::{to_grayscale, Homography};
use mosaic::synth::{write_sequence, SceneSpec};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_USAGE: u8 = 2;
const EXIT_REGISTRATION: u8 = 3;

#[derive(Parser)]
#[command(name = "mosaic", version, about = "Frame-sequence mosaicing with texture-feature registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a mosaic from a directory or glob of frames.
    Build(BuildArgs),
    /// Score detector repeatability and matching recall/precision on a pair
    /// with a known homography.
    Eval(EvalArgs),
    /// Generate a synthetic frame sequence with a ground-truth manifest.
    Synth(SynthArgs),
}

#[derive(Parser)]
struct BuildArgs {
    /// Frame directory or glob pattern (lexicographic order = frame index).
    #[arg(long)]
    input: String,
    /// Output mosaic path (PNG, or PPM with a .ppm extension).
    #[arg(long)]
    output: PathBuf,
    /// Flat key=value config file; CLI flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the JSON build report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Dump per-stage debug artifacts into this directory.
    #[arg(long)]
    debug_dir: Option<PathBuf>,
    /// RANSAC seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip statistical color alignment (ablation).
    #[arg(long)]
    no_color_align: bool,
    /// Compositing mode: multiband or none (hard-mask ablation).
    #[arg(long, value_parser = parse_blend)]
    blend: Option<BlendMode>,
    /// Pyramid level count for blending (default: derived from overlap).
    #[arg(long)]
    blend_levels: Option<usize>,
    /// SAD block size for keyframe selection.
    #[arg(long)]
    block_size: Option<usize>,
    /// Maximum horizontal disparity searched, in pixels.
    #[arg(long)]
    search_range: Option<usize>,
    /// Keyframe offset threshold in pixels (default: 25% of frame width).
    #[arg(long)]
    offset_threshold: Option<usize>,
    /// Keypoint cap per frame.
    #[arg(long)]
    max_keypoints: Option<usize>,
    /// DoG contrast threshold.
    #[arg(long)]
    contrast_threshold: Option<f32>,
    /// NNDR acceptance ratio.
    #[arg(long)]
    nndr_ratio: Option<f32>,
    /// Record stage timings in the report (off by default so reports are
    /// byte-identical across identical runs).
    #[arg(long)]
    timings: bool,
}

#[derive(Parser)]
struct EvalArgs {
    /// Left image path (required with --gt-homography).
    #[arg(long, requires = "gt_homography")]
    left: Option<PathBuf>,
    /// Right image path (required with --gt-homography).
    #[arg(long, requires = "gt_homography")]
    right: Option<PathBuf>,
    /// Ground-truth homography mapping left points to right points:
    /// 9 comma-separated reals, row-major.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "manifest", requires = "left", requires = "right")]
    gt_homography: Option<String>,
    /// Ground-truth manifest written by `mosaic synth`.
    #[arg(long, requires = "pair")]
    manifest: Option<PathBuf>,
    /// Pair index into the manifest (evaluates frames pair, pair+1).
    #[arg(long)]
    pair: Option<usize>,
    /// Correspondence acceptance radius in pixels.
    #[arg(long, default_value_t = 3.0)]
    tolerance: f64,
    /// Optional key=value config file (detector/descriptor/matcher keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// RANSAC seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Emit a CSV header and row instead of JSON.
    #[arg(long)]
    csv: bool,
}

#[derive(Parser)]
struct SynthArgs {
    /// Scene spec file (flat key=value).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for frames, scene raster and manifest.json.
    #[arg(long)]
    out: PathBuf,
}

fn parse_blend(s: &str) -> Result<BlendMode, String> {
    match s {
        "none" => Ok(BlendMode::None),
        "multiband" => Ok(BlendMode::Multiband),
        other => Err(format!("expected 'none' or 'multiband', got '{other}'")),
    }
}

fn load_pipeline_config(path: Option<&PathBuf>) -> Result<PipelineConfig, String> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            PipelineConfig::from_kv_text(&text).map_err(|e| e.to_string())
        }
    }
}

fn run_build(args: BuildArgs) -> Result<(), u8> {
    let usage = |msg: String| {
        eprintln!("error: {msg}");
        EXIT_USAGE
    };
    let mut cfg = load_pipeline_config(args.config.as_ref()).map_err(usage)?;
    if let Some(seed) = args.seed {
        cfg.ransac.seed = seed;
    }
    if args.no_color_align {
        cfg.color_align = false;
    }
    if let Some(mode) = args.blend {
        cfg.blend_mode = mode;
    }
    if let Some(v) = args.blend_levels {
        cfg.blend_levels = Some(v);
    }
    if let Some(v) = args.block_size {
        cfg.block.block_size = v;
    }
    if let Some(v) = args.search_range {
        cfg.block.search_range = v;
    }
    if let Some(v) = args.offset_threshold {
        cfg.offset_threshold = Some(v);
    }
    if let Some(v) = args.max_keypoints {
        cfg.detect.max_keypoints = v;
    }
    if let Some(v) = args.contrast_threshold {
        cfg.detect.contrast_threshold = v;
    }
    if let Some(v) = args.nndr_ratio {
        cfg.nndr_ratio = v;
    }
    cfg.record_timings = args.timings;
    cfg.debug_dir = args.debug_dir.clone();

    let write_report = |report: &mosaic::pipeline::MosaicReport| {
        if let Some(path) = &args.report {
            let json = serde_json::to_string_pretty(report).expect("report serializes");
            if let Err(e) = std::fs::write(path, json + "\n") {
                eprintln!("error: cannot write report {}: {e}", path.display());
            }
        }
    };

    match build_mosaic(&args.input, &cfg) {
        Ok(out) => {
            mosaic::io::write_frame(&args.output, &out.mosaic).map_err(|e| usage(e.to_string()))?;
            write_report(&out.report);
            println!(
                "mosaic {}x{} from {} kept frames ({} pairs) -> {}",
                out.report.canvas_width,
                out.report.canvas_height,
                out.report.selected_indices.len(),
                out.report.pairs.len(),
                args.output.display()
            );
            Ok(())
        }
        Err(PipelineError::Registration { pair, source, report }) => {
            write_report(&report);
            eprintln!("error: registration failed for pair ({},{}): {source}", pair.0, pair.1);
            Err(EXIT_REGISTRATION)
        }
        Err(e @ (PipelineError::EmptyInput | PipelineError::Io(_) | PipelineError::Config(_))) => {
            Err(usage(e.to_string()))
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(1)
        }
    }
}

fn parse_gt_homography(text: &str) -> Result<Homography, String> {
    let values: Vec<f64> = text
        .split([',', ' '])
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect::<Result<_, _>>()?;
    if values.len() != 9 {
        return Err(format!("expected 9 values, got {}", values.len()));
    }
    let mut arr = [0.0; 9];
    arr.copy_from_slice(&values);
    Homography::from_row_major(arr).map_err(|e| e.to_string())
}

fn run_eval(args: EvalArgs) -> Result<(), u8> {
    let usage = |msg: String| {
        eprintln!("error: {msg}");
        EXIT_USAGE
    };

    let (left_path, right_path, gt_h) = match (&args.gt_homography, &args.manifest) {
        (Some(text), None) => (
            args.left.clone().expect("clap enforces --left"),
            args.right.clone().expect("clap enforces --right"),
            parse_gt_homography(text).map_err(usage)?,
        ),
        (None, Some(manifest_path)) => {
            let manifest = mosaic::synth::read_manifest(manifest_path).map_err(|e| usage(e.to_string()))?;
            let pair = args.pair.expect("clap enforces --pair with --manifest");
            if pair + 1 >= manifest.frames.len() {
                return Err(usage(format!(
                    "pair {pair} out of range for {} frames",
                    manifest.frames.len()
                )));
            }
            let dir = manifest_path.parent().unwrap_or_else(|| std::path::Path::new("."));
            // The manifest homography maps frame pair+1 onto frame pair;
            // ground truth wants left (pair) -> right (pair+1).
            let h = Homography::from_row_major(manifest.pairwise_homographies[pair])
                .and_then(|h| h.inverse())
                .map_err(|e| usage(e.to_string()))?;
            (
                dir.join(&manifest.frames[pair]),
                dir.join(&manifest.frames[pair + 1]),
                h,
            )
        }
        _ => return Err(usage("provide either --gt-homography or --manifest with --pair".into())),
    };

    let pipeline_cfg = load_pipeline_config(args.config.as_ref()).map_err(usage)?;
    let mut cfg = EvalConfig {
        detect: pipeline_cfg.detect,
        cslbp: pipeline_cfg.cslbp,
        nndr_ratio: pipeline_cfg.nndr_ratio,
        ransac: pipeline_cfg.ransac,
    };
    if let Some(seed) = args.seed {
        cfg.ransac.seed = seed;
    }

    let left = to_grayscale(&mosaic::io::read_frame(&left_path, 0).map_err(|e| usage(e.to_string()))?);
    let right = to_grayscale(&mosaic::io::read_frame(&right_path, 1).map_err(|e| usage(e.to_string()))?);
    let gt = GroundTruth {
        homography: gt_h,
        tolerance_px: args.tolerance,
    };
    let row = mosaic::eval::evaluate_pair(&left, &right, &gt, &cfg).map_err(|e| {
        eprintln!("error: {e}");
        1u8
    })?;

    if args.csv {
        println!("{}", mosaic::eval::MetricRow::CSV_HEADER);
        println!("{}", row.csv_row());
    } else {
        println!("{}", serde_json::to_string_pretty(&row).expect("row serializes"));
    }
    Ok(())
}

fn run_synth(args: SynthArgs) -> Result<(), u8> {
    let usage = |msg: String| {
        eprintln!("error: {msg}");
        EXIT_USAGE
    };
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| usage(format!("cannot read {}: {e}", args.spec.display())))?;
    let spec = SceneSpec::from_kv_text(&text).map_err(|e| usage(e.to_string()))?;
    let manifest = write_sequence(&args.out, &spec).map_err(|e| usage(e.to_string()))?;
    println!(
        "wrote {} frames + scene + manifest.json to {}",
        manifest.frames.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(args) => run_build(args),
        Command::Eval(args) => run_eval(args),
        Command::Synth(args) => run_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
