//! `headmesh` command-line toolkit: asset generation, forward synthesis,
//! parameter fitting, alignment crops, detection decoding, metrics,
//! dataset filtering, PNCC rendering, and a gradient self-check.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation error, 3
//! runtime/numeric error. All floating-point JSON output is printed with
//! 17 significant digits.

mod gradcheck;
mod run;
mod schema;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "headmesh",
    about = "Parametric head-mesh toolkit: synthesis, fitting, detection post-processing, dataset QA",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate deterministic toy model assets (JSON).
    GenAssets(GenAssetsArgs),
    /// Synthesize the canonical mesh for a parameter file and write OBJ.
    Forward(ForwardArgs),
    /// Recover head parameters from 2D landmarks (and optional rotation /
    /// canonical-mesh targets) by first-order descent.
    Fit(FitArgs),
    /// Compute the square alignment crop for a parameter file.
    Align(AlignArgs),
    /// Decode raw anchor predictions (JSONL) into detections with NMS.
    Decode(DecodeArgs),
    /// Evaluate detections against ground truth (AP, optional pose MAE and
    /// landmark NME).
    Eval(EvalArgs),
    /// Run the four-rule dataset-QA filter over JSONL records.
    Filter(FilterArgs),
    /// Render the PNCC encoding of a posed head to a binary PPM.
    Pncc(PnccArgs),
    /// Finite-difference check of every loss gradient and the full fitting
    /// objective; prints the max relative error per loss.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenAssetsArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 5023)]
    n_vertices: usize,
    #[arg(long, default_value_t = 300)]
    k_shape: usize,
    #[arg(long, default_value_t = 100)]
    k_expr: usize,
    #[arg(long, default_value_t = 68)]
    n_landmarks: usize,
    /// Output asset JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ForwardArgs {
    /// Asset JSON file.
    #[arg(long)]
    assets: PathBuf,
    /// Head parameter JSON file: {"shape": [...], "expression": [...],
    /// "jaw": [x, y, z], "rot6d": [6 values], "translation": [x, y],
    /// "scale": s}.
    #[arg(long)]
    params: PathBuf,
    /// Output Wavefront OBJ path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    assets: PathBuf,
    /// Targets JSON: {"landmarks2d": [[x, y], ...],
    /// "gt_rotation": 3x3 nested array (optional),
    /// "gt_canonical": [[x, y, z], ...] (optional)}.
    #[arg(long)]
    targets: PathBuf,
    /// Optional initial parameters (JSON, same schema as `forward`).
    /// Defaults to zero coefficients with translation/scale estimated from
    /// the target landmarks.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Output JSON with fitted parameters and the loss trace.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.05)]
    step_size: f64,
    #[arg(long, default_value_t = 500)]
    decay_every: usize,
    #[arg(long, default_value_t = 0.5)]
    decay_factor: f64,
    #[arg(long, default_value_t = 1e-10)]
    convergence_tol: f64,
    #[arg(long, default_value_t = 20)]
    convergence_window: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    weights: WeightArgs,
}

/// Loss-component weights (defaults follow the term order 3D, rotation,
/// reprojection, classification, regression).
#[derive(Args)]
struct WeightArgs {
    #[arg(long, default_value_t = 50.0)]
    w_3d: f64,
    #[arg(long, default_value_t = 1.0)]
    w_rot: f64,
    #[arg(long, default_value_t = 1.0)]
    w_reproj: f64,
    #[arg(long, default_value_t = 0.5)]
    w_cls: f64,
    #[arg(long, default_value_t = 2.5)]
    w_reg: f64,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    assets: PathBuf,
    #[arg(long)]
    params: PathBuf,
    /// Crop margin factor applied to the projected head diameter.
    #[arg(long, default_value_t = 1.3)]
    margin: f64,
    /// Output crop JSON {"x1", "y1", "x2", "y2"}.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    /// Raw predictions, one JSON object per line:
    /// {"image_id": str, "raw": [{"dx", "dy", "dw", "dh", "logit",
    /// "params"?}, ...]} with exactly one entry per grid anchor.
    #[arg(long)]
    input: PathBuf,
    /// Output detections JSONL: {"image_id", "width", "height",
    /// "heads": [[x1, y1, x2, y2], ...], "confidences": [...]}.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 640)]
    image_side: u32,
    /// Comma-separated anchor strides.
    #[arg(long, default_value = "8,16,32", value_delimiter = ',')]
    strides: Vec<u32>,
    #[arg(long, default_value_t = 0.25)]
    conf_threshold: f64,
    /// IoU threshold for non-maximum suppression.
    #[arg(long, default_value_t = 0.5)]
    nms_threshold: f64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Predictions JSONL: {"image_id", "heads", "confidences",
    /// "rot6d"?: [[6 values], ...], "landmarks2d"?: [[[x, y], ...], ...]}.
    #[arg(long)]
    pred: PathBuf,
    /// Ground truth JSONL: {"image_id", "heads", "rot6d"?, "landmarks2d"?}.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou_threshold: f64,
    /// Output metrics report JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    /// Input records, one JSON object per line: {"image_id", "width",
    /// "height", "heads", "heads_flipped", "heads_left", "heads_right",
    /// "faces"} with boxes as [x1, y1, x2, y2].
    #[arg(long)]
    input: PathBuf,
    /// Kept records (input lines echoed verbatim, in order).
    #[arg(long)]
    output: PathBuf,
    /// Audit report JSON: {"total", "kept", "dropped_by_rule",
    /// "parse_errors"}.
    #[arg(long)]
    report: PathBuf,
    /// Abort on the first unparseable or incomplete record instead of
    /// recording it and continuing.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct PnccArgs {
    #[arg(long)]
    assets: PathBuf,
    #[arg(long)]
    params: PathBuf,
    /// Square output image side in pixels.
    #[arg(long, default_value_t = 256)]
    size: u32,
    /// Output binary PPM (P6) path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Non-singular sample points per loss.
    #[arg(long, default_value_t = 100)]
    points: usize,
}

/// Failure category mapped to an exit code.
enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<headmesh::Error> for CliError {
    fn from(e: headmesh::Error) -> Self {
        use headmesh::Error;
        match &e {
            Error::InvalidArgument { .. }
            | Error::Validation { .. }
            | Error::ShapeMismatch { .. }
            | Error::Parse { .. }
            | Error::IncompleteRecord { .. }
            | Error::Json(_) => CliError::Validation(e.to_string()),
            Error::SingularInput(_) | Error::DegenerateGeometry(_) | Error::Io(_) => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are not errors.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::GenAssets(args) => run::gen_assets(args),
        Command::Forward(args) => run::forward(args),
        Command::Fit(args) => run::fit(args),
        Command::Align(args) => run::align(args),
        Command::Decode(args) => run::decode(args),
        Command::Eval(args) => run::eval(args),
        Command::Filter(args) => run::filter(args),
        Command::Pncc(args) => run::pncc(args),
        Command::Gradcheck(args) => run::gradcheck_cmd(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
