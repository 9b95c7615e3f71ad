//! `vinemark`: batch evaluation of bud detectors against single-bud ground truth.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vinemark_core::raster::Connectivity;

/// Exit status when a run completed but some images failed.
const EXIT_PARTIAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "vinemark",
    version,
    about = "Bud detection post-processing and evaluation"
)]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "VINEMARK_JOBS")]
    jobs: Option<usize>,

    /// Seed for anything randomized.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate one detector configuration over a manifest.
    Eval(EvalArgs),
    /// Evaluate every threshold and alpha combination over several detectors.
    Sweep(SweepArgs),
    /// Run the sliding-window post-processing on one image.
    Sw(SwArgs),
    /// Write a synthetic corpus with oracle-computed expectations.
    Synth(SynthArgs),
    /// Render tables and plot data from sweep results.
    Report(ReportArgs),
    /// Estimate errors of derived vine measurements.
    Vars(VarsArgs),
}

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    let n: u8 = s
        .parse()
        .map_err(|_| format!("expected 4 or 8, got {s:?}"))?;
    Connectivity::try_from(n).map_err(|e| e.to_string())
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if a > 0.0 && a <= 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must lie in (0, 1], got {a}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Markdown,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// CSV with columns image_id,prediction_path,truth_path.
    #[arg(long)]
    manifest: PathBuf,
    /// Binarization threshold for probability maps.
    #[arg(long, conflicts_with = "nu", required_unless_present = "nu")]
    tau: Option<f64>,
    /// Vote threshold for sliding-window vote maps.
    #[arg(long)]
    nu: Option<u32>,
    /// Detector name used in labels.
    #[arg(long, default_value = "model")]
    variant: String,
    #[arg(long, default_value_t = 0.5, value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, default_value = "8", value_parser = parse_connectivity)]
    connectivity: Connectivity,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Probability-map detector as VARIANT=MANIFEST; repeatable.
    #[arg(long = "fcn", value_name = "VARIANT=MANIFEST")]
    fcn: Vec<String>,
    /// Vote-map detector as SIZE=MANIFEST; repeatable.
    #[arg(long = "sw", value_name = "SIZE=MANIFEST")]
    sw: Vec<String>,
    /// Thresholds for probability-map detectors.
    #[arg(long, value_delimiter = ',', default_values_t = vinemark_core::harness::TAU_GRID)]
    tau: Vec<f64>,
    /// Vote thresholds for sliding-window detectors.
    #[arg(long, value_delimiter = ',', default_values_t = vinemark_core::harness::NU_GRID)]
    nu: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5], value_parser = parse_alpha)]
    alpha: Vec<f64>,
    #[arg(long, default_value = "8", value_parser = parse_connectivity)]
    connectivity: Connectivity,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SwArgs {
    /// Input image (PGM or PNG); sets the raster size.
    #[arg(long)]
    image: PathBuf,
    /// Patch labels as row,col,size,label.
    #[arg(long, conflicts_with = "oracle", required_unless_present = "oracle")]
    labels: Option<PathBuf>,
    /// Truth mask used to label patches.
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Minimum bud fraction of a patch for an oracle-positive label.
    #[arg(long, default_value_t = vinemark_core::swdetect::DEFAULT_MIN_BUD_FRACTION)]
    min_fraction: f64,
    /// Window side in pixels.
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    nu: u32,
    /// Output mask (PGM).
    #[arg(long)]
    out: PathBuf,
    /// Optional vote-count dump (PGM).
    #[arg(long)]
    votes_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    count: usize,
    /// Largest scene side in pixels.
    #[arg(long, default_value_t = 64)]
    max_side: usize,
    #[arg(long, default_value_t = 0.5, value_parser = parse_alpha)]
    alpha: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportKind {
    Table,
    ScatterDetection,
    ScatterSegTp,
    ScatterSegSplit,
    HistNa,
    HistNd,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Sweep JSON, or a JSON array of table rows.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportKind::Table)]
    kind: ReportKind,
    /// Table format; scatter data is always CSV and histograms JSON.
    #[arg(long, value_enum, default_value_t = Format::Markdown)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VarsArgs {
    /// Eval report or table row supplying the inputs below.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    p_d: Option<f64>,
    #[arg(long)]
    r_d: Option<f64>,
    /// Mean normalized area of false alarms.
    #[arg(long)]
    na: Option<f64>,
    /// Mean segmentation precision of true positives.
    #[arg(long)]
    ps_tp: Option<f64>,
    /// Mean segmentation precision of splits.
    #[arg(long)]
    ps_split: Option<f64>,
    /// Mean normalized distance of false alarms.
    #[arg(long)]
    nd: Option<f64>,
    #[arg(long, default_value_t = 240.0)]
    buds_per_plant: f64,
    #[arg(long, default_value_t = 5.0)]
    bud_diameter_mm: f64,
    #[arg(long, default_value_t = 150.0)]
    internode_mm: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: cannot start {jobs} workers: {e}");
            return ExitCode::FAILURE;
        }
    }
    let outcome = match &cli.command {
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Sw(a) => commands::sw(a),
        Command::Synth(a) => commands::synth(a, cli.seed),
        Command::Report(a) => commands::report(a),
        Command::Vars(a) => commands::vars(a),
    };
    match outcome {
        Ok(commands::Outcome::Complete) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Partial(n)) => {
            eprintln!("warning: {n} image(s) failed; see the errors section of the report");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
