//! `occtool`: occupancy measurement, evaluation and HVAC simulation from the
//! command line.
//!
//! Exit codes: 0 success, 1 bad input or usage, 2 internal failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "occtool", version, about = "Occupancy measurement and occupancy-driven HVAC simulation", propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Count people per frame with a tracker (or raw detections).
    Track(TrackArgs),
    /// Re-check uncertain frames with an LLM and fuse the answers.
    Refine(RefineArgs),
    /// Score a series against frame-level ground truth.
    Eval(EvalArgs),
    /// Aggregate a series into control intervals.
    Aggregate(AggregateArgs),
    /// Simulate the zone under the baseline schedule or the MPC.
    Simulate(SimulateArgs),
    /// Run a whole pipeline into a run directory.
    Run(RunArgs),
    /// Side-by-side metrics of several runs.
    Compare(CompareArgs),
    /// Monthly energy and PPD charts of a run.
    Report(ReportArgs),
    /// Serve the mock LLM endpoint over HTTP.
    ServeMock(ServeMockArgs),
}

#[derive(Debug, Args)]
struct TrackArgs {
    /// Detection log (JSON lines).
    #[arg(long)]
    detections: PathBuf,
    /// sort, deepsort, bytetrack or none.
    #[arg(long, default_value = "none")]
    tracker: String,
    /// Detection confidence threshold.
    #[arg(long, default_value_t = 0.5)]
    conf: f64,
    /// Tracker parameters (TOML).
    #[arg(long)]
    tracker_config: Option<PathBuf>,
    /// Output series CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-video MOT-style track files.
    #[arg(long)]
    tracks_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LlmArgs {
    /// LLM endpoint URL.
    #[arg(long, env = "OCCTOOL_LLM_URL", conflicts_with = "mock")]
    llm_url: Option<String>,
    /// Mock endpoint: echo, fail, fixed:<count>:<confidence> or a script file.
    #[arg(long)]
    mock: Option<String>,
    /// Confidence margin an LLM answer must win by.
    #[arg(long, default_value_t = 0.15)]
    margin: f64,
    /// text or vision.
    #[arg(long, default_value = "text")]
    mode: String,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value = "deepseek")]
    model: String,
    /// Seconds per request.
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
    /// Extra attempts after a transport failure.
    #[arg(long, default_value_t = 1)]
    retries: u32,
    /// Frame images for vision mode, as <dir>/<video>/<frame>.jpg.
    #[arg(long)]
    image_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RefineArgs {
    /// Series CSV to refine.
    #[arg(long)]
    series: PathBuf,
    /// Detection log the series was produced from.
    #[arg(long)]
    detections: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    conf: f64,
    #[command(flatten)]
    llm: LlmArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Audit log of every reviewed frame (JSON lines).
    #[arg(long)]
    audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Ground truth CSV `video,frame,count`.
    #[arg(long)]
    gt: PathBuf,
    /// Identity ground truth, `VIDEO=PATH` or `PATH` (video id from the file name).
    #[arg(long)]
    gt_ids: Vec<String>,
    /// Predicted series CSV.
    #[arg(long)]
    pred: PathBuf,
    /// Predicted tracks from `track --tracks-out`, same forms as --gt-ids.
    #[arg(long)]
    pred_tracks: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-video metrics CSV.
    #[arg(long)]
    per_video: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    #[arg(long)]
    pred: PathBuf,
    /// Interval length in seconds.
    #[arg(long, default_value_t = 300)]
    interval: u32,
    /// max or mean.
    #[arg(long, default_value = "max")]
    reducer: String,
    /// Tile the measured day profiles over this many days.
    #[arg(long)]
    tile_days: Option<u32>,
    /// First tiled day (YYYY-MM-DD); January 1 of the first observed year by default.
    #[arg(long, requires = "tile_days")]
    start: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Interval CSV driving the plant.
    #[arg(long)]
    occupancy: PathBuf,
    /// Interval CSV the controller plans with; defaults to --occupancy.
    #[arg(long)]
    controller_occupancy: Option<PathBuf>,
    /// Outdoor temperature CSV `timestamp,tout_c`.
    #[arg(long)]
    weather: PathBuf,
    /// baseline or mpc.
    #[arg(long)]
    controller: String,
    /// Simulation config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Summary of a baseline simulation to compute savings against.
    #[arg(long)]
    baseline_summary: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// detector_only, sort, deepsort, bytetrack, llm_text or llm_vision.
    #[arg(long)]
    pipeline: String,
    /// Pipeline settings (TOML); overrides the defaults of --pipeline.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, requires = "gt")]
    gt_ids: Vec<String>,
    #[arg(long)]
    weather: Option<PathBuf>,
    #[arg(long, env = "OCCTOOL_LLM_URL", conflicts_with = "mock")]
    llm_url: Option<String>,
    #[arg(long)]
    mock: Option<String>,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    /// Run id; the directory name under --runs-dir.
    #[arg(long)]
    id: String,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Comma-separated run ids.
    #[arg(long, value_delimiter = ',', required = true)]
    runs: Vec<String>,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    run: String,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    /// Output directory for energy.svg, ppd.svg and monthly.csv.
    #[arg(long)]
    charts: PathBuf,
}

#[derive(Debug, Args)]
struct ServeMockArgs {
    #[arg(long, default_value = "127.0.0.1:8089")]
    addr: String,
    #[arg(long, default_value = "echo")]
    mock: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| commands::dispatch(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("occtool: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
        Err(_) => ExitCode::from(2),
    }
}
