use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pulse_core::series::{InterpolationMethod, DEFAULT_MAX_GAP};

#[derive(Debug, Parser)]
#[command(name = "pulse", version, about = "Contextual anomaly detection for wearable and ambient time series")]
pub struct Cli {
    /// Worker threads for window- and patient-level parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a per-patient imputation model.
    Train(TrainArgs),
    /// Score a series, calibrate a threshold and write events.
    Detect(DetectArgs),
    /// Blocked k-fold evaluation against labels.
    Eval(EvalArgs),
    /// Fill short gaps and write the series back out.
    Interpolate(InterpolateArgs),
    /// Generate a synthetic patient with ground-truth events.
    Synth(SynthArgs),
    /// Build explanation prompts and signal excerpts for detected events.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV; repeat for several patients.
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    /// Channel-role file: `channel.NAME = target|context|ignore`.
    #[arg(long)]
    pub schema: PathBuf,
    /// Longest gap, in samples, that interpolation fills.
    #[arg(long, default_value_t = DEFAULT_MAX_GAP)]
    pub max_gap: usize,
    #[arg(long, default_value = "nearest-window", value_parser = parse_method)]
    pub interp: InterpolationMethod,
}

fn parse_method(s: &str) -> Result<InterpolationMethod, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "PULSE_OUT_DIR", default_value = "pulse-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindowPreset {
    /// 16 samples, last 8 masked.
    Home,
    /// 5 samples, last one masked.
    Stress,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 2)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 17)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = WindowPreset::Home)]
    pub window: WindowPreset,
    /// Three blocks at d = 128 instead of the small default.
    #[arg(long)]
    pub full_scale: bool,
    /// `model.KEY = VALUE` overrides, as written in a model manifest.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    /// Per-feature gates instead of one scalar per branch.
    #[arg(long)]
    pub vector_gates: bool,
    /// Drop context channels (context-blind ablation).
    #[arg(long)]
    pub no_context: bool,
    /// Fraction of each series used for training.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Cap on windows visited per epoch.
    #[arg(long)]
    pub max_windows: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Target exceedance risk.
    #[arg(long, default_value_t = 1e-3)]
    pub q: f64,
    /// Quantile of calibration scores used as the initial threshold.
    #[arg(long, default_value_t = 0.98)]
    pub u_quantile: f64,
    /// Skip the tail fit and use the empirical (1 - q) quantile.
    #[arg(long)]
    pub threshold_fallback_only: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    /// Leading fraction of the series whose scores calibrate the threshold.
    #[arg(long, default_value_t = 0.8)]
    pub calibration_fraction: f64,
    /// Prompt rows to score with; repeat for several anomaly types.
    #[arg(long = "anomaly-type")]
    pub anomaly_types: Vec<usize>,
    /// Calibrate one threshold per anomaly type instead of one pooled threshold.
    #[arg(long)]
    pub per_type_thresholds: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `timestamp,label` CSV; percentile labels are used when absent.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Fit on every training row, including labelled anomalies.
    #[arg(long)]
    pub fit_on_all: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Built-in profile: stress, activity or home.
    #[arg(long, conflicts_with = "profile")]
    pub preset: Option<String>,
    /// Profile file (`key = value`).
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, default_value_t = 14.0)]
    pub days: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Generate the clean signal only.
    #[arg(long)]
    pub no_injections: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Event log written by `detect`.
    #[arg(long)]
    pub events: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Patient metadata (`key = value`).
    #[arg(long)]
    pub patient: Option<PathBuf>,
    /// Minutes of signal before each event's end included in the excerpt.
    #[arg(long, default_value_t = 120)]
    pub excerpt_minutes: u32,
    #[command(flatten)]
    pub out: OutArgs,
}
