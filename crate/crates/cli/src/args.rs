use std::path::PathBuf;

use adathresh_core::bin_stats::StdMode;
use adathresh_core::evaluation::Difficulty;
use adathresh_core::geometry::IouKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "adathresh",
    version,
    about = "Distance-adaptive confidence thresholds for LiDAR 3D detections"
)]
pub struct Cli {
    /// JSON config file; command-line flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for per-frame work (default: one per core)
    #[arg(long, short = 'j', global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-distance-bin score mean and spread of the detections
    Stats(StatsCmd),
    /// Fit the adaptive threshold curve to binned statistics
    Fit(FitCmd),
    /// Write thresholded copies of detection files
    Filter(FilterCmd),
    /// Match detections to ground truth and report metrics
    Eval(EvalCmd),
    /// Metric deltas between two eval reports
    Compare(CompareCmd),
    /// Generate a seeded synthetic dataset
    Synth(SynthCmd),
    /// Plot a threshold curve against binned statistics
    Report(ReportCmd),
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Ground-truth label directory
    #[arg(long, value_name = "DIR")]
    pub gt: Option<PathBuf>,
    /// Detection directory (same file names, score as 16th field)
    #[arg(long, value_name = "DIR")]
    pub det: Option<PathBuf>,
    /// Object class to evaluate [default: Car]
    #[arg(long)]
    pub class: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BinArgs {
    /// Distance bin width in meters [default: 10]
    #[arg(long, value_name = "M")]
    pub bin_width: Option<f64>,
    /// Upper edge of the last bin in meters [default: 60]
    #[arg(long, value_name = "M")]
    pub max_distance: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SampleArgs {
    /// Spread statistic per bin [default: population]
    #[arg(long, value_enum)]
    pub std_mode: Option<StdModeArg>,
    /// Use every detection, skipping the distance pre-filter
    #[arg(long, conflicts_with_all = ["distance_cutoff", "near_threshold", "far_threshold"])]
    pub no_prefilter: bool,
    /// Pre-filter switch-over distance in meters [default: 40]
    #[arg(long, value_name = "M")]
    pub distance_cutoff: Option<f64>,
    /// Pre-filter score cutoff below the switch-over distance [default: 0.5]
    #[arg(long, value_name = "T")]
    pub near_threshold: Option<f64>,
    /// Pre-filter score cutoff at or beyond the switch-over distance [default: 0.3]
    #[arg(long, value_name = "T")]
    pub far_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct MatchArgs {
    /// Overlap measure [default: bev]
    #[arg(long, value_enum)]
    pub iou: Option<IouArg>,
    /// Minimum IoU for a match [default: 0.7]
    #[arg(long, value_name = "T")]
    pub iou_thr: Option<f64>,
    /// Interpolation points for average precision [default: 11]
    #[arg(long, value_enum)]
    pub ap: Option<ApArg>,
    /// Keep only ground truth of this difficulty
    #[arg(long, value_enum)]
    pub difficulty: Option<DifficultyArg>,
}

#[derive(Debug, Args)]
pub struct StatsCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub bins: BinArgs,
    #[command(flatten)]
    pub sample: SampleArgs,
    /// Output directory [default: .]
    #[arg(long, short = 'o', value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitCmd {
    /// Fit from a bin_stats.json written by `stats` instead of a dataset
    #[arg(long, value_name = "FILE", conflicts_with_all = ["gt", "det"])]
    pub stats: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub bins: BinArgs,
    #[command(flatten)]
    pub sample: SampleArgs,
    /// Distance where the curve hands over to the constant k [default: 60]
    #[arg(long, value_name = "M")]
    pub delta: Option<f64>,
    /// Far-range constant: a number, or 'continuity' [default: 0.6]
    #[arg(long, value_name = "K")]
    pub k: Option<String>,
    /// Output directory [default: .]
    #[arg(long, short = 'o', value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterCmd {
    /// Detection directory
    #[arg(long, value_name = "DIR")]
    pub det: Option<PathBuf>,
    /// single:<t>, adaptive, or adaptive:<model.json> [default: adaptive]
    #[arg(long, value_name = "MODE")]
    pub threshold_mode: Option<String>,
    /// Output directory for the filtered files
    #[arg(long, short = 'o', value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub bins: BinArgs,
    #[command(flatten)]
    pub matching: MatchArgs,
    /// single:<t>, adaptive, or adaptive:<model.json> [default: adaptive]
    #[arg(long, value_name = "MODE")]
    pub threshold_mode: Option<String>,
    /// Output directory [default: .]
    #[arg(long, short = 'o', value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareCmd {
    /// Baseline report.json
    pub before: PathBuf,
    /// Candidate report.json
    pub after: PathBuf,
    /// CSV file to write [default: print only]
    #[arg(long, short = 'o', value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    /// Scenario JSON; built-in scenario when omitted
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,
    /// Override the scenario seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of frames
    #[arg(long)]
    pub frames: Option<usize>,
    /// Output directory; receives gt/, det/ and manifest.json [default: .]
    #[arg(long, short = 'o', value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportCmd {
    /// bin_stats.json from `stats`; the plot shows the curve only without it
    #[arg(long, value_name = "FILE")]
    pub stats: Option<PathBuf>,
    /// Threshold model JSON [default: reference curve]
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Output directory [default: .]
    #[arg(long, short = 'o', value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StdModeArg {
    Population,
    Normalized,
}

impl From<StdModeArg> for StdMode {
    fn from(a: StdModeArg) -> Self {
        match a {
            StdModeArg::Population => StdMode::Population,
            StdModeArg::Normalized => StdMode::NormalizedByMean,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IouArg {
    Bev,
    #[value(name = "3d")]
    ThreeD,
}

impl From<IouArg> for IouKind {
    fn from(a: IouArg) -> Self {
        match a {
            IouArg::Bev => IouKind::Bev,
            IouArg::ThreeD => IouKind::ThreeD,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ApArg {
    #[value(name = "11")]
    Eleven,
    #[value(name = "40")]
    Forty,
}

impl From<ApArg> for u32 {
    fn from(a: ApArg) -> Self {
        match a {
            ApArg::Eleven => 11,
            ApArg::Forty => 40,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DifficultyArg {
    Easy,
    Moderate,
    Hard,
}

impl From<DifficultyArg> for Difficulty {
    fn from(a: DifficultyArg) -> Self {
        match a {
            DifficultyArg::Easy => Difficulty::Easy,
            DifficultyArg::Moderate => Difficulty::Moderate,
            DifficultyArg::Hard => Difficulty::Hard,
        }
    }
}
