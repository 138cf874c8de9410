mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use veriframe::dataset::SplitScheme;
use veriframe::eval::{MissingPolicy, ReportFormat, Task};
use veriframe::launder::Degradation;
use veriframe::svm::{Gamma, KernelKind, KernelSpec, TrainConfig};

/// Real-vs-generated video classification over per-frame embeddings.
#[derive(Debug, Parser, Serialize)]
#[command(name = "veriframe", version, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct Global {
    /// Seed for every random decision (splits, balancing).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Root of all artifacts: frames/, stores/, models/, reports/, run.json.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Decode every stride-th frame of each manifest video to PNG.
    Extract(ExtractArgs),
    /// Embed extracted frames with a backend and write an embedding store.
    Embed(EmbedArgs),
    /// Train one classifier on a repetition's balanced training split.
    Train(TrainArgs),
    /// Repeated split/train/test evaluation, or a backend × kernel grid.
    Eval(EvalArgs),
    /// Training-free frame-to-prompt classification.
    Zeroshot(ZeroshotArgs),
    /// Leave each generator out of training and test on it alone.
    Loo(LooArgs),
    /// Accuracy under resolution or bitrate laundering of test videos.
    Robustness(RobustnessArgs),
    /// Export a 2-D PCA projection of a store as CSV.
    Viz(VizArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ManifestArg {
    /// Corpus manifest JSON.
    #[arg(short, long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    /// Keep every n-th frame.
    #[arg(long, default_value_t = 1)]
    pub stride: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    /// Backend sidecar JSON.
    #[arg(short, long)]
    pub backend: PathBuf,
    /// Embed every n-th frame; extracts missing frames first.
    #[arg(long, default_value_t = 1)]
    pub stride: u32,
    /// Store path; defaults to stores/<backend>.vfe.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KernelArgs {
    /// linear, rbf or poly.
    #[arg(long, default_value = "linear")]
    pub kernel: KernelKind,
    /// "scale" or a positive value.
    #[arg(long, default_value = "scale")]
    pub gamma: Gamma,
    /// Polynomial kernel degree.
    #[arg(long, default_value_t = 3)]
    pub degree: u32,
    /// Polynomial kernel offset.
    #[arg(long, default_value_t = 0.0)]
    pub coef0: f64,
    /// Soft-margin penalty.
    #[arg(short = 'C', long = "c", default_value_t = 1.0)]
    pub c: f64,
    /// SMO stopping tolerance.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

impl KernelArgs {
    pub fn spec(&self) -> KernelSpec {
        self.spec_for(self.kernel)
    }

    pub fn spec_for(&self, kind: KernelKind) -> KernelSpec {
        KernelSpec {
            kind,
            gamma: self.gamma,
            degree: self.degree,
            coef0: self.coef0,
        }
    }

    pub fn train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            c: self.c,
            tol: self.tol,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProtocolArgs {
    /// Action-level split: 80-20 or 40-40-20.
    #[arg(long, default_value = "80-20")]
    pub split: SplitScheme,
    /// Number of repetitions.
    #[arg(long, default_value_t = 5)]
    pub reps: u32,
    /// L2-normalize embeddings before training and prediction.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Md,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
            Format::Md => ReportFormat::Markdown,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    /// Embedding store.
    #[arg(short, long)]
    pub store: PathBuf,
    /// two-class or multi-class.
    #[arg(long, default_value = "two-class")]
    pub task: Task,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Action-level split: 80-20 or 40-40-20.
    #[arg(long, default_value = "80-20")]
    pub split: SplitScheme,
    /// Repetition whose training split is used.
    #[arg(long, default_value_t = 0)]
    pub repetition: u32,
    /// L2-normalize embeddings before training.
    #[arg(long)]
    pub normalize: bool,
    /// Model path; defaults to models/<task>-<kernel>.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    /// Embedding store; repeat with --grid to compare backends.
    #[arg(short, long, required = true)]
    pub store: Vec<PathBuf>,
    /// two-class or multi-class.
    #[arg(long, default_value = "two-class")]
    pub task: Task,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Extra report format written next to the JSON report.
    #[arg(long, value_enum, default_value = "md")]
    pub format: Format,
    /// Evaluate every store × {linear, rbf, poly} × {two-class, multi-class}.
    #[arg(long)]
    pub grid: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ZeroshotArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    /// Embedding store.
    #[arg(short, long)]
    pub store: PathBuf,
    /// Backend sidecar used to embed the prompt texts.
    #[arg(short, long)]
    pub backend: PathBuf,
    /// Built-in pair id (P1..P5) or "real text::fake text"; repeatable. Defaults to P1..P5.
    #[arg(long = "pair", alias = "prompt-pair")]
    pub pairs: Vec<String>,
    /// Render built-in pairs with their articles ("a real photo").
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub templated: bool,
    /// Prompt embedding cache; defaults to $VERIFRAME_CACHE_DIR or <out-dir>/cache.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct LooArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    /// Embedding store.
    #[arg(short, long)]
    pub store: PathBuf,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OnMissing {
    Skip,
    Abort,
}

impl From<OnMissing> for MissingPolicy {
    fn from(m: OnMissing) -> Self {
        match m {
            OnMissing::Skip => MissingPolicy::Skip,
            OnMissing::Abort => MissingPolicy::Abort,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RobustnessArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    /// Clean embedding store.
    #[arg(short, long)]
    pub store: PathBuf,
    /// Backend sidecar that produced the clean store.
    #[arg(short, long)]
    pub backend: PathBuf,
    /// resolution or bitrate.
    #[arg(long)]
    pub mode: Degradation,
    /// Percent levels in (0, 100].
    #[arg(long, value_delimiter = ',', default_value = "100,75,50,25,10")]
    pub levels: Vec<f64>,
    /// Frame stride for laundered videos; match the clean store.
    #[arg(long, default_value_t = 1)]
    pub stride: u32,
    /// Train on laundered embeddings too instead of clean ones.
    #[arg(long)]
    pub launder_train: bool,
    /// What to do with videos whose laundering or embedding fails.
    #[arg(long, value_enum, default_value = "skip")]
    pub on_missing: OnMissing,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct VizArgs {
    /// Embedding store.
    #[arg(short, long)]
    pub store: PathBuf,
    /// CSV path; defaults to reports/projection-<backend>.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.global.workers).build_global() {
        eprintln!("error: cannot start worker pool: {e}");
        return ExitCode::from(1);
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
