use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use itm_core::dva::{IterationMode, PcLoss};
use itm_core::pipeline::PipelineConfig;
use itm_core::pseudocluster::CenterScheme;
use itm_core::trainer::EvalMode;

#[derive(Debug, Parser)]
#[command(name = "itm", version, about = "Rank pretrained models by the transferability of their embeddings")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score one ITMF embedding file.
    Score(ScoreArgs),
    /// Score every model in a manifest and correlate with its ground truth.
    Rank(RankArgs),
    /// Generate a synthetic model zoo with probe-measured ground truth.
    Synth(SynthArgs),
    /// τ_w over every k-model subset of a pool, per method.
    Stability(StabilityArgs),
    /// Correlate two score files.
    Metrics(MetricsArgs),
}

/// Iteration count: `auto` derives it from the class dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepCount {
    Auto,
    Fixed(usize),
}

impl FromStr for StepCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(StepCount::Auto);
        }
        s.parse()
            .map(StepCount::Fixed)
            .map_err(|_| format!("expected `auto` or a non-negative integer, got {s:?}"))
    }
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Concurrent model scorings [default: logical processors].
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "onehot")]
    pub centers: CenterScheme,
    #[arg(long, global = true)]
    pub shift_centers: bool,
    #[arg(long, global = true, default_value = "evolved")]
    pub eval_mode: EvalMode,
    #[arg(long, global = true, default_value = "auto")]
    pub n: StepCount,
    #[arg(long, global = true, default_value_t = 0.01)]
    pub eta: f64,
    #[arg(long, global = true, default_value_t = 500)]
    pub iters: usize,
    /// Iterations between evaluations, capped at --iters.
    #[arg(long, global = true, default_value_t = 100)]
    pub eval_every: usize,
    #[arg(long, global = true, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, global = true, default_value_t = 5e-3)]
    pub lr: f64,
    #[arg(long, global = true, default_value = "mse")]
    pub pc_loss: PcLoss,
    #[arg(long, global = true)]
    pub standardize: bool,
}

impl GlobalOpts {
    pub fn pipeline(&self) -> PipelineConfig {
        let mut cfg = PipelineConfig {
            centers: self.centers,
            shift_centers: self.shift_centers,
            standardize: self.standardize,
            ..PipelineConfig::default()
        };
        let train = &mut cfg.train;
        train.seed = self.seed;
        train.eval_mode = self.eval_mode;
        train.iterations = self.iters;
        train.eval_every = self.eval_every.min(self.iters);
        train.lr = self.lr;
        train.dva.eta = self.eta;
        train.dva.batch_size = self.batch;
        train.dva.pc_loss = self.pc_loss;
        if let StepCount::Fixed(n) = self.n {
            train.dva.n_mode = IterationMode::Fixed { n };
        }
        cfg
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub features: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub models: usize,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 200)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 0.5)]
    pub sep_low: f64,
    #[arg(long, default_value_t = 10.0)]
    pub sep_high: f64,
    #[arg(long, default_value_t = 3.0)]
    pub noise: f64,
    /// Destination directory; falls back to --out.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// Pool of models; entries without ground truth are left out.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Precomputed ITM scores (rank JSON, flat map or manifest) instead of
    /// training.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Extra method as NAME=PATH, PATH being any score file.
    #[arg(long = "compare", value_name = "NAME=PATH")]
    pub compare: Vec<String>,
    /// Random subsets instead of all of them.
    #[arg(long)]
    pub samples: Option<usize>,
    /// CSV of (counterpart τ_w, ITM τ_w) pairs per subset.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Score file holding the measured values.
    pub truth: PathBuf,
    /// Score file holding the predictions.
    pub predicted: PathBuf,
}
