//! Argument parsing and dispatch for the `spw` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spw_core::metrics::ClusterOptions;
use spw_core::{ClassWeightMode, FilterBankSpec, Reduction, SpwConfig};

use crate::bench::{run_bench, BenchOptions};
use crate::commands::{cmd_decompose, cmd_loss, cmd_metrics, cmd_weightmap};
use crate::error::{CliError, CliResult};
use crate::train::{train, LossMode, TrainOptions};

#[derive(Debug, Parser)]
#[command(name = "spw", version, about = "Steerable pyramid weighted cross-entropy tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassWeightArg {
    Uniform,
    Invfreq,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReductionArg {
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Ce,
    Spw,
}

#[derive(Debug, Clone, Args)]
pub struct PyramidArgs {
    /// Pyramid levels N.
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Orientations per level K.
    #[arg(long = "orients", default_value_t = 4)]
    pub orientations: usize,
}

impl PyramidArgs {
    pub fn spec(&self) -> CliResult<FilterBankSpec> {
        Ok(FilterBankSpec::new(self.orientations, self.levels)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct WeightArgs {
    #[command(flatten)]
    pub pyramid: PyramidArgs,
    /// Weight of the SPW term.
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    /// Per-level decay.
    #[arg(long, default_value_t = 0.9)]
    pub beta: f64,
    #[arg(long, value_enum, default_value_t = ClassWeightArg::Uniform)]
    pub class_weights: ClassWeightArg,
    #[arg(long, value_enum, default_value_t = ReductionArg::Mean)]
    pub reduction: ReductionArg,
    /// Use the label-only map and drop the prediction term.
    #[arg(long)]
    pub no_pred_map: bool,
}

impl WeightArgs {
    pub fn config(&self) -> CliResult<SpwConfig> {
        let cfg = SpwConfig {
            lambda: self.lambda,
            beta: self.beta,
            levels: self.pyramid.levels,
            orientations: self.pyramid.orientations,
            class_weights: match self.class_weights {
                ClassWeightArg::Uniform => ClassWeightMode::Uniform,
                ClassWeightArg::Invfreq => ClassWeightMode::InverseFrequency,
            },
            reduction: match self.reduction {
                ReductionArg::Sum => Reduction::Sum,
                ReductionArg::Mean => Reduction::Mean,
            },
            include_prediction: !self.no_pred_map,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write high-pass, subband envelopes and low-pass of an image.
    Decompose {
        image: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        pyramid: PyramidArgs,
    },
    /// Write the per-pixel weight map of a label (and optional prediction).
    Weightmap {
        label: PathBuf,
        /// Foreground probability map, or a directory of per-class maps.
        pred: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        weights: WeightArgs,
    },
    /// Print the weighted cross-entropy of a prediction.
    Loss {
        label: PathBuf,
        pred: PathBuf,
        #[command(flatten)]
        weights: WeightArgs,
    },
    /// Print mIoU, mDice, VI and ARI between two class images.
    Metrics {
        gt: PathBuf,
        pred: PathBuf,
        /// Drop pixels whose ground-truth class is 0.
        #[arg(long)]
        exclude_background: bool,
    },
    /// Time the weight map against plain cross-entropy.
    Bench {
        /// Comma-separated square sizes.
        #[arg(long, value_delimiter = ',', default_value = "256,512,1024")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Compute per-channel pyramids concurrently.
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        weights: WeightArgs,
    },
    /// Train a toy thin-structure segmenter and log the loss per step.
    DemoTrain {
        #[arg(long, value_enum, default_value_t = LossArg::Spw)]
        loss: LossArg,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        weights: WeightArgs,
    },
}

/// Worker count from `SPW_THREADS`; 1 when unset.
pub fn threads_from_env() -> CliResult<usize> {
    match std::env::var("SPW_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::input(format!("SPW_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

/// Runs a parsed command and returns its stdout text.
pub fn run(cli: Cli) -> CliResult<String> {
    let threads = threads_from_env()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> CliResult<String> {
    match command {
        Command::Decompose { image, out, pyramid } => Ok(cmd_decompose(&image, pyramid.spec()?, &out)?.to_string()),
        Command::Weightmap { label, pred, out, weights } => {
            Ok(cmd_weightmap(&label, pred.as_deref(), &weights.config()?, &out)?.to_string())
        }
        Command::Loss { label, pred, weights } => {
            let record = cmd_loss(&label, &pred, &weights.config()?)?;
            if let Some(loss) = record.get("loss") {
                eprintln!("loss = {loss}");
            }
            Ok(record.to_string())
        }
        Command::Metrics { gt, pred, exclude_background } => {
            Ok(cmd_metrics(&gt, &pred, ClusterOptions { exclude_background })?.to_string())
        }
        Command::Bench { sizes, reps, seed, parallel, weights } => {
            let opts = BenchOptions { sizes, reps, config: weights.config()?, seed, parallel };
            Ok(run_bench(&opts)?.render())
        }
        Command::DemoTrain { loss, samples, size, steps, lr, seed, weights } => {
            let opts = TrainOptions {
                mode: match loss {
                    LossArg::Ce => LossMode::CrossEntropy,
                    LossArg::Spw => LossMode::Spw,
                },
                config: weights.config()?,
                samples,
                size,
                steps,
                learning_rate: lr,
                seed,
                ..TrainOptions::default()
            };
            Ok(train(&opts)?.render())
        }
    }
}
