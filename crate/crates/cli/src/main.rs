//! `stvs`: command line driver for the voltage stability lab.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use stvs_cli::train::ModelKind;
use stvs_cli::{assess, evaluate, generate, label, train};
use stvs_core::lstm::LossKind;
use stvs_core::metrics::F1Mode;

#[derive(Parser)]
#[command(
    name = "stvs",
    version,
    about = "Desk-scale short-term voltage stability lab",
    subcommand_required = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    SquaredError,
    CrossEntropy,
}

impl From<LossArg> for LossKind {
    fn from(value: LossArg) -> Self {
        match value {
            LossArg::SquaredError => LossKind::SquaredError,
            LossArg::CrossEntropy => LossKind::CrossEntropy,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum F1Arg {
    Standard,
    TprFpr,
}

impl From<F1Arg> for F1Mode {
    fn from(value: F1Arg) -> Self {
        match value {
            F1Arg::Standard => F1Mode::Standard,
            F1Arg::TprFpr => F1Mode::TprFpr,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic post-disturbance trajectories from a scenario grid.
    Generate {
        /// TOML file overriding the default scenario grid.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed override on top of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output JSONL path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Label a dataset by threshold seeding plus constrained clustering.
    Label {
        /// Input JSONL dataset.
        #[arg(long)]
        data: PathBuf,
        /// Output JSONL path for the labeled copy.
        #[arg(long)]
        out: PathBuf,
        /// Voltage floor a seed-stable instance must hold at every step.
        #[arg(long, default_value_t = 0.9)]
        v_stable: f64,
        /// Voltage ceiling a seed-unstable instance must stay under late on.
        #[arg(long, default_value_t = 0.7)]
        v_unstable: f64,
        /// Fraction of the series treated as the tail.
        #[arg(long, default_value_t = 0.2)]
        tail_fraction: f64,
        /// Cluster count for the constrained fit.
        #[arg(long, default_value_t = 2)]
        clusters: usize,
        /// Upper bound on clustering passes.
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
    },
    /// Train a classifier on a labeled dataset and write a checkpoint.
    Train {
        /// Labeled JSONL dataset.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path; history and manifest land beside it.
        #[arg(long)]
        out: PathBuf,
        /// Classifier family to fit.
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Observation window length in steps.
        #[arg(long)]
        otw: usize,
        /// Share of instances used for fitting; the rest are held out.
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        /// Seed for the split and the model's random draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hidden state width of the recurrent model.
        #[arg(long, default_value_t = 256)]
        hidden_dim: usize,
        #[arg(long, default_value_t = 1e-4)]
        learning_rate: f64,
        /// Dropout rate on the final hidden state during training.
        #[arg(long, default_value_t = 0.25)]
        dropout: f64,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        /// Training loss for the recurrent model.
        #[arg(long, value_enum, default_value_t = LossArg::SquaredError)]
        loss: LossArg,
        /// Depth cap for the decision tree.
        #[arg(long, default_value_t = 8)]
        max_depth: usize,
        /// Smallest sample count a tree leaf may hold.
        #[arg(long, default_value_t = 5)]
        min_leaf: usize,
        /// Regularization strength of the linear model.
        #[arg(long, default_value_t = 1e-4)]
        lambda: f64,
        /// Pass count for the linear model.
        #[arg(long, default_value_t = 50)]
        svm_epochs: usize,
    },
    /// Score checkpoints on held-out data; write report, tables, and charts.
    Evaluate {
        /// Labeled JSONL dataset the checkpoints were trained from.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to score; repeat the flag for several.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Observation window to report on; repeat the flag for several.
        #[arg(long = "otw", required = true)]
        otw: Vec<usize>,
        /// Directory receiving report.json, table.csv, ROC dumps, and charts.
        #[arg(long)]
        out: PathBuf,
        /// How the F1 statistic is assembled.
        #[arg(long, value_enum, default_value_t = F1Arg::Standard)]
        f1_mode: F1Arg,
    },
    /// Replay instances through a checkpoint as an online monitor would.
    Assess {
        /// Checkpoint to drive.
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSONL dataset to replay; labels are not required.
        #[arg(long)]
        data: PathBuf,
        /// Emit a row per elapsed step instead of only the final verdict.
        #[arg(long)]
        stream: bool,
        /// Earliest elapsed step a streaming verdict may be issued at.
        #[arg(long, default_value_t = 3)]
        min_otw: usize,
        /// Row sink; omitted means stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { config, seed, out } => {
            generate::run(&generate::GenerateArgs { config, seed, out })?;
        }
        Command::Label {
            data,
            out,
            v_stable,
            v_unstable,
            tail_fraction,
            clusters,
            max_iter,
        } => {
            label::run(&label::LabelArgs {
                data,
                out,
                v_stable,
                v_unstable,
                tail_fraction,
                clusters,
                max_iter,
            })?;
        }
        Command::Train {
            data,
            out,
            model,
            otw,
            train_fraction,
            seed,
            hidden_dim,
            learning_rate,
            dropout,
            batch_size,
            epochs,
            loss,
            max_depth,
            min_leaf,
            lambda,
            svm_epochs,
        } => {
            let mut args = train::TrainArgs::new(data, out, model, otw);
            args.train_fraction = train_fraction;
            args.seed = seed;
            args.lstm.hidden_dim = hidden_dim;
            args.lstm.learning_rate = learning_rate;
            args.lstm.dropout_rate = dropout;
            args.lstm.batch_size = batch_size;
            args.lstm.epochs = epochs;
            args.lstm.loss = loss.into();
            args.cart.max_depth = max_depth;
            args.cart.min_leaf = min_leaf;
            args.svm.lambda = lambda;
            args.svm.epochs = svm_epochs;
            train::run(&args)?;
        }
        Command::Evaluate {
            data,
            checkpoints,
            otw,
            out,
            f1_mode,
        } => {
            evaluate::run(&evaluate::EvaluateArgs {
                data,
                checkpoints,
                otw,
                out_dir: out,
                f1_mode: f1_mode.into(),
            })?;
        }
        Command::Assess {
            checkpoint,
            data,
            stream,
            min_otw,
            out,
        } => {
            assess::run(&assess::AssessArgs {
                checkpoint,
                data,
                stream,
                min_otw_steps: min_otw,
                out,
            })?;
        }
    }
    Ok(())
}
