//! `train`: fit one classifier on a labeled dataset, write a checkpoint.
//!
//! The split recipe travels inside the checkpoint, so a later `evaluate` or
//! `assess` can rebuild exactly the held-out partition this run never showed
//! the model. The normalizer is fitted on the training side only.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use stvs_core::baselines::{
    cart_predict, flatten_window, train_cart, train_svm, svm_objective, CartConfig, SvmConfig,
};
use stvs_core::checkpoint::{Checkpoint, ModelKindData, SplitSpec, CHECKPOINT_VERSION};
use stvs_core::data::{
    fit_normalizer, header_path, normalize_series, read_jsonl, split_dataset, window, Dataset,
    NormStats, StabilityClass,
};
use stvs_core::lstm::{self, TrainConfig};

use crate::ensure_parent;
use crate::manifest::RunManifest;

/// Classifier families the driver can fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Lstm,
    Dt,
    Svm,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Dt => "dt",
            ModelKind::Svm => "svm",
        })
    }
}

pub struct TrainArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub model: ModelKind,
    /// Observation window length in steps.
    pub otw_steps: usize,
    pub train_fraction: f64,
    /// Drives the split and, where a model draws random numbers, its stream.
    pub seed: u64,
    /// Hyperparameters for the recurrent model; `seed` above wins.
    pub lstm: TrainConfig,
    pub cart: CartConfig,
    /// Hyperparameters for the linear baseline; `seed` above wins.
    pub svm: SvmConfig,
}

impl TrainArgs {
    pub fn new(data: PathBuf, out: PathBuf, model: ModelKind, otw_steps: usize) -> Self {
        TrainArgs {
            data,
            out,
            model,
            otw_steps,
            train_fraction: 0.8,
            seed: 0,
            lstm: TrainConfig::default(),
            cart: CartConfig::default(),
            svm: SvmConfig::default(),
        }
    }
}

#[derive(Debug)]
pub struct TrainSummary {
    pub kind: ModelKind,
    pub otw_steps: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub final_train_loss: f64,
    pub test_accuracy: f64,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub manifest: PathBuf,
}

pub fn run(args: &TrainArgs) -> Result<TrainSummary> {
    let ds = read_jsonl(&args.data)
        .with_context(|| format!("reading dataset {}", args.data.display()))?;
    let unlabeled = ds
        .instances
        .iter()
        .filter(|inst| inst.label.is_none())
        .count();
    if unlabeled > 0 {
        bail!(
            "{unlabeled} of {} instances lack labels; run `stvs label` first",
            ds.instances.len()
        );
    }
    if args.otw_steps == 0 || args.otw_steps > ds.meta.steps {
        bail!(
            "observation window of {} steps does not fit series of {} steps",
            args.otw_steps,
            ds.meta.steps
        );
    }

    let (train_ds, test_ds) = split_dataset(&ds, args.train_fraction, args.seed)?;
    println!(
        "training {} on {} instances (window {} steps), holding out {}",
        args.model,
        train_ds.instances.len(),
        args.otw_steps,
        test_ds.instances.len()
    );

    let started = Instant::now();
    let (norm, model, history) = match args.model {
        ModelKind::Lstm => {
            let cfg = TrainConfig {
                seed: args.seed,
                ..args.lstm.clone()
            };
            let (model, norm, stats) =
                lstm::train(&train_ds, Some(&test_ds), args.otw_steps, &cfg)?;
            let rows = stats
                .iter()
                .map(|s| (s.epoch, s.train_loss, s.eval_accuracy))
                .collect();
            (norm, ModelKindData::Lstm { model }, rows)
        }
        ModelKind::Dt => {
            let norm = fit_normalizer(&train_ds)?;
            let (xs, ys) = flatten_windows(&train_ds, args.otw_steps, &norm)?;
            let tree = train_cart(&xs, &ys, &args.cart)?;
            let mut wrong = 0usize;
            for (x, y) in xs.iter().zip(&ys) {
                let predicted = cart_predict(&tree, x)? > 0.5;
                if predicted != (*y == StabilityClass::Stable) {
                    wrong += 1;
                }
            }
            let miss_rate = wrong as f64 / xs.len().max(1) as f64;
            (norm, ModelKindData::Dt { tree }, vec![(1, miss_rate, None)])
        }
        ModelKind::Svm => {
            let cfg = SvmConfig {
                seed: args.seed,
                ..args.svm
            };
            let norm = fit_normalizer(&train_ds)?;
            let (xs, ys) = flatten_windows(&train_ds, args.otw_steps, &norm)?;
            let model = train_svm(&xs, &ys, &cfg)?;
            let objective = svm_objective(&model, &xs, &ys, cfg.lambda);
            (norm, ModelKindData::Svm { model }, vec![(1, objective, None)])
        }
    };
    let train_elapsed = started.elapsed();

    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        otw_steps: args.otw_steps,
        norm_stats: norm,
        split: SplitSpec {
            train_fraction: args.train_fraction,
            seed: args.seed,
        },
        model,
    };
    let test_accuracy = dataset_accuracy(&checkpoint, &test_ds)?;

    let started = Instant::now();
    ensure_parent(&args.out)?;
    checkpoint
        .save(&args.out)
        .with_context(|| format!("writing checkpoint {}", args.out.display()))?;
    let history_path = PathBuf::from(format!("{}.history.csv", args.out.display()));
    write_history(&history_path, &history, test_accuracy)?;
    let write_elapsed = started.elapsed();

    let mut manifest = RunManifest::new(
        "train",
        serde_json::json!({
            "model": args.model.to_string(),
            "otw_steps": args.otw_steps,
            "train_fraction": args.train_fraction,
            "seed": args.seed,
            "hyperparameters": hyperparameter_echo(args)?,
        }),
    );
    manifest.record_seed("split", args.seed);
    if matches!(args.model, ModelKind::Lstm | ModelKind::Svm) {
        manifest.record_seed("model", args.seed);
    }
    manifest.record_timing("train", train_elapsed);
    manifest.record_timing("write", write_elapsed);
    manifest.stamp_input(&args.data)?;
    manifest.stamp_input(&header_path(&args.data))?;
    manifest.stamp_output(&args.out)?;
    manifest.stamp_output(&history_path)?;
    let manifest_out = manifest.write_beside(&args.out)?;

    let summary = TrainSummary {
        kind: args.model,
        otw_steps: args.otw_steps,
        train_count: train_ds.instances.len(),
        test_count: test_ds.instances.len(),
        final_train_loss: history.last().map(|row| row.1).unwrap_or(f64::NAN),
        test_accuracy,
        checkpoint: args.out.clone(),
        history: history_path,
        manifest: manifest_out,
    };

    println!(
        "final train loss {:.6}, held-out accuracy {:.4}",
        summary.final_train_loss, summary.test_accuracy
    );
    println!("checkpoint: {}", summary.checkpoint.display());
    println!("history: {}", summary.history.display());
    println!("manifest: {}", summary.manifest.display());
    Ok(summary)
}

/// Windows, normalizes, and flattens every instance for the fixed-width models.
fn flatten_windows(
    ds: &Dataset,
    otw_steps: usize,
    norm: &NormStats,
) -> Result<(Vec<Vec<f64>>, Vec<StabilityClass>)> {
    let mut xs = Vec::with_capacity(ds.instances.len());
    let mut ys = Vec::with_capacity(ds.instances.len());
    for inst in &ds.instances {
        let windowed = window(inst, otw_steps)?;
        xs.push(flatten_window(&normalize_series(&windowed.series, norm)?));
        match inst.label {
            Some(label) => ys.push(label),
            None => bail!("instance {} lacks a label", inst.id),
        }
    }
    Ok((xs, ys))
}

/// Share of held-out instances the checkpoint classifies correctly.
fn dataset_accuracy(checkpoint: &Checkpoint, ds: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for inst in &ds.instances {
        let (class, _) = checkpoint.predict(inst)?;
        match inst.label {
            Some(label) if label == class => correct += 1,
            Some(_) => {}
            None => bail!("instance {} lacks a label", inst.id),
        }
    }
    Ok(correct as f64 / ds.instances.len().max(1) as f64)
}

/// Epoch rows as `(epoch, train_loss, eval_accuracy)`. Single-shot models get
/// one row; their held-out accuracy is filled from the final measurement.
fn write_history(
    path: &PathBuf,
    rows: &[(usize, f64, Option<f64>)],
    final_accuracy: f64,
) -> Result<()> {
    let file =
        File::create(path).with_context(|| format!("writing history {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "epoch,train_loss,test_accuracy")?;
    for (i, (epoch, loss, accuracy)) in rows.iter().enumerate() {
        let accuracy = accuracy.or((i + 1 == rows.len()).then_some(final_accuracy));
        match accuracy {
            Some(acc) => writeln!(out, "{epoch},{loss},{acc}")?,
            None => writeln!(out, "{epoch},{loss},")?,
        }
    }
    out.flush()?;
    Ok(())
}

fn hyperparameter_echo(args: &TrainArgs) -> Result<serde_json::Value> {
    Ok(match args.model {
        ModelKind::Lstm => serde_json::to_value(TrainConfig {
            seed: args.seed,
            ..args.lstm.clone()
        })?,
        ModelKind::Dt => serde_json::to_value(&args.cart)?,
        ModelKind::Svm => serde_json::to_value(SvmConfig {
            seed: args.seed,
            ..args.svm
        })?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use stvs_core::simgen::{generate_dataset, GridConfig};

    fn labeled_data(dir: &std::path::Path) -> PathBuf {
        let cfg = GridConfig {
            n_samples: Some(40),
            steps: 12,
            seed: 5,
            ..GridConfig::default()
        };
        let mut ds = generate_dataset(&cfg).unwrap();
        for inst in &mut ds.instances {
            inst.label = inst.truth;
        }
        let path = dir.join("labeled.jsonl");
        stvs_core::data::write_jsonl(&ds, &path).unwrap();
        path
    }

    fn quick_lstm_args(data: PathBuf, out: PathBuf) -> TrainArgs {
        let mut args = TrainArgs::new(data, out, ModelKind::Lstm, 6);
        args.lstm.hidden_dim = 8;
        args.lstm.epochs = 3;
        args.lstm.learning_rate = 1e-3;
        args.lstm.batch_size = 8;
        args
    }

    #[test]
    fn lstm_run_writes_checkpoint_history_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let data = labeled_data(dir.path());
        let out = dir.path().join("lstm.json");
        let summary = run(&quick_lstm_args(data, out.clone())).unwrap();
        assert_eq!(summary.train_count, 32);
        assert_eq!(summary.test_count, 8);

        let ckpt = Checkpoint::load(&out).unwrap();
        assert_eq!(ckpt.kind_name(), "lstm");
        assert_eq!(ckpt.otw_steps, 6);
        assert_eq!(ckpt.split.train_fraction, 0.8);

        let history = std::fs::read_to_string(&summary.history).unwrap();
        let lines: Vec<&str> = history.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,test_accuracy");
        assert_eq!(lines.len(), 1 + 3);
        assert!(lines[1].starts_with("1,"));

        let manifest: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(&summary.manifest).unwrap()).unwrap();
        assert_eq!(manifest.seeds["split"], 0);
        assert_eq!(manifest.config["model"], serde_json::json!("lstm"));
    }

    #[test]
    fn baseline_history_is_a_single_row_with_accuracy() {
        let dir = tempfile::tempdir().unwrap();
        let data = labeled_data(dir.path());
        let out = dir.path().join("dt.json");
        let summary = run(&TrainArgs::new(data, out, ModelKind::Dt, 6)).unwrap();
        let history = std::fs::read_to_string(&summary.history).unwrap();
        let lines: Vec<&str> = history.lines().collect();
        assert_eq!(lines.len(), 2);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields[0], "1");
        assert!(!fields[2].is_empty());
        assert_eq!(fields[2].parse::<f64>().unwrap(), summary.test_accuracy);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let data = labeled_data(dir.path());
        let first = run(&quick_lstm_args(data.clone(), dir.path().join("a.json"))).unwrap();
        let second = run(&quick_lstm_args(data, dir.path().join("b.json"))).unwrap();
        let a = std::fs::read(&first.checkpoint).unwrap();
        let b = std::fs::read(&second.checkpoint).unwrap();
        assert_eq!(a, b);
        let a = std::fs::read_to_string(&first.history).unwrap();
        let b = std::fs::read_to_string(&second.history).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unlabeled_data_is_rejected_with_advice() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GridConfig {
            n_samples: Some(10),
            steps: 12,
            ..GridConfig::default()
        };
        let ds = generate_dataset(&cfg).unwrap();
        let path = dir.path().join("raw.jsonl");
        stvs_core::data::write_jsonl(&ds, &path).unwrap();
        let err = run(&TrainArgs::new(
            path,
            dir.path().join("x.json"),
            ModelKind::Svm,
            6,
        ))
        .unwrap_err();
        assert!(format!("{err:#}").contains("stvs label"));
    }

    #[test]
    fn oversized_window_is_rejected_up_front() {
        let dir = tempfile::tempdir().unwrap();
        let data = labeled_data(dir.path());
        let err = run(&TrainArgs::new(
            data,
            dir.path().join("x.json"),
            ModelKind::Dt,
            13,
        ))
        .unwrap_err();
        assert!(format!("{err:#}").contains("13"));
    }
}
