//! `evaluate`: score checkpoints on their held-out data, render the report.
//!
//! Each checkpoint is scored at the window it was trained for, against the
//! held-out side of the split recorded inside it. The `--otw` list selects
//! which windows appear in the report; checkpoints trained outside the list
//! are skipped with a note. Fitting three families at four windows therefore
//! yields the full twelve-row table.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use stvs_core::checkpoint::Checkpoint;
use stvs_core::data::{header_path, read_jsonl, split_dataset};
use stvs_core::metrics::{
    accuracy, auc, confusion, f1, roc_curve, ConfusionMatrix, F1Mode, RocCurve,
};

use crate::charts::{bar_chart, line_chart, Series};
use crate::manifest::RunManifest;

pub struct EvaluateArgs {
    pub data: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    /// Observation windows admitted into the report.
    pub otw: Vec<usize>,
    /// Directory receiving the report, tables, ROC dumps, and charts.
    pub out_dir: PathBuf,
    pub f1_mode: F1Mode,
}

/// One scored (model, window) pair.
#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub model: String,
    pub otw_steps: usize,
    pub test_count: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub auc: f64,
    pub confusion: ConfusionMatrix,
    pub roc_csv: String,
}

#[derive(Debug)]
pub struct EvaluateSummary {
    pub rows: Vec<EvalRow>,
    pub skipped: Vec<String>,
    pub report: PathBuf,
    pub table: PathBuf,
    pub charts: Vec<PathBuf>,
    pub manifest: PathBuf,
}

pub fn run(args: &EvaluateArgs) -> Result<EvaluateSummary> {
    if args.otw.is_empty() {
        bail!("at least one --otw value is required");
    }
    if args.checkpoints.is_empty() {
        bail!("at least one --checkpoint is required");
    }

    let ds = read_jsonl(&args.data)
        .with_context(|| format!("reading dataset {}", args.data.display()))?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let mut manifest = RunManifest::new(
        "evaluate",
        serde_json::json!({
            "data": args.data.display().to_string(),
            "checkpoints": args.checkpoints.iter().map(|p| p.display().to_string())
                .collect::<Vec<_>>(),
            "otw": args.otw,
            "f1_mode": args.f1_mode,
        }),
    );
    manifest.stamp_input(&args.data)?;
    manifest.stamp_input(&header_path(&args.data))?;

    let started = Instant::now();
    let mut rows: Vec<EvalRow> = Vec::new();
    let mut curves: Vec<RocCurve> = Vec::new();
    let mut skipped = Vec::new();
    for path in &args.checkpoints {
        let ckpt = Checkpoint::load(path)
            .with_context(|| format!("loading checkpoint {}", path.display()))?;
        manifest.stamp_input(path)?;
        if ckpt.norm_stats.channel_count() != ds.meta.channel_count() {
            bail!(
                "checkpoint {} expects {} channels but dataset {} has {}",
                path.display(),
                ckpt.norm_stats.channel_count(),
                args.data.display(),
                ds.meta.channel_count()
            );
        }
        if ckpt.otw_steps > ds.meta.steps {
            bail!(
                "checkpoint {} needs {} steps but dataset {} has {}",
                path.display(),
                ckpt.otw_steps,
                args.data.display(),
                ds.meta.steps
            );
        }
        if !args.otw.contains(&ckpt.otw_steps) {
            let note = format!(
                "{} (trained at {} steps, outside the requested windows)",
                path.display(),
                ckpt.otw_steps
            );
            println!("skipping {note}");
            skipped.push(note);
            continue;
        }

        let (_, test_ds) = split_dataset(&ds, ckpt.split.train_fraction, ckpt.split.seed)?;
        let mut predictions = Vec::with_capacity(test_ds.instances.len());
        let mut scores = Vec::with_capacity(test_ds.instances.len());
        let mut labels = Vec::with_capacity(test_ds.instances.len());
        for inst in &test_ds.instances {
            let (class, score) = ckpt.predict(inst)?;
            predictions.push(class);
            scores.push(score);
            match inst.label {
                Some(label) => labels.push(label),
                None => bail!(
                    "held-out instance {} lacks a label; evaluation needs labeled data",
                    inst.id
                ),
            }
        }

        let cm = confusion(&predictions, &labels)?;
        let f1_value = f1(&cm, args.f1_mode).with_context(|| {
            format!("f1 is undefined on the held-out split of {}", path.display())
        })?;
        let curve = roc_curve(&scores, &labels)?;
        let roc_csv = format!("roc_{}_otw{}.csv", ckpt.kind_name(), ckpt.otw_steps);
        write_roc_csv(&args.out_dir.join(&roc_csv), &curve)?;

        rows.push(EvalRow {
            model: ckpt.kind_name().to_string(),
            otw_steps: ckpt.otw_steps,
            test_count: test_ds.instances.len(),
            accuracy: accuracy(&cm)?,
            f1: f1_value,
            auc: auc(&curve),
            confusion: cm,
            roc_csv,
        });
        curves.push(curve);
    }
    manifest.record_timing("score", started.elapsed());

    if rows.is_empty() {
        bail!("no checkpoint matched the requested windows; nothing to report");
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by_key(|&i| (rows[i].otw_steps, model_order(&rows[i].model)));
    let rows: Vec<EvalRow> = order.iter().map(|&i| rows[i].clone()).collect();
    let curves: Vec<RocCurve> = order.into_iter().map(|i| curves[i].clone()).collect();

    let started = Instant::now();
    let report = args.out_dir.join("report.json");
    write_report(&report, args, &rows)?;
    let table = args.out_dir.join("table.csv");
    write_table(&table, &rows)?;
    let charts = render_charts(&args.out_dir, &rows, &curves)?;
    manifest.record_timing("report", started.elapsed());

    manifest.stamp_output(&report)?;
    manifest.stamp_output(&table)?;
    for row in &rows {
        manifest.stamp_output(&args.out_dir.join(&row.roc_csv))?;
    }
    for chart in &charts {
        manifest.stamp_output(chart)?;
    }
    let manifest_out = manifest.write_beside(&report)?;

    println!("model  otw  test_n  accuracy      f1     auc");
    for row in &rows {
        println!(
            "{:<6} {:>3} {:>7} {:>9.4} {:>7.4} {:>7.4}",
            row.model, row.otw_steps, row.test_count, row.accuracy, row.f1, row.auc
        );
    }
    println!("report: {}", report.display());
    println!("manifest: {}", manifest_out.display());

    Ok(EvaluateSummary {
        rows,
        skipped,
        report,
        table,
        charts,
        manifest: manifest_out,
    })
}

fn model_order(kind: &str) -> usize {
    match kind {
        "lstm" => 0,
        "dt" => 1,
        _ => 2,
    }
}

fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<()> {
    let file =
        File::create(path).with_context(|| format!("writing {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "threshold,false_positive_rate,true_positive_rate")?;
    for point in &curve.points {
        match point.threshold {
            Some(t) => writeln!(
                out,
                "{t},{},{}",
                point.false_positive_rate, point.true_positive_rate
            )?,
            None => writeln!(
                out,
                ",{},{}",
                point.false_positive_rate, point.true_positive_rate
            )?,
        }
    }
    out.flush()?;
    Ok(())
}

fn write_report(path: &Path, args: &EvaluateArgs, rows: &[EvalRow]) -> Result<()> {
    #[derive(Serialize)]
    struct Report<'a> {
        data: String,
        f1_mode: F1Mode,
        rows: &'a [EvalRow],
    }
    let file =
        File::create(path).with_context(|| format!("writing {}", path.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(
        &mut out,
        &Report {
            data: args.data.display().to_string(),
            f1_mode: args.f1_mode,
            rows,
        },
    )?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn write_table(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let file =
        File::create(path).with_context(|| format!("writing {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "model,otw_steps,test_count,accuracy,f1,auc,tp,fp,fn,tn")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            row.model,
            row.otw_steps,
            row.test_count,
            row.accuracy,
            row.f1,
            row.auc,
            row.confusion.true_positive,
            row.confusion.false_positive,
            row.confusion.false_negative,
            row.confusion.true_negative
        )?;
    }
    out.flush()?;
    Ok(())
}

fn render_charts(
    out_dir: &Path,
    rows: &[EvalRow],
    curves: &[RocCurve],
) -> Result<Vec<PathBuf>> {
    let mut charts = Vec::new();
    let models: Vec<String> = {
        let mut seen = Vec::new();
        for row in rows {
            if !seen.contains(&row.model) {
                seen.push(row.model.clone());
            }
        }
        seen.sort_by_key(|m| model_order(m));
        seen
    };
    let windows: Vec<usize> = {
        let mut ws: Vec<usize> = rows.iter().map(|r| r.otw_steps).collect();
        ws.sort_unstable();
        ws.dedup();
        ws
    };
    let cell: BTreeMap<(String, usize), &EvalRow> = rows
        .iter()
        .map(|row| ((row.model.clone(), row.otw_steps), row))
        .collect();

    let accuracy_series: Vec<Series> = models
        .iter()
        .map(|m| {
            let points = windows
                .iter()
                .filter_map(|&w| {
                    cell.get(&(m.clone(), w)).map(|row| (w as f64, row.accuracy))
                })
                .collect();
            Series::solid(m, points)
        })
        .collect();
    let path = out_dir.join("accuracy_vs_otw.svg");
    line_chart(
        &path,
        "held-out accuracy by observation window",
        "window length (steps)",
        "accuracy",
        &accuracy_series,
    )?;
    charts.push(path);

    let categories: Vec<String> = windows.iter().map(|w| format!("otw {w}")).collect();
    let groups: Vec<(String, Vec<Option<f64>>)> = models
        .iter()
        .map(|m| {
            let values = windows
                .iter()
                .map(|&w| cell.get(&(m.clone(), w)).map(|row| row.f1))
                .collect();
            (m.clone(), values)
        })
        .collect();
    let path = out_dir.join("f1_bars.svg");
    bar_chart(
        &path,
        "held-out f1 by observation window",
        "f1",
        &categories,
        &groups,
    )?;
    charts.push(path);

    for &w in &windows {
        let mut series: Vec<Series> = Vec::new();
        for (row, curve) in rows.iter().zip(curves) {
            if row.otw_steps != w {
                continue;
            }
            let points = curve
                .points
                .iter()
                .map(|p| (p.false_positive_rate, p.true_positive_rate))
                .collect();
            series.push(Series::solid(
                &format!("{} (auc {:.3})", row.model, row.auc),
                points,
            ));
        }
        series.push(Series::dashed("chance", vec![(0.0, 0.0), (1.0, 1.0)]));
        let path = out_dir.join(format!("roc_otw{w}.svg"));
        line_chart(
            &path,
            &format!("ROC at a {w}-step window"),
            "false positive rate",
            "true positive rate",
            &series,
        )?;
        charts.push(path);
    }
    Ok(charts)
}
