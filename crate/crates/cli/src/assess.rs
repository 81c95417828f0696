//! `assess`: replay instances through a checkpoint like an online monitor.
//!
//! In streaming mode the recurrent model is queried at every elapsed step
//! from the minimum window up to the trained one, mimicking a relay that
//! re-evaluates as samples arrive. Window-bound models cannot score a prefix,
//! so they emit only the final verdict. Rows are tab-separated on stdout or
//! in `--out`; diagnostics go to stderr so the stream stays machine-readable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use stvs_core::checkpoint::{Checkpoint, ModelKindData};
use stvs_core::data::{header_path, read_jsonl, StabilityClass};

use crate::ensure_parent;
use crate::manifest::RunManifest;

pub struct AssessArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    /// Emit a row per elapsed step instead of only the final verdict.
    pub stream: bool,
    /// Earliest elapsed step a streaming verdict may be issued at.
    pub min_otw_steps: usize,
    /// Row sink; absent means stdout.
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct AssessSummary {
    pub assessed: usize,
    pub skipped: usize,
    pub stable: usize,
    pub unstable: usize,
    pub rows: usize,
    pub manifest: Option<PathBuf>,
}

pub fn run(args: &AssessArgs) -> Result<AssessSummary> {
    let ckpt = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let ds = read_jsonl(&args.data)
        .with_context(|| format!("reading dataset {}", args.data.display()))?;
    if ckpt.norm_stats.channel_count() != ds.meta.channel_count() {
        bail!(
            "checkpoint {} expects {} channels but dataset {} has {}",
            args.checkpoint.display(),
            ckpt.norm_stats.channel_count(),
            args.data.display(),
            ds.meta.channel_count()
        );
    }
    let min_otw = args.min_otw_steps.max(1);
    if min_otw > ckpt.otw_steps {
        bail!(
            "--min-otw {} exceeds the checkpoint's trained window of {} steps",
            min_otw,
            ckpt.otw_steps
        );
    }

    let started = Instant::now();
    let mut sink: Box<dyn Write> = match &args.out {
        Some(path) => {
            ensure_parent(path)?;
            let file = File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            Box::new(BufWriter::new(file))
        }
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(sink, "id\tstep\tphase\tclass\tp_stable\tlatency_us")?;

    let streams_prefixes = matches!(ckpt.model, ModelKindData::Lstm { .. });
    let mut summary = AssessSummary {
        assessed: 0,
        skipped: 0,
        stable: 0,
        unstable: 0,
        rows: 0,
        manifest: None,
    };
    for inst in &ds.instances {
        if inst.series.len() < ckpt.otw_steps {
            eprintln!(
                "warning: instance {} has {} steps but the checkpoint needs {}; skipping",
                inst.id,
                inst.series.len(),
                ckpt.otw_steps
            );
            summary.skipped += 1;
            continue;
        }
        if args.stream && streams_prefixes {
            for step in min_otw..ckpt.otw_steps {
                emit(&mut sink, &ckpt, inst, step, "watch")?;
                summary.rows += 1;
            }
        }
        let class = emit(&mut sink, &ckpt, inst, ckpt.otw_steps, "final")?;
        summary.rows += 1;
        summary.assessed += 1;
        match class {
            StabilityClass::Stable => summary.stable += 1,
            StabilityClass::Unstable => summary.unstable += 1,
        }
    }
    sink.flush()?;
    let elapsed = started.elapsed();

    if let Some(path) = &args.out {
        let mut manifest = RunManifest::new(
            "assess",
            serde_json::json!({
                "checkpoint": args.checkpoint.display().to_string(),
                "data": args.data.display().to_string(),
                "stream": args.stream,
                "min_otw_steps": min_otw,
            }),
        );
        manifest.record_timing("assess", elapsed);
        manifest.stamp_input(&args.checkpoint)?;
        manifest.stamp_input(&args.data)?;
        manifest.stamp_input(&header_path(&args.data))?;
        manifest.stamp_output(path)?;
        summary.manifest = Some(manifest.write_beside(path)?);
    }

    eprintln!(
        "assessed {} instances at a {}-step window: {} stable / {} unstable; skipped {}",
        summary.assessed, ckpt.otw_steps, summary.stable, summary.unstable, summary.skipped
    );
    Ok(summary)
}

fn emit(
    sink: &mut dyn Write,
    ckpt: &Checkpoint,
    inst: &stvs_core::data::TimeSeriesInstance,
    step: usize,
    phase: &str,
) -> Result<StabilityClass> {
    let started = Instant::now();
    let (class, p_stable) = ckpt.predict_at(inst, step)?;
    let latency_us = (started.elapsed().as_secs_f64() * 1e6).max(0.001);
    let class_name = match class {
        StabilityClass::Stable => "stable",
        StabilityClass::Unstable => "unstable",
    };
    writeln!(
        sink,
        "{}\t{}\t{}\t{}\t{:.6}\t{:.3}",
        inst.id, step, phase, class_name, p_stable, latency_us
    )?;
    Ok(class)
}
