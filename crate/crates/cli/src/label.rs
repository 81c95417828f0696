//! `label`: screen threshold-certain seeds, then constrained clustering.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use stvs_core::data::{header_path, read_jsonl, write_jsonl, StabilityClass};
use stvs_core::semilabel::{
    apply_cluster_labels, cop_kmeans, derive_constraints, DEFAULT_TAIL_FRACTION,
    DEFAULT_V_STABLE, DEFAULT_V_UNSTABLE,
};

use crate::ensure_parent;
use crate::manifest::RunManifest;

pub struct LabelArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    /// Voltage floor a seed-stable instance must hold at every step.
    pub v_stable: f64,
    /// Voltage ceiling a seed-unstable instance must stay under over the tail.
    pub v_unstable: f64,
    /// Fraction of the series treated as the tail.
    pub tail_fraction: f64,
    /// Cluster count for the constrained fit.
    pub clusters: usize,
    /// Upper bound on clustering passes.
    pub max_iter: usize,
}

impl LabelArgs {
    pub fn new(data: PathBuf, out: PathBuf) -> Self {
        LabelArgs {
            data,
            out,
            v_stable: DEFAULT_V_STABLE,
            v_unstable: DEFAULT_V_UNSTABLE,
            tail_fraction: DEFAULT_TAIL_FRACTION,
            clusters: 2,
            max_iter: 100,
        }
    }
}

#[derive(Debug)]
pub struct LabelSummary {
    pub instances: usize,
    pub overwritten: usize,
    pub seed_stable: usize,
    pub seed_unstable: usize,
    pub must_links: usize,
    pub cannot_links: usize,
    pub iterations: usize,
    pub labeled_stable: usize,
    pub labeled_unstable: usize,
    /// Fraction of labels matching generator truth, when every instance has one.
    pub truth_agreement: Option<f64>,
    pub out: PathBuf,
    pub manifest: PathBuf,
}

pub fn run(args: &LabelArgs) -> Result<LabelSummary> {
    let ds = read_jsonl(&args.data)
        .with_context(|| format!("reading dataset {}", args.data.display()))?;

    let overwritten = ds
        .instances
        .iter()
        .filter(|inst| inst.label.is_some())
        .count();
    if overwritten > 0 {
        println!(
            "{} of {} instances already carry labels; relabeling overwrites them",
            overwritten,
            ds.instances.len()
        );
    }

    let started = Instant::now();
    let constraints =
        derive_constraints(&ds, args.v_stable, args.v_unstable, args.tail_fraction)
            .context(
                "seed screening failed; loosen --v-stable, --v-unstable, or --tail-fraction \
                 so both classes keep at least one threshold-certain instance",
            )?;
    let screen_elapsed = started.elapsed();

    let started = Instant::now();
    let outcome = cop_kmeans(&ds, &constraints, args.clusters, args.max_iter)?;
    let cluster_elapsed = started.elapsed();

    let labeled = apply_cluster_labels(&ds, &outcome);
    ensure_parent(&args.out)?;
    write_jsonl(&labeled, &args.out)
        .with_context(|| format!("writing labeled dataset {}", args.out.display()))?;

    let labeled_stable = labeled
        .instances
        .iter()
        .filter(|inst| inst.label == Some(StabilityClass::Stable))
        .count();
    let truth_agreement = if labeled.instances.iter().all(|inst| inst.truth.is_some()) {
        let matches = labeled
            .instances
            .iter()
            .filter(|inst| inst.label == inst.truth)
            .count();
        Some(matches as f64 / labeled.instances.len().max(1) as f64)
    } else {
        None
    };

    let mut manifest = RunManifest::new(
        "label",
        serde_json::json!({
            "v_stable": args.v_stable,
            "v_unstable": args.v_unstable,
            "tail_fraction": args.tail_fraction,
            "clusters": args.clusters,
            "max_iter": args.max_iter,
        }),
    );
    manifest.record_timing("screen", screen_elapsed);
    manifest.record_timing("cluster", cluster_elapsed);
    manifest.stamp_input(&args.data)?;
    manifest.stamp_input(&header_path(&args.data))?;
    manifest.stamp_output(&args.out)?;
    manifest.stamp_output(&header_path(&args.out))?;
    let manifest_out = manifest.write_beside(&args.out)?;

    let summary = LabelSummary {
        instances: labeled.instances.len(),
        overwritten,
        seed_stable: constraints.seed_stable().len(),
        seed_unstable: constraints.seed_unstable().len(),
        must_links: constraints.must_links().len(),
        cannot_links: constraints.cannot_links().len(),
        iterations: outcome.iterations,
        labeled_stable,
        labeled_unstable: labeled.instances.len() - labeled_stable,
        truth_agreement,
        out: args.out.clone(),
        manifest: manifest_out,
    };

    println!(
        "seed screening: {} stable / {} unstable seeds -> {} must links, {} cannot links",
        summary.seed_stable, summary.seed_unstable, summary.must_links, summary.cannot_links
    );
    println!(
        "constrained clustering converged after {} passes: {} stable / {} unstable",
        summary.iterations, summary.labeled_stable, summary.labeled_unstable
    );
    if let Some(agreement) = summary.truth_agreement {
        println!("agreement with generator truth: {agreement:.4}");
    }
    println!("labeled dataset: {}", summary.out.display());
    println!("manifest: {}", summary.manifest.display());
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use stvs_core::simgen::{generate_dataset, GridConfig};

    fn generated(dir: &std::path::Path) -> PathBuf {
        let cfg = GridConfig {
            n_samples: Some(60),
            steps: 12,
            seed: 3,
            ..GridConfig::default()
        };
        let ds = generate_dataset(&cfg).unwrap();
        let path = dir.join("data.jsonl");
        write_jsonl(&ds, &path).unwrap();
        path
    }

    #[test]
    fn labels_every_instance_and_reports_agreement() {
        let dir = tempfile::tempdir().unwrap();
        let data = generated(dir.path());
        let args = LabelArgs::new(data, dir.path().join("labeled.jsonl"));
        let summary = run(&args).unwrap();
        assert_eq!(summary.instances, 60);
        assert_eq!(summary.overwritten, 0);
        assert!(summary.seed_stable > 0 && summary.seed_unstable > 0);
        assert!(summary.labeled_stable > 0 && summary.labeled_unstable > 0);
        assert!(summary.truth_agreement.unwrap() > 0.9);

        let back = read_jsonl(&summary.out).unwrap();
        assert!(back.instances.iter().all(|inst| inst.label.is_some()));
    }

    #[test]
    fn relabeling_counts_the_overwrites() {
        let dir = tempfile::tempdir().unwrap();
        let data = generated(dir.path());
        let first = run(&LabelArgs::new(data, dir.path().join("labeled.jsonl"))).unwrap();
        let second = run(&LabelArgs::new(
            first.out.clone(),
            dir.path().join("relabeled.jsonl"),
        ))
        .unwrap();
        assert_eq!(second.overwritten, 60);
        assert_eq!(second.labeled_stable, first.labeled_stable);
    }

    #[test]
    fn impossible_thresholds_explain_the_remedy() {
        let dir = tempfile::tempdir().unwrap();
        let data = generated(dir.path());
        let mut args = LabelArgs::new(data, dir.path().join("labeled.jsonl"));
        args.v_unstable = 0.0;
        let err = run(&args).unwrap_err();
        let text = format!("{err:#}");
        assert!(text.contains("--v-unstable"), "unexpected error: {text}");
    }
}
