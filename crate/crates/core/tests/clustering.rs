//! Constrained clustering checked against exhaustive search.
//!
//! For datasets small enough to enumerate every feasible two-way partition,
//! the constrained k-means outcome is compared with the partition of minimal
//! within-cluster sum of squares. k-means is a local optimizer, so a small
//! miss rate is tolerated on the objective; constraint satisfaction is not
//! negotiable and is asserted on every run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use stvs_core::data::{Dataset, DatasetMeta, ScenarioParams, StabilityClass, TimeSeriesInstance};
use stvs_core::semilabel::{cop_kmeans, derive_constraints, ConstraintSet};
use stvs_core::simgen::{generate_dataset, GridConfig};

fn scenario() -> ScenarioParams {
    ScenarioParams {
        load_level: 1.0,
        motor_fraction: 0.8,
        fault_line: 0,
        fault_position: 0.0,
        fault_time_s: 0.1,
        clear_time_s: 0.15,
    }
}

/// One-bus, two-step instance: six free values.
fn instance(id: u64, values: [f64; 6]) -> TimeSeriesInstance {
    TimeSeriesInstance {
        id,
        scenario: scenario(),
        label: None,
        truth: None,
        series: vec![values[..3].to_vec(), values[3..].to_vec()],
    }
}

fn dataset(instances: Vec<TimeSeriesInstance>) -> Dataset {
    Dataset::new(
        DatasetMeta {
            bus_count: 1,
            steps: 2,
            dt_s: 0.01,
        },
        instances,
    )
    .unwrap()
}

fn flat(inst: &TimeSeriesInstance) -> Vec<f64> {
    inst.series.iter().flatten().copied().collect()
}

/// Within-cluster sum of squared distances to the cluster means.
fn wcss(ds: &Dataset, assignment: &[usize]) -> f64 {
    let dims = ds.meta.steps * ds.meta.channel_count();
    let k = assignment.iter().max().unwrap() + 1;
    let mut sums = vec![vec![0.0; dims]; k];
    let mut counts = vec![0usize; k];
    for (inst, &c) in ds.instances.iter().zip(assignment) {
        counts[c] += 1;
        for (acc, v) in sums[c].iter_mut().zip(flat(inst)) {
            *acc += v;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| s.iter().map(|v| v / n as f64).collect())
        .collect();
    ds.instances
        .iter()
        .zip(assignment)
        .map(|(inst, &c)| {
            flat(inst)
                .iter()
                .zip(&means[c])
                .map(|(x, m)| (x - m) * (x - m))
                .sum::<f64>()
        })
        .sum()
}

/// Exhaustive minimum WCSS over all feasible two-way partitions with both
/// sides occupied. Bit i of the mask holds the cluster of `ds.instances[i]`.
fn best_feasible_wcss(ds: &Dataset, cs: &ConstraintSet) -> f64 {
    let n = ds.len();
    assert!(n <= 12, "enumeration oracle is exponential in n");
    let idx_of = |id: u64| ds.instances.iter().position(|i| i.id == id).unwrap();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) - 1 {
        let side = |i: usize| (mask >> i) & 1;
        let must_ok = cs
            .must_links()
            .iter()
            .all(|&(a, b)| side(idx_of(a)) == side(idx_of(b)));
        let cannot_ok = cs
            .cannot_links()
            .iter()
            .all(|&(a, b)| side(idx_of(a)) != side(idx_of(b)));
        if !(must_ok && cannot_ok) {
            continue;
        }
        let assignment: Vec<usize> = (0..n).map(|i| side(i) as usize).collect();
        best = best.min(wcss(ds, &assignment));
    }
    assert!(best.is_finite(), "no feasible partition exists");
    best
}

struct Fixture {
    ds: Dataset,
    cs: ConstraintSet,
    blob: Vec<usize>,
}

/// Two Gaussian blobs, one or two seeds per blob, a few truth-consistent
/// extra links, and ids that are deliberately non-contiguous.
fn random_fixture(rng: &mut ChaCha8Rng) -> Fixture {
    let n = rng.gen_range(4..=12usize);
    let spread = Normal::new(0.0, 0.08).unwrap();
    let mut centers = [[0.0; 6]; 2];
    for c in 0..2 {
        for d in 0..6 {
            centers[c][d] = rng.gen_range(0.0..1.0) + 1.5 * c as f64;
        }
    }
    let mut instances = Vec::new();
    let mut blob = Vec::new();
    for i in 0..n {
        let b = if i < 2 { i } else { rng.gen_range(0..2usize) };
        let mut values = [0.0; 6];
        for d in 0..6 {
            values[d] = centers[b][d] + spread.sample(rng);
        }
        instances.push(instance(7 + 3 * i as u64, values));
        blob.push(b);
    }
    let ids: Vec<u64> = instances.iter().map(|i| i.id).collect();

    let pick = |rng: &mut ChaCha8Rng, want: usize, count: usize| -> Vec<u64> {
        let members: Vec<u64> = (0..n).filter(|&i| blob[i] == want).map(|i| ids[i]).collect();
        let mut chosen = Vec::new();
        while chosen.len() < count.min(members.len()) {
            let id = members[rng.gen_range(0..members.len())];
            if !chosen.contains(&id) {
                chosen.push(id);
            }
        }
        chosen
    };
    let want_a = rng.gen_range(1..=2usize);
    let want_b = rng.gen_range(1..=2usize);
    let seeds_a = pick(rng, 0, want_a);
    let seeds_b = pick(rng, 1, want_b);

    let star = ConstraintSet::from_seeds(seeds_a.clone(), seeds_b.clone()).unwrap();
    let mut must = star.must_links().to_vec();
    let mut cannot = star.cannot_links().to_vec();
    for _ in 0..rng.gen_range(0..=3usize) {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j {
            continue;
        }
        if blob[i] == blob[j] {
            must.push((ids[i], ids[j]));
        } else {
            cannot.push((ids[i], ids[j]));
        }
    }
    let cs = ConstraintSet::with_links(seeds_a, seeds_b, must, cannot).unwrap();
    Fixture {
        ds: dataset(instances),
        cs,
        blob,
    }
}

#[test]
fn constrained_fit_matches_exhaustive_search_with_zero_violations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let trials = 100;
    let mut optimal = 0;
    for trial in 0..trials {
        let fx = random_fixture(&mut rng);
        let outcome = cop_kmeans(&fx.ds, &fx.cs, 2, 100)
            .unwrap_or_else(|e| panic!("trial {trial}: {e}"));

        let idx_of =
            |id: u64| fx.ds.instances.iter().position(|i| i.id == id).unwrap();
        for &(a, b) in fx.cs.must_links() {
            assert_eq!(
                outcome.assignment[idx_of(a)],
                outcome.assignment[idx_of(b)],
                "trial {trial}: must-link ({a}, {b}) violated"
            );
        }
        for &(a, b) in fx.cs.cannot_links() {
            assert_ne!(
                outcome.assignment[idx_of(a)],
                outcome.assignment[idx_of(b)],
                "trial {trial}: cannot-link ({a}, {b}) violated"
            );
        }

        let anchor_cluster = outcome.assignment[idx_of(fx.cs.stable_anchor().unwrap())];
        for (i, &label) in outcome.labels.iter().enumerate() {
            let expected = if outcome.assignment[i] == anchor_cluster {
                StabilityClass::Stable
            } else {
                StabilityClass::Unstable
            };
            assert_eq!(label, expected, "trial {trial}: label mapping broke");
        }

        let got = wcss(&fx.ds, &outcome.assignment);
        let best = best_feasible_wcss(&fx.ds, &fx.cs);
        assert!(
            got >= best - 1e-9,
            "trial {trial}: fit beat the exhaustive optimum, oracle is wrong"
        );
        if got <= best + 1e-9 {
            optimal += 1;
        }
    }
    eprintln!("exhaustive-optimal fits: {optimal}/{trials}");
    assert!(
        optimal >= 90,
        "only {optimal}/{trials} runs reached the exhaustive optimum"
    );
}

#[test]
fn labels_are_invariant_under_instance_reordering() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let fx = random_fixture(&mut rng);
    let outcome = cop_kmeans(&fx.ds, &fx.cs, 2, 100).unwrap();
    let by_id: std::collections::HashMap<u64, StabilityClass> = fx
        .ds
        .instances
        .iter()
        .zip(&outcome.labels)
        .map(|(inst, &l)| (inst.id, l))
        .collect();

    let mut shuffled = fx.ds.instances.clone();
    shuffled.reverse();
    let mid = shuffled.len() / 2;
    shuffled.swap(0, mid);
    let permuted = dataset(shuffled);
    let outcome2 = cop_kmeans(&permuted, &fx.cs, 2, 100).unwrap();
    for (inst, &label) in permuted.instances.iter().zip(&outcome2.labels) {
        assert_eq!(by_id[&inst.id], label, "id {} flipped on reorder", inst.id);
    }
    assert_eq!(outcome.iterations, outcome2.iterations);
}

#[test]
fn three_clusters_stay_nonempty_and_map_to_binary_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fx = random_fixture(&mut rng);
    let outcome = cop_kmeans(&fx.ds, &fx.cs, 3, 100).unwrap();
    for cluster in 0..3 {
        assert!(
            outcome.assignment.iter().any(|&c| c == cluster),
            "cluster {cluster} ended empty"
        );
    }
    let idx_of = |id: u64| fx.ds.instances.iter().position(|i| i.id == id).unwrap();
    let anchor_cluster = outcome.assignment[idx_of(fx.cs.stable_anchor().unwrap())];
    for (i, &label) in outcome.labels.iter().enumerate() {
        if outcome.assignment[i] == anchor_cluster {
            assert_eq!(label, StabilityClass::Stable);
        } else {
            assert_eq!(label, StabilityClass::Unstable);
        }
    }
    let _ = fx.blob;
}

#[test]
fn generated_dataset_labels_agree_with_generator_truth() {
    let noisy = GridConfig::default();
    let ds = generate_dataset(&noisy).unwrap();
    let cs = derive_constraints(&ds, 0.9, 0.7, 0.2).unwrap();
    assert!(!cs.seed_stable().is_empty() && !cs.seed_unstable().is_empty());
    let outcome = cop_kmeans(&ds, &cs, 2, 100).unwrap();
    let agree = ds
        .instances
        .iter()
        .zip(&outcome.labels)
        .filter(|(inst, &l)| inst.truth == Some(l))
        .count();
    let rate = agree as f64 / ds.len() as f64;
    eprintln!("noisy agreement: {agree}/{} = {rate:.4}", ds.len());
    assert!(rate >= 0.95, "agreement {rate} fell below 0.95");

    let mut quiet = GridConfig::default();
    quiet.noise_sigma = 0.0;
    let ds0 = generate_dataset(&quiet).unwrap();
    let cs0 = derive_constraints(&ds0, 0.9, 0.7, 0.2).unwrap();
    let outcome0 = cop_kmeans(&ds0, &cs0, 2, 100).unwrap();
    let all = ds0
        .instances
        .iter()
        .zip(&outcome0.labels)
        .all(|(inst, &l)| inst.truth == Some(l));
    assert!(all, "noiseless labeling must reproduce truth exactly");
}
