//! Semi-supervised labeling: voltage-screening seeds plus constrained k-means.
//!
//! Two screening rules pick out the instances whose outcome is beyond doubt
//! (voltage never leaves the healthy band, or the tail is pinned low with no
//! recovery). Those seeds become must-link/cannot-link constraints, and a
//! constrained k-means pass propagates the two cluster identities to every
//! remaining instance. Training code downstream reads only the labels written
//! here; generator truth stays reserved for oracle tests and reports.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, StabilityClass, TimeSeriesInstance};
use crate::error::{Error, Result};

/// Voltage floor that marks an instance as definitely stable, per unit.
pub const DEFAULT_V_STABLE: f64 = 0.9;
/// Voltage ceiling for the definitely-unstable tail test, per unit.
pub const DEFAULT_V_UNSTABLE: f64 = 0.7;
/// Share of trailing steps examined by the unstable tail test.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.2;
/// Mean-voltage rise over the tail that still counts as "no recovery".
pub const RECOVERY_TOLERANCE: f64 = 0.02;

/// Seed instances and pairwise link constraints over instance ids.
///
/// Pairs are stored normalized (small id first) and deduplicated. A set is
/// consistent when the transitive closure of must-links never crosses a
/// cannot-link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    seed_stable: Vec<u64>,
    seed_unstable: Vec<u64>,
    must_links: Vec<(u64, u64)>,
    cannot_links: Vec<(u64, u64)>,
}

impl ConstraintSet {
    /// Builds the star-topology constraints implied by two seed sets: every
    /// seed must-links to the lowest-id seed of its class (the anchor), the
    /// two anchors cannot-link, and every seed cannot-links to the opposite
    /// anchor.
    pub fn from_seeds(seed_stable: Vec<u64>, seed_unstable: Vec<u64>) -> Result<Self> {
        let mut must = Vec::new();
        let mut cannot = Vec::new();
        let mut stable = seed_stable;
        let mut unstable = seed_unstable;
        stable.sort_unstable();
        stable.dedup();
        unstable.sort_unstable();
        unstable.dedup();
        if let (Some(&a_s), Some(&a_u)) = (stable.first(), unstable.first()) {
            for &s in &stable[1..] {
                must.push((a_s, s));
            }
            for &u in &unstable[1..] {
                must.push((a_u, u));
            }
            cannot.push((a_s.min(a_u), a_s.max(a_u)));
            for &s in &stable[1..] {
                cannot.push((s.min(a_u), s.max(a_u)));
            }
            for &u in &unstable[1..] {
                cannot.push((u.min(a_s), u.max(a_s)));
            }
        }
        Self::with_links(stable, unstable, must, cannot)
    }

    /// Builds a set from explicit link lists, validating consistency.
    pub fn with_links(
        seed_stable: Vec<u64>,
        seed_unstable: Vec<u64>,
        must_links: Vec<(u64, u64)>,
        cannot_links: Vec<(u64, u64)>,
    ) -> Result<Self> {
        let mut stable = seed_stable;
        let mut unstable = seed_unstable;
        stable.sort_unstable();
        stable.dedup();
        unstable.sort_unstable();
        unstable.dedup();
        if let Some(id) = stable.iter().find(|id| unstable.binary_search(id).is_ok()) {
            return Err(Error::InconsistentConstraints {
                detail: format!("instance {id} is seeded as both stable and unstable"),
            });
        }

        let normalize = |links: Vec<(u64, u64)>| -> Result<Vec<(u64, u64)>> {
            let mut out = Vec::with_capacity(links.len());
            for (a, b) in links {
                if a == b {
                    return Err(Error::InconsistentConstraints {
                        detail: format!("instance {a} linked to itself"),
                    });
                }
                out.push((a.min(b), a.max(b)));
            }
            out.sort_unstable();
            out.dedup();
            Ok(out)
        };
        let must_links = normalize(must_links)?;
        let cannot_links = normalize(cannot_links)?;
        if let Some(pair) = must_links
            .iter()
            .find(|p| cannot_links.binary_search(p).is_ok())
        {
            return Err(Error::InconsistentConstraints {
                detail: format!("pair {pair:?} is both must-linked and cannot-linked"),
            });
        }

        let set = ConstraintSet {
            seed_stable: stable,
            seed_unstable: unstable,
            must_links,
            cannot_links,
        };
        set.check_closure()?;
        Ok(set)
    }

    /// Union-find over must-links; any cannot-link within one component makes
    /// the whole set unsatisfiable.
    fn check_closure(&self) -> Result<()> {
        let mut parent: HashMap<u64, u64> = HashMap::new();
        fn find(parent: &mut HashMap<u64, u64>, x: u64) -> u64 {
            let p = *parent.entry(x).or_insert(x);
            if p == x {
                x
            } else {
                let root = find(parent, p);
                parent.insert(x, root);
                root
            }
        }
        for &(a, b) in &self.must_links {
            let ra = find(&mut parent, a);
            let rb = find(&mut parent, b);
            if ra != rb {
                parent.insert(ra, rb);
            }
        }
        for &(a, b) in &self.cannot_links {
            if find(&mut parent, a) == find(&mut parent, b) {
                return Err(Error::InconsistentConstraints {
                    detail: format!(
                        "must-link chain joins {a} and {b}, which are cannot-linked"
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn seed_stable(&self) -> &[u64] {
        &self.seed_stable
    }

    pub fn seed_unstable(&self) -> &[u64] {
        &self.seed_unstable
    }

    pub fn must_links(&self) -> &[(u64, u64)] {
        &self.must_links
    }

    pub fn cannot_links(&self) -> &[(u64, u64)] {
        &self.cannot_links
    }

    /// Lowest-id stable seed.
    pub fn stable_anchor(&self) -> Option<u64> {
        self.seed_stable.first().copied()
    }

    /// Lowest-id unstable seed.
    pub fn unstable_anchor(&self) -> Option<u64> {
        self.seed_unstable.first().copied()
    }
}

/// Screens every instance with the two voltage heuristics and assembles the
/// star-topology constraint set.
///
/// Seed-stable: every bus stays at or above `v_stable` at every step.
/// Seed-unstable: every bus sits at or below `v_unstable` over the final
/// `tail_fraction` of steps and the mean voltage does not recover by more
/// than [`RECOVERY_TOLERANCE`] from the start of that tail to the last step.
pub fn derive_constraints(
    ds: &Dataset,
    v_stable: f64,
    v_unstable: f64,
    tail_fraction: f64,
) -> Result<ConstraintSet> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(v_unstable > 0.0 && v_stable > v_unstable) {
        return Err(Error::BadHyperparameter {
            what: "v_stable/v_unstable ordering",
            value: v_stable,
        });
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::BadHyperparameter {
            what: "tail_fraction",
            value: tail_fraction,
        });
    }
    let bus_count = ds.meta.bus_count;
    let steps = ds.meta.steps;
    let tail_start = ((steps as f64) * (1.0 - tail_fraction)).floor() as usize;
    let tail_start = tail_start.min(steps - 1);

    let mut seed_stable = Vec::new();
    let mut seed_unstable = Vec::new();
    for inst in &ds.instances {
        let always_high =
            (0..steps).all(|s| (0..bus_count).all(|b| inst.voltage(s, b) >= v_stable));
        if always_high {
            seed_stable.push(inst.id);
            continue;
        }
        let tail_low = (tail_start..steps)
            .all(|s| (0..bus_count).all(|b| inst.voltage(s, b) <= v_unstable));
        if tail_low {
            let mean = |s: usize| {
                (0..bus_count).map(|b| inst.voltage(s, b)).sum::<f64>() / bus_count as f64
            };
            if mean(steps - 1) <= mean(tail_start) + RECOVERY_TOLERANCE {
                seed_unstable.push(inst.id);
            }
        }
    }
    if seed_stable.is_empty() || seed_unstable.is_empty() {
        return Err(Error::InsufficientSeeds {
            stable: seed_stable.len(),
            unstable: seed_unstable.len(),
        });
    }
    ConstraintSet::from_seeds(seed_stable, seed_unstable)
}

/// Euclidean distance between two instances' full series.
pub fn ts_distance(a: &TimeSeriesInstance, b: &TimeSeriesInstance) -> Result<f64> {
    if a.steps() != b.steps() || a.channels() != b.channels() {
        return Err(Error::BadDimension {
            what: "series",
            expected: a.steps() * a.channels(),
            got: b.steps() * b.channels(),
        });
    }
    let mut sum = 0.0;
    for (ra, rb) in a.series.iter().zip(&b.series) {
        for (va, vb) in ra.iter().zip(rb) {
            let d = va - vb;
            sum += d * d;
        }
    }
    Ok(sum.sqrt())
}

/// Pointwise mean of a cluster's member series, flattened row-major to m*d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCenter {
    pub values: Vec<f64>,
}

/// Means per cluster for `assignment[i]` = cluster of `ds.instances[i]`.
pub fn compute_centers(
    ds: &Dataset,
    assignment: &[usize],
    k: usize,
) -> Result<Vec<ClusterCenter>> {
    if assignment.len() != ds.len() {
        return Err(Error::BadDimension {
            what: "assignment",
            expected: ds.len(),
            got: assignment.len(),
        });
    }
    let dims = ds.meta.steps * ds.meta.channel_count();
    let mut sums = vec![vec![0.0; dims]; k];
    let mut counts = vec![0usize; k];
    for (inst, &cluster) in ds.instances.iter().zip(assignment) {
        if cluster >= k {
            return Err(Error::BadDimension {
                what: "cluster index",
                expected: k,
                got: cluster,
            });
        }
        counts[cluster] += 1;
        let sum = &mut sums[cluster];
        let mut offset = 0;
        for row in &inst.series {
            for (j, &v) in row.iter().enumerate() {
                sum[offset + j] += v;
            }
            offset += row.len();
        }
    }
    let mut centers = Vec::with_capacity(k);
    for (cluster, (sum, count)) in sums.into_iter().zip(counts).enumerate() {
        if count == 0 {
            return Err(Error::EmptyCluster { cluster });
        }
        centers.push(ClusterCenter {
            values: sum.into_iter().map(|v| v / count as f64).collect(),
        });
    }
    Ok(centers)
}

/// Result of a constrained clustering run, aligned with `ds.instances`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutcome {
    /// Class per instance: the cluster holding the stable anchor maps to
    /// Stable, every other cluster to Unstable.
    pub labels: Vec<StabilityClass>,
    /// Cluster index per instance.
    pub assignment: Vec<usize>,
    pub centers: Vec<ClusterCenter>,
    /// Assignment passes performed before convergence or cut-off.
    pub iterations: usize,
}

fn flat_series(inst: &TimeSeriesInstance) -> Vec<f64> {
    inst.series.iter().flatten().copied().collect()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Constrained k-means over whole series.
///
/// Initialization is anchored: cluster 0 starts at the stable anchor's series,
/// cluster 1 at the unstable anchor's (extra clusters, if k > 2, start at the
/// instances farthest from the centers picked so far). Each pass visits
/// instances in ascending id order and assigns each to the nearest cluster
/// that violates no link against instances already assigned in that pass.
/// The returned labels violate zero constraints.
pub fn cop_kmeans(
    ds: &Dataset,
    constraints: &ConstraintSet,
    k: usize,
    max_iter: usize,
) -> Result<ClusterOutcome> {
    if k < 2 {
        return Err(Error::BadClusterCount { k });
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let index_of: HashMap<u64, usize> = ds
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| (inst.id, i))
        .collect();
    for &id in constraints
        .seed_stable()
        .iter()
        .chain(constraints.seed_unstable())
    {
        if !index_of.contains_key(&id) {
            return Err(Error::UnknownId { id });
        }
    }
    for &(a, b) in constraints
        .must_links()
        .iter()
        .chain(constraints.cannot_links())
    {
        if !index_of.contains_key(&a) {
            return Err(Error::UnknownId { id: a });
        }
        if !index_of.contains_key(&b) {
            return Err(Error::UnknownId { id: b });
        }
    }
    let (stable_anchor, unstable_anchor) =
        match (constraints.stable_anchor(), constraints.unstable_anchor()) {
            (Some(s), Some(u)) => (s, u),
            _ => {
                return Err(Error::InsufficientSeeds {
                    stable: constraints.seed_stable().len(),
                    unstable: constraints.seed_unstable().len(),
                })
            }
        };

    let flats: Vec<Vec<f64>> = ds.instances.iter().map(flat_series).collect();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by_key(|&i| ds.instances[i].id);

    let mut must_of: HashMap<u64, Vec<u64>> = HashMap::new();
    for &(a, b) in constraints.must_links() {
        must_of.entry(a).or_default().push(b);
        must_of.entry(b).or_default().push(a);
    }
    let mut cannot_of: HashMap<u64, Vec<u64>> = HashMap::new();
    for &(a, b) in constraints.cannot_links() {
        cannot_of.entry(a).or_default().push(b);
        cannot_of.entry(b).or_default().push(a);
    }

    let mut centers: Vec<Vec<f64>> = vec![
        flats[index_of[&stable_anchor]].clone(),
        flats[index_of[&unstable_anchor]].clone(),
    ];
    for _ in 2..k {
        let next = order
            .iter()
            .max_by(|&&a, &&b| {
                let da = centers
                    .iter()
                    .map(|c| euclidean(&flats[a], c))
                    .fold(f64::INFINITY, f64::min);
                let db = centers
                    .iter()
                    .map(|c| euclidean(&flats[b], c))
                    .fold(f64::INFINITY, f64::min);
                da.partial_cmp(&db)
                    .unwrap()
                    .then(ds.instances[b].id.cmp(&ds.instances[a].id))
            })
            .copied()
            .expect("dataset is non-empty");
        centers.push(flats[next].clone());
    }

    let mut assignment: Vec<usize> = vec![0; ds.len()];
    let mut have_previous = false;
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut assigned: HashMap<u64, usize> = HashMap::with_capacity(ds.len());
        let mut next_assignment = vec![usize::MAX; ds.len()];
        for &i in &order {
            let id = ds.instances[i].id;
            let mut ranked: Vec<(f64, usize)> = centers
                .iter()
                .enumerate()
                .map(|(c, center)| (euclidean(&flats[i], center), c))
                .collect();
            ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let feasible = |cluster: usize, assigned: &HashMap<u64, usize>| {
                let must_ok = must_of
                    .get(&id)
                    .map_or(true, |ps| {
                        ps.iter()
                            .all(|p| assigned.get(p).map_or(true, |&pc| pc == cluster))
                    });
                let cannot_ok = cannot_of
                    .get(&id)
                    .map_or(true, |ps| {
                        ps.iter()
                            .all(|p| assigned.get(p).map_or(true, |&pc| pc != cluster))
                    });
                must_ok && cannot_ok
            };
            match ranked
                .iter()
                .find(|&&(_, cluster)| feasible(cluster, &assigned))
            {
                Some(&(_, cluster)) => {
                    assigned.insert(id, cluster);
                    next_assignment[i] = cluster;
                }
                None => {
                    let mut blockers = Vec::new();
                    if let Some(ps) = must_of.get(&id) {
                        for p in ps {
                            if let Some(pc) = assigned.get(p) {
                                blockers.push(format!("must-link to {p} (cluster {pc})"));
                            }
                        }
                    }
                    if let Some(ps) = cannot_of.get(&id) {
                        for p in ps {
                            if let Some(pc) = assigned.get(p) {
                                blockers.push(format!("cannot-link to {p} (cluster {pc})"));
                            }
                        }
                    }
                    return Err(Error::InfeasibleAssignment {
                        id,
                        detail: blockers.join(", "),
                    });
                }
            }
        }

        // Rescue empty clusters with the farthest instance before recomputing
        // centers, keeping the move feasible against everyone else.
        for cluster in 0..k {
            if next_assignment.iter().any(|&c| c == cluster) {
                continue;
            }
            let mut candidates: Vec<usize> = order.clone();
            candidates.sort_by(|&a, &b| {
                let reference = |i: usize| {
                    if k == 2 {
                        euclidean(&flats[i], &centers[1 - cluster])
                    } else {
                        euclidean(&flats[i], &centers[next_assignment[i]])
                    }
                };
                reference(b)
                    .partial_cmp(&reference(a))
                    .unwrap()
                    .then(ds.instances[a].id.cmp(&ds.instances[b].id))
            });
            let donor = candidates.into_iter().find(|&i| {
                let id = ds.instances[i].id;
                let others_ok = must_of.get(&id).map_or(true, |ps| {
                    ps.iter().all(|p| assigned.get(p) == Some(&cluster) || !assigned.contains_key(p))
                }) && cannot_of.get(&id).map_or(true, |ps| {
                    ps.iter().all(|p| assigned.get(p) != Some(&cluster))
                });
                others_ok
            });
            match donor {
                Some(i) => {
                    let id = ds.instances[i].id;
                    assigned.insert(id, cluster);
                    next_assignment[i] = cluster;
                }
                None => return Err(Error::EmptyCluster { cluster }),
            }
        }

        let converged = have_previous && next_assignment == assignment;
        assignment = next_assignment;
        have_previous = true;
        let center_structs = compute_centers(ds, &assignment, k)?;
        centers = center_structs.into_iter().map(|c| c.values).collect();
        if converged {
            break;
        }
    }

    verify_zero_violations(constraints, &assignment, &index_of)?;

    let stable_cluster = assignment[index_of[&stable_anchor]];
    let labels = assignment
        .iter()
        .map(|&c| {
            if c == stable_cluster {
                StabilityClass::Stable
            } else {
                StabilityClass::Unstable
            }
        })
        .collect();
    let centers = compute_centers(ds, &assignment, k)?;
    Ok(ClusterOutcome {
        labels,
        assignment,
        centers,
        iterations,
    })
}

fn verify_zero_violations(
    constraints: &ConstraintSet,
    assignment: &[usize],
    index_of: &HashMap<u64, usize>,
) -> Result<()> {
    for &(a, b) in constraints.must_links() {
        if assignment[index_of[&a]] != assignment[index_of[&b]] {
            return Err(Error::InconsistentConstraints {
                detail: format!("final assignment separates must-linked pair ({a}, {b})"),
            });
        }
    }
    for &(a, b) in constraints.cannot_links() {
        if assignment[index_of[&a]] == assignment[index_of[&b]] {
            return Err(Error::InconsistentConstraints {
                detail: format!("final assignment joins cannot-linked pair ({a}, {b})"),
            });
        }
    }
    Ok(())
}

/// Copy of `ds` with the clustering outcome written into every label.
pub fn apply_cluster_labels(ds: &Dataset, outcome: &ClusterOutcome) -> Dataset {
    let mut out = ds.clone();
    for (inst, &label) in out.instances.iter_mut().zip(&outcome.labels) {
        inst.label = Some(label);
    }
    out
}
