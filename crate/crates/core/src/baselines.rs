//! Flat-vector baselines: a Gini CART and a Pegasos-trained linear SVM.
//!
//! Both consume the observation window flattened time-major (step 0's
//! channels first). Scores are calibrated loosely to [0, 1] so they can
//! share the ranking metrics with the recurrent model: the tree reports the
//! stable fraction of its leaf, the SVM squashes its margin through a
//! sigmoid.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::StabilityClass;
use crate::error::{Error, Result};

/// Concatenates series rows into one feature vector, step 0 first.
pub fn flatten_window(series: &[Vec<f64>]) -> Vec<f64> {
    series.iter().flatten().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartConfig {
    /// Maximum split depth counted in edges from the root.
    pub max_depth: usize,
    /// Smallest sample count allowed on either side of a split.
    pub min_leaf: usize,
}

impl Default for CartConfig {
    fn default() -> Self {
        CartConfig {
            max_depth: 8,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node")]
#[serde(rename_all = "lowercase")]
pub enum CartNode {
    Leaf {
        stable_fraction: f64,
        count: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Arena-backed decision tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartTree {
    pub nodes: Vec<CartNode>,
    pub dims: usize,
}

fn gini(stable: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = stable as f64 / total as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Exhaustive best split: every midpoint between consecutive distinct values
/// of every feature, filtered by the min-leaf rule. Ties keep the first
/// candidate in (feature, ascending threshold) order; only a strictly larger
/// gain replaces the incumbent.
fn best_split(
    x: &[Vec<f64>],
    y: &[StabilityClass],
    idx: &[usize],
    min_leaf: usize,
) -> Option<BestSplit> {
    let n = idx.len();
    let stable_total = idx
        .iter()
        .filter(|&&i| y[i] == StabilityClass::Stable)
        .count();
    let parent = gini(stable_total, n);
    let dims = x[0].len();
    let mut best: Option<BestSplit> = None;
    let mut column: Vec<(f64, bool)> = Vec::with_capacity(n);
    for feature in 0..dims {
        column.clear();
        column.extend(
            idx.iter()
                .map(|&i| (x[i][feature], y[i] == StabilityClass::Stable)),
        );
        column.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let mut left_n = 0usize;
        let mut left_stable = 0usize;
        for j in 0..n - 1 {
            left_n += 1;
            if column[j].1 {
                left_stable += 1;
            }
            if column[j].0 == column[j + 1].0 {
                continue;
            }
            let right_n = n - left_n;
            if left_n < min_leaf || right_n < min_leaf {
                continue;
            }
            let threshold = 0.5 * (column[j].0 + column[j + 1].0);
            let right_stable = stable_total - left_stable;
            let weighted = (left_n as f64 * gini(left_stable, left_n)
                + right_n as f64 * gini(right_stable, right_n))
                / n as f64;
            let gain = parent - weighted;
            if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                best = Some(BestSplit {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    best.filter(|b| b.gain > 0.0)
}

fn grow(
    x: &[Vec<f64>],
    y: &[StabilityClass],
    idx: Vec<usize>,
    depth: usize,
    cfg: &CartConfig,
    nodes: &mut Vec<CartNode>,
) -> usize {
    let n = idx.len();
    let stable = idx
        .iter()
        .filter(|&&i| y[i] == StabilityClass::Stable)
        .count();
    let make_leaf = |nodes: &mut Vec<CartNode>| {
        nodes.push(CartNode::Leaf {
            stable_fraction: stable as f64 / n as f64,
            count: n,
        });
        nodes.len() - 1
    };
    if depth >= cfg.max_depth || n < 2 * cfg.min_leaf || stable == 0 || stable == n {
        return make_leaf(nodes);
    }
    let Some(split) = best_split(x, y, &idx, cfg.min_leaf) else {
        return make_leaf(nodes);
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| x[i][split.feature] <= split.threshold);
    let slot = nodes.len();
    nodes.push(CartNode::Leaf {
        stable_fraction: 0.0,
        count: 0,
    });
    let left = grow(x, y, left_idx, depth + 1, cfg, nodes);
    let right = grow(x, y, right_idx, depth + 1, cfg, nodes);
    nodes[slot] = CartNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    slot
}

/// Fits a tree on flattened windows. `y[i]` labels `x[i]`.
pub fn train_cart(x: &[Vec<f64>], y: &[StabilityClass], cfg: &CartConfig) -> Result<CartTree> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if x.len() != y.len() {
        return Err(Error::MetricLengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let dims = x[0].len();
    if dims == 0 {
        return Err(Error::BadDimension {
            what: "feature vector",
            expected: 1,
            got: 0,
        });
    }
    for row in x {
        if row.len() != dims {
            return Err(Error::BadDimension {
                what: "feature vector",
                expected: dims,
                got: row.len(),
            });
        }
    }
    if cfg.min_leaf == 0 {
        return Err(Error::BadHyperparameter {
            what: "min_leaf",
            value: 0.0,
        });
    }
    let mut nodes = Vec::new();
    let root = grow(x, y, (0..x.len()).collect(), 0, cfg, &mut nodes);
    debug_assert_eq!(root, 0);
    Ok(CartTree { nodes, dims })
}

/// Stable-class score: the stable fraction of the leaf the vector lands in.
/// Values equal to a threshold go left.
pub fn cart_predict(tree: &CartTree, x: &[f64]) -> Result<f64> {
    if x.len() != tree.dims {
        return Err(Error::BadDimension {
            what: "feature vector",
            expected: tree.dims,
            got: x.len(),
        });
    }
    let mut at = 0usize;
    loop {
        match &tree.nodes[at] {
            CartNode::Leaf {
                stable_fraction, ..
            } => return Ok(*stable_fraction),
            CartNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                at = if x[*feature] <= *threshold {
                    *left
                } else {
                    *right
                };
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    /// Regularization strength on the weight vector (the bias is exempt).
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-4,
            epochs: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sign_of(class: StabilityClass) -> f64 {
    match class {
        StabilityClass::Stable => 1.0,
        StabilityClass::Unstable => -1.0,
    }
}

/// Primal stochastic subgradient descent on the hinge loss, learning rate
/// 1/(lambda * t) with t counting updates from 1 across all epochs.
///
/// The bias rides along as a constant-one feature inside the update, which
/// keeps the aggressive early steps of this schedule from launching it on a
/// harmonic random walk; after each step the whole vector is clipped to the
/// ball of radius 1/sqrt(lambda), inside which the optimum is known to lie.
pub fn train_svm(x: &[Vec<f64>], y: &[StabilityClass], cfg: &SvmConfig) -> Result<LinearSvm> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if x.len() != y.len() {
        return Err(Error::MetricLengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let dims = x[0].len();
    for row in x {
        if row.len() != dims {
            return Err(Error::BadDimension {
                what: "feature vector",
                expected: dims,
                got: row.len(),
            });
        }
    }
    if !(cfg.lambda.is_finite() && cfg.lambda > 0.0) {
        return Err(Error::BadHyperparameter {
            what: "lambda",
            value: cfg.lambda,
        });
    }

    let mut w = vec![0.0; dims + 1];
    let radius = 1.0 / cfg.lambda.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut t = 0u64;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let label = sign_of(y[i]);
            let margin = label * (dot(&w[..dims], &x[i]) + w[dims]);
            let decay = 1.0 - eta * cfg.lambda;
            for v in w.iter_mut() {
                *v *= decay;
            }
            if margin < 1.0 {
                for (wj, &xj) in w.iter_mut().zip(&x[i]) {
                    *wj += eta * label * xj;
                }
                w[dims] += eta * label;
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                let shrink = radius / norm;
                for v in w.iter_mut() {
                    *v *= shrink;
                }
            }
        }
    }
    let bias = w[dims];
    w.truncate(dims);
    Ok(LinearSvm { weights: w, bias })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stable-class score: sigmoid of the signed margin.
pub fn svm_predict(model: &LinearSvm, x: &[f64]) -> Result<f64> {
    if x.len() != model.weights.len() {
        return Err(Error::BadDimension {
            what: "feature vector",
            expected: model.weights.len(),
            got: x.len(),
        });
    }
    let margin = dot(&model.weights, x) + model.bias;
    Ok(1.0 / (1.0 + (-margin).exp()))
}

/// Regularized hinge objective: lambda/2 ||w||^2 + mean hinge loss.
pub fn svm_objective(
    model: &LinearSvm,
    x: &[Vec<f64>],
    y: &[StabilityClass],
    lambda: f64,
) -> f64 {
    let reg = 0.5 * lambda * dot(&model.weights, &model.weights);
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let margin = sign_of(yi) * (dot(&model.weights, xi) + model.bias);
            (1.0 - margin).max(0.0)
        })
        .sum();
    reg + hinge / x.len() as f64
}
