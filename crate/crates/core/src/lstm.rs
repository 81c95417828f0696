//! Recurrent classifier trained with backpropagation through time.
//!
//! A single LSTM layer consumes the normalized observation window step by
//! step; the final hidden state (after one dropout site) feeds a two-way
//! softmax head. Everything is written against flat `f64` buffers: no
//! external linear algebra, so the backward pass can be audited line by line
//! against finite differences.
//!
//! Gate input is the concatenation `[h_prev, x_t]`, in that order. Softmax
//! index 0 is the stable class, index 1 unstable. A predicted tie breaks
//! toward unstable, the conservative call for a protection system.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{
    fit_normalizer, normalize_series, window, Dataset, NormStats, StabilityClass,
    TimeSeriesInstance,
};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// y = A x
    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for (r, out) in y.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *out = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        y
    }

    /// acc += A^T y
    fn tvec_add(&self, y: &[f64], acc: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(acc.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += yr * v;
            }
        }
    }

    /// self += y ⊗ x
    fn rank1_add(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (entry, &xv) in row.iter_mut().zip(x) {
                *entry += yr * xv;
            }
        }
    }
}

/// Gate weights, head weights, and the shape they were built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub hidden: usize,
    pub input: usize,
    pub w_f: Mat,
    pub w_i: Mat,
    pub w_c: Mat,
    pub w_o: Mat,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
    pub w_s: Mat,
    pub b_s: Vec<f64>,
}

impl LstmModel {
    /// Mutable views over every parameter buffer, in the fixed order
    /// w_f, w_i, w_c, w_o, b_f, b_i, b_c, b_o, w_s, b_s.
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let LstmModel {
            w_f,
            w_i,
            w_c,
            w_o,
            b_f,
            b_i,
            b_c,
            b_o,
            w_s,
            b_s,
            ..
        } = self;
        vec![
            &mut w_f.data,
            &mut w_i.data,
            &mut w_c.data,
            &mut w_o.data,
            b_f,
            b_i,
            b_c,
            b_o,
            &mut w_s.data,
            b_s,
        ]
    }

    pub fn param_count(&self) -> usize {
        let gate = self.hidden * (self.hidden + self.input) + self.hidden;
        4 * gate + 2 * self.hidden + 2
    }
}

/// Same shapes as the model, used to accumulate per-sample gradients.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w_f: Mat,
    pub w_i: Mat,
    pub w_c: Mat,
    pub w_o: Mat,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
    pub w_s: Mat,
    pub b_s: Vec<f64>,
}

impl Gradients {
    pub fn zeros(model: &LstmModel) -> Self {
        let h = model.hidden;
        let d = model.input;
        Gradients {
            w_f: Mat::zeros(h, h + d),
            w_i: Mat::zeros(h, h + d),
            w_c: Mat::zeros(h, h + d),
            w_o: Mat::zeros(h, h + d),
            b_f: vec![0.0; h],
            b_i: vec![0.0; h],
            b_c: vec![0.0; h],
            b_o: vec![0.0; h],
            w_s: Mat::zeros(2, h),
            b_s: vec![0.0; 2],
        }
    }

    /// Views in the same fixed order as [`LstmModel::param_slices_mut`].
    fn slices(&self) -> Vec<&[f64]> {
        vec![
            &self.w_f.data,
            &self.w_i.data,
            &self.w_c.data,
            &self.w_o.data,
            &self.b_f,
            &self.b_i,
            &self.b_c,
            &self.b_o,
            &self.w_s.data,
            &self.b_s,
        ]
    }

    pub fn scale(&mut self, s: f64) {
        let Gradients {
            w_f,
            w_i,
            w_c,
            w_o,
            b_f,
            b_i,
            b_c,
            b_o,
            w_s,
            b_s,
        } = self;
        for buf in [
            &mut w_f.data,
            &mut w_i.data,
            &mut w_c.data,
            &mut w_o.data,
            b_f,
            b_i,
            b_c,
            b_o,
            &mut w_s.data,
            b_s,
        ] {
            for v in buf.iter_mut() {
                *v *= s;
            }
        }
    }
}

/// Loss applied to the softmax output against a one-hot target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    SquaredError,
    CrossEntropy,
}

/// Training hyperparameters. Defaults are the full-scale settings; desk runs
/// shrink `hidden_dim` and `epochs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dim: 256,
            learning_rate: 1e-4,
            dropout_rate: 0.25,
            batch_size: 64,
            epochs: 200,
            loss: LossKind::SquaredError,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::BadHyperparameter {
                what: "hidden_dim",
                value: 0.0,
            });
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::BadHyperparameter {
                what: "learning_rate",
                value: self.learning_rate,
            });
        }
        if !(self.dropout_rate >= 0.0 && self.dropout_rate < 1.0) {
            return Err(Error::BadHyperparameter {
                what: "dropout_rate",
                value: self.dropout_rate,
            });
        }
        if self.batch_size == 0 {
            return Err(Error::BadHyperparameter {
                what: "batch_size",
                value: 0.0,
            });
        }
        if self.epochs == 0 {
            return Err(Error::BadHyperparameter {
                what: "epochs",
                value: 0.0,
            });
        }
        Ok(())
    }
}

/// How the single dropout site (on the final hidden state) behaves.
pub enum DropoutMode<'a> {
    /// Identity mask; used for every evaluation and prediction.
    Off,
    /// Fresh inverted-dropout mask per call: each unit is zeroed with
    /// probability `rate`, survivors scaled by 1/(1-rate).
    Seeded { rate: f64, rng: &'a mut ChaCha8Rng },
    /// Caller-supplied mask, for finite-difference checks.
    Fixed { mask: &'a [f64] },
}

#[derive(Debug, Clone)]
pub struct StepCache {
    /// Concatenated [h_prev, x_t].
    pub z: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub c_tilde: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Every intermediate the backward pass needs, for one sample.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub steps: Vec<StepCache>,
    pub mask: Vec<f64>,
    /// Final hidden state after the dropout mask.
    pub dropped: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Runs the window through the recurrence and the softmax head.
pub fn forward(model: &LstmModel, x: &[Vec<f64>], dropout: DropoutMode) -> Result<ForwardCache> {
    let h_dim = model.hidden;
    let d = model.input;
    if x.is_empty() {
        return Err(Error::WindowBounds {
            requested: 1,
            available: 0,
        });
    }
    for row in x {
        if row.len() != d {
            return Err(Error::BadDimension {
                what: "input row",
                expected: d,
                got: row.len(),
            });
        }
    }
    let mask = match dropout {
        DropoutMode::Off => vec![1.0; h_dim],
        DropoutMode::Seeded { rate, rng } => (0..h_dim)
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    0.0
                } else {
                    1.0 / (1.0 - rate)
                }
            })
            .collect(),
        DropoutMode::Fixed { mask } => {
            if mask.len() != h_dim {
                return Err(Error::BadDimension {
                    what: "dropout mask",
                    expected: h_dim,
                    got: mask.len(),
                });
            }
            mask.to_vec()
        }
    };

    let mut h = vec![0.0; h_dim];
    let mut c = vec![0.0; h_dim];
    let mut steps = Vec::with_capacity(x.len());
    for x_t in x {
        let mut z = Vec::with_capacity(h_dim + d);
        z.extend_from_slice(&h);
        z.extend_from_slice(x_t);

        let mut f = model.w_f.matvec(&z);
        let mut i = model.w_i.matvec(&z);
        let mut c_tilde = model.w_c.matvec(&z);
        let mut o = model.w_o.matvec(&z);
        for j in 0..h_dim {
            f[j] = sigmoid(f[j] + model.b_f[j]);
            i[j] = sigmoid(i[j] + model.b_i[j]);
            c_tilde[j] = (c_tilde[j] + model.b_c[j]).tanh();
            o[j] = sigmoid(o[j] + model.b_o[j]);
        }
        let mut c_new = vec![0.0; h_dim];
        let mut h_new = vec![0.0; h_dim];
        for j in 0..h_dim {
            c_new[j] = f[j] * c[j] + i[j] * c_tilde[j];
            h_new[j] = o[j] * c_new[j].tanh();
        }
        c = c_new;
        h = h_new;
        steps.push(StepCache {
            z,
            f,
            i,
            c_tilde,
            o,
            c: c.clone(),
            h: h.clone(),
        });
    }

    let dropped: Vec<f64> = h.iter().zip(&mask).map(|(a, b)| a * b).collect();
    let mut logits = model.w_s.matvec(&dropped);
    for (l, b) in logits.iter_mut().zip(&model.b_s) {
        *l += b;
    }
    let probs = softmax(&logits);
    Ok(ForwardCache {
        steps,
        mask,
        dropped,
        logits,
        probs,
    })
}

/// Loss for one sample.
pub fn loss(probs: &[f64], target: &[f64; 2], kind: LossKind) -> f64 {
    match kind {
        LossKind::SquaredError => probs
            .iter()
            .zip(target)
            .map(|(p, y)| (p - y) * (p - y))
            .sum(),
        LossKind::CrossEntropy => -probs
            .iter()
            .zip(target)
            .map(|(p, y)| y * p.max(1e-12).ln())
            .sum::<f64>(),
    }
}

/// Accumulates one sample's gradients into `grads` via backpropagation
/// through time. Callers average over the batch afterwards with
/// [`Gradients::scale`].
pub fn backward(
    model: &LstmModel,
    cache: &ForwardCache,
    target: &[f64; 2],
    kind: LossKind,
    grads: &mut Gradients,
) {
    let h_dim = model.hidden;
    let probs = &cache.probs;

    // Softmax Jacobian folded with the loss derivative:
    // dz_j = p_j * (dL/dp_j - sum_k dL/dp_k * p_k). For cross-entropy this
    // collapses to the usual p - y.
    let dz_head: Vec<f64> = match kind {
        LossKind::SquaredError => {
            let dl_dp: Vec<f64> = probs.iter().zip(target).map(|(p, y)| 2.0 * (p - y)).collect();
            let dot: f64 = dl_dp.iter().zip(probs).map(|(d, p)| d * p).sum();
            probs
                .iter()
                .zip(&dl_dp)
                .map(|(p, d)| p * (d - dot))
                .collect()
        }
        LossKind::CrossEntropy => probs.iter().zip(target).map(|(p, y)| p - y).collect(),
    };

    grads.w_s.rank1_add(&dz_head, &cache.dropped);
    for (g, d) in grads.b_s.iter_mut().zip(&dz_head) {
        *g += d;
    }
    let mut dh_dropped = vec![0.0; h_dim];
    model.w_s.tvec_add(&dz_head, &mut dh_dropped);

    let mut dh: Vec<f64> = dh_dropped
        .iter()
        .zip(&cache.mask)
        .map(|(d, m)| d * m)
        .collect();
    let mut dc = vec![0.0; h_dim];

    for t in (0..cache.steps.len()).rev() {
        let s = &cache.steps[t];
        let c_prev = if t > 0 {
            cache.steps[t - 1].c.as_slice()
        } else {
            &[]
        };

        let mut dz_f = vec![0.0; h_dim];
        let mut dz_i = vec![0.0; h_dim];
        let mut dz_c = vec![0.0; h_dim];
        let mut dz_o = vec![0.0; h_dim];
        for j in 0..h_dim {
            let tanh_c = s.c[j].tanh();
            let d_o = dh[j] * tanh_c;
            dz_o[j] = d_o * s.o[j] * (1.0 - s.o[j]);
            dc[j] += dh[j] * s.o[j] * (1.0 - tanh_c * tanh_c);

            let cp = if t > 0 { c_prev[j] } else { 0.0 };
            let d_f = dc[j] * cp;
            dz_f[j] = d_f * s.f[j] * (1.0 - s.f[j]);
            let d_i = dc[j] * s.c_tilde[j];
            dz_i[j] = d_i * s.i[j] * (1.0 - s.i[j]);
            let d_ct = dc[j] * s.i[j];
            dz_c[j] = d_ct * (1.0 - s.c_tilde[j] * s.c_tilde[j]);
        }

        grads.w_f.rank1_add(&dz_f, &s.z);
        grads.w_i.rank1_add(&dz_i, &s.z);
        grads.w_c.rank1_add(&dz_c, &s.z);
        grads.w_o.rank1_add(&dz_o, &s.z);
        for j in 0..h_dim {
            grads.b_f[j] += dz_f[j];
            grads.b_i[j] += dz_i[j];
            grads.b_c[j] += dz_c[j];
            grads.b_o[j] += dz_o[j];
        }

        let mut dzcat = vec![0.0; h_dim + model.input];
        model.w_f.tvec_add(&dz_f, &mut dzcat);
        model.w_i.tvec_add(&dz_i, &mut dzcat);
        model.w_c.tvec_add(&dz_c, &mut dzcat);
        model.w_o.tvec_add(&dz_o, &mut dzcat);

        for j in 0..h_dim {
            dh[j] = dzcat[j];
            dc[j] *= s.f[j];
        }
    }
}

/// First and second moment accumulators, one buffer per parameter slot.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(model: &LstmModel) -> Self {
        let sizes: Vec<usize> = {
            let g = Gradients::zeros(model);
            g.slices().iter().map(|s| s.len()).collect()
        };
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update over every parameter, with bias-corrected moments.
pub fn adam_step(model: &mut LstmModel, grads: &Gradients, state: &mut AdamState, lr: f64) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    let params = model.param_slices_mut();
    let gslices = grads.slices();
    for ((param, grad), (m, v)) in params
        .into_iter()
        .zip(gslices)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for j in 0..param.len() {
            let g = grad[j];
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g;
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            param[j] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
}

/// Uniform init in ±1/sqrt(hidden + input) for every weight, forget-gate
/// bias 1.0, all other biases 0. Draw order is fixed: w_f, w_i, w_c, w_o,
/// w_s, row-major each.
pub fn init_model(hidden: usize, input: usize, rng: &mut ChaCha8Rng) -> LstmModel {
    let bound = 1.0 / ((hidden + input) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let mut mat = |rows: usize, cols: usize| {
        let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
        Mat { rows, cols, data }
    };
    let w_f = mat(hidden, hidden + input);
    let w_i = mat(hidden, hidden + input);
    let w_c = mat(hidden, hidden + input);
    let w_o = mat(hidden, hidden + input);
    let w_s = mat(2, hidden);
    LstmModel {
        hidden,
        input,
        w_f,
        w_i,
        w_c,
        w_o,
        b_f: vec![1.0; hidden],
        b_i: vec![0.0; hidden],
        b_c: vec![0.0; hidden],
        b_o: vec![0.0; hidden],
        w_s,
        b_s: vec![0.0; 2],
    }
}

/// Per-epoch record for history files and convergence plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_accuracy: Option<f64>,
}

fn prepare(
    ds: &Dataset,
    otw_steps: usize,
    norm: &NormStats,
) -> Result<Vec<(Vec<Vec<f64>>, [f64; 2])>> {
    let mut out = Vec::with_capacity(ds.len());
    for inst in &ds.instances {
        let label = inst.label.ok_or(Error::MissingLabel { id: inst.id })?;
        let windowed = window(inst, otw_steps)?;
        let x = normalize_series(&windowed.series, norm)?;
        out.push((x, label.one_hot()));
    }
    Ok(out)
}

/// Trains on the labeled training split and reports per-epoch loss plus
/// accuracy on the held-out split when one is supplied.
///
/// Channel ranges for normalization are measured over the full training
/// trajectories, so every observation window length shares the same scale.
/// A single RNG stream drives init, epoch shuffles, and dropout masks, so a
/// given (config, data) pair always reproduces the same weights.
pub fn train(
    train_set: &Dataset,
    eval_set: Option<&Dataset>,
    otw_steps: usize,
    cfg: &TrainConfig,
) -> Result<(LstmModel, NormStats, Vec<EpochStats>)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let norm = fit_normalizer(train_set)?;
    let samples = prepare(train_set, otw_steps, &norm)?;
    let eval_samples = match eval_set {
        Some(ds) => Some(prepare(ds, otw_steps, &norm)?),
        None => None,
    };
    let d = train_set.meta.channel_count();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init_model(cfg.hidden_dim, d, &mut rng);
    let mut adam = AdamState::new(&model);
    let mut stats = Vec::with_capacity(cfg.epochs);

    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros(&model);
            for &idx in chunk {
                let (x, target) = &samples[idx];
                let mode = if cfg.dropout_rate > 0.0 {
                    DropoutMode::Seeded {
                        rate: cfg.dropout_rate,
                        rng: &mut rng,
                    }
                } else {
                    DropoutMode::Off
                };
                let cache = forward(&model, x, mode)?;
                loss_sum += loss(&cache.probs, target, cfg.loss);
                backward(&model, &cache, target, cfg.loss, &mut grads);
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam_step(&mut model, &grads, &mut adam, cfg.learning_rate);
        }

        let eval_accuracy = match &eval_samples {
            Some(es) if !es.is_empty() => {
                let mut correct = 0;
                for (x, target) in es {
                    let cache = forward(&model, x, DropoutMode::Off)?;
                    let predicted = usize::from(!(cache.probs[0] > cache.probs[1]));
                    let actual = usize::from(target[1] == 1.0);
                    if predicted == actual {
                        correct += 1;
                    }
                }
                Some(correct as f64 / es.len() as f64)
            }
            _ => None,
        };
        stats.push(EpochStats {
            epoch,
            train_loss: loss_sum / n as f64,
            eval_accuracy,
        });
    }
    Ok((model, norm, stats))
}

/// Classifies one instance from its first `otw_steps` steps. Returns the
/// class and the two softmax probabilities (stable first). A tie goes to
/// unstable.
pub fn predict(
    model: &LstmModel,
    norm: &NormStats,
    inst: &TimeSeriesInstance,
    otw_steps: usize,
) -> Result<(StabilityClass, Vec<f64>)> {
    let windowed = window(inst, otw_steps)?;
    let x = normalize_series(&windowed.series, norm)?;
    let cache = forward(model, &x, DropoutMode::Off)?;
    let class = if cache.probs[0] > cache.probs[1] {
        StabilityClass::Stable
    } else {
        StabilityClass::Unstable
    };
    Ok((class, cache.probs))
}
