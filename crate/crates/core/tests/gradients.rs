//! Backpropagation checked against central finite differences.
//!
//! Every parameter of a small network is perturbed both ways and the slope
//! of the batch loss is compared with the analytic gradient. The relative
//! error guard uses max(|analytic|, |numeric|, 1e-4) in the denominator so
//! near-zero gradients are judged on absolute error instead of noise ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stvs_core::data::Dataset;
use stvs_core::lstm::{
    backward, forward, init_model, loss, train, DropoutMode, Gradients, LossKind, LstmModel,
    TrainConfig,
};
use stvs_core::simgen::{generate_dataset, GridConfig};

const FD_STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;

const SLOTS: [&str; 10] = [
    "w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o", "w_s", "b_s",
];

fn param_buffers(model: &mut LstmModel) -> Vec<&mut Vec<f64>> {
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
    } = model;
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

fn grad_buffers(g: &Gradients) -> Vec<&[f64]> {
    vec![
        &g.w_f.data,
        &g.w_i.data,
        &g.w_c.data,
        &g.w_o.data,
        &g.b_f,
        &g.b_i,
        &g.b_c,
        &g.b_o,
        &g.w_s.data,
        &g.b_s,
    ]
}

fn slot_len(model: &mut LstmModel, slot: usize) -> usize {
    param_buffers(model)[slot].len()
}

fn get_param(model: &mut LstmModel, slot: usize, j: usize) -> f64 {
    param_buffers(model)[slot][j]
}

fn set_param(model: &mut LstmModel, slot: usize, j: usize, value: f64) {
    param_buffers(model)[slot][j] = value;
}

type Sample = (Vec<Vec<f64>>, [f64; 2]);

fn random_batch(rng: &mut ChaCha8Rng, batch: usize, steps: usize, d: usize) -> Vec<Sample> {
    (0..batch)
        .map(|_| {
            let x = (0..steps)
                .map(|_| (0..d).map(|_| rng.gen::<f64>()).collect())
                .collect();
            let target = if rng.gen::<bool>() {
                [1.0, 0.0]
            } else {
                [0.0, 1.0]
            };
            (x, target)
        })
        .collect()
}

/// Mean loss over the batch; `masks[i]`, when given, pins sample i's dropout.
fn batch_loss(
    model: &LstmModel,
    batch: &[Sample],
    masks: Option<&[Vec<f64>]>,
    kind: LossKind,
) -> f64 {
    let total: f64 = batch
        .iter()
        .enumerate()
        .map(|(i, (x, target))| {
            let mode = match masks {
                Some(ms) => DropoutMode::Fixed { mask: &ms[i] },
                None => DropoutMode::Off,
            };
            let cache = forward(model, x, mode).unwrap();
            loss(&cache.probs, target, kind)
        })
        .sum();
    total / batch.len() as f64
}

fn analytic_gradients(
    model: &LstmModel,
    batch: &[Sample],
    masks: Option<&[Vec<f64>]>,
    kind: LossKind,
) -> Gradients {
    let mut grads = Gradients::zeros(model);
    for (i, (x, target)) in batch.iter().enumerate() {
        let mode = match masks {
            Some(ms) => DropoutMode::Fixed { mask: &ms[i] },
            None => DropoutMode::Off,
        };
        let cache = forward(model, x, mode).unwrap();
        backward(model, &cache, target, kind, &mut grads);
    }
    grads.scale(1.0 / batch.len() as f64);
    grads
}

/// Central-difference check over every parameter; returns how many were
/// compared so callers can assert full coverage.
fn check_all_params(
    model: &mut LstmModel,
    batch: &[Sample],
    masks: Option<&[Vec<f64>]>,
    kind: LossKind,
    context: &str,
) -> usize {
    let grads = analytic_gradients(model, batch, masks, kind);
    let analytic: Vec<Vec<f64>> = grad_buffers(&grads)
        .into_iter()
        .map(|s| s.to_vec())
        .collect();

    let mut checked = 0usize;
    for slot in 0..SLOTS.len() {
        for j in 0..slot_len(model, slot) {
            let original = get_param(model, slot, j);
            set_param(model, slot, j, original + FD_STEP);
            let plus = batch_loss(model, batch, masks, kind);
            set_param(model, slot, j, original - FD_STEP);
            let minus = batch_loss(model, batch, masks, kind);
            set_param(model, slot, j, original);

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[slot][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            assert!(
                rel < TOLERANCE,
                "{context}: {}[{j}] analytic {a} numeric {numeric} rel {rel}",
                SLOTS[slot]
            );
            checked += 1;
        }
    }
    checked
}

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut model = init_model(4, 6, &mut rng);
        let batch = random_batch(&mut rng, 3, 5, 6);
        let checked = check_all_params(
            &mut model,
            &batch,
            None,
            LossKind::SquaredError,
            &format!("seed {seed}"),
        );
        assert_eq!(checked, model.param_count());
    }
}

#[test]
fn gradients_survive_a_fixed_dropout_mask() {
    let keep = 1.0 / (1.0 - 0.25);
    for seed in 0..2u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let mut model = init_model(4, 6, &mut rng);
        let batch = random_batch(&mut rng, 3, 5, 6);
        let masks: Vec<Vec<f64>> = (0..batch.len())
            .map(|_| {
                (0..4)
                    .map(|_| if rng.gen::<f64>() < 0.25 { 0.0 } else { keep })
                    .collect()
            })
            .collect();
        check_all_params(
            &mut model,
            &batch,
            Some(&masks),
            LossKind::SquaredError,
            &format!("dropout seed {seed}"),
        );
    }
}

#[test]
fn cross_entropy_gradients_also_match() {
    for seed in 0..2u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let mut model = init_model(4, 6, &mut rng);
        let batch = random_batch(&mut rng, 3, 5, 6);
        check_all_params(
            &mut model,
            &batch,
            None,
            LossKind::CrossEntropy,
            &format!("xent seed {seed}"),
        );
    }
}

fn tiny_labeled_dataset() -> Dataset {
    let mut cfg = GridConfig::default();
    cfg.n_samples = Some(24);
    cfg.steps = 12;
    let mut ds = generate_dataset(&cfg).unwrap();
    for inst in &mut ds.instances {
        inst.label = inst.truth;
    }
    ds
}

#[test]
fn training_is_bitwise_deterministic() {
    let ds = tiny_labeled_dataset();
    let cfg = TrainConfig {
        hidden_dim: 4,
        epochs: 2,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let (mut m1, n1, s1) = train(&ds, Some(&ds), 8, &cfg).unwrap();
    let (mut m2, n2, s2) = train(&ds, Some(&ds), 8, &cfg).unwrap();
    assert_eq!(n1, n2);
    assert_eq!(s1, s2);
    let b1 = param_buffers(&mut m1);
    let b2 = param_buffers(&mut m2);
    for (x, y) in b1.iter().zip(&b2) {
        assert_eq!(x.len(), y.len());
        for (a, b) in x.iter().zip(y.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn a_few_epochs_reduce_training_loss() {
    let ds = tiny_labeled_dataset();
    let cfg = TrainConfig {
        hidden_dim: 8,
        epochs: 30,
        batch_size: 8,
        dropout_rate: 0.0,
        learning_rate: 5e-3,
        ..TrainConfig::default()
    };
    let (_, _, stats) = train(&ds, None, 12, &cfg).unwrap();
    assert_eq!(stats.len(), 30);
    assert!(stats[0].eval_accuracy.is_none());
    let first = stats.first().unwrap().train_loss;
    let last = stats.last().unwrap().train_loss;
    assert!(
        last < first * 0.8,
        "loss failed to drop: {first} -> {last}"
    );
}

#[test]
fn predictions_come_from_the_stable_probability() {
    let ds = tiny_labeled_dataset();
    let cfg = TrainConfig {
        hidden_dim: 4,
        epochs: 1,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let (model, norm, _) = train(&ds, None, 8, &cfg).unwrap();
    for inst in &ds.instances {
        let (class, probs) = stvs_core::lstm::predict(&model, &norm, inst, 8).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        use stvs_core::data::StabilityClass;
        let expected = if probs[0] > probs[1] {
            StabilityClass::Stable
        } else {
            StabilityClass::Unstable
        };
        assert_eq!(class, expected);
    }
}
