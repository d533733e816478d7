//! Mini-batch Adam training with best-checkpoint early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss, LossKind};
use super::Surrogate;
use crate::error::{Error, Result};
use crate::linalg::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Fraction of records held out when no validation set is given.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.001, batch_size: 128, max_epochs: 300, patience: 30, seed: 0, validation_fraction: 0.1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidArgument("patience exceeds max_epochs".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidArgument("validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub model: S,
    pub initial_validation_loss: f64,
    pub best_validation_loss: f64,
    /// 0 means the initial parameters were never improved on.
    pub best_epoch: usize,
    pub epochs_run: usize,
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(lr: f64, n: usize) -> Self {
        Self { lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Loss of `model` on a dataset, evaluated in fixed-size chunks.
pub fn evaluate_loss<S: Surrogate>(model: &S, inputs: &[&S::Input], targets: &[f64], kind: LossKind) -> Result<f64> {
    let mut preds = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(1024) {
        preds.extend(model.predict_batch(chunk)?);
    }
    loss(kind, &preds, targets)
}

/// Trains `init` on `(inputs, targets)` and returns the parameters with the
/// lowest validation loss seen, the initial parameters included.
///
/// Without an explicit validation set, `validation_fraction` of the data
/// (at least one record) is held out when there are at least ten records;
/// smaller sets are validated on the training data itself.
pub fn fit<S: Surrogate>(
    init: S,
    inputs: &[&S::Input],
    targets: &[f64],
    cfg: &TrainConfig,
    kind: LossKind,
    validation: Option<(&[&S::Input], &[f64])>,
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::InsufficientData("no training records".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch("inputs and targets differ in length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let (train_idx, val_inputs, val_targets): (Vec<usize>, Vec<&S::Input>, Vec<f64>) = match validation {
        Some((vi, vt)) => {
            if vi.len() != vt.len() || vi.is_empty() {
                return Err(Error::InsufficientData("empty or misaligned validation set".into()));
            }
            (order, vi.to_vec(), vt.to_vec())
        }
        None if inputs.len() >= 10 && cfg.validation_fraction > 0.0 => {
            order.shuffle(&mut rng);
            let held = ((inputs.len() as f64 * cfg.validation_fraction).round() as usize).max(1);
            let (val, train) = order.split_at(held);
            (train.to_vec(), val.iter().map(|&i| inputs[i]).collect(), val.iter().map(|&i| targets[i]).collect())
        }
        None => (order, inputs.to_vec(), targets.to_vec()),
    };

    let mut model = init;
    let initial = evaluate_loss(&model, &val_inputs, &val_targets, kind)?;
    if !initial.is_finite() {
        return Err(Error::Diverged { epoch: 0 });
    }
    let mut best = model.clone();
    let mut best_loss = initial;
    let mut best_epoch = 0;
    let mut adam = Adam::new(cfg.learning_rate, model.params().len());
    let mut grad = vec![0.0; model.params().len()];
    let mut train_idx = train_idx;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        train_idx.shuffle(&mut rng);
        for batch in train_idx.chunks(cfg.batch_size) {
            let xs: Vec<&S::Input> = batch.iter().map(|&i| inputs[i]).collect();
            let ts: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
            let scale = 2.0 * kind.normalizer() / batch.len() as f64;
            grad.fill(0.0);
            model.logits_and_grad(
                &xs,
                &mut |logits| {
                    logits
                        .iter()
                        .zip(&ts)
                        .map(|(&s, &t)| {
                            let y = sigmoid(s);
                            scale * kind.weight(t) * (y - t) * y * (1.0 - y)
                        })
                        .collect()
                },
                &mut grad,
            )?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            adam.step(model.params_mut(), &grad);
        }
        let val = evaluate_loss(&model, &val_inputs, &val_targets, kind)?;
        if !val.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if val < best_loss {
            best_loss = val;
            best = model.clone();
            best_epoch = epoch;
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    Ok(TrainOutcome {
        model: best,
        initial_validation_loss: initial,
        best_validation_loss: best_loss,
        best_epoch,
        epochs_run,
    })
}
