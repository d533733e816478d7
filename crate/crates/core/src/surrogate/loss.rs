//! Regression losses over predicted accuracies.
//!
//! Every loss has the form `c / N * sum_i w(t_i) * (y_i - t_i)^2` where
//! `t_i` is the ground truth in `[0, 1]`. The weighted variants emphasize
//! accurate prediction of high-performing architectures.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    #[default]
    ExpWeighted,
    LogWeighted,
    LinearWeighted,
}

impl LossKind {
    pub const ALL: [LossKind; 4] =
        [LossKind::Mse, LossKind::ExpWeighted, LossKind::LogWeighted, LossKind::LinearWeighted];

    /// Unnormalized per-sample weight.
    pub fn weight(self, truth: f64) -> f64 {
        match self {
            LossKind::Mse => 1.0,
            LossKind::ExpWeighted => truth.exp() - 1.0,
            LossKind::LogWeighted => truth.ln_1p(),
            LossKind::LinearWeighted => truth,
        }
    }

    /// Constant that makes the weight equal 1 at `truth = 1`.
    pub fn normalizer(self) -> f64 {
        match self {
            LossKind::Mse | LossKind::LinearWeighted => 1.0,
            LossKind::ExpWeighted => 1.0 / (std::f64::consts::E - 1.0),
            LossKind::LogWeighted => 1.0 / std::f64::consts::LN_2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::ExpWeighted => "exp_weighted",
            LossKind::LogWeighted => "log_weighted",
            LossKind::LinearWeighted => "linear_weighted",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown loss {s:?}")))
    }
}

fn check(predicted: &[f64], truth: &[f64]) -> Result<()> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions for {} targets", predicted.len(), truth.len())));
    }
    if predicted.is_empty() {
        return Err(Error::InsufficientData("loss of an empty batch".into()));
    }
    if let Some(t) = truth.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidArgument(format!("target {t} outside [0, 1]")));
    }
    Ok(())
}

pub fn loss(kind: LossKind, predicted: &[f64], truth: &[f64]) -> Result<f64> {
    check(predicted, truth)?;
    let n = predicted.len() as f64;
    let sum: f64 = predicted.iter().zip(truth).map(|(y, t)| kind.weight(*t) * (y - t).powi(2)).sum();
    Ok(kind.normalizer() * sum / n)
}

/// Derivative of [`loss`] with respect to each prediction.
pub fn loss_gradient(kind: LossKind, predicted: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    check(predicted, truth)?;
    let scale = 2.0 * kind.normalizer() / predicted.len() as f64;
    Ok(predicted.iter().zip(truth).map(|(y, t)| scale * kind.weight(*t) * (y - t)).collect())
}
