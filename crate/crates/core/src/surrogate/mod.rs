//! Performance predictors: the GCN surrogate, the flat MLP baseline, their
//! losses, training loop and checkpoint format.

pub mod checkpoint;
pub mod gcn;
pub mod loss;
pub mod mlp;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, SurrogateModel};
pub use gcn::{GcnConfig, GcnParams};
pub use loss::{loss, loss_gradient, LossKind};
pub use mlp::{MlpConfig, MlpParams};
pub use train::{fit, TrainConfig, TrainOutcome};

use crate::error::Result;

/// A differentiable predictor that maps an input to an embedding `phi` and
/// a head logit `w . phi + b`; the predicted accuracy is `sigmoid(logit)`.
///
/// Parameters live in one flat buffer so optimizers and checkpoints can
/// treat every model alike.
pub trait Surrogate: Clone + Send + Sync {
    type Input: Sync;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn embedding_dim(&self) -> usize;

    /// Embeddings and head logits for a batch.
    fn forward_batch(&self, inputs: &[&Self::Input]) -> Result<(Vec<Vec<f64>>, Vec<f64>)>;

    /// Runs the batch forward, asks `upstream` for `dL/dlogit` per sample,
    /// and adds `dL/dparams` into `grad`. Returns the logits.
    fn logits_and_grad(
        &self,
        inputs: &[&Self::Input],
        upstream: &mut dyn FnMut(&[f64]) -> Vec<f64>,
        grad: &mut [f64],
    ) -> Result<Vec<f64>>;

    fn predict_batch(&self, inputs: &[&Self::Input]) -> Result<Vec<f64>> {
        let (_, logits) = self.forward_batch(inputs)?;
        Ok(logits.into_iter().map(crate::linalg::sigmoid).collect())
    }
}

/// Glorot-uniform fill of a `fan_in x fan_out` block.
pub(crate) fn glorot(rng: &mut impl rand::Rng, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for w in out {
        *w = rng.gen_range(-limit..=limit);
    }
}
