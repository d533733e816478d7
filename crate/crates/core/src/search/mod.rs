//! The alternating search loop: evaluate a batch, refresh the Bayesian
//! head, periodically retrain the feature extractor, pick the next batch.
//!
//! Baselines (random search, regularized evolution) share the same
//! oracle, space and report types.

mod baselines;
mod engine;
mod report;
mod space;

pub use baselines::{run_evolution_baseline, run_random_baseline, EvolutionConfig};
pub use engine::{
    initialize, initialize_with_models, load_state, run, run_resumable, run_state, sample_pool, save_state, step,
    transfer_pretrain, FeatureModel, SearchState, StopReason,
};
pub use report::{FrontMember, IterationSummary, SearchReport};
pub use space::SearchSpace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ArchGraph;
use crate::objective::{ObjectiveSpec, ObjectiveVector};
use crate::surrogate::{LossKind, TrainConfig};

/// Source of ground-truth objective values ("fully training" a cell).
pub trait EvaluationOracle: Sync {
    fn objectives(&self) -> &ObjectiveSpec;

    /// Deterministic per graph id.
    fn evaluate(&self, g: &ArchGraph) -> Result<ObjectiveVector>;

    /// Value of a non-costly objective. Not charged to the budget.
    fn exact(&self, objective: usize, g: &ArchGraph) -> Result<f64> {
        Ok(self.evaluate(g)?.values()[objective])
    }

    /// Ids of the true Pareto-optimal cells, when known.
    fn optimal_front(&self) -> Option<Vec<String>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    Gcn,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub init_samples: usize,
    pub batch_size_l: usize,
    pub retrain_period_k: usize,
    /// Candidates scored per iteration; 0 scores every untrained cell.
    pub pool_size: usize,
    /// Oracle-call budget including the initial samples; `None` is unbounded.
    pub max_evaluations: Option<usize>,
    /// Fraction of the true front that ends the run, when the oracle knows it.
    pub threshold: f64,
    pub seed: u64,
    pub loss_kind: LossKind,
    /// Rank candidates by predictive mean instead of Expected Improvement.
    pub point_estimate_only: bool,
    /// Count failed oracle calls against the budget.
    pub charge_failures: bool,
    /// Re-fit the Bayesian head's precisions on every update.
    pub reoptimize_hyperparams: bool,
    pub surrogate: SurrogateKind,
    pub hidden: usize,
    pub layers: usize,
    /// Training from scratch on the initial samples.
    pub train: TrainConfig,
    /// Warm-started retraining every `retrain_period_k` iterations.
    pub retrain: TrainConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            init_samples: 50,
            batch_size_l: 10,
            retrain_period_k: 10,
            pool_size: 0,
            max_evaluations: None,
            threshold: 1.0,
            seed: 0,
            loss_kind: LossKind::ExpWeighted,
            point_estimate_only: false,
            charge_failures: true,
            reoptimize_hyperparams: true,
            surrogate: SurrogateKind::Gcn,
            hidden: 64,
            layers: 4,
            train: TrainConfig::default(),
            retrain: TrainConfig { max_epochs: 60, patience: 15, ..TrainConfig::default() },
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.init_samples == 0 || self.batch_size_l == 0 || self.retrain_period_k == 0 {
            return bad("init_samples, batch_size_l and retrain_period_k must be at least 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return bad(format!("threshold {} outside (0, 1]", self.threshold));
        }
        if let Some(b) = self.max_evaluations {
            if b < self.init_samples {
                return bad(format!("budget {b} is smaller than init_samples {}", self.init_samples));
            }
        }
        if self.hidden == 0 || self.layers == 0 {
            return bad("hidden and layers must be at least 1".into());
        }
        self.train.validate()?;
        self.retrain.validate()
    }

    /// Checks the config against a space of known size.
    pub fn validate_for(&self, space_len: usize) -> Result<()> {
        self.validate()?;
        if self.init_samples > space_len {
            return Err(Error::InvalidArgument(format!(
                "init_samples {} exceeds the {space_len} cells in the space",
                self.init_samples
            )));
        }
        if self.pool_size > space_len {
            return Err(Error::InvalidArgument(format!(
                "pool_size {} exceeds the {space_len} cells in the space",
                self.pool_size
            )));
        }
        Ok(())
    }
}
