//! Sample-efficient multi-objective architecture search.
//!
//! A graph convolutional network embeds candidate cells, a Bayesian linear
//! regression over those embeddings supplies predictive means and
//! variances, and per-objective Expected Improvement combined with
//! non-dominated sorting picks the next batch of architectures to evaluate.

pub mod acquisition;
pub mod bench;
pub mod blr;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod objective;
pub mod search;
pub mod stats;
pub mod surrogate;

pub use error::{Error, Result};
pub use graph::{ArchGraph, EncodedGraph, OpVocabulary};
pub use objective::{Direction, Objective, ObjectiveSpec, ObjectiveVector};
pub use search::{EvaluationOracle, SearchConfig, SearchReport, SearchSpace};
