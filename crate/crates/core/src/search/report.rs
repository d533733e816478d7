use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SearchConfig, StopReason};
use crate::error::Result;
use crate::graph::ArchGraph;
use crate::objective::{ObjectiveSpec, ObjectiveVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub evaluations_used: usize,
    /// Best raw value of every objective seen so far.
    pub best_per_objective: Vec<f64>,
    pub front_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontMember {
    pub id: String,
    pub graph: ArchGraph,
    pub objectives: ObjectiveVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub method: String,
    pub config: SearchConfig,
    pub seed: u64,
    pub objectives: ObjectiveSpec,
    /// Method-specific constants, e.g. evolution population size.
    pub settings: BTreeMap<String, serde_json::Value>,
    pub per_iteration: Vec<IterationSummary>,
    pub final_front: Vec<FrontMember>,
    pub evaluations_used: usize,
    pub failed_evaluations: usize,
    /// Oracle calls up to and including the one that reached the threshold.
    pub evaluations_to_optimum: Option<usize>,
    pub optimal_front_recovered: Option<f64>,
    pub stop_reason: StopReason,
}

impl SearchReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// `iteration,evaluations,best_accuracy`, tracking the first objective.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,evaluations,best_accuracy\n");
        for s in &self.per_iteration {
            let _ = writeln!(out, "{},{},{}", s.iteration, s.evaluations_used, s.best_per_objective[0]);
        }
        out
    }

    /// Writes `report.json` and `trace.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        std::fs::write(dir.join("trace.csv"), self.trace_csv())?;
        Ok(())
    }
}
