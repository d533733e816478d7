//! Objective declarations and evaluated records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::is_accuracy_metric;
use crate::error::{Error, Result};
use crate::graph::ArchGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// Maps a raw value so that larger is always better.
    pub fn orient(self, v: f64) -> f64 {
        match self {
            Direction::Maximize => v,
            Direction::Minimize => -v,
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" | "maximize" => Ok(Direction::Maximize),
            "min" | "minimize" => Ok(Direction::Minimize),
            _ => Err(Error::InvalidArgument(format!("unknown direction {s:?} (expected max or min)"))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Maximize => "max",
            Direction::Minimize => "min",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objective {
    pub name: String,
    pub direction: Direction,
    /// `false` for values computable from the graph alone (no surrogate).
    pub costly: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Objective>", into = "Vec<Objective>")]
pub struct ObjectiveSpec {
    objectives: Vec<Objective>,
}

impl TryFrom<Vec<Objective>> for ObjectiveSpec {
    type Error = Error;

    fn try_from(v: Vec<Objective>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ObjectiveSpec> for Vec<Objective> {
    fn from(s: ObjectiveSpec) -> Self {
        s.objectives
    }
}

impl ObjectiveSpec {
    pub fn new(objectives: Vec<Objective>) -> Result<Self> {
        if objectives.is_empty() {
            return Err(Error::InvalidArgument("at least one objective is required".into()));
        }
        for (i, o) in objectives.iter().enumerate() {
            if o.name.is_empty() {
                return Err(Error::InvalidArgument("empty objective name".into()));
            }
            if objectives[..i].iter().any(|p| p.name == o.name) {
                return Err(Error::InvalidArgument(format!("objective {:?} listed twice", o.name)));
            }
        }
        Ok(Self { objectives })
    }

    /// One maximized, costly objective.
    pub fn single(name: &str) -> Self {
        Self { objectives: vec![Objective { name: name.to_string(), direction: Direction::Maximize, costly: true }] }
    }

    /// Parses `name:dir[:exact],...`, e.g. `accuracy:max,params:min:exact`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut objectives = Vec::new();
        for item in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let parts: Vec<&str> = item.split(':').collect();
            let (name, direction, costly) = match parts.as_slice() {
                [name, dir] => (name, dir.parse()?, true),
                [name, dir, "exact"] => (name, dir.parse()?, false),
                _ => return Err(Error::InvalidArgument(format!("cannot parse objective {item:?}"))),
            };
            objectives.push(Objective { name: name.to_string(), direction, costly });
        }
        Self::new(objectives)
    }

    pub fn len(&self) -> usize {
        self.objectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objectives.is_empty()
    }

    pub fn objectives(&self) -> &[Objective] {
        &self.objectives
    }

    pub fn names(&self) -> Vec<&str> {
        self.objectives.iter().map(|o| o.name.as_str()).collect()
    }

    pub fn directions(&self) -> Vec<Direction> {
        self.objectives.iter().map(|o| o.direction).collect()
    }

    pub fn costly_flags(&self) -> Vec<bool> {
        self.objectives.iter().map(|o| o.costly).collect()
    }

    pub fn costly_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.objectives[i].costly).collect()
    }

    /// Values with every coordinate turned into larger-is-better.
    pub fn orient(&self, v: &ObjectiveVector) -> Vec<f64> {
        v.0.iter().zip(&self.objectives).map(|(&x, o)| o.direction.orient(x)).collect()
    }
}

impl fmt::Display for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, o) in self.objectives.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", o.name, o.direction)?;
            if !o.costly {
                f.write_str(":exact")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveVector(pub Vec<f64>);

impl ObjectiveVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite objective value in {values:?}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A fully evaluated architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedRecord {
    pub graph: ArchGraph,
    pub objectives: ObjectiveVector,
}

impl TrainedRecord {
    pub fn new(graph: ArchGraph, objectives: ObjectiveVector, spec: &ObjectiveSpec) -> Result<Self> {
        if objectives.len() != spec.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} objective values for {} objectives",
                objectives.len(),
                spec.len()
            )));
        }
        for (o, &v) in spec.objectives().iter().zip(objectives.values()) {
            if is_accuracy_metric(&o.name) && !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation {
                    id: graph.id().to_string(),
                    message: format!("{} = {v} outside [0, 1]", o.name),
                });
            }
        }
        Ok(Self { graph, objectives })
    }
}

/// Maps one objective's raw values onto `(0, 1)` targets for the surrogate,
/// larger meaning better.
///
/// Accuracy-like objectives are used as-is (or `1 - t` when minimized).
/// Anything else is min-max scaled into `[0.05, 0.95]` over a reference set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetScaling {
    Identity { direction: Direction },
    MinMax { direction: Direction, low: f64, high: f64 },
}

impl TargetScaling {
    pub const LOWER: f64 = 0.05;
    pub const UPPER: f64 = 0.95;

    pub fn fit(objective: &Objective, values: &[f64]) -> Self {
        let direction = objective.direction;
        if is_accuracy_metric(&objective.name) {
            return TargetScaling::Identity { direction };
        }
        let oriented = values.iter().map(|&v| direction.orient(v));
        let low = oriented.clone().fold(f64::INFINITY, f64::min);
        let high = oriented.fold(f64::NEG_INFINITY, f64::max);
        TargetScaling::MinMax { direction, low, high }
    }

    pub fn apply(&self, v: f64) -> f64 {
        match *self {
            TargetScaling::Identity { direction: Direction::Maximize } => v,
            TargetScaling::Identity { direction: Direction::Minimize } => 1.0 - v,
            TargetScaling::MinMax { direction, low, high } => {
                let x = direction.orient(v);
                if high.is_nan() || low.is_nan() || high <= low {
                    return 0.5;
                }
                let u = ((x - low) / (high - low)).clamp(0.0, 1.0);
                Self::LOWER + (Self::UPPER - Self::LOWER) * u
            }
        }
    }
}
