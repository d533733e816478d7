//! Optional TOML configuration. Every section mirrors a core config type and
//! rejects unknown keys; command-line flags override file values.

use std::path::Path;

use bogcn::bench::{PredictorEvalConfig, SyntheticBenchSpec};
use bogcn::search::{EvolutionConfig, SearchConfig};
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub bench: SyntheticBenchSpec,
    pub predictor: PredictorEvalConfig,
    pub search: SearchConfig,
    pub evolution: EvolutionConfig,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }
}
