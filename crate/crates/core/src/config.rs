//! JSON problem files.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::hjb::SolverParams;
use crate::model::{ConstraintSpec, MarketParams, UtilityModel};
use crate::montecarlo::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub market: MarketParams,
    pub utility: UtilityModel,
    pub constraint: ConstraintSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
}

impl ProblemConfig {
    /// Parses a config; syntax and schema errors carry the line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidParameter(format!("cannot serialize config: {e}")))
    }

    /// SHA-256 (hex) of the compact canonical serialization, so formatting
    /// of the source file does not matter.
    pub fn sha256(&self) -> Result<String> {
        let canon = serde_json::to_vec(self)
            .map_err(|e| Error::InvalidParameter(format!("cannot serialize config: {e}")))?;
        Ok(Sha256::digest(&canon)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect())
    }

    /// Cap level for constant constraints.
    pub fn cap_level(&self) -> Option<f64> {
        self.constraint.constant_level()
    }
}
