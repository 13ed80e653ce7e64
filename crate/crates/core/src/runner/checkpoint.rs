use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::estimators::{EstimatorConfig, EstimatorState, Method};
use crate::game::CacheEntry;

pub const CHECKPOINT_FORMAT: &str = "nshap-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything a sampling run needs to continue exactly where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub game: String,
    pub method: Method,
    pub config: EstimatorConfig,
    pub state: EstimatorState,
    pub eval_count: u64,
    /// Cache contents, least recently used first.
    pub cache: Vec<CacheEntry>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let corrupt = |reason: String| ShapleyError::CorruptCheckpoint {
            path: origin.to_string(),
            reason,
        };
        let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        if probe.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_FORMAT) {
            return Err(corrupt(format!("missing `format: {CHECKPOINT_FORMAT}`")));
        }
        let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != CHECKPOINT_VERSION {
            return Err(ShapleyError::VersionMismatch {
                format: CHECKPOINT_FORMAT.into(),
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let cp: Checkpoint = serde_json::from_value(probe).map_err(|e| corrupt(e.to_string()))?;
        let n = cp.state.players.len();
        if cp.state.active.len() != n {
            return Err(corrupt("active set and player table differ in length".into()));
        }
        Ok(cp)
    }

    /// Writes through a temporary file so a crash never leaves half a checkpoint.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_json()).map_err(|e| ShapleyError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| ShapleyError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ShapleyError::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}
