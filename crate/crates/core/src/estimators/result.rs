use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::estimators::config::EstimatorConfig;
use crate::game::GameSpec;

pub const RESULT_FORMAT: &str = "nshap-result";
pub const RESULT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    IterationCapped,
    /// Stopped on request after a checkpoint; resumable.
    Interrupted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerRecord {
    pub index: usize,
    pub label: String,
    pub value: f64,
    pub variance: f64,
    /// `None` while the bound is unbounded (fewer than two samples).
    pub lb: Option<f64>,
    pub ub: Option<f64>,
    pub samples: u64,
    /// Fresh oracle calls charged to this player's marginals.
    pub evals: u64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub root: u64,
    /// Next unconsumed walk index of the permutation and batch streams.
    pub next_walk: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub estimator: String,
    pub game: String,
    pub config: Option<EstimatorConfig>,
    pub seeds: Option<SeedInfo>,
    pub eval_count: u64,
    /// Fresh oracle calls spent on the grand coalition.
    pub grand_evals: u64,
    pub iterations: u64,
    pub truncation_hits: u64,
    pub wall_ms: u64,
    pub status: RunStatus,
    pub top_k: Vec<usize>,
    pub mean_full_value: Option<f64>,
    pub mean_empty_value: Option<f64>,
    pub range: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyResult {
    pub format: String,
    pub version: u32,
    pub players: Vec<PlayerRecord>,
    pub run: RunInfo,
}

/// 1-based ranks by descending value, ties by ascending index.
pub fn ranks(values: &[f64]) -> Vec<usize> {
    let order = order_desc(values);
    let mut r = vec![0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        r[i] = pos + 1;
    }
    r
}

/// Player indices sorted by descending value, ties by ascending index.
pub fn order_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

impl ShapleyResult {
    pub fn new(players: Vec<PlayerRecord>, run: RunInfo) -> Self {
        ShapleyResult {
            format: RESULT_FORMAT.to_string(),
            version: RESULT_VERSION,
            players,
            run,
        }
    }

    /// Wraps point scores that carry no sampling statistics, such as exact
    /// values or baseline importances. Eval counts are read from `game`.
    pub fn from_scores(game: &GameSpec, values: Vec<f64>, estimator: impl Into<String>) -> Self {
        let rank = ranks(&values);
        let players = values
            .iter()
            .enumerate()
            .map(|(i, &v)| PlayerRecord {
                index: i,
                label: game.players().label(i),
                value: v,
                variance: 0.0,
                lb: Some(v),
                ub: Some(v),
                samples: 0,
                evals: 0,
                rank: rank[i],
            })
            .collect();
        let top_k = rank.iter().position(|&r| r == 1).into_iter().collect();
        ShapleyResult::new(
            players,
            RunInfo {
                estimator: estimator.into(),
                game: game.oracle().describe(),
                config: None,
                seeds: None,
                eval_count: game.eval_count(),
                grand_evals: 0,
                iterations: 0,
                truncation_hits: 0,
                wall_ms: 0,
                status: RunStatus::Converged,
                top_k,
                mean_full_value: None,
                mean_empty_value: None,
                range: None,
            },
        )
    }

    pub fn values(&self) -> Vec<f64> {
        self.players.iter().map(|p| p.value).collect()
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    /// Player indices from rank 1 downward.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.players.len()).collect();
        idx.sort_by_key(|&i| self.players[i].rank);
        idx
    }

    pub fn top(&self, k: usize) -> Vec<usize> {
        self.ranking().into_iter().take(k).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let probe: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ShapleyError::json(origin, e))?;
        let format = probe.get("format").and_then(|v| v.as_str()).unwrap_or("");
        if format != RESULT_FORMAT {
            return Err(ShapleyError::invalid(
                "format",
                format!("{origin}: expected `{RESULT_FORMAT}`, found `{format}`"),
            ));
        }
        let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != RESULT_VERSION {
            return Err(ShapleyError::VersionMismatch {
                format: RESULT_FORMAT.to_string(),
                expected: RESULT_VERSION,
                found: version,
            });
        }
        serde_json::from_value(probe).map_err(|e| ShapleyError::json(origin, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ShapleyError::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| ShapleyError::io(path, e))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |e| ShapleyError::Csv {
            path: path.display().to_string(),
            source: e,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["index", "label", "value", "variance", "lb", "ub", "samples", "evals", "rank"])
            .map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for p in &self.players {
            w.write_record([
                p.index.to_string(),
                p.label.clone(),
                p.value.to_string(),
                p.variance.to_string(),
                opt(p.lb),
                opt(p.ub),
                p.samples.to_string(),
                p.evals.to_string(),
                p.rank.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| ShapleyError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_break_by_index() {
        assert_eq!(ranks(&[0.5, 0.7, 0.5, 0.1]), vec![2, 1, 3, 4]);
        assert_eq!(order_desc(&[1.0, 1.0, 1.0]), vec![0, 1, 2]);
    }

    #[test]
    fn version_mismatch_names_versions() {
        let text = r#"{"format":"nshap-result","version":7}"#;
        let err = ShapleyResult::from_json(text, "x.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 1") && msg.contains("found 7"), "{msg}");
    }
}
