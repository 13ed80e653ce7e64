use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::exact::KahanSum;
use crate::neuron::data::GroupedDataset;
use crate::neuron::network::{NeuronNetwork, Trace};

pub const MASK_FORMAT: &str = "nshap-masks";
pub const MASK_VERSION: u32 = 1;

/// What an absent player emits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskFill {
    #[default]
    Mean,
    Zero,
}

/// Mean post-activation of every player over a reference set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanMask {
    pub format: String,
    pub version: u32,
    pub reference: String,
    pub means: Vec<f64>,
}

impl MeanMask {
    /// A mask that fills absent players with literal zeros.
    pub fn zeros(n: usize) -> Self {
        MeanMask {
            format: MASK_FORMAT.into(),
            version: MASK_VERSION,
            reference: "zero".into(),
            means: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn check(&self, net: &NeuronNetwork) -> Result<()> {
        if self.means.len() != net.n_players() {
            return Err(ShapleyError::SizeMismatch {
                expected: net.n_players(),
                found: self.means.len(),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = serde_json::to_string_pretty(self).expect("mask serializes");
        s.push('\n');
        fs::write(path, s).map_err(|e| ShapleyError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ShapleyError::io(path, e))?;
        let m: MeanMask = serde_json::from_str(&text).map_err(|e| ShapleyError::json(path, e))?;
        if m.format != MASK_FORMAT {
            return Err(ShapleyError::invalid("format", format!("{}: not a mask document", path.display())));
        }
        if m.version != MASK_VERSION {
            return Err(ShapleyError::VersionMismatch {
                format: MASK_FORMAT.into(),
                expected: MASK_VERSION,
                found: m.version,
            });
        }
        Ok(m)
    }
}

pub fn compute_masks(net: &NeuronNetwork, data: &GroupedDataset, rows: &[usize], reference: &str) -> Result<MeanMask> {
    if rows.is_empty() {
        return Err(ShapleyError::EmptySet("mask reference set".into()));
    }
    let n = net.n_players();
    let mut sums = vec![KahanSum::default(); n];
    let mut trace = Trace::default();
    for &r in rows {
        net.forward_into(data.row(r), None, &mut trace);
        let mut p = 0;
        for act in &trace.acts[1..] {
            for &a in act {
                sums[p].add(a);
                p += 1;
            }
        }
    }
    Ok(MeanMask {
        format: MASK_FORMAT.into(),
        version: MASK_VERSION,
        reference: reference.into(),
        means: sums.iter().map(|s| s.value() / rows.len() as f64).collect(),
    })
}
