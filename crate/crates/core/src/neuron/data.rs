//! Synthetic grouped classification data.
//!
//! Each example has a class signal in the first block of features and a
//! nuisance block. For group 0 the nuisance block points at the true class;
//! for group `g > 0` it points at class `(c + g) mod C`. The strength of the
//! nuisance cue and the over-representation of group 0 both scale with
//! `skew`, so a network trained on the data leans on the cue and ends up
//! less accurate on the minority groups. At `skew = 0` the nuisance block is
//! pure noise and the groups are exchangeable.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Fit,
    EvalHoldout,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Fit => "fit",
            Split::EvalHoldout => "eval_holdout",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetParams {
    pub seed: u64,
    pub n_examples: usize,
    pub n_classes: usize,
    pub n_groups: usize,
    pub skew: f64,
    /// Distance of each class center from the origin along its own axis.
    pub signal_scale: f64,
    /// Strength of the nuisance cue at `skew = 1`.
    pub nuisance_scale: f64,
    pub noise: f64,
    /// How far `skew` pushes group 0 toward the whole population.
    pub imbalance: f64,
    pub holdout_fraction: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams {
            seed: 0,
            n_examples: 2400,
            n_classes: 4,
            n_groups: 2,
            skew: 0.8,
            signal_scale: 2.2,
            nuisance_scale: 4.5,
            noise: 1.0,
            imbalance: 0.95,
            holdout_fraction: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupedDataset {
    pub dim: usize,
    pub n_classes: usize,
    pub n_groups: usize,
    /// Row-major `len × dim`.
    pub features: Vec<f64>,
    pub classes: Vec<usize>,
    pub groups: Vec<usize>,
    pub splits: Vec<Split>,
}

impl GroupedDataset {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Share of the most frequent class among `rows` (lowest class on ties).
    pub fn majority(&self, rows: &[usize]) -> (usize, f64) {
        let mut counts = vec![0usize; self.n_classes];
        for &r in rows {
            counts[self.classes[r]] += 1;
        }
        let mut best = 0;
        for c in 1..self.n_classes {
            if counts[c] > counts[best] {
                best = c;
            }
        }
        (best, counts[best] as f64 / rows.len().max(1) as f64)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for d in 0..self.dim {
            out.push_str(&format!("feature_{d},"));
        }
        out.push_str("class,group,split\n");
        for i in 0..self.len() {
            for x in self.row(i) {
                out.push_str(&format!("{x},"));
            }
            out.push_str(&format!(
                "{},{},{}\n",
                self.classes[i],
                self.groups[i],
                self.splits[i].as_str()
            ));
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = File::create(path).map_err(|e| ShapleyError::io(path, e))?;
        f.write_all(self.to_csv_string().as_bytes())
            .map_err(|e| ShapleyError::io(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>, n_classes: usize, n_groups: usize) -> Result<Self> {
        let path = path.as_ref();
        let origin = path.display().to_string();
        let csv_err = |e| ShapleyError::Csv {
            path: origin.clone(),
            source: e,
        };
        let bad = |what: String| ShapleyError::invalid("dataset", format!("{origin}: {what}"));
        let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
        let header = rdr.headers().map_err(csv_err)?.clone();
        let dim = header.len().saturating_sub(3);
        for d in 0..dim {
            if header.get(d) != Some(&format!("feature_{d}")) {
                return Err(bad(format!("column {d} should be feature_{d}")));
            }
        }
        if header.iter().skip(dim).collect::<Vec<_>>() != ["class", "group", "split"] {
            return Err(bad("trailing columns must be class,group,split".into()));
        }
        let mut ds = GroupedDataset {
            dim,
            n_classes,
            n_groups,
            features: Vec::new(),
            classes: Vec::new(),
            groups: Vec::new(),
            splits: Vec::new(),
        };
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            for d in 0..dim {
                let v: f64 = rec[d]
                    .parse()
                    .map_err(|_| bad(format!("row {line}: bad feature `{}`", &rec[d])))?;
                ds.features.push(v);
            }
            let class: usize = rec[dim].parse().map_err(|_| bad(format!("row {line}: bad class")))?;
            let group: usize = rec[dim + 1].parse().map_err(|_| bad(format!("row {line}: bad group")))?;
            if class >= n_classes || group >= n_groups {
                return Err(bad(format!("row {line}: class or group out of range")));
            }
            let split = match &rec[dim + 2] {
                "fit" => Split::Fit,
                "eval_holdout" => Split::EvalHoldout,
                other => return Err(bad(format!("row {line}: unknown split `{other}`"))),
            };
            ds.classes.push(class);
            ds.groups.push(group);
            ds.splits.push(split);
        }
        Ok(ds)
    }
}

fn group_weights(n_groups: usize, skew: f64, imbalance: f64) -> Vec<f64> {
    let g = n_groups as f64;
    let p0 = 1.0 / g + skew * (1.0 - 1.0 / g) * imbalance;
    let rest = if n_groups > 1 { (1.0 - p0) / (g - 1.0) } else { 0.0 };
    (0..n_groups).map(|i| if i == 0 { p0 } else { rest }).collect()
}

pub fn generate_dataset(p: &DatasetParams) -> Result<GroupedDataset> {
    if p.n_classes < 2 {
        return Err(ShapleyError::invalid("data.n_classes", "need at least 2 classes"));
    }
    if p.n_groups == 0 {
        return Err(ShapleyError::invalid("data.n_groups", "need at least 1 group"));
    }
    if p.n_examples < p.n_classes * p.n_groups {
        return Err(ShapleyError::invalid(
            "data.n_examples",
            "must be at least n_classes × n_groups",
        ));
    }
    if !(0.0..=1.0).contains(&p.skew) {
        return Err(ShapleyError::invalid("data.skew", "must lie in [0, 1]"));
    }
    if !(0.0..1.0).contains(&p.imbalance) {
        return Err(ShapleyError::invalid("data.imbalance", "must lie in [0, 1)"));
    }
    if !(0.0 < p.holdout_fraction && p.holdout_fraction < 1.0) {
        return Err(ShapleyError::invalid("data.holdout_fraction", "must lie in (0, 1)"));
    }
    let c = p.n_classes;
    let dim = 2 * c;
    let weights = group_weights(p.n_groups, p.skew, p.imbalance);
    let mut rng = stream_rng(p.seed, Stream::Data, 0);
    let n_fit = ((1.0 - p.holdout_fraction) * p.n_examples as f64).round() as usize;
    let mut ds = GroupedDataset {
        dim,
        n_classes: c,
        n_groups: p.n_groups,
        features: Vec::with_capacity(p.n_examples * dim),
        classes: Vec::with_capacity(p.n_examples),
        groups: Vec::with_capacity(p.n_examples),
        splits: Vec::with_capacity(p.n_examples),
    };
    let cells = c * p.n_groups;
    for i in 0..p.n_examples {
        let split = if i < n_fit { Split::Fit } else { Split::EvalHoldout };
        // Each split opens with one example per (class, group) cell.
        let k = if i < n_fit { i } else { i - n_fit };
        let (class, group) = if k < cells {
            (k % c, k / c)
        } else {
            let class = rng.random_range(0..c);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut group = p.n_groups - 1;
            for (g, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    group = g;
                    break;
                }
            }
            (class, group)
        };
        let cue = (class + group) % c;
        for d in 0..c {
            let centre = if d == class { p.signal_scale } else { 0.0 };
            let z: f64 = StandardNormal.sample(&mut rng);
            ds.features.push(centre + p.noise * z);
        }
        for d in 0..c {
            let centre = if d == cue { p.skew * p.nuisance_scale } else { 0.0 };
            let z: f64 = StandardNormal.sample(&mut rng);
            ds.features.push(centre + p.noise * z);
        }
        ds.classes.push(class);
        ds.groups.push(group);
        ds.splits.push(split);
    }
    Ok(ds)
}
