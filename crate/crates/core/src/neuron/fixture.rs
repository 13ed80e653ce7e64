//! The neuron-game fixture: dataset, trained network and mean masks, kept
//! together in one directory.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapleyError};
use crate::game::GameSpec;
use crate::neuron::attack::AttackConfig;
use crate::neuron::data::{generate_dataset, DatasetParams, GroupedDataset, Split};
use crate::neuron::game::{Metric, NeuronGame};
use crate::neuron::masks::{compute_masks, MaskFill, MeanMask};
use crate::neuron::metrics::{group_accuracies, masked_attack, metric_accuracy};
use crate::neuron::network::NeuronNetwork;
use crate::neuron::train::{train, TrainConfig};

pub const BUNDLE_FORMAT: &str = "nshap-bundle";
pub const BUNDLE_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FILE: &str = "dataset.csv";
pub const NETWORK_FILE: &str = "network.json";
pub const MASKS_FILE: &str = "masks.json";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureKind {
    /// Skewed groups with a group-dependent nuisance cue.
    #[default]
    Default,
    /// Same recipe with `skew = 0`: groups are exchangeable.
    Unskewed,
}

impl FixtureKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(FixtureKind::Default),
            "unskewed" => Ok(FixtureKind::Unskewed),
            other => Err(ShapleyError::invalid(
                "fixture",
                format!("unknown fixture kind `{other}` (expected default or unskewed)"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureParams {
    pub kind: FixtureKind,
    pub data: DatasetParams,
    pub train: TrainConfig,
}

impl FixtureParams {
    pub fn new(kind: FixtureKind, seed: u64) -> Self {
        let skew = match kind {
            FixtureKind::Default => DatasetParams::default().skew,
            FixtureKind::Unskewed => 0.0,
        };
        FixtureParams {
            kind,
            data: DatasetParams {
                seed,
                skew,
                ..Default::default()
            },
            train: TrainConfig {
                seed,
                ..Default::default()
            },
        }
    }
}

/// Numbers measured once when the fixture is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureStats {
    pub holdout_accuracy: f64,
    pub group_accuracies: Vec<f64>,
    pub all_masked_accuracy: f64,
    /// Targeted attack success against the unmasked network (default attack).
    pub attack_success: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub params: FixtureParams,
    pub stats: FixtureStats,
}

#[derive(Clone, Debug)]
pub struct Bundle {
    pub manifest: Manifest,
    pub data: Arc<GroupedDataset>,
    pub net: Arc<NeuronNetwork>,
    pub masks: MeanMask,
}

impl Bundle {
    pub fn generate(kind: FixtureKind, seed: u64) -> Result<Self> {
        Self::from_params(FixtureParams::new(kind, seed))
    }

    pub fn from_params(params: FixtureParams) -> Result<Self> {
        let data = generate_dataset(&params.data)?;
        let net = train(&data, &params.train, params.data.seed)?;
        let masks = compute_masks(&net, &data, &data.rows(Split::Fit), Split::Fit.as_str())?;
        let stats = measure(&net, &masks, &data, params.data.seed)?;
        Ok(Bundle {
            manifest: Manifest {
                format: BUNDLE_FORMAT.into(),
                version: BUNDLE_VERSION,
                params,
                stats,
            },
            data: Arc::new(data),
            net: Arc::new(net),
            masks,
        })
    }

    /// Same data and masks, different network (a repaired model).
    pub fn with_network(&self, net: NeuronNetwork) -> Bundle {
        Bundle {
            manifest: self.manifest.clone(),
            data: self.data.clone(),
            net: Arc::new(net),
            masks: self.masks.clone(),
        }
    }

    pub fn eval_rows(&self) -> Vec<usize> {
        self.data.rows(Split::EvalHoldout)
    }

    pub fn n_players(&self) -> usize {
        self.net.n_players()
    }

    pub fn neuron_game(&self, metric: Metric, batch_size: Option<usize>, fill: MaskFill) -> Result<NeuronGame> {
        NeuronGame::new(self.net.clone(), self.data.clone(), &self.masks, self.eval_rows(), metric)?
            .with_fill(fill)
            .with_batch_size(batch_size)
    }

    pub fn game(&self, metric: Metric) -> Result<GameSpec> {
        self.neuron_game(metric, None, MaskFill::Mean)?.into_spec()
    }

    /// Writes the four bundle files. A non-empty `dir` is refused unless `force`.
    pub fn save(&self, dir: impl AsRef<Path>, force: bool) -> Result<()> {
        let dir = dir.as_ref();
        if dir.exists() {
            let occupied = fs::read_dir(dir)
                .map_err(|e| ShapleyError::io(dir, e))?
                .next()
                .is_some();
            if occupied && !force {
                return Err(ShapleyError::invalid(
                    "output",
                    format!("{} is not empty; pass --force to overwrite", dir.display()),
                ));
            }
        }
        fs::create_dir_all(dir).map_err(|e| ShapleyError::io(dir, e))?;
        let mut manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        manifest.push('\n');
        let mpath = dir.join(MANIFEST_FILE);
        fs::write(&mpath, manifest).map_err(|e| ShapleyError::io(&mpath, e))?;
        self.data.save_csv(dir.join(DATASET_FILE))?;
        self.net.save(dir.join(NETWORK_FILE))?;
        self.masks.save(dir.join(MASKS_FILE))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(|e| ShapleyError::io(&mpath, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| ShapleyError::json(&mpath, e))?;
        if manifest.format != BUNDLE_FORMAT {
            return Err(ShapleyError::invalid("format", format!("{}: not a bundle manifest", mpath.display())));
        }
        if manifest.version != BUNDLE_VERSION {
            return Err(ShapleyError::VersionMismatch {
                format: BUNDLE_FORMAT.into(),
                expected: BUNDLE_VERSION,
                found: manifest.version,
            });
        }
        let p = &manifest.params.data;
        let data = GroupedDataset::load_csv(dir.join(DATASET_FILE), p.n_classes, p.n_groups)?;
        let net = NeuronNetwork::load(dir.join(NETWORK_FILE))?;
        let masks = MeanMask::load(dir.join(MASKS_FILE))?;
        masks.check(&net)?;
        Ok(Bundle {
            manifest,
            data: Arc::new(data),
            net: Arc::new(net),
            masks,
        })
    }
}

fn measure(net: &NeuronNetwork, masks: &MeanMask, data: &GroupedDataset, seed: u64) -> Result<FixtureStats> {
    let rows = data.rows(Split::EvalHoldout);
    let n = net.n_players();
    let none = vec![false; n];
    let attack = masked_attack(net, masks, &none, data, &rows, &AttackConfig::default(), seed)?;
    Ok(FixtureStats {
        holdout_accuracy: metric_accuracy(net, masks, &none, data, &rows)?,
        group_accuracies: group_accuracies(net, masks, &none, data, &rows)?,
        all_masked_accuracy: metric_accuracy(net, masks, &vec![true; n], data, &rows)?,
        attack_success: attack.success_rate(),
    })
}
