//! A small dense classifier whose hidden units are the players of a game.

pub mod attack;
pub mod data;
pub mod fixture;
pub mod game;
pub mod masks;
pub mod metrics;
pub mod network;
pub mod repair;
pub mod train;

pub use attack::{pgd_attack, target_for, AttackConfig, AttackOutcome};
pub use data::{generate_dataset, DatasetParams, GroupedDataset, Split};
pub use fixture::{Bundle, FixtureKind, FixtureParams, FixtureStats, Manifest};
pub use game::{Metric, NeuronGame};
pub use masks::{compute_masks, MaskFill, MeanMask};
pub use metrics::{
    group_accuracies, masked_attack, masked_forward, metric_accuracy, metric_adversarial,
    metric_class_recall, metric_group_fairness, predictions,
};
pub use network::{Dense, Masking, NeuronNetwork, Provenance};
pub use repair::{repair, select_players, RepairMode, RepairOutcome, RepairReport, Selection, Snapshot};
pub use train::{init_network, train, TrainConfig};
