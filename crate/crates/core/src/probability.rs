use serde::{Deserialize, Serialize};

use crate::scene::BandSetting;
use crate::zoo::ArchName;

/// Where a probability map came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// A single model, identified by architecture and initialisation seed.
    Model { arch: ArchName, in_channels: usize, seed: u64 },
    /// The mean of several members' maps.
    Ensemble { setting: BandSetting, k: usize, members: Vec<MemberRef> },
}

/// One ensemble member as recorded in provenance sidecars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberRef {
    pub config_id: String,
    pub best_val_f1: f64,
}

/// Per-pixel flood probabilities for one scene, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    pub scene_id: String,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl ProbabilityMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}
