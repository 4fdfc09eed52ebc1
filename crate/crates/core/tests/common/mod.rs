//! Published result tables and record builders shared by several test
//! targets. Not every target uses every item.
#![allow(dead_code)]

use std::path::PathBuf;

use slidens_core::losses::{LossConfig, LossName};
use slidens_core::scene::BandSetting;
use slidens_core::trainer::{ModelRecord, SessionStatus, TrainConfig};
use slidens_core::zoo::ArchName;

/// One row of the ten-best table: setting, validation F1, loss, learning
/// rate, architecture, then test precision, recall and F1.
pub struct RankRow {
    pub setting: &'static str,
    pub val_f1: f64,
    pub loss: &'static str,
    pub lr: f64,
    pub arch: &'static str,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

const fn row(
    setting: &'static str,
    val_f1: f64,
    loss: &'static str,
    lr: f64,
    arch: &'static str,
    precision: f64,
    recall: f64,
    f1: f64,
) -> RankRow {
    RankRow { setting, val_f1, loss, lr, arch, precision, recall, f1 }
}

/// The ten best models per setting, in published order.
pub const TEN_BEST: [RankRow; 40] = [
    row("S1", 0.488, "BCELoss", 0.001, "PAN", 0.865, 0.172, 0.287),
    row("S1", 0.479, "JaccardLoss", 0.001, "FPN", 0.148, 0.399, 0.216),
    row("S1", 0.474, "BCELoss", 0.01, "Unet++", 0.685, 0.175, 0.278),
    row("S1", 0.455, "DiceLoss", 0.001, "Unet", 0.703, 0.496, 0.582),
    row("S1", 0.453, "DiceLoss", 0.001, "DeepLabV3", 0.734, 0.273, 0.398),
    row("S1", 0.449, "DiceLoss", 0.01, "Linknet", 0.664, 0.316, 0.428),
    row("S1", 0.443, "BCELoss", 0.01, "MAnet", 0.718, 0.383, 0.500),
    row("S1", 0.438, "FocalLoss", 0.01, "Linknet", 0.690, 0.324, 0.441),
    row("S1", 0.436, "JaccardLoss", 0.001, "PAN", 0.635, 0.241, 0.350),
    row("S1", 0.428, "JaccardLoss", 0.001, "Unet", 0.759, 0.351, 0.480),
    row("S2", 0.694, "FocalLoss", 0.01, "Linknet", 0.516, 0.534, 0.525),
    row("S2", 0.691, "BCELoss", 0.01, "Unet++", 0.322, 0.673, 0.435),
    row("S2", 0.687, "JaccardLoss", 0.001, "PAN", 0.553, 0.510, 0.531),
    row("S2", 0.682, "BCELoss", 0.01, "Linknet", 0.355, 0.514, 0.420),
    row("S2", 0.668, "DiceLoss", 0.01, "Unet++", 0.297, 0.747, 0.425),
    row("S2", 0.645, "JaccardLoss", 0.01, "DeepLabV3", 0.516, 0.490, 0.503),
    row("S2", 0.643, "LovaszLoss", 0.001, "DeepLabV3+", 0.495, 0.646, 0.560),
    row("S2", 0.641, "JaccardLoss", 0.001, "Unet", 0.342, 0.679, 0.455),
    row("S2", 0.640, "FocalLoss", 0.01, "MAnet", 0.375, 0.730, 0.496),
    row("S2", 0.637, "BCELoss", 0.01, "Unet", 0.352, 0.690, 0.467),
    row("S1+S2", 0.751, "FocalLoss", 0.01, "Unet++", 0.708, 0.589, 0.643),
    row("S1+S2", 0.750, "FocalLoss", 0.001, "Unet++", 0.647, 0.598, 0.621),
    row("S1+S2", 0.748, "JaccardLoss", 0.01, "Unet++", 0.791, 0.620, 0.695),
    row("S1+S2", 0.747, "DiceLoss", 0.001, "Linknet", 0.806, 0.589, 0.681),
    row("S1+S2", 0.746, "JaccardLoss", 0.001, "FPN", 0.709, 0.492, 0.581),
    row("S1+S2", 0.746, "DiceLoss", 0.001, "Unet++", 0.636, 0.616, 0.626),
    row("S1+S2", 0.745, "JaccardLoss", 0.001, "Unet++", 0.678, 0.624, 0.650),
    row("S1+S2", 0.744, "BCELoss", 0.01, "Unet++", 0.716, 0.546, 0.619),
    row("S1+S2", 0.742, "DiceLoss", 0.01, "Unet++", 0.648, 0.661, 0.655),
    row("S1+S2", 0.741, "BCELoss", 0.01, "Unet", 0.584, 0.612, 0.597),
    row("all", 0.727, "DiceLoss", 0.001, "Unet", 0.710, 0.599, 0.650),
    row("all", 0.725, "DiceLoss", 0.001, "Unet++", 0.742, 0.639, 0.687),
    row("all", 0.720, "JaccardLoss", 0.001, "PAN", 0.657, 0.575, 0.613),
    row("all", 0.719, "JaccardLoss", 0.01, "FPN", 0.684, 0.620, 0.650),
    row("all", 0.719, "JaccardLoss", 0.001, "Unet", 0.847, 0.550, 0.667),
    row("all", 0.715, "JaccardLoss", 0.001, "Linknet", 0.812, 0.556, 0.660),
    row("all", 0.713, "DiceLoss", 0.001, "FPN", 0.629, 0.556, 0.591),
    row("all", 0.712, "DiceLoss", 0.01, "Unet", 0.788, 0.568, 0.660),
    row("all", 0.708, "FocalLoss", 0.001, "Unet", 0.731, 0.582, 0.648),
    row("all", 0.706, "JaccardLoss", 0.01, "Unet++", 0.770, 0.565, 0.652),
];

/// Per setting: single-model F1 and ensemble F1 with the printed percentage
/// for sizes 10, 20 and 40.
pub const ENSEMBLE_GAINS: [(&str, f64, [(f64, f64); 3]); 4] = [
    ("S1", 0.29, [(0.44, 34.0), (0.40, 29.0), (0.43, 34.0)]),
    ("S2", 0.52, [(0.57, 8.0), (0.61, 15.0), (0.60, 13.0)]),
    ("S1+S2", 0.64, [(0.68, 5.0), (0.69, 7.0), (0.69, 6.0)]),
    ("all", 0.65, [(0.66, 2.0), (0.66, 2.0), (0.68, 4.0)]),
];

/// The headline gain quoted for S2 with twenty members.
pub const HEADLINE_GAIN: f64 = 14.59;

pub fn setting_of(label: &str) -> BandSetting {
    label.parse().unwrap()
}

/// A completed record with the given score and no training history.
pub fn record(setting: BandSetting, arch: ArchName, loss: LossName, lr: f64, val_f1: f64) -> ModelRecord {
    let config = TrainConfig::new(arch, LossConfig::new(loss), lr, setting, 0);
    ModelRecord {
        weights_path: Some(PathBuf::from(setting.name()).join(config.config_id()).join("weights.bin")),
        config,
        status: SessionStatus::Completed,
        best_val_f1: val_f1,
        best_epoch: 1,
        epochs_run: 1,
        history: Vec::new(),
        param_count: 0,
        dataset_fingerprint: String::new(),
        flags: Vec::new(),
        failure: None,
    }
}

pub fn record_of(row: &RankRow) -> ModelRecord {
    record(setting_of(row.setting), row.arch.parse().unwrap(), row.loss.parse().unwrap(), row.lr, row.val_f1)
}
