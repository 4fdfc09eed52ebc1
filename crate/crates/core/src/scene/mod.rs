//! Multi-band scenes, band settings and their on-disk form.

mod bands;
mod dataset;
mod norm;
pub mod raw;
mod synth;

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub use bands::{select_bands, BandSetting, BandStack};
pub use dataset::{Dataset, DatasetManifest, DatasetSplit, synth_dataset};
pub use norm::{apply_norm, fit_norm_stats, NormStats, CATEGORICAL_BANDS, CATEGORICAL_SCALE};
pub use synth::{synth_case_study, SynthSpec};

pub const BAND_COUNT: usize = 15;

/// Band order of every scene.
pub const BAND_NAMES: [&str; BAND_COUNT] = [
    "preVV",
    "postVV",
    "dVV",
    "preVH",
    "postVH",
    "dVH",
    "Layover",
    "Shadow",
    "liaDeg",
    "Elevation",
    "Slope",
    "KG_climate",
    "Popatpv_tree_height",
    "CART_LC_classification",
    "dNDVI",
];

/// One case study: 15 co-registered float bands, a binary landslide label
/// and a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    id: String,
    width: usize,
    height: usize,
    bands: Vec<Vec<f32>>,
    label: Vec<u8>,
    valid: Vec<u8>,
    meta: BTreeMap<String, serde_json::Value>,
}

impl Scene {
    /// Validates every invariant: plane sizes, 15 bands, binary masks and
    /// finite values wherever the mask is set.
    pub fn new(
        id: impl Into<String>,
        width: usize,
        height: usize,
        bands: Vec<Vec<f32>>,
        label: Vec<u8>,
        valid: Vec<u8>,
        meta: BTreeMap<String, serde_json::Value>,
    ) -> Result<Self> {
        let id = id.into();
        let plane = width * height;
        if bands.len() != BAND_COUNT {
            return Err(Error::invalid(format!("scene {id}: band count {} ≠ {BAND_COUNT}", bands.len())));
        }
        if let Some(b) = bands.iter().position(|b| b.len() != plane) {
            return Err(Error::invalid(format!(
                "scene {id}: band {b} has {} pixels, expected {width}x{height}",
                bands[b].len()
            )));
        }
        if label.len() != plane {
            return Err(Error::invalid(format!("scene {id}: label shape does not match bands")));
        }
        if valid.len() != plane {
            return Err(Error::invalid(format!("scene {id}: valid_mask shape does not match bands")));
        }
        if label.iter().chain(&valid).any(|&v| v > 1) {
            return Err(Error::invalid(format!("scene {id}: label and valid_mask must be 0/1")));
        }
        for (b, band) in bands.iter().enumerate() {
            if band.iter().zip(&valid).any(|(v, &m)| m == 1 && !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "scene {id}: band {b} has non-finite values inside the valid mask"
                )));
            }
        }
        Ok(Self { id, width, height, bands, label, valid, meta })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn band(&self, i: usize) -> &[f32] {
        &self.bands[i]
    }

    pub fn bands(&self) -> &[Vec<f32>] {
        &self.bands
    }

    pub fn label(&self) -> &[u8] {
        &self.label
    }

    pub fn valid(&self) -> &[u8] {
        &self.valid
    }

    pub fn meta(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.meta
    }

    /// Count of pixels that are both labelled and valid.
    pub fn positive_count(&self) -> usize {
        self.label.iter().zip(&self.valid).filter(|(&l, &v)| l == 1 && v == 1).count()
    }
}

/// Reads a scene container; the valid mask is the stored mask AND-ed with
/// per-band finiteness and the header's nodata value.
pub fn load_scene(path: &Path) -> Result<Scene> {
    let r = raw::read_raw(path)?;
    let h = r.header;
    let fmt = |field: &'static str, msg: String| Error::Format { path: path.to_path_buf(), field, msg };
    if h.band_count != BAND_COUNT {
        return Err(fmt("band_count", format!("band count {} ≠ {BAND_COUNT}", h.band_count)));
    }
    if r.label.iter().any(|&v| v > 1) {
        return Err(fmt("label", "label values must be 0 or 1".into()));
    }
    if r.valid.iter().any(|&v| v > 1) {
        return Err(fmt("valid_mask", "mask values must be 0 or 1".into()));
    }
    let mut valid = r.valid;
    for plane in &r.planes {
        for (m, &v) in valid.iter_mut().zip(plane) {
            if !v.is_finite() || h.nodata_value.is_some_and(|nd| v == nd) {
                *m = 0;
            }
        }
    }
    Scene::new(h.id, h.width, h.height, r.planes, r.label, valid, h.meta)
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    let raster = raw::RawRaster {
        header: raw::RawHeader {
            id: scene.id.clone(),
            width: scene.width,
            height: scene.height,
            band_count: BAND_COUNT,
            band_names: BAND_NAMES.iter().map(|s| s.to_string()).collect(),
            nodata_value: None,
            meta: scene.meta.clone(),
        },
        planes: scene.bands.clone(),
        label: scene.label.clone(),
        valid: scene.valid.clone(),
    };
    raw::write_raw(path, &raster)
}
