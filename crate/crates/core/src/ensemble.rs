//! Ranking trained models by validation F1 and combining the top K into one
//! probability map.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slidens_tensor::Scalar;

use crate::error::{Error, Result};
use crate::metrics::{confusion, scores, ConfusionCounts, EvalReport};
use crate::probability::{MemberRef, ProbabilityMap, Provenance};
use crate::scene::raw::{write_raw, RawHeader, RawRaster};
use crate::scene::{BandSetting, NormStats, Scene};
use crate::trainer::{load_record_model, ModelRecord};
use crate::util::write_json_atomic;
use crate::zoo::predict_scene;

/// How member maps are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    /// Pixel-wise mean of the probabilities.
    #[default]
    Mean,
    /// Fraction of members whose binarised map is positive; thresholding
    /// this at 0.5 gives a majority vote.
    MajorityVote,
}

/// The ordering used for ranking: descending validation F1, then ascending
/// `(arch, loss, lr)` by name.
pub fn rank_order(a: &ModelRecord, b: &ModelRecord) -> Ordering {
    b.best_val_f1
        .total_cmp(&a.best_val_f1)
        .then_with(|| a.config.arch.name().cmp(b.config.arch.name()))
        .then_with(|| a.config.loss.name.name().cmp(b.config.loss.name.name()))
        .then_with(|| a.config.learning_rate.total_cmp(&b.config.learning_rate))
}

/// Successful records of `setting`, best first.
pub fn rank_models(records: &[ModelRecord], setting: BandSetting) -> Result<Vec<ModelRecord>> {
    let mut ranked: Vec<ModelRecord> = records
        .iter()
        .filter(|r| r.config.setting == setting && r.is_success())
        .cloned()
        .collect();
    if ranked.is_empty() {
        return Err(Error::invalid(format!("no successful training session for setting {setting}")));
    }
    ranked.sort_by(rank_order);
    Ok(ranked)
}

/// The top `k` members of a ranking, with how to combine them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub setting: BandSetting,
    pub k: usize,
    /// In rank order.
    pub members: Vec<ModelRecord>,
    pub threshold: f64,
    pub combine: Combine,
}

impl EnsembleSpec {
    pub fn top_k(ranked: &[ModelRecord], k: usize) -> Result<Self> {
        if k == 0 || k > ranked.len() {
            return Err(Error::invalid(format!("ensemble size must be in 1..={}, got {k}", ranked.len())));
        }
        let setting = ranked[0].config.setting;
        if let Some(r) = ranked[..k].iter().find(|r| r.config.setting != setting) {
            return Err(Error::invalid(format!(
                "member {} belongs to setting {}, not {setting}",
                r.config.config_id(),
                r.config.setting
            )));
        }
        Ok(Self { setting, k, members: ranked[..k].to_vec(), threshold: 0.5, combine: Combine::Mean })
    }

    pub fn member_refs(&self) -> Vec<MemberRef> {
        self.members
            .iter()
            .map(|r| MemberRef { config_id: r.config.config_id(), best_val_f1: r.best_val_f1 })
            .collect()
    }
}

/// Sum of `values` by recursive halving, so the result depends only on the
/// order of `values`, not on how the work is scheduled.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Pixel-wise mean of same-shaped maps, summed pairwise in the given order.
pub fn average_maps(maps: &[&ProbabilityMap], provenance: Provenance) -> Result<ProbabilityMap> {
    let first = maps.first().ok_or_else(|| Error::invalid("cannot average zero maps"))?;
    if let Some(m) = maps.iter().find(|m| (m.height, m.width) != (first.height, first.width)) {
        return Err(Error::invalid(format!(
            "map sizes differ: {}×{} vs {}×{}",
            m.height, m.width, first.height, first.width
        )));
    }
    let k = maps.len() as f64;
    let mut column = vec![0.0; maps.len()];
    let values = (0..first.values.len())
        .map(|i| {
            for (c, m) in column.iter_mut().zip(maps) {
                *c = m.values[i];
            }
            // agreeing members pass through untouched, so K copies of one
            // map reproduce it bit for bit
            if column.iter().all(|&v| v == column[0]) {
                return column[0];
            }
            (pairwise_sum(&column) / k).clamp(0.0, 1.0)
        })
        .collect();
    Ok(ProbabilityMap {
        scene_id: first.scene_id.clone(),
        height: first.height,
        width: first.width,
        values,
        provenance,
    })
}

/// Mask that is 1 where `value ≥ threshold`.
pub fn binarize(map: &ProbabilityMap, threshold: f64) -> Result<Vec<u8>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    Ok(map.values.iter().map(|&v| u8::from(v >= threshold)).collect())
}

/// Combines member maps already predicted for one scene. Members are summed
/// in `config_id` order so any permutation of `maps` gives the same bytes.
fn combine_members(spec: &EnsembleSpec, maps: &[(String, ProbabilityMap)]) -> Result<ProbabilityMap> {
    let mut order: Vec<&(String, ProbabilityMap)> = maps.iter().collect();
    order.sort_by(|a, b| a.0.cmp(&b.0));
    let provenance = Provenance::Ensemble { setting: spec.setting, k: maps.len(), members: spec.member_refs() };
    match spec.combine {
        Combine::Mean => average_maps(&order.iter().map(|(_, m)| m).collect::<Vec<_>>(), provenance),
        Combine::MajorityVote => {
            let votes: Vec<ProbabilityMap> = order
                .iter()
                .map(|(_, m)| {
                    Ok(ProbabilityMap {
                        values: binarize(m, spec.threshold)?.into_iter().map(f64::from).collect(),
                        ..m.clone()
                    })
                })
                .collect::<Result<_>>()?;
            average_maps(&votes.iter().collect::<Vec<_>>(), provenance)
        }
    }
}

/// Options for scene-level prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileOptions {
    pub tile: usize,
    pub stride: usize,
}

impl Default for TileOptions {
    fn default() -> Self {
        Self { tile: 256, stride: 256 }
    }
}

fn member_map<T: Scalar>(
    record: &ModelRecord,
    scene: &Scene,
    stats: &NormStats,
    runs_root: &Path,
    tiles: TileOptions,
) -> Result<(String, ProbabilityMap)> {
    let model = load_record_model::<T>(record, runs_root)?;
    let map = predict_scene(&model, scene, record.config.setting, stats, tiles.tile, tiles.stride)?;
    Ok((record.config.config_id(), map))
}

/// Loads every member, predicts `scene` with each and combines the maps.
pub fn ensemble_predict<T: Scalar>(
    spec: &EnsembleSpec,
    scene: &Scene,
    stats: &NormStats,
    runs_root: &Path,
    tiles: TileOptions,
) -> Result<ProbabilityMap> {
    if let Some(r) = spec.members.iter().find(|r| r.config.setting != spec.setting) {
        return Err(Error::invalid(format!(
            "member {} was trained on setting {}, not {}",
            r.config.config_id(),
            r.config.setting,
            spec.setting
        )));
    }
    let maps = spec
        .members
        .iter()
        .map(|r| member_map::<T>(r, scene, stats, runs_root, tiles))
        .collect::<Result<Vec<_>>>()?;
    combine_members(spec, &maps)
}

/// Scores of the top-`k` ensemble for every distinct `k` in `k_values`,
/// ascending, with confusion counts pooled over `scenes`. Each member
/// predicts each scene once; the maps are shared across sizes.
pub fn sweep_reports<T: Scalar>(
    ranked: &[ModelRecord],
    scenes: &[&Scene],
    stats: &NormStats,
    runs_root: &Path,
    k_values: &[usize],
    tiles: TileOptions,
) -> Result<Vec<(usize, EvalReport)>> {
    let mut ks = k_values.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks[0] == 0 || ks[ks.len() - 1] > ranked.len() {
        return Err(Error::invalid(format!("ensemble sizes must be in 1..={}", ranked.len())));
    }
    if scenes.is_empty() {
        return Err(Error::invalid("no scene to evaluate"));
    }
    // cache[member][scene]
    let mut cache: Vec<Vec<(String, ProbabilityMap)>> = Vec::new();
    let mut out = Vec::with_capacity(ks.len());
    for k in ks {
        while cache.len() < k {
            let record = &ranked[cache.len()];
            let maps = scenes
                .iter()
                .map(|scene| member_map::<T>(record, scene, stats, runs_root, tiles))
                .collect::<Result<Vec<_>>>()?;
            cache.push(maps);
        }
        let spec = EnsembleSpec::top_k(ranked, k)?;
        let mut counts = ConfusionCounts::default();
        for (j, scene) in scenes.iter().enumerate() {
            let maps: Vec<_> = cache[..k].iter().map(|m| m[j].clone()).collect();
            let pred = binarize(&combine_members(&spec, &maps)?, spec.threshold)?;
            counts = counts.merge(confusion(&pred, scene.label(), scene.valid())?);
        }
        out.push((k, EvalReport { counts, scores: scores(&counts) }));
    }
    Ok(out)
}

/// Test F1 of the top-`k` ensemble on one scene for every distinct `k`,
/// ascending.
pub fn size_sweep<T: Scalar>(
    ranked: &[ModelRecord],
    scene: &Scene,
    stats: &NormStats,
    runs_root: &Path,
    k_values: &[usize],
    tiles: TileOptions,
) -> Result<Vec<(usize, f64)>> {
    let reports = sweep_reports::<T>(ranked, &[scene], stats, runs_root, k_values, tiles)?;
    Ok(reports.into_iter().map(|(k, r)| (k, r.scores.f1)).collect())
}

/// JSON written next to a probability raster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilitySidecar {
    pub scene_id: String,
    pub provenance: Provenance,
    pub threshold: f64,
}

/// Sidecar path of a probability raster: `x.bst` → `x.json`.
pub fn probability_sidecar_path(raster: &Path) -> PathBuf {
    raster.with_extension("json")
}

/// Writes `map` as a one-band float32 raster. The label plane holds the
/// map binarised at `threshold` and the valid plane the scene's mask.
pub fn write_probability_raster(map: &ProbabilityMap, valid: &[u8], threshold: f64, path: &Path) -> Result<()> {
    if valid.len() != map.values.len() {
        return Err(Error::invalid("valid mask does not match the probability map"));
    }
    let raster = RawRaster {
        header: RawHeader {
            id: map.scene_id.clone(),
            width: map.width,
            height: map.height,
            band_count: 1,
            band_names: vec!["probability".to_string()],
            nodata_value: None,
            meta: BTreeMap::new(),
        },
        planes: vec![map.values.iter().map(|&v| v as f32).collect()],
        label: binarize(map, threshold)?,
        valid: valid.to_vec(),
    };
    write_raw(path, &raster)?;
    write_json_atomic(
        &probability_sidecar_path(path),
        &ProbabilitySidecar { scene_id: map.scene_id.clone(), provenance: map.provenance.clone(), threshold },
    )
}
