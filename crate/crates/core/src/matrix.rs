//! The experiment grid: every (architecture, loss, learning rate) per band
//! setting, executed by a bounded worker pool and tracked in a resumable
//! manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use slidens_tensor::Scalar;

use crate::error::{Error, Result};
use crate::losses::LossName;
use crate::sampler::SampleSource;
use crate::scene::{fit_norm_stats, BandSetting, Dataset};
use crate::trainer::{train_session, ModelRecord, SessionData, TrainConfig, TrainHooks, PAPER_LEARNING_RATES};
use crate::util::{derive_seed, read_json, write_json_atomic};
use crate::zoo::ArchName;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const SEED_POLICY: &str = "sha256(global_seed, setting, arch, loss, lr)";

/// The published grid: nine architectures, five losses, two learning rates.
pub fn paper_factors() -> (Vec<ArchName>, Vec<LossName>, Vec<f64>) {
    (ArchName::ALL.to_vec(), LossName::ALL.to_vec(), PAPER_LEARNING_RATES.to_vec())
}

/// Seed of one session, stable across runs and independent of job order.
pub fn session_seed(global_seed: u64, setting: BandSetting, arch: ArchName, loss: LossName, lr: f64) -> u64 {
    derive_seed(global_seed, &[setting.name(), arch.name(), loss.name(), &lr.to_string()])
}

fn check_unique<K: Ord + fmt::Debug>(what: &str, items: impl IntoIterator<Item = K>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for item in items {
        if let Some(dup) = seen.replace(item) {
            return Err(Error::invalid(format!("duplicate {what} {dup:?}")));
        }
    }
    Ok(())
}

/// Full Cartesian product of the factors in lexicographic `(arch, loss, lr)`
/// order. Every field not varied by the grid is copied from `template`.
pub fn enumerate_matrix(
    setting: BandSetting,
    archs: &[ArchName],
    losses: &[LossName],
    lrs: &[f64],
    template: &TrainConfig,
    global_seed: u64,
) -> Result<Vec<TrainConfig>> {
    if archs.is_empty() || losses.is_empty() || lrs.is_empty() {
        return Err(Error::invalid("architecture, loss and learning-rate lists must be non-empty"));
    }
    check_unique("architecture", archs.iter())?;
    check_unique("loss", losses.iter())?;
    check_unique("learning rate", lrs.iter().map(|lr| lr.to_bits()))?;
    let mut archs = archs.to_vec();
    archs.sort_by_key(|a| a.name());
    let mut losses = losses.to_vec();
    losses.sort_by_key(|l| l.name());
    let mut lrs = lrs.to_vec();
    lrs.sort_by(f64::total_cmp);

    let mut out = Vec::with_capacity(archs.len() * losses.len() * lrs.len());
    for &arch in &archs {
        for &loss in &losses {
            for &lr in &lrs {
                let mut c = template.clone();
                c.arch = arch;
                c.loss.name = loss;
                c.learning_rate = lr;
                c.setting = setting;
                c.seed = session_seed(global_seed, setting, arch, loss, lr);
                out.push(c);
            }
        }
    }
    Ok(out)
}

/// `manifest.json`: every finished session, grouped by setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixManifest {
    pub format_version: u32,
    pub toolkit_version: String,
    pub dataset_fingerprint: String,
    pub global_seed: u64,
    pub seed_policy: String,
    /// Records sorted by config id within each setting.
    pub settings: BTreeMap<BandSetting, Vec<ModelRecord>>,
}

impl MatrixManifest {
    pub fn new(dataset_fingerprint: &str, global_seed: u64) -> Self {
        Self {
            format_version: MANIFEST_FORMAT_VERSION,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            dataset_fingerprint: dataset_fingerprint.to_string(),
            global_seed,
            seed_policy: SEED_POLICY.to_string(),
            settings: BTreeMap::new(),
        }
    }

    pub fn path(runs_root: &Path) -> PathBuf {
        runs_root.join(MANIFEST_FILE)
    }

    /// Reads `runs_root/manifest.json` if it exists.
    pub fn load(runs_root: &Path) -> Result<Option<Self>> {
        let path = Self::path(runs_root);
        if !path.exists() {
            return Ok(None);
        }
        let m: Self = read_json(&path)?;
        if m.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "{} has format version {}, expected {MANIFEST_FORMAT_VERSION}",
                path.display(),
                m.format_version
            )));
        }
        Ok(Some(m))
    }

    pub fn save(&self, runs_root: &Path) -> Result<()> {
        write_json_atomic(&Self::path(runs_root), self)
    }

    pub fn records(&self, setting: BandSetting) -> &[ModelRecord] {
        self.settings.get(&setting).map_or(&[], Vec::as_slice)
    }

    pub fn all_records(&self) -> impl Iterator<Item = &ModelRecord> {
        self.settings.values().flatten()
    }

    pub fn find(&self, config: &TrainConfig) -> Option<&ModelRecord> {
        self.records(config.setting).iter().find(|r| &r.config == config)
    }

    /// Inserts or replaces the record with the same setting and config id.
    pub fn upsert(&mut self, record: ModelRecord) {
        let list = self.settings.entry(record.config.setting).or_default();
        let id = record.config.config_id();
        match list.binary_search_by(|r| r.config.config_id().cmp(&id)) {
            Ok(i) => list[i] = record,
            Err(i) => list.insert(i, record),
        }
    }

    /// Errors unless every config has exactly one record and there are no
    /// duplicate config ids.
    pub fn check_complete(&self, configs: &[TrainConfig]) -> Result<()> {
        for (setting, list) in &self.settings {
            check_unique(&format!("record in setting {setting}"), list.iter().map(|r| r.config.config_id()))?;
        }
        if let Some(c) = configs.iter().find(|c| self.find(c).is_none()) {
            return Err(Error::invalid(format!("no record for {} in setting {}", c.config_id(), c.setting)));
        }
        Ok(())
    }
}

/// One line of run progress.
#[derive(Clone, Debug)]
pub struct Progress<'a> {
    pub done: usize,
    pub total: usize,
    pub record: &'a ModelRecord,
}

impl fmt::Display for Progress<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.record.config;
        write!(
            f,
            "[{}/{}] setting={} arch={} loss={} lr={} val_f1={:.3}",
            self.done, self.total, c.setting, c.arch, c.loss.name, c.learning_rate, self.record.best_val_f1
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Maximum number of sessions trained at once.
    pub jobs: usize,
    /// Skip configs that already have a matching record.
    pub resume: bool,
    /// Start at most this many sessions, then return; simulates an
    /// interrupted run.
    pub stop_after: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jobs: 1, resume: false, stop_after: None }
    }
}

/// A finished record left in a session directory, if it matches `config`
/// and the dataset.
fn leftover_record(runs_root: &Path, config: &TrainConfig, fingerprint: &str) -> Option<ModelRecord> {
    let path = runs_root.join(config.run_dir()).join("record.json");
    let record: ModelRecord = read_json(&path).ok()?;
    (record.config == *config && record.dataset_fingerprint == fingerprint).then_some(record)
}

/// Trains every config not already finished and returns the updated
/// manifest, which is rewritten atomically after each session.
///
/// An existing manifest for a different dataset is an error when resuming
/// and is replaced otherwise. Records of configs outside `configs` are kept.
pub fn run_matrix<T: Scalar>(
    dataset: &Dataset,
    runs_root: &Path,
    configs: &[TrainConfig],
    global_seed: u64,
    options: RunOptions,
    mut on_progress: impl FnMut(&Progress<'_>),
) -> Result<MatrixManifest> {
    if options.jobs == 0 {
        return Err(Error::invalid("jobs must be at least 1"));
    }
    check_unique("config", configs.iter().map(|c| (c.setting, c.config_id())))?;
    for c in configs {
        c.validate(false)?;
    }
    let fingerprint = dataset.fingerprint();
    let mut manifest = match MatrixManifest::load(runs_root)? {
        Some(m) if m.dataset_fingerprint == fingerprint => m,
        Some(m) if options.resume => {
            return Err(Error::invalid(format!(
                "dataset fingerprint mismatch: runs were made on {} but the dataset is {fingerprint}",
                m.dataset_fingerprint
            )));
        }
        Some(_) => {
            warn!("replacing a manifest made on a different dataset");
            MatrixManifest::new(fingerprint, global_seed)
        }
        None => MatrixManifest::new(fingerprint, global_seed),
    };
    manifest.global_seed = global_seed;

    let mut pending = Vec::new();
    for c in configs {
        if options.resume {
            if manifest.find(c).is_some() {
                continue;
            }
            if let Some(r) = leftover_record(runs_root, c, fingerprint) {
                manifest.upsert(r);
                continue;
            }
        }
        pending.push(c.clone());
    }
    manifest.save(runs_root)?;
    let budget = options.stop_after.unwrap_or(usize::MAX).min(pending.len());
    info!("{} of {} sessions to run, {budget} this time", pending.len(), configs.len());

    // per-setting inputs, shared read-only by the workers
    let train = dataset.train()?;
    let val = dataset.val()?;
    let stats = fit_norm_stats(&train)?;
    let settings: BTreeSet<BandSetting> = pending.iter().map(|c| c.setting).collect();
    let sources: BTreeMap<BandSetting, Vec<SampleSource<T>>> = settings
        .iter()
        .map(|&s| (s, train.iter().map(|scene| SampleSource::new(scene, s, Some(&stats))).collect()))
        .collect();

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<Result<ModelRecord>>();
    let mut first_error = None;
    std::thread::scope(|scope| {
        for _ in 0..options.jobs.min(budget) {
            let tx = tx.clone();
            let (next, abort, pending, sources, val, stats) = (&next, &abort, &pending, &sources, &val, &stats);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= budget {
                    break;
                }
                let config = &pending[i];
                let data = SessionData {
                    sources: &sources[&config.setting],
                    val,
                    stats,
                    fingerprint,
                };
                let result = train_session(config, &data, runs_root, &mut TrainHooks::default());
                if tx.send(result).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut done = 0;
        for result in rx {
            match result.and_then(|record| {
                manifest.upsert(record.clone());
                manifest.save(runs_root)?;
                Ok(record)
            }) {
                Ok(record) => {
                    done += 1;
                    on_progress(&Progress { done, total: pending.len(), record: &record });
                }
                Err(e) => {
                    abort.store(true, Ordering::SeqCst);
                    first_error.get_or_insert(e);
                }
            }
        }
    });
    match first_error {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}
