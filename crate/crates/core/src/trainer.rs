//! One training session: fixed-length epochs of Adam steps on smart-cropped
//! batches, validation F1 after every epoch, early stopping and retention of
//! the best checkpoint.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{debug, info};
use serde::{Deserialize, Serialize};
use slidens_tensor::{Adam, Graph, ParamStore, Scalar, Tensor};

use crate::ensemble::binarize;
use crate::error::{Error, Result};
use crate::losses::{get_loss, LossConfig};
use crate::metrics::{confusion, scores, ConfusionCounts};
use crate::sampler::{BatchStream, SampleSource};
use crate::scene::{BandSetting, NormStats, Scene};
use crate::util::{derive_seed, write_atomic, write_json_atomic};
use crate::zoo::{build_model, predict_scene, save_weights, ArchName, ArchSpec, Model, DEFAULT_DEPTH, DEFAULT_WIDTH};

/// Learning rates of the experiment grid.
pub const PAPER_LEARNING_RATES: [f64; 2] = [0.01, 0.001];
/// Score recorded for sessions that diverged.
pub const FAILED_SCORE: f64 = -1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: ArchName,
    pub loss: LossConfig,
    pub learning_rate: f64,
    pub setting: BandSetting,
    pub seed: u64,
    pub iters_per_epoch: usize,
    pub batch_size: usize,
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub val_threshold: f64,
    /// Side of the square training crops.
    pub crop_size: usize,
    /// Tile side used when predicting validation scenes.
    pub val_tile: usize,
    pub width: usize,
    pub depth: usize,
}

impl TrainConfig {
    pub fn new(arch: ArchName, loss: LossConfig, learning_rate: f64, setting: BandSetting, seed: u64) -> Self {
        Self {
            arch,
            loss,
            learning_rate,
            setting,
            seed,
            iters_per_epoch: 1000,
            batch_size: 4,
            patience_epochs: 50,
            max_epochs: 300,
            val_threshold: 0.5,
            crop_size: 256,
            val_tile: 256,
            width: DEFAULT_WIDTH,
            depth: DEFAULT_DEPTH,
        }
    }

    pub fn arch_spec(&self) -> ArchSpec {
        ArchSpec::for_setting(self.arch, self.setting).with_size(self.width, self.depth)
    }

    /// `<arch>_<loss>_<lr>`, the session's directory name.
    pub fn config_id(&self) -> String {
        format!("{}_{}_{}", self.arch, self.loss.name, self.learning_rate)
    }

    /// Directory of this session below the runs root.
    pub fn run_dir(&self) -> PathBuf {
        PathBuf::from(self.setting.name()).join(self.config_id())
    }

    /// Whether the learning rate is one of the grid's two values.
    pub fn is_paper_learning_rate(&self) -> bool {
        PAPER_LEARNING_RATES.contains(&self.learning_rate)
    }

    pub fn validate(&self, paper_faithful: bool) -> Result<()> {
        self.loss.validate()?;
        self.arch_spec().validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if paper_faithful && !self.is_paper_learning_rate() {
            return Err(Error::invalid(format!(
                "learning rate {} is not one of {PAPER_LEARNING_RATES:?}",
                self.learning_rate
            )));
        }
        if self.iters_per_epoch == 0 || self.batch_size == 0 || self.max_epochs == 0 || self.patience_epochs == 0 {
            return Err(Error::invalid("iterations, batch size, patience and max epochs must be positive"));
        }
        if !(self.val_threshold > 0.0 && self.val_threshold < 1.0) {
            return Err(Error::invalid(format!("threshold must lie in (0, 1), got {}", self.val_threshold)));
        }
        let d = 1usize << self.depth;
        if !self.crop_size.is_multiple_of(d) || !self.val_tile.is_multiple_of(d) || self.crop_size == 0 || self.val_tile == 0 {
            return Err(Error::invalid(format!("crop size and validation tile must be positive multiples of {d}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Completed,
    Diverged,
}

/// Outcome of one session, persisted as `record.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub config: TrainConfig,
    pub status: SessionStatus,
    /// Relative to the runs root; absent for failed sessions.
    pub weights_path: Option<PathBuf>,
    pub best_val_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub history: Vec<EpochStats>,
    pub param_count: usize,
    pub dataset_fingerprint: String,
    /// Notes such as `max_epochs_reached` or `exploratory_learning_rate`.
    pub flags: Vec<String>,
    pub failure: Option<String>,
}

impl ModelRecord {
    pub fn is_success(&self) -> bool {
        self.status == SessionStatus::Completed
    }
}

/// Patience counter; only a strictly greater score resets it.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::NEG_INFINITY, best_epoch: 0, since_best: 0 }
    }

    /// Records `score` for `epoch`; returns whether it is a new best.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        if score > self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Pooled F1 of `model` over the validation scenes at `threshold`.
pub fn validate<T: Scalar>(
    model: &Model<T>,
    val: &[&Scene],
    setting: BandSetting,
    stats: &NormStats,
    threshold: f64,
    tile: usize,
) -> Result<f64> {
    Ok(scores(&validation_counts(model, val, setting, stats, threshold, tile)?).f1)
}

/// Confusion counts pooled over every validation scene.
pub fn validation_counts<T: Scalar>(
    model: &Model<T>,
    val: &[&Scene],
    setting: BandSetting,
    stats: &NormStats,
    threshold: f64,
    tile: usize,
) -> Result<ConfusionCounts> {
    if val.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    val.iter()
        .map(|scene| {
            let map = predict_scene(model, scene, setting, stats, tile, tile)?;
            confusion(&binarize(&map, threshold)?, scene.label(), scene.valid())
        })
        .try_fold(ConfusionCounts::default(), |acc, c| Ok(acc.merge(c?)))
}

/// F1 of the summed counts (micro average), not the mean of per-scene F1.
pub fn pooled_f1(counts: &[ConfusionCounts]) -> f64 {
    scores(&counts.iter().fold(ConfusionCounts::default(), |acc, &c| acc.merge(c))).f1
}

/// Inputs shared by every session of one band setting.
pub struct SessionData<'a, T> {
    /// Training scenes prepared for sampling with the setting's bands,
    /// normalised with `stats`.
    pub sources: &'a [SampleSource<T>],
    pub val: &'a [&'a Scene],
    pub stats: &'a NormStats,
    pub fingerprint: &'a str,
}

/// Optional callbacks, mostly for tests and progress reporting.
pub struct TrainHooks<'a, T: Scalar> {
    /// Replaces validation: maps the 1-based epoch and the current model to
    /// a score.
    pub validation: Option<Box<dyn FnMut(usize, &Model<T>) -> f64 + 'a>>,
    /// Called after every epoch.
    pub on_epoch: Option<Box<dyn FnMut(&EpochStats) + 'a>>,
    /// Called after every optimiser step.
    pub on_step: Option<Box<dyn FnMut(&StepInfo) + 'a>>,
}

/// What the step hook sees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub epoch: usize,
    /// 1-based within the epoch.
    pub step: usize,
    pub batch_size: usize,
    pub loss: f64,
}

impl<T: Scalar> Default for TrainHooks<'_, T> {
    fn default() -> Self {
        Self { validation: None, on_epoch: None, on_step: None }
    }
}

/// Runs one session and writes `record.json`, `history.csv` and the best
/// weights below `runs_root/<setting>/<config_id>/`.
///
/// A non-finite loss ends the session as [`SessionStatus::Diverged`] with
/// `best_val_f1 = -1`; that is reported in the record, not as an error.
pub fn train_session<T: Scalar>(
    config: &TrainConfig,
    data: &SessionData<'_, T>,
    runs_root: &Path,
    hooks: &mut TrainHooks<'_, T>,
) -> Result<ModelRecord> {
    config.validate(false)?;
    let loss = get_loss(config.loss)?;
    let spec = config.arch_spec();
    if let Some(src) = data.sources.iter().find(|s| s.channels() != spec.in_channels) {
        return Err(Error::invalid(format!(
            "training source {} has {} channels but setting {} needs {}",
            src.id(),
            src.channels(),
            config.setting,
            spec.in_channels
        )));
    }
    let mut model = build_model::<T>(spec, derive_seed(config.seed, &["init"]))?;
    let mut stream = BatchStream::new(data.sources, config.batch_size, config.crop_size, derive_seed(config.seed, &["batches"]))?;
    let mut adam = Adam::new(model.params(), T::lit(config.learning_rate));
    let mut stopper = EarlyStopping::new(config.patience_epochs);
    let mut best_params: Option<ParamStore<T>> = None;
    let mut history = Vec::new();
    let mut failure = None;

    'epochs: for epoch in 1..=config.max_epochs {
        let mut loss_sum = 0.0;
        for step in 1..=config.iters_per_epoch {
            let batch = stream.next_batch();
            let batch_size = batch.stacks.shape()[0];
            let mut g = Graph::new();
            let p = g.params(model.params());
            let x = g.input(batch.stacks);
            let out = model.forward_on(&mut g, &p, x);
            let eval = loss.eval(g.value(out).data(), &batch.labels, &batch.valids)?;
            if !eval.value.is_finite() || !eval.grad.iter().all(|v| v.is_finite()) {
                failure = Some(format!("non-finite loss at epoch {epoch}"));
                break 'epochs;
            }
            let grads = g.backward(out, Tensor::from_vec(g.shape(out), eval.grad));
            adam.step(model.params_mut(), &grads);
            loss_sum += eval.value;
            if let Some(f) = hooks.on_step.as_mut() {
                f(&StepInfo { epoch, step, batch_size, loss: eval.value });
            }
        }
        let val_f1 = match hooks.validation.as_mut() {
            Some(f) => f(epoch, &model),
            None => validate(&model, data.val, config.setting, data.stats, config.val_threshold, config.val_tile)?,
        };
        let stats = EpochStats { epoch, train_loss: loss_sum / config.iters_per_epoch as f64, val_f1 };
        debug!("{} epoch {epoch}: loss {:.4} val_f1 {val_f1:.4}", config.config_id(), stats.train_loss);
        history.push(stats);
        if let Some(f) = hooks.on_epoch.as_mut() {
            f(&stats);
        }
        if stopper.observe(epoch, val_f1) {
            best_params = Some(model.params().clone());
        }
        if stopper.should_stop() {
            break;
        }
    }

    let run_dir = config.run_dir();
    let abs_dir = runs_root.join(&run_dir);
    let mut flags = Vec::new();
    if !config.is_paper_learning_rate() {
        flags.push("exploratory_learning_rate".to_string());
    }
    let record = if let Some(msg) = failure {
        info!("{} diverged: {msg}", config.config_id());
        ModelRecord {
            config: config.clone(),
            status: SessionStatus::Diverged,
            weights_path: None,
            best_val_f1: FAILED_SCORE,
            best_epoch: 0,
            epochs_run: history.len(),
            history,
            param_count: model.param_count(),
            dataset_fingerprint: data.fingerprint.to_string(),
            flags,
            failure: Some(msg),
        }
    } else {
        if history.len() == config.max_epochs && !stopper.should_stop() {
            flags.push("max_epochs_reached".to_string());
        }
        *model.params_mut() = best_params.expect("at least one epoch ran");
        let weights = run_dir.join("weights.bin");
        save_weights(&model, &runs_root.join(&weights))?;
        ModelRecord {
            config: config.clone(),
            status: SessionStatus::Completed,
            weights_path: Some(weights),
            best_val_f1: stopper.best(),
            best_epoch: stopper.best_epoch(),
            epochs_run: history.len(),
            history,
            param_count: model.param_count(),
            dataset_fingerprint: data.fingerprint.to_string(),
            flags,
            failure: None,
        }
    };
    write_history_csv(&abs_dir.join("history.csv"), &record.history)?;
    write_json_atomic(&abs_dir.join("record.json"), &record)?;
    Ok(record)
}

fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_f1\n");
    for h in history {
        let _ = writeln!(out, "{},{},{}", h.epoch, h.train_loss, h.val_f1);
    }
    write_atomic(path, out.as_bytes())
}

/// Loads the best weights a completed record points to.
pub fn load_record_model<T: Scalar>(record: &ModelRecord, runs_root: &Path) -> Result<Model<T>> {
    let rel = record.weights_path.as_ref().ok_or_else(|| {
        Error::invalid(format!("session {} has no weights (status {:?})", record.config.config_id(), record.status))
    })?;
    crate::zoo::load_weights(record.config.arch_spec(), &runs_root.join(rel))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_counts_non_improving_epochs() {
        let mut s = EarlyStopping::new(2);
        let seq = [0.1, 0.3, 0.2, 0.25];
        let mut stopped_at = None;
        for (i, &v) in seq.iter().enumerate() {
            s.observe(i + 1, v);
            if s.should_stop() {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(4));
        assert_eq!(s.best_epoch(), 2);
    }

    #[test]
    fn ties_do_not_reset_patience() {
        let mut s = EarlyStopping::new(2);
        assert!(s.observe(1, 0.5));
        assert!(!s.observe(2, 0.5));
        assert!(!s.observe(3, 0.5));
        assert!(s.should_stop());
        assert_eq!(s.best_epoch(), 1);
    }

    #[test]
    fn config_ids_and_validation() {
        let c = TrainConfig::new(ArchName::Unet, LossConfig::default(), 0.001, BandSetting::S1, 1);
        assert_eq!(c.config_id(), "Unet_BCELoss_0.001");
        assert_eq!(c.run_dir(), PathBuf::from("S1/Unet_BCELoss_0.001"));
        assert!(c.validate(true).is_ok());
        let mut odd = c.clone();
        odd.learning_rate = 0.005;
        assert!(odd.validate(true).is_err());
        assert!(odd.validate(false).is_ok());
        odd.val_threshold = 1.0;
        assert!(odd.validate(false).is_err());
    }
}
