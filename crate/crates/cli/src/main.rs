//! `slidens`: synthetic datasets, the training matrix, ranking, ensembles,
//! evaluation and figures, all over one runs directory.
//!
//! Exit status is 0 on success, 2 for invalid input and 1 for runtime
//! failures.

mod report;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use slidens_core::ensemble::{
    binarize, ensemble_predict, probability_sidecar_path, rank_models, sweep_reports, write_probability_raster,
    Combine, EnsembleSpec, TileOptions,
};
use slidens_core::losses::{LossConfig, LossName};
use slidens_core::matrix::{enumerate_matrix, paper_factors, run_matrix, MatrixManifest, RunOptions};
use slidens_core::metrics::{confusion, diagram_data, EvalReport, SkillScores};
use slidens_core::render::{diff_map, legend, legend_path, render_diagram, write_diff_png};
use slidens_core::scene::{
    fit_norm_stats, raw::read_raw, synth_dataset, BandSetting, Dataset, NormStats, Scene, SynthSpec,
};
use slidens_core::trainer::{ModelRecord, TrainConfig, PAPER_LEARNING_RATES};
use slidens_core::util::{read_json, write_atomic, write_json_atomic};
use slidens_core::zoo::{ArchName, DEFAULT_DEPTH, DEFAULT_WIDTH};
use slidens_core::{Error, Result};
use slidens_tensor::Scalar;

use crate::report::{fill_improvements, format_table, ImprovementRow, SizedScore};

#[derive(Parser)]
#[command(name = "slidens", version, about = "Landslide segmentation ensembles from multi-band satellite scenes")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Root of the runs directory.
    #[arg(long, global = true, env = "SLIDENS_RUNS", default_value = "runs")]
    runs: PathBuf,
    /// Dataset manifest (`dataset.json`).
    #[arg(long, global = true, default_value = "data/dataset.json")]
    dataset: PathBuf,
    /// Global seed; every session and generator seed is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Require the published 16/4/1 split, factor lists and learning rates.
    #[arg(long, global = true)]
    paper_faithful: bool,
    /// Floating-point precision of models; must match the one used to train.
    #[arg(long, global = true, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

/// Settings shared by every subcommand.
#[derive(Clone, Debug)]
struct CliConfig {
    runs_dir: PathBuf,
    dataset: PathBuf,
    global_seed: u64,
    jobs: usize,
    paper_faithful: bool,
    precision: Precision,
}

#[derive(Subcommand)]
enum Command {
    /// Create or check datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Train one session and record it in the manifest.
    Train(TrainArgs),
    /// Train a grid of sessions.
    #[command(subcommand)]
    Matrix(MatrixCmd),
    /// Print the models of one setting ranked by validation F1.
    Rank(RankArgs),
    /// Ensemble prediction.
    #[command(subcommand)]
    Ensemble(EnsembleCmd),
    /// Score a probability raster against a scene's label.
    Eval(EvalArgs),
    /// Summary tables.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Test scores for every ensemble size up to `--kmax`, as CSV.
    Sweep(SweepArgs),
    /// Figures.
    #[command(subcommand)]
    Render(RenderCmd),
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Generate synthetic scenes and a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 21)]
        scenes: usize,
        /// Scene size as HEIGHTxWIDTH.
        #[arg(long, default_value = "256x256", value_parser = parse_size)]
        size: (usize, usize),
    },
    /// Check scene and split invariants.
    Validate { manifest: PathBuf },
}

/// Session settings that are not grid factors.
#[derive(Args, Clone, Debug)]
struct Knobs {
    /// Optimiser steps per epoch.
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    /// Epochs without improvement before stopping.
    #[arg(long, default_value_t = 50)]
    patience: usize,
    #[arg(long, default_value_t = 300)]
    max_epochs: usize,
    /// Side of the training crops.
    #[arg(long, default_value_t = 256)]
    crop: usize,
    /// Tile side for validation and prediction.
    #[arg(long, default_value_t = 256)]
    val_tile: usize,
    /// Channels of the first encoder stage.
    #[arg(long, default_value_t = DEFAULT_WIDTH)]
    width: usize,
    /// Encoder stages.
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: usize,
}

impl Knobs {
    fn template(&self) -> TrainConfig {
        let mut c = TrainConfig::new(ArchName::Unet, LossConfig::default(), 0.001, BandSetting::S1, 0);
        c.iters_per_epoch = self.iters;
        c.batch_size = self.batch_size;
        c.patience_epochs = self.patience;
        c.max_epochs = self.max_epochs;
        c.crop_size = self.crop;
        c.val_tile = self.val_tile;
        c.width = self.width;
        c.depth = self.depth;
        c
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    setting: BandSetting,
    #[arg(long)]
    arch: ArchName,
    #[arg(long)]
    loss: LossName,
    #[arg(long)]
    lr: f64,
    /// Keep an existing record for this session instead of retraining.
    #[arg(long)]
    resume: bool,
    #[command(flatten)]
    knobs: Knobs,
}

#[derive(Subcommand)]
enum MatrixCmd {
    /// Train every (setting, arch, loss, lr) combination.
    Run(MatrixRunArgs),
}

#[derive(Args)]
struct MatrixRunArgs {
    #[arg(long, value_delimiter = ',', default_value = "S1,S2,S1S2,ALL")]
    settings: Vec<BandSetting>,
    /// Sessions trained at once.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Skip sessions already in the manifest.
    #[arg(long)]
    resume: bool,
    /// Architectures (default: all nine).
    #[arg(long, value_delimiter = ',')]
    archs: Option<Vec<ArchName>>,
    /// Losses (default: all five).
    #[arg(long, value_delimiter = ',')]
    losses: Option<Vec<LossName>>,
    /// Learning rates (default: 0.01,0.001).
    #[arg(long, value_delimiter = ',')]
    lrs: Option<Vec<f64>>,
    /// Start at most this many sessions, then stop.
    #[arg(long)]
    stop_after: Option<usize>,
    #[command(flatten)]
    knobs: Knobs,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    setting: BandSetting,
    /// Show only the first K models.
    #[arg(long)]
    top: Option<usize>,
    /// Skip scoring on the test split.
    #[arg(long)]
    no_test: bool,
    /// Also write the table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EnsembleCmd {
    /// Write the top-K ensemble's probability raster for one scene.
    Predict(PredictArgs),
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    setting: BandSetting,
    #[arg(long)]
    top: usize,
    /// Scene id (default: the only test scene).
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Average the members' binary votes instead of their probabilities.
    #[arg(long)]
    vote: bool,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Probability raster written by `ensemble predict`.
    #[arg(long)]
    pred: PathBuf,
    /// Scene id (default: the only test scene).
    #[arg(long)]
    scene: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Where to write the scores.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Best single model against top-K ensembles, with percentage gains.
    Improvements(ImprovementArgs),
    /// Performance-diagram data for single models and ensembles.
    Diagram(DiagramArgs),
}

#[derive(Args)]
struct ImprovementArgs {
    #[arg(long, value_delimiter = ',', default_value = "S1,S2,S1S2,ALL")]
    settings: Vec<BandSetting>,
    #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
    sizes: Vec<usize>,
    /// Read single and ensemble F1 values from this JSON file instead of
    /// evaluating the runs.
    #[arg(long)]
    from: Option<PathBuf>,
    /// Also write the rows as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct DiagramArgs {
    #[arg(long, value_delimiter = ',', default_value = "S1,S2,S1S2,ALL")]
    settings: Vec<BandSetting>,
    #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
    sizes: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    setting: BandSetting,
    #[arg(long)]
    kmax: usize,
    #[arg(long)]
    out: PathBuf,
    /// Score one scene instead of the pooled test split.
    #[arg(long)]
    scene: Option<String>,
}

#[derive(Subcommand)]
enum RenderCmd {
    /// Colour-coded agreement of the best model and an ensemble with the label.
    Diff {
        #[arg(long)]
        setting: BandSetting,
        #[arg(long)]
        top: usize,
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Draw a performance diagram from `report diagram` output.
    Diagram {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HEIGHTxWIDTH, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(h)?, parse(w)?))
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

macro_rules! with_precision {
    ($p:expr, $f:ident($($arg:expr),*)) => {
        match $p {
            Precision::F32 => $f::<f32>($($arg),*),
            Precision::F64 => $f::<f64>($($arg),*),
        }
    };
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let jobs = match &cli.command {
        Command::Matrix(MatrixCmd::Run(a)) => a.jobs,
        _ => 1,
    };
    let cfg = CliConfig {
        runs_dir: g.runs,
        dataset: g.dataset,
        global_seed: g.seed,
        jobs,
        paper_faithful: g.paper_faithful,
        precision: g.precision,
    };
    let p = cfg.precision;
    match cli.command {
        Command::Dataset(DatasetCmd::Synth { out, scenes, size }) => synth(&cfg, &out, scenes, size),
        Command::Dataset(DatasetCmd::Validate { manifest }) => validate(&cfg, &manifest),
        Command::Train(a) => with_precision!(p, train(&cfg, &a)),
        Command::Matrix(MatrixCmd::Run(a)) => with_precision!(p, matrix_run(&cfg, &a)),
        Command::Rank(a) => with_precision!(p, rank(&cfg, &a)),
        Command::Ensemble(EnsembleCmd::Predict(a)) => with_precision!(p, predict(&cfg, &a)),
        Command::Eval(a) => eval(&cfg, &a),
        Command::Report(ReportCmd::Improvements(a)) => with_precision!(p, improvements(&cfg, &a)),
        Command::Report(ReportCmd::Diagram(a)) => with_precision!(p, diagram(&cfg, &a)),
        Command::Sweep(a) => with_precision!(p, sweep(&cfg, &a)),
        Command::Render(RenderCmd::Diff { setting, top, scene, out, threshold }) => {
            with_precision!(p, render_diff(&cfg, setting, top, scene.as_deref(), &out, threshold))
        }
        Command::Render(RenderCmd::Diagram { spec, out }) => render_diagram_file(&read_json(&spec)?, &out),
    }
}

fn synth(cfg: &CliConfig, out: &Path, scenes: usize, (height, width): (usize, usize)) -> Result<()> {
    let manifest = synth_dataset(out, scenes, cfg.global_seed, &SynthSpec::sized(height, width))?;
    let s = &manifest.split;
    println!(
        "wrote {} scenes to {} (train/val/test = {}/{}/{})",
        manifest.scenes.len(),
        out.display(),
        s.train.len(),
        s.val.len(),
        s.test.len()
    );
    Ok(())
}

fn validate(cfg: &CliConfig, manifest: &Path) -> Result<()> {
    let ds = Dataset::load(manifest)?;
    ds.validate(cfg.paper_faithful)?;
    let s = &ds.manifest.split;
    println!(
        "ok: {} scenes, train/val/test = {}/{}/{}, fingerprint {}",
        ds.scenes().count(),
        s.train.len(),
        s.val.len(),
        s.test.len(),
        ds.fingerprint()
    );
    Ok(())
}

fn load_dataset(cfg: &CliConfig) -> Result<Dataset> {
    let ds = Dataset::load(&cfg.dataset)?;
    ds.validate(cfg.paper_faithful)?;
    Ok(ds)
}

fn train<T: Scalar>(cfg: &CliConfig, a: &TrainArgs) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let configs =
        enumerate_matrix(a.setting, &[a.arch], &[a.loss], &[a.lr], &a.knobs.template(), cfg.global_seed)?;
    configs[0].validate(cfg.paper_faithful)?;
    let options = RunOptions { jobs: 1, resume: a.resume, stop_after: None };
    let manifest = run_matrix::<T>(&ds, &cfg.runs_dir, &configs, cfg.global_seed, options, |p| println!("{p}"))?;
    let record = manifest.find(&configs[0]).ok_or_else(|| invalid("session missing from the manifest"))?;
    println!("status={:?} best_epoch={} epochs={}", record.status, record.best_epoch, record.epochs_run);
    Ok(())
}

fn same_set<T: PartialOrd + Copy>(a: &[T], b: &[T]) -> bool {
    a.len() == b.len() && a.iter().all(|x| b.contains(x)) && b.iter().all(|x| a.contains(x))
}

fn matrix_run<T: Scalar>(cfg: &CliConfig, a: &MatrixRunArgs) -> Result<()> {
    let (paper_archs, paper_losses, paper_lrs) = paper_factors();
    let archs = a.archs.clone().unwrap_or_else(|| paper_archs.clone());
    let losses = a.losses.clone().unwrap_or_else(|| paper_losses.clone());
    let lrs = a.lrs.clone().unwrap_or_else(|| paper_lrs.clone());
    if cfg.paper_faithful {
        if !same_set(&archs, &paper_archs) || !same_set(&losses, &paper_losses) {
            return Err(invalid("paper-faithful mode requires all nine architectures and all five losses"));
        }
        if !same_set(&lrs, &PAPER_LEARNING_RATES) {
            return Err(invalid(format!("paper-faithful mode requires learning rates {PAPER_LEARNING_RATES:?}")));
        }
    }
    let ds = load_dataset(cfg)?;
    let template = a.knobs.template();
    let mut configs = Vec::new();
    for &setting in &a.settings {
        configs.extend(enumerate_matrix(setting, &archs, &losses, &lrs, &template, cfg.global_seed)?);
    }
    let options = RunOptions { jobs: cfg.jobs, resume: a.resume, stop_after: a.stop_after };
    let manifest = run_matrix::<T>(&ds, &cfg.runs_dir, &configs, cfg.global_seed, options, |p| println!("{p}"))?;
    let failed = configs.iter().filter_map(|c| manifest.find(c)).filter(|r| !r.is_success()).count();
    println!("manifest: {} ({} records, {failed} diverged)", MatrixManifest::path(&cfg.runs_dir).display(), manifest.all_records().count());
    Ok(())
}

/// Dataset, normalisation statistics and manifest for the read-only
/// commands.
struct Workspace {
    cfg: CliConfig,
    dataset: Dataset,
    stats: NormStats,
    manifest: MatrixManifest,
}

impl Workspace {
    fn open(cfg: &CliConfig) -> Result<Self> {
        let dataset = load_dataset(cfg)?;
        let stats = fit_norm_stats(&dataset.train()?)?;
        let manifest = MatrixManifest::load(&cfg.runs_dir)?.ok_or_else(|| {
            invalid(format!("no manifest in {}; run `slidens matrix run` first", cfg.runs_dir.display()))
        })?;
        if manifest.dataset_fingerprint != dataset.fingerprint() {
            return Err(Error::Fingerprint {
                expected: manifest.dataset_fingerprint.clone(),
                found: dataset.fingerprint().to_string(),
            });
        }
        Ok(Self { cfg: cfg.clone(), dataset, stats, manifest })
    }

    fn ranked(&self, setting: BandSetting) -> Result<Vec<ModelRecord>> {
        rank_models(self.manifest.records(setting), setting)
    }

    /// The named scene, or every test scene.
    fn scenes(&self, id: Option<&str>) -> Result<Vec<&Scene>> {
        match id {
            Some(id) => Ok(vec![self.dataset.scene(id)?]),
            None => self.dataset.test(),
        }
    }

    /// The named scene, or the test scene when there is exactly one.
    fn one_scene(&self, id: Option<&str>) -> Result<&Scene> {
        one_scene(&self.dataset, id)
    }

    fn sweep<T: Scalar>(&self, ranked: &[ModelRecord], scenes: &[&Scene], ks: &[usize]) -> Result<Vec<(usize, EvalReport)>> {
        sweep_reports::<T>(ranked, scenes, &self.stats, &self.cfg.runs_dir, ks, tiles(ranked))
    }
}

fn one_scene<'d>(ds: &'d Dataset, id: Option<&str>) -> Result<&'d Scene> {
    match id {
        Some(id) => ds.scene(id),
        None => match ds.test()?.as_slice() {
            [only] => Ok(only),
            many => Err(invalid(format!("the test split has {} scenes; choose one with --scene", many.len()))),
        },
    }
}

/// Prediction tiles of the best-ranked model's validation.
fn tiles(ranked: &[ModelRecord]) -> TileOptions {
    ranked.first().map_or_else(TileOptions::default, |r| TileOptions { tile: r.config.val_tile, stride: r.config.val_tile })
}

/// One row of `rank --json`.
#[derive(Serialize)]
struct RankRow {
    rank: usize,
    config_id: String,
    arch: ArchName,
    loss: LossName,
    lr: f64,
    val_f1: f64,
    test: Option<EvalReport>,
}

fn rank<T: Scalar>(cfg: &CliConfig, a: &RankArgs) -> Result<()> {
    let ws = Workspace::open(cfg)?;
    let ranked = ws.ranked(a.setting)?;
    let shown = a.top.unwrap_or(ranked.len()).min(ranked.len());
    let scenes = if a.no_test { Vec::new() } else { ws.dataset.test()? };
    let mut rows = Vec::with_capacity(shown);
    for (i, r) in ranked[..shown].iter().enumerate() {
        let test = if a.no_test {
            None
        } else {
            Some(ws.sweep::<T>(std::slice::from_ref(r), &scenes, &[1])?[0].1)
        };
        let c = &r.config;
        rows.push(RankRow {
            rank: i + 1,
            config_id: c.config_id(),
            arch: c.arch,
            loss: c.loss.name,
            lr: c.learning_rate,
            val_f1: r.best_val_f1,
            test,
        });
    }
    println!(
        "{:>4}  {:>6}  {:<11} {:>6}  {:<11} {:>6}  {:>6}  {:>7}",
        "rank", "val_f1", "loss", "lr", "arch", "test_P", "test_R", "test_F1"
    );
    for r in &rows {
        let mut line =
            format!("{:>4}  {:>6.3}  {:<11} {:>6}  {:<11}", r.rank, r.val_f1, r.loss.name(), r.lr, r.arch.name());
        match &r.test {
            Some(t) => {
                let _ = write!(line, " {:>6.3}  {:>6.3}  {:>7.3}", t.scores.precision, t.scores.recall, t.scores.f1);
            }
            None => line.push_str("      -       -        -"),
        }
        println!("{line}");
    }
    if let Some(path) = &a.json {
        write_json_atomic(path, &rows)?;
    }
    Ok(())
}

fn predict<T: Scalar>(cfg: &CliConfig, a: &PredictArgs) -> Result<()> {
    let ws = Workspace::open(cfg)?;
    let ranked = ws.ranked(a.setting)?;
    let scene = ws.one_scene(a.scene.as_deref())?;
    let mut spec = EnsembleSpec::top_k(&ranked, a.top)?;
    spec.threshold = a.threshold;
    spec.combine = if a.vote { Combine::MajorityVote } else { Combine::Mean };
    let map = ensemble_predict::<T>(&spec, scene, &ws.stats, &cfg.runs_dir, tiles(&ranked))?;
    write_probability_raster(&map, scene.valid(), a.threshold, &a.out)?;
    println!(
        "wrote {} (+ {}) for scene {} from {} members",
        a.out.display(),
        probability_sidecar_path(&a.out).display(),
        scene.id(),
        spec.k
    );
    Ok(())
}

fn eval(cfg: &CliConfig, a: &EvalArgs) -> Result<()> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(invalid(format!("threshold must lie in (0, 1), got {}", a.threshold)));
    }
    let ds = load_dataset(cfg)?;
    let scene = one_scene(&ds, a.scene.as_deref())?;
    let raster = read_raw(&a.pred)?;
    if raster.header.id != scene.id() {
        log::warn!("prediction was made for scene {}, scoring against {}", raster.header.id, scene.id());
    }
    let probs = raster.planes.first().ok_or_else(|| invalid("prediction raster has no bands"))?;
    let pred: Vec<u8> = probs.iter().map(|&p| u8::from(f64::from(p) >= a.threshold)).collect();
    let report = EvalReport::from(confusion(&pred, scene.label(), scene.valid())?);
    let s = &report.scores;
    println!("precision={:.4} recall={:.4} f1={:.4} frequency_bias={:.4}", s.precision, s.recall, s.f1, s.frequency_bias);
    if let Some(path) = &a.json {
        write_json_atomic(path, &report)?;
    }
    Ok(())
}

/// For every setting, the test report of each size in `sizes` plus size 1,
/// pooled over the test split. Sizes beyond the number of models are
/// skipped with a warning.
fn size_reports<T: Scalar>(
    ws: &Workspace,
    settings: &[BandSetting],
    sizes: &[usize],
) -> Result<BTreeMap<BandSetting, Vec<(usize, EvalReport)>>> {
    let scenes = ws.dataset.test()?;
    let mut out = BTreeMap::new();
    for &setting in settings {
        let ranked = ws.ranked(setting)?;
        let mut ks = vec![1];
        for &k in sizes {
            if k > ranked.len() {
                log::warn!("{setting}: only {} models, skipping ensemble size {k}", ranked.len());
            } else if k > 1 {
                ks.push(k);
            }
        }
        out.insert(setting, ws.sweep::<T>(&ranked, &scenes, &ks)?);
    }
    Ok(out)
}

fn improvements<T: Scalar>(cfg: &CliConfig, a: &ImprovementArgs) -> Result<()> {
    let mut rows: Vec<ImprovementRow> = match &a.from {
        Some(path) => {
            let rows: Vec<ImprovementRow> = read_json(path)?;
            rows.into_iter().filter(|r| a.settings.contains(&r.setting)).collect()
        }
        None => {
            let ws = Workspace::open(cfg)?;
            size_reports::<T>(&ws, &a.settings, &a.sizes)?
                .into_iter()
                .map(|(setting, reports)| ImprovementRow {
                    setting,
                    single_f1: reports[0].1.scores.f1,
                    ensembles: reports
                        .iter()
                        .filter(|(k, _)| a.sizes.contains(k))
                        .map(|(k, r)| SizedScore { k: *k, f1: r.scores.f1, improvement_pct: None })
                        .collect(),
                })
                .collect()
        }
    };
    fill_improvements(&mut rows)?;
    print!("{}", format_table(&rows));
    if let Some(path) = &a.json {
        write_json_atomic(path, &rows)?;
    }
    Ok(())
}

fn diagram<T: Scalar>(cfg: &CliConfig, a: &DiagramArgs) -> Result<()> {
    let ws = Workspace::open(cfg)?;
    let mut points: Vec<(String, SkillScores)> = Vec::new();
    for (setting, reports) in size_reports::<T>(&ws, &a.settings, &a.sizes)? {
        for (k, r) in reports {
            let name = if k == 1 { format!("{setting} single") } else { format!("{setting} ens({k})") };
            points.push((name, r.scores));
        }
    }
    write_json_atomic(&a.out, &diagram_data(&points))?;
    println!("wrote {} with {} points", a.out.display(), points.len());
    Ok(())
}

fn sweep<T: Scalar>(cfg: &CliConfig, a: &SweepArgs) -> Result<()> {
    let ws = Workspace::open(cfg)?;
    let ranked = ws.ranked(a.setting)?;
    if a.kmax == 0 {
        return Err(invalid("kmax must be at least 1"));
    }
    let kmax = a.kmax.min(ranked.len());
    if kmax < a.kmax {
        log::warn!("{}: only {} models, sweeping up to {kmax}", a.setting, ranked.len());
    }
    let scenes = ws.scenes(a.scene.as_deref())?;
    let ks: Vec<usize> = (1..=kmax).collect();
    let mut csv = String::from("k,precision,recall,f1,tp,fp,fn,tn\n");
    for (k, r) in ws.sweep::<T>(&ranked, &scenes, &ks)? {
        let (s, c) = (r.scores, r.counts);
        let _ = writeln!(csv, "{k},{},{},{},{},{},{},{}", s.precision, s.recall, s.f1, c.tp, c.fp, c.fn_, c.tn);
    }
    write_atomic(&a.out, csv.as_bytes())?;
    println!("wrote {} ({kmax} sizes)", a.out.display());
    Ok(())
}

fn render_diff<T: Scalar>(
    cfg: &CliConfig,
    setting: BandSetting,
    top: usize,
    scene: Option<&str>,
    out: &Path,
    threshold: f64,
) -> Result<()> {
    let ws = Workspace::open(cfg)?;
    let ranked = ws.ranked(setting)?;
    let scene = ws.one_scene(scene)?;
    let binary = |k: usize| -> Result<Vec<u8>> {
        let spec = EnsembleSpec::top_k(&ranked, k)?;
        binarize(&ensemble_predict::<T>(&spec, scene, &ws.stats, &cfg.runs_dir, tiles(&ranked))?, threshold)
    };
    let (single, ens) = (binary(1)?, binary(top)?);
    let map = diff_map(scene.label(), &single, &ens, scene.valid(), scene.width(), scene.height())?;
    write_diff_png(&map, out)?;
    for e in legend(&map).iter().filter(|e| e.pixels > 0) {
        println!("{:<10} {:>8}  {}", e.color_name, e.pixels, e.description);
    }
    println!("wrote {} (+ {})", out.display(), legend_path(out).display());
    Ok(())
}

fn render_diagram_file(spec: &slidens_core::metrics::DiagramSpec, out: &Path) -> Result<()> {
    render_diagram(spec, out)?;
    println!("wrote {}", out.display());
    Ok(())
}
