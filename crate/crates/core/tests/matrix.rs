use std::path::Path;

use slidens_core::losses::{LossConfig, LossName};
use slidens_core::matrix::{enumerate_matrix, run_matrix, session_seed, MatrixManifest, Progress, RunOptions};
use slidens_core::scene::{synth_dataset, BandSetting, Dataset, SynthSpec};
use slidens_core::trainer::{ModelRecord, TrainConfig};
use slidens_core::zoo::ArchName;

fn dataset(dir: &Path, seed: u64) -> Dataset {
    let spec = SynthSpec { height: 64, width: 64, blob_count: (1, 3), blob_radius: (2.0, 5.0), sar_clutter: 2, ..SynthSpec::default() };
    synth_dataset(dir, 6, seed, &spec).unwrap();
    Dataset::load(&dir.join("dataset.json")).unwrap()
}

fn template() -> TrainConfig {
    let mut c = TrainConfig::new(ArchName::Unet, LossConfig::default(), 0.001, BandSetting::S2, 0);
    c.width = 4;
    c.depth = 3;
    c.crop_size = 16;
    c.val_tile = 64;
    c.iters_per_epoch = 3;
    c.max_epochs = 2;
    c
}

fn six_configs() -> Vec<TrainConfig> {
    enumerate_matrix(
        BandSetting::S2,
        &[ArchName::Unet, ArchName::Linknet, ArchName::Fpn],
        &[LossName::Dice, LossName::Bce],
        &[0.001],
        &template(),
        7,
    )
    .unwrap()
}

fn run(ds: &Dataset, runs: &Path, configs: &[TrainConfig], options: RunOptions) -> (MatrixManifest, Vec<String>) {
    let mut lines = Vec::new();
    let m = run_matrix::<f32>(ds, runs, configs, 7, options, |p: &Progress<'_>| lines.push(p.to_string())).unwrap();
    (m, lines)
}

fn scores(m: &MatrixManifest) -> Vec<(String, f64)> {
    m.all_records().map(|r| (r.config.config_id(), r.best_val_f1)).collect()
}

#[test]
fn enumeration_is_lexicographic_with_stable_seeds() {
    let configs = six_configs();
    let ids: Vec<String> = configs.iter().map(TrainConfig::config_id).collect();
    assert_eq!(
        ids,
        ["FPN_BCELoss_0.001", "FPN_DiceLoss_0.001", "Linknet_BCELoss_0.001", "Linknet_DiceLoss_0.001", "Unet_BCELoss_0.001", "Unet_DiceLoss_0.001"]
    );
    assert_eq!(configs, six_configs());
    for c in &configs {
        assert_eq!(c.seed, session_seed(7, c.setting, c.arch, c.loss.name, c.learning_rate));
        assert_eq!((c.width, c.iters_per_epoch), (4, 3));
    }
    let seeds: std::collections::BTreeSet<u64> = configs.iter().map(|c| c.seed).collect();
    assert_eq!(seeds.len(), 6);
    assert_ne!(
        session_seed(7, BandSetting::S1, ArchName::Unet, LossName::Dice, 0.001),
        session_seed(7, BandSetting::S2, ArchName::Unet, LossName::Dice, 0.001)
    );
    assert_ne!(
        session_seed(7, BandSetting::S1, ArchName::Unet, LossName::Dice, 0.001),
        session_seed(8, BandSetting::S1, ArchName::Unet, LossName::Dice, 0.001)
    );
}

#[test]
fn run_then_resume_executes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(&tmp.path().join("data"), 1);
    let runs = tmp.path().join("runs");
    let configs = six_configs();
    let (first, lines) = run(&ds, &runs, &configs, RunOptions::default());
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("[1/6] setting=S2 arch="), "{}", lines[0]);
    assert!(lines[5].contains(" lr=0.001 val_f1="), "{}", lines[5]);
    first.check_complete(&configs).unwrap();
    assert_eq!(first.records(BandSetting::S2).len(), 6);
    assert_eq!(MatrixManifest::load(&runs).unwrap().unwrap(), first);

    let (again, lines) = run(&ds, &runs, &configs, RunOptions { resume: true, ..RunOptions::default() });
    assert!(lines.is_empty());
    assert_eq!(again, first);
}

#[test]
fn worker_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(&tmp.path().join("data"), 2);
    let configs = six_configs();
    let (one, _) = run(&ds, &tmp.path().join("j1"), &configs, RunOptions::default());
    let (two, lines) = run(&ds, &tmp.path().join("j2"), &configs, RunOptions { jobs: 2, ..RunOptions::default() });
    assert_eq!(lines.len(), 6);
    assert_eq!(one, two);
}

#[test]
fn interrupted_runs_converge_on_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(&tmp.path().join("data"), 3);
    let configs = six_configs();
    let (full, _) = run(&ds, &tmp.path().join("full"), &configs, RunOptions::default());

    let runs = tmp.path().join("cut");
    let (partial, lines) = run(&ds, &runs, &configs, RunOptions { stop_after: Some(2), ..RunOptions::default() });
    assert_eq!(lines.len(), 2);
    assert!(partial.check_complete(&configs).is_err());
    // a session whose record landed on disk but not in the manifest
    let mut m = MatrixManifest::load(&runs).unwrap().unwrap();
    let orphan: ModelRecord = m.settings.get_mut(&BandSetting::S2).unwrap().remove(0);
    m.save(&runs).unwrap();
    let (resumed, lines) = run(&ds, &runs, &configs, RunOptions { resume: true, jobs: 2, ..RunOptions::default() });
    assert_eq!(lines.len(), 4);
    assert!(resumed.find(&orphan.config).is_some());
    assert_eq!(resumed, full);
    assert_eq!(scores(&resumed), scores(&full));
}

#[test]
fn resume_refuses_a_different_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("runs");
    let configs = &six_configs()[..1];
    let a = dataset(&tmp.path().join("a"), 4);
    run(&a, &runs, configs, RunOptions::default());
    let b = dataset(&tmp.path().join("b"), 5);
    assert_ne!(a.fingerprint(), b.fingerprint());
    let err = run_matrix::<f32>(&b, &runs, configs, 7, RunOptions { resume: true, ..RunOptions::default() }, |_| {})
        .unwrap_err();
    assert!(err.to_string().contains("fingerprint"), "{err}");
    // without resume the old manifest is replaced
    let (fresh, _) = run(&b, &runs, configs, RunOptions::default());
    assert_eq!(fresh.dataset_fingerprint, b.fingerprint());
}

#[test]
fn invalid_runs_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(&tmp.path().join("data"), 6);
    let runs = tmp.path().join("runs");
    let mut configs = six_configs();
    assert!(run_matrix::<f32>(&ds, &runs, &configs, 7, RunOptions { jobs: 0, ..RunOptions::default() }, |_| {}).is_err());
    configs.push(configs[0].clone());
    assert!(run_matrix::<f32>(&ds, &runs, &configs, 7, RunOptions::default(), |_| {}).is_err());
}
