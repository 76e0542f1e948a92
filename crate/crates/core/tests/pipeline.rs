use std::path::Path;

use primix::harness::{
    read_report, read_trial_records, run_all, run_trial, simulate_demo, ExperimentConfig, Layout, Manifest, Stage,
};
use primix::models::{train_baseline, BaselineController, Controller, ControllerKind};
use primix::NormStats;

fn quick_config() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(
        r#"
        [experiment]
        trials = 2

        [lower.train]
        epochs = 3

        [upper.shape]
        phases = 2

        [upper.train]
        epochs = 2

        [learning.train]
        epochs = 1

        [baseline.train]
        epochs = 3

        [ltof.train]
        epochs = 3
        "#,
    )
    .unwrap()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn quick_run_writes_every_artifact() {
    let cfg = quick_config();
    let dir = tempfile::tempdir().unwrap();
    let manifests = run_all(&cfg, dir.path()).unwrap();
    assert_eq!(manifests.len(), Stage::ALL.len());

    let layout = Layout::new(dir.path());
    let hash = cfg.hash().unwrap();
    for d in [
        layout.demos(),
        layout.primitives(),
        layout.lower(),
        layout.ltof().parent().unwrap().to_path_buf(),
        layout.upper(),
        layout.runs(),
        layout.report(),
    ] {
        let m = manifest(&d);
        assert_eq!(m.meta.config_hash, hash, "{}", d.display());
        for out in &m.outputs {
            assert!(
                Path::new(out).exists() || dir.path().join(out).exists(),
                "{out} missing"
            );
        }
    }

    let records = read_trial_records(&layout.results()).unwrap();
    assert_eq!(
        records.len(),
        cfg.evaluations.len() * ControllerKind::ALL.len() * cfg.experiment.trials
    );
    let (rows, latency) = read_report(dir.path()).unwrap();
    assert!(rows.iter().all(|r| r.successes <= r.trials));
    assert!(latency.iter().all(|r| r.p50_ms <= r.p95_ms && r.p95_ms <= r.max_ms));
    for ev in &cfg.evaluations {
        for k in ControllerKind::ALL {
            assert!(layout.run_cell(&ev.name, k).join("trial_00.csv").is_file());
        }
    }
}

#[test]
fn later_stage_needs_earlier_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let err = Stage::TrainLower.execute(&quick_config(), dir.path()).unwrap_err();
    assert_eq!(err.kind(), "missing_prerequisite");
}

#[test]
fn stages_rerun_in_isolation() {
    let cfg = quick_config();
    let dir = tempfile::tempdir().unwrap();
    for s in [Stage::Collect, Stage::Segment] {
        s.execute(&cfg, dir.path()).unwrap();
    }
    let index = Layout::new(dir.path()).segment_index();
    let first = std::fs::read(&index).unwrap();
    Stage::Segment.execute(&cfg, dir.path()).unwrap();
    assert_eq!(first, std::fs::read(&index).unwrap());
}

#[test]
fn baseline_reproduces_its_demo() {
    let cfg = ExperimentConfig::default();
    let task = cfg.task("right_to_left").unwrap();
    let demos: Vec<_> = cfg
        .primitive_tasks()
        .map(|t| simulate_demo(&cfg, t).unwrap().0)
        .collect();
    let norm = NormStats::from_trajectories(demos.iter().flat_map(|d| [&d.leader, &d.follower])).unwrap();
    let (demo, _) = simulate_demo(&cfg, task).unwrap();
    let (upper, lower, _, _) = train_baseline(
        &demo,
        &norm,
        cfg.experiment.horizon,
        &cfg.upper.shape,
        &cfg.baseline.hidden,
        &cfg.baseline.jitter,
        &cfg.upper.train.to_train_config(1),
        &cfg.baseline.train.to_train_config(2),
    )
    .unwrap();
    let mut c = BaselineController::new(upper, lower).unwrap();
    c.reset(0);
    let r = run_trial(&cfg, task, 0.0, &mut c, 0).unwrap();
    assert!(!r.diverged);
    let leader = demo.leader.states();
    let (mut se, mut n) = (0.0, 0);
    for (k, cmd) in r.commands.iter().enumerate() {
        for j in 0..cmd.theta.len() {
            se += (cmd.theta[j] - leader[k + 1].theta[j]).powi(2);
            n += 1;
        }
    }
    let rms = (se / n as f64).sqrt();
    assert!(rms < 0.05, "RMS θ error {rms}");
    assert!(r.success());
}
