use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{streams, ExperimentConfig};
use super::report;
use super::sim::{home_state, rollout, simulate_demo, Rollout};
use super::tasks::{Evaluation, TaskDefinition};
use crate::error::{Error, Result};
use crate::io::{create_file, load_demonstration, open_file, save_demonstration, write_demonstration, ArtifactMeta};
use crate::models::{
    select_primitives, train_baseline, train_learning_upper, train_lower_bank, train_ltof, train_sampling_upper,
    BaselineController, Controller, ControllerKind, LToFModel, LearningController, LowerBank, PlaybackController,
    SamplingController, StepOutput, UpperModel,
};
use crate::nn::Mlp;
use crate::seeding::{derive_seed, stream_rng};
use crate::segmentation::{build_primitive_sets, datasets_from_index, export_primitive_sets, read_segment_index};
use crate::state::{Demonstration, NormStats, RobotState, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Collect,
    Segment,
    TrainLower,
    TrainUpper,
    TrainLtof,
    Run,
    EvalReport,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Collect,
        Stage::Segment,
        Stage::TrainLower,
        Stage::TrainUpper,
        Stage::TrainLtof,
        Stage::Run,
        Stage::EvalReport,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Collect => "collect",
            Stage::Segment => "segment",
            Stage::TrainLower => "train-lower",
            Stage::TrainUpper => "train-upper",
            Stage::TrainLtof => "train-ltof",
            Stage::Run => "run",
            Stage::EvalReport => "eval-report",
        }
    }

    pub fn execute(&self, cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
        let layout = Layout::new(out);
        match self {
            Stage::Collect => collect(cfg, &layout),
            Stage::Segment => segment(cfg, &layout),
            Stage::TrainLower => train_lower(cfg, &layout),
            Stage::TrainUpper => train_upper(cfg, &layout),
            Stage::TrainLtof => train_ltof_stage(cfg, &layout),
            Stage::Run => run(cfg, &layout),
            Stage::EvalReport => report::eval_report(cfg, &layout),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage {s:?}")))
    }
}

/// Runs every stage in order.
pub fn run_all(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Manifest>> {
    Stage::ALL.iter().map(|s| s.execute(cfg, out)).collect()
}

/// Where each stage reads and writes under the output root.
#[derive(Clone, Debug)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Layout {
            root: root.to_path_buf(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn demos(&self) -> PathBuf {
        self.root.join("demos")
    }

    pub fn demo(&self, task: &str) -> PathBuf {
        self.demos().join(format!("{task}.csv"))
    }

    pub fn primitives(&self) -> PathBuf {
        self.root.join("primitives")
    }

    pub fn segment_index(&self) -> PathBuf {
        self.primitives().join("segments.csv")
    }

    pub fn norm(&self) -> PathBuf {
        self.primitives().join("norm.json")
    }

    pub fn lower(&self) -> PathBuf {
        self.root.join("models/lower")
    }

    pub fn upper(&self) -> PathBuf {
        self.root.join("models/upper")
    }

    pub fn upper_model(&self, evaluation: &str, file: &str) -> PathBuf {
        self.upper().join(evaluation).join(file)
    }

    pub fn ltof(&self) -> PathBuf {
        self.root.join("models/ltof/ltof.json")
    }

    pub fn runs(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn run_cell(&self, evaluation: &str, controller: ControllerKind) -> PathBuf {
        self.runs().join(evaluation).join(controller.name())
    }

    pub fn results(&self) -> PathBuf {
        self.runs().join("results.csv")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }

    fn relative(&self, p: &Path) -> String {
        p.strip_prefix(&self.root)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

/// Sidecar record written by every stage next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    #[serde(flatten)]
    pub meta: ArtifactMeta,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

pub(crate) fn write_manifest(
    cfg: &ExperimentConfig,
    layout: &Layout,
    stage: Stage,
    dir: &Path,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<Manifest> {
    let m = Manifest {
        stage: stage.name().into(),
        meta: cfg.meta()?,
        inputs: inputs.iter().map(|p| layout.relative(p)).collect(),
        outputs: outputs.iter().map(|p| layout.relative(p)).collect(),
    };
    let mut w = create_file(&dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut w, &m)?;
    std::io::Write::write_all(&mut w, b"\n").map_err(|e| Error::io("writing manifest", e))?;
    Ok(m)
}

pub(crate) fn require(stage: Stage, producer: Stage, path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingPrerequisite {
            stage: stage.name(),
            producer: producer.name(),
            path: path.to_path_buf(),
        })
    }
}

fn load_demo(stage: Stage, layout: &Layout, task: &str) -> Result<Demonstration> {
    let path = layout.demo(task);
    require(stage, Stage::Collect, &path)?;
    load_demonstration(&path)
}

fn primitive_demos(stage: Stage, cfg: &ExperimentConfig, layout: &Layout) -> Result<Vec<(String, Demonstration)>> {
    cfg.primitive_tasks()
        .map(|t| Ok((t.name.clone(), load_demo(stage, layout, &t.name)?)))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct NormFile {
    norm: NormStats,
    meta: ArtifactMeta,
}

fn load_norm(stage: Stage, layout: &Layout) -> Result<NormStats> {
    let path = layout.norm();
    require(stage, Stage::Segment, &path)?;
    let f: NormFile = serde_json::from_reader(std::io::BufReader::new(open_file(&path)?))?;
    Ok(f.norm)
}

/// Scripted teleoperation of every task. Primitive demonstrations must
/// complete their task.
fn collect(cfg: &ExperimentConfig, layout: &Layout) -> Result<Manifest> {
    let mut outputs = Vec::new();
    for task in &cfg.tasks {
        let (demo, scene) = simulate_demo(cfg, task).map_err(|e| match e {
            Error::DynamicsDiverged => Error::TaskDiverged(task.name.clone()),
            other => other,
        })?;
        if !crate::plant::task_success(&scene) {
            return Err(Error::invalid(format!(
                "scripted demonstration of task {} did not place its objects",
                task.name
            )));
        }
        let path = layout.demo(&task.name);
        save_demonstration(&path, &demo)?;
        outputs.push(path);
    }
    write_manifest(cfg, layout, Stage::Collect, &layout.demos(), &[], &outputs)
}

/// Splits primitive demonstrations into datasets and fixes the shared
/// normalization.
fn segment(cfg: &ExperimentConfig, layout: &Layout) -> Result<Manifest> {
    let demos = primitive_demos(Stage::Segment, cfg, layout)?;
    let sets = build_primitive_sets(&demos, &cfg.segment_spec())?;
    let dir = layout.primitives();
    export_primitive_sets(&dir, &sets)?;
    let norm = NormStats::from_trajectories(demos.iter().flat_map(|(_, d)| [&d.leader, &d.follower]))?;
    serde_json::to_writer_pretty(
        create_file(&layout.norm())?,
        &NormFile {
            norm,
            meta: cfg.meta()?,
        },
    )?;
    let inputs: Vec<PathBuf> = demos.iter().map(|(id, _)| layout.demo(id)).collect();
    let mut outputs = vec![layout.segment_index(), layout.norm()];
    outputs.extend(sets.iter().map(|s| dir.join(crate::segmentation::dataset_file_name(s))));
    write_manifest(cfg, layout, Stage::Segment, &dir, &inputs, &outputs)
}

fn train_lower(cfg: &ExperimentConfig, layout: &Layout) -> Result<Manifest> {
    let stage = Stage::TrainLower;
    let demos = primitive_demos(stage, cfg, layout)?;
    require(stage, Stage::Segment, &layout.segment_index())?;
    let norm = load_norm(stage, layout)?;
    let sets = datasets_from_index(&read_segment_index(&layout.segment_index())?, &demos)?;
    let train = cfg.lower.train.to_train_config(cfg.stream_seed(streams::LOWER));
    let (bank, histories) = train_lower_bank(
        &sets,
        &demos,
        &norm,
        cfg.experiment.horizon,
        &cfg.lower.hidden,
        &cfg.lower.jitter,
        &train,
    )?;
    let dir = layout.lower();
    bank.save(&dir, Some(&cfg.meta()?))?;
    let losses = dir.join("losses.csv");
    let mut w = csv::Writer::from_writer(create_file(&losses)?);
    w.write_record(["demo_id", "segment_index", "final_loss"])?;
    for ((id, seg), h) in bank.labels.iter().zip(&histories) {
        w.write_record([
            id.clone(),
            seg.to_string(),
            h.last().copied().unwrap_or(f64::NAN).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("writing losses.csv", e))?;
    let inputs = vec![layout.segment_index(), layout.norm()];
    write_manifest(cfg, layout, stage, &dir, &inputs, &[dir.join("bank.json"), losses])
}

/// File that registers a demonstration for playback.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaybackRegistration {
    /// Path relative to the output root.
    pub demo: String,
    pub meta: ArtifactMeta,
}

fn train_upper(cfg: &ExperimentConfig, layout: &Layout) -> Result<Manifest> {
    let stage = Stage::TrainUpper;
    let norm = load_norm(stage, layout)?;
    let meta = cfg.meta()?;
    let horizon = cfg.experiment.horizon;
    let shape = &cfg.upper.shape;
    let wants = |k: ControllerKind| cfg.experiment.controllers.contains(&k);
    let bank = if wants(ControllerKind::Learning) {
        require(stage, Stage::TrainLower, &layout.lower().join("bank.json"))?;
        Some(LowerBank::load(&layout.lower())?)
    } else {
        None
    };
    let mut inputs = vec![layout.norm()];
    let mut outputs = Vec::new();
    for (ei, ev) in cfg.evaluations.iter().enumerate() {
        let demo = load_demo(stage, layout, &ev.task)?;
        inputs.push(layout.demo(&ev.task));
        let seed = |s: u64| derive_seed(cfg.seed(), &[s, ei as u64]);
        if wants(ControllerKind::Sampling) {
            let train = cfg.upper.train.to_train_config(seed(streams::UPPER));
            let (m, _) = train_sampling_upper(&demo, &norm, horizon, shape, &train)?;
            let p = layout.upper_model(&ev.name, "sampling.json");
            m.save(&p, Some(&meta))?;
            outputs.push(p);
        }
        if wants(ControllerKind::Baseline) {
            let ut = cfg.upper.train.to_train_config(seed(streams::BASELINE));
            let lt = cfg
                .baseline
                .train
                .to_train_config(derive_seed(seed(streams::BASELINE), &[1]));
            let (upper, lower, _, _) = train_baseline(
                &demo,
                &norm,
                horizon,
                shape,
                &cfg.baseline.hidden,
                &cfg.baseline.jitter,
                &ut,
                &lt,
            )?;
            let up = layout.upper_model(&ev.name, "baseline_upper.json");
            let lp = layout.upper_model(&ev.name, "baseline_lower.json");
            upper.save(&up, Some(&meta))?;
            std::fs::write(&lp, lower.to_json(Some(&meta))?)
                .map_err(|e| Error::io(format!("writing {}", lp.display()), e))?;
            outputs.extend([up, lp]);
        }
        if let Some(bank) = &bank {
            let chosen = select_primitives(bank.len(), cfg.learning.primitives);
            let subset = bank.subset(&chosen)?;
            let train = cfg.learning.train.to_train_config(seed(streams::LEARNING));
            let (m, _) = train_learning_upper(&demo, &subset, chosen, shape, cfg.learning.mix_stride, &train)?;
            let p = layout.upper_model(&ev.name, "learning.json");
            m.save(&p, Some(&meta))?;
            outputs.push(p);
        }
        if wants(ControllerKind::Playback) {
            let p = layout.upper_model(&ev.name, "playback.json");
            let reg = PlaybackRegistration {
                demo: layout.relative(&layout.demo(&ev.task)),
                meta: meta.clone(),
            };
            serde_json::to_writer_pretty(create_file(&p)?, &reg)?;
            outputs.push(p);
        }
    }
    if bank.is_some() {
        inputs.push(layout.lower().join("bank.json"));
    }
    std::fs::create_dir_all(layout.upper()).map_err(|e| Error::io("creating upper dir", e))?;
    write_manifest(cfg, layout, stage, &layout.upper(), &inputs, &outputs)
}

fn train_ltof_stage(cfg: &ExperimentConfig, layout: &Layout) -> Result<Manifest> {
    let stage = Stage::TrainLtof;
    let demos = primitive_demos(stage, cfg, layout)?;
    let norm = load_norm(stage, layout)?;
    let only: Vec<Demonstration> = demos.iter().map(|(_, d)| d.clone()).collect();
    let train = cfg.ltof.train.to_train_config(cfg.stream_seed(streams::LTOF));
    let (m, _) = train_ltof(&only, &norm, &cfg.ltof.hidden, &train)?;
    let path = layout.ltof();
    m.save(&path, Some(&cfg.meta()?))?;
    let mut inputs: Vec<PathBuf> = demos.iter().map(|(id, _)| layout.demo(id)).collect();
    inputs.push(layout.norm());
    write_manifest(cfg, layout, stage, &layout.root().join("models/ltof"), &inputs, &[path])
}

/// Any of the four controllers behind one cloneable type.
#[derive(Clone, Debug)]
pub enum AnyController {
    Baseline(BaselineController),
    Learning(LearningController),
    Sampling(SamplingController),
    Playback(PlaybackController),
}

impl Controller for AnyController {
    fn kind(&self) -> ControllerKind {
        match self {
            AnyController::Baseline(c) => c.kind(),
            AnyController::Learning(c) => c.kind(),
            AnyController::Sampling(c) => c.kind(),
            AnyController::Playback(c) => c.kind(),
        }
    }

    fn reset(&mut self, seed: u64) {
        match self {
            AnyController::Baseline(c) => c.reset(seed),
            AnyController::Learning(c) => c.reset(seed),
            AnyController::Sampling(c) => c.reset(seed),
            AnyController::Playback(c) => c.reset(seed),
        }
    }

    fn step(&mut self, tick: usize, follower: &RobotState) -> Result<StepOutput> {
        match self {
            AnyController::Baseline(c) => c.step(tick, follower),
            AnyController::Learning(c) => c.step(tick, follower),
            AnyController::Sampling(c) => c.step(tick, follower),
            AnyController::Playback(c) => c.step(tick, follower),
        }
    }
}

/// Trained artifacts shared by every evaluation.
struct Shared {
    bank: Option<LowerBank>,
    ltof: Option<LToFModel>,
}

fn load_upper(stage: Stage, path: &Path) -> Result<UpperModel> {
    require(stage, Stage::TrainUpper, path)?;
    UpperModel::load(path)
}

/// Loads the artifacts a controller needs for one evaluation.
pub fn load_controller(
    cfg: &ExperimentConfig,
    out: &Path,
    evaluation: &Evaluation,
    kind: ControllerKind,
) -> Result<AnyController> {
    let layout = Layout::new(out);
    let shared = load_shared(&layout, &[kind])?;
    build_controller(cfg, &layout, &shared, evaluation, kind)
}

fn load_shared(layout: &Layout, kinds: &[ControllerKind]) -> Result<Shared> {
    let stage = Stage::Run;
    let needs_bank = kinds.iter().any(|k| {
        matches!(
            k,
            ControllerKind::Learning | ControllerKind::Sampling | ControllerKind::Playback
        )
    });
    let needs_ltof = kinds
        .iter()
        .any(|k| matches!(k, ControllerKind::Sampling | ControllerKind::Playback));
    let bank = if needs_bank {
        require(stage, Stage::TrainLower, &layout.lower().join("bank.json"))?;
        Some(LowerBank::load(&layout.lower())?)
    } else {
        None
    };
    let ltof = if needs_ltof {
        require(stage, Stage::TrainLtof, &layout.ltof())?;
        Some(LToFModel::load(&layout.ltof())?)
    } else {
        None
    };
    Ok(Shared { bank, ltof })
}

fn build_controller(
    cfg: &ExperimentConfig,
    layout: &Layout,
    shared: &Shared,
    ev: &Evaluation,
    kind: ControllerKind,
) -> Result<AnyController> {
    let stage = Stage::Run;
    let bank = || shared.bank.clone().ok_or(Error::NoData);
    let ltof = || shared.ltof.clone().ok_or(Error::NoData);
    Ok(match kind {
        ControllerKind::Baseline => {
            let upper = load_upper(stage, &layout.upper_model(&ev.name, "baseline_upper.json"))?;
            let lp = layout.upper_model(&ev.name, "baseline_lower.json");
            require(stage, Stage::TrainUpper, &lp)?;
            let text = std::fs::read_to_string(&lp).map_err(|e| Error::io(format!("reading {}", lp.display()), e))?;
            AnyController::Baseline(BaselineController::new(upper, Mlp::from_json(&text)?)?)
        }
        ControllerKind::Learning => {
            let upper = load_upper(stage, &layout.upper_model(&ev.name, "learning.json"))?;
            let subset = bank()?.subset(&upper.primitives)?;
            AnyController::Learning(LearningController::new(upper, subset)?)
        }
        ControllerKind::Sampling => {
            let upper = load_upper(stage, &layout.upper_model(&ev.name, "sampling.json"))?;
            AnyController::Sampling(SamplingController::new(
                upper,
                bank()?,
                ltof()?,
                cfg.cost.clone(),
                cfg.ce_config(),
            )?)
        }
        ControllerKind::Playback => {
            let reg_path = layout.upper_model(&ev.name, "playback.json");
            require(stage, Stage::TrainUpper, &reg_path)?;
            let reg: PlaybackRegistration = serde_json::from_reader(std::io::BufReader::new(open_file(&reg_path)?))?;
            let demo_path = layout.root().join(&reg.demo);
            require(stage, Stage::Collect, &demo_path)?;
            let demo = load_demonstration(&demo_path)?;
            AnyController::Playback(PlaybackController::new(
                demo.follower,
                bank()?,
                ltof()?,
                cfg.cost.clone(),
                cfg.ce_config(),
            )?)
        }
    })
}

/// Per-trial seed shared by every controller, so all controllers face the
/// same perturbed scenes.
pub fn trial_seed(cfg: &ExperimentConfig, evaluation_index: usize, trial: usize) -> u64 {
    derive_seed(cfg.seed(), &[streams::TRIAL, evaluation_index as u64, trial as u64])
}

/// Runs one closed-loop trial of `controller` on `task`.
pub fn run_trial(
    cfg: &ExperimentConfig,
    task: &TaskDefinition,
    perturbation: f64,
    controller: &mut dyn Controller,
    seed: u64,
) -> Result<Rollout> {
    let op = task.operator(&cfg.plant, &cfg.script, cfg.operator.kp, cfg.operator.kd)?;
    let mut rng = stream_rng(seed, &[0]);
    let scene = task.perturbed_scene(&cfg.gripper, perturbation, &mut rng);
    controller.reset(seed);
    Ok(rollout(controller, cfg, scene, home_state(&op), task.ticks(&cfg.plant)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub evaluation: String,
    pub task: String,
    pub controller: ControllerKind,
    pub trial: usize,
    pub success: bool,
    /// m
    pub placement_error: f64,
    pub diverged: bool,
    pub ticks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub trial: usize,
    pub tick: usize,
    pub entropy: f64,
    pub min_cost: f64,
    pub effective_samples: f64,
    pub candidates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub trial: usize,
    pub tick: usize,
    pub latency_ms: f64,
}

/// Recorded trial as a demonstration: follower states and, as the leader
/// track, the command applied over each preceding period.
pub fn rollout_trajectory(r: &Rollout, dt: f64) -> Result<Demonstration> {
    let m = r.follower.len();
    let mut leader = Vec::with_capacity(m);
    leader.push(r.follower[0].clone());
    leader.extend(r.commands.iter().take(m - 1).cloned());
    Demonstration::new(Trajectory::new(dt, leader)?, Trajectory::new(dt, r.follower.clone())?)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

fn run(cfg: &ExperimentConfig, layout: &Layout) -> Result<Manifest> {
    let stage = Stage::Run;
    let kinds = &cfg.experiment.controllers;
    let shared = load_shared(layout, kinds)?;
    let dt = cfg.plant.control_period;
    let mut records = Vec::new();
    let mut outputs = Vec::new();
    let mut inputs = Vec::new();
    for (ei, ev) in cfg.evaluations.iter().enumerate() {
        let task = cfg
            .task(&ev.task)
            .ok_or_else(|| Error::invalid(format!("unknown task {:?}", ev.task)))?;
        for &kind in kinds {
            let proto = build_controller(cfg, layout, &shared, ev, kind)?;
            let rollouts: Vec<Result<Rollout>> = (0..cfg.experiment.trials)
                .into_par_iter()
                .map(|i| {
                    let mut c = proto.clone();
                    run_trial(cfg, task, ev.perturbation, &mut c, trial_seed(cfg, ei, i))
                })
                .collect();
            let cell = layout.run_cell(&ev.name, kind);
            let mut diags = Vec::new();
            let mut lats = Vec::new();
            for (i, r) in rollouts.into_iter().enumerate() {
                let r = r?;
                let path = cell.join(format!("trial_{i:02}.csv"));
                write_demonstration(create_file(&path)?, &rollout_trajectory(&r, dt)?)?;
                outputs.push(path);
                for (tick, d) in r.diagnostics.iter().enumerate() {
                    if let Some(d) = d {
                        diags.push(DiagnosticRecord {
                            trial: i,
                            tick,
                            entropy: d.entropy,
                            min_cost: d.min_cost,
                            effective_samples: d.effective_samples,
                            candidates: d.candidates,
                        });
                    }
                }
                lats.extend(r.latencies.iter().enumerate().map(|(tick, s)| LatencyRecord {
                    trial: i,
                    tick,
                    latency_ms: s * 1e3,
                }));
                records.push(TrialRecord {
                    evaluation: ev.name.clone(),
                    task: task.name.clone(),
                    controller: kind,
                    trial: i,
                    success: r.success(),
                    placement_error: r.scene.mean_placement_error(),
                    diverged: r.diverged,
                    ticks: r.follower.len(),
                });
            }
            if !diags.is_empty() {
                write_rows(&cell.join("diagnostics.csv"), &diags)?;
                outputs.push(cell.join("diagnostics.csv"));
            }
            write_rows(&cell.join("latency.csv"), &lats)?;
            outputs.push(cell.join("latency.csv"));
        }
        inputs.push(layout.upper().join(&ev.name));
    }
    write_rows(&layout.results(), &records)?;
    let summary = report::SuccessTable::from_records(&records);
    summary.write_csv(&layout.runs().join("summary.csv"))?;
    std::fs::write(layout.runs().join("summary.txt"), summary.to_text())
        .map_err(|e| Error::io("writing summary.txt", e))?;
    outputs.extend([
        layout.results(),
        layout.runs().join("summary.csv"),
        layout.runs().join("summary.txt"),
    ]);
    write_manifest(cfg, layout, stage, &layout.runs(), &inputs, &outputs)
}

pub fn read_trial_records(path: &Path) -> Result<Vec<TrialRecord>> {
    read_rows(path)
}

pub(crate) fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(open_file(path)?);
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

/// Files whose content depends on wall-clock timing.
pub fn is_timing_artifact(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with("latency"))
}
