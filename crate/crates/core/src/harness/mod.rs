//! Experiment pipeline: configuration, scripted tasks, simulation and the
//! stages that turn demonstrations into evaluated controllers.
//!
//! Output layout under the `--out` root:
//!
//! ```text
//! demos/<task>.csv                 collect
//! primitives/segments.csv, *.csv   segment (plus norm.json)
//! models/lower/                    train-lower
//! models/upper/<evaluation>/       train-upper
//! models/ltof/ltof.json            train-ltof
//! runs/<evaluation>/<controller>/  run (trial CSVs, diagnostics, latency)
//! runs/results.csv, summary.csv    run
//! report/                          eval-report
//! ```
//!
//! Each stage directory carries a `manifest.json` with the config hash, seed
//! and version. Only files named `latency*` depend on wall-clock time.

mod config;
mod pipeline;
mod report;
mod sim;
mod tasks;

pub use config::{
    CheckThresholds, ExperimentConfig, ExperimentSection, FusionSettings, LearningSection, LowerSection, MlpSection,
    OperatorGains, ScriptTiming, SegmentSettings, TrainSettings, UpperSection, VERSION,
};
pub use pipeline::{
    is_timing_artifact, load_controller, read_trial_records, rollout_trajectory, run_all, run_trial, trial_seed,
    AnyController, DiagnosticRecord, LatencyRecord, Layout, Manifest, PlaybackRegistration, Stage, TrialRecord,
};
pub use report::{latency_stats, read_report, LatencyRow, LatencyStats, ReportRow, SuccessTable, ALL_EVALUATIONS};
pub use sim::{coupling_report, home_state, rollout, simulate_demo, waypoint_errors, CouplingReport, Rollout};
pub use tasks::{default_evaluations, default_tasks, Evaluation, TaskDefinition, Transfer};
