use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::ArtifactMeta;
use crate::models::{CEConfig, ControllerKind, CostWeights, CostWindow, InputJitter, UpperShape};
use crate::nn::TrainConfig;
use crate::plant::{ArmParams, BilateralGains, GripperModel, ARM_DOF};
use crate::seeding::derive_seed;
use crate::segmentation::SegmentSpec;
use crate::state::CHANNELS;

use super::tasks::{Evaluation, TaskDefinition};

/// Version tag stamped into artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seed stream identifiers, one per pipeline stage.
pub(crate) mod streams {
    pub const SEGMENT: u64 = 1;
    pub const LOWER: u64 = 2;
    pub const UPPER: u64 = 3;
    pub const LEARNING: u64 = 4;
    pub const BASELINE: u64 = 5;
    pub const LTOF: u64 = 6;
    pub const FUSION: u64 = 7;
    pub const TRIAL: u64 = 8;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub seed: u64,
    /// Ticks between upper-layer updates.
    pub horizon: usize,
    pub trials: usize,
    pub controllers: Vec<ControllerKind>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            seed: 1,
            horizon: 20,
            trials: 10,
            controllers: ControllerKind::ALL.to_vec(),
        }
    }
}

/// PD gains of the scripted operator pushing the leader.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorGains {
    pub kp: [f64; ARM_DOF],
    pub kd: [f64; ARM_DOF],
}

impl Default for OperatorGains {
    fn default() -> Self {
        OperatorGains {
            kp: [60.0, 30.0, 2.0],
            kd: [4.0, 2.0, 0.1],
        }
    }
}

/// Shape of every scripted pick-and-place: durations in seconds, gripper
/// angles in radians, home as an end-effector position in metres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScriptTiming {
    pub home: [f64; 2],
    pub open_angle: f64,
    pub closed_angle: f64,
    pub start_hold: f64,
    pub approach: f64,
    pub close: f64,
    pub carry: f64,
    pub open: f64,
    pub retreat: f64,
}

impl Default for ScriptTiming {
    fn default() -> Self {
        ScriptTiming {
            home: [0.30, 0.0],
            open_angle: 0.8,
            closed_angle: 0.05,
            start_hold: 0.3,
            approach: 1.2,
            close: 0.5,
            carry: 1.5,
            open: 0.4,
            retreat: 1.2,
        }
    }
}

impl ScriptTiming {
    pub fn validate(&self) -> Result<()> {
        let d = [
            self.start_hold,
            self.approach,
            self.close,
            self.carry,
            self.open,
            self.retreat,
        ];
        if d.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::invalid("script durations must be positive"));
        }
        if !(self.closed_angle >= 0.0 && self.open_angle > self.closed_angle) {
            return Err(Error::invalid("open_angle must exceed closed_angle >= 0"));
        }
        Ok(())
    }
}

/// Optimizer settings without a seed; seeds come from the experiment seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSettings {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
        }
    }
}

impl TrainSettings {
    fn with_epochs(epochs: usize) -> Self {
        TrainSettings {
            epochs,
            ..Default::default()
        }
    }

    fn sequences(epochs: usize) -> Self {
        TrainSettings {
            epochs,
            batch_size: 4,
            ..Default::default()
        }
    }

    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentSettings {
    pub n_segments: usize,
    pub jitter_lo: f64,
    pub jitter_hi: f64,
}

impl Default for SegmentSettings {
    fn default() -> Self {
        let s = SegmentSpec::default();
        SegmentSettings {
            n_segments: s.n_segments,
            jitter_lo: s.jitter_lo,
            jitter_hi: s.jitter_hi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpSection {
    pub hidden: Vec<usize>,
    pub train: TrainSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowerSection {
    pub hidden: Vec<usize>,
    pub jitter: InputJitter,
    pub train: TrainSettings,
}

impl Default for LowerSection {
    fn default() -> Self {
        LowerSection {
            hidden: vec![32, 32],
            jitter: InputJitter::default(),
            train: TrainSettings::with_epochs(1000),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UpperSection {
    pub shape: UpperShape,
    pub train: TrainSettings,
}

impl Default for UpperSection {
    fn default() -> Self {
        UpperSection {
            shape: UpperShape::default(),
            train: TrainSettings::sequences(300),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningSection {
    /// Number of primitives the proportion head mixes.
    pub primitives: usize,
    /// Tick stride of the mixed-command error inside each update block.
    pub mix_stride: usize,
    pub train: TrainSettings,
}

impl Default for LearningSection {
    fn default() -> Self {
        LearningSection {
            primitives: 30,
            mix_stride: 5,
            train: TrainSettings::sequences(150),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionSettings {
    pub rho: f64,
    pub top_m: usize,
    pub samples_per_primitive: usize,
    pub noise_sigma: [f64; CHANNELS],
    pub cost_window: CostWindow,
}

impl Default for FusionSettings {
    fn default() -> Self {
        let c = CEConfig::default();
        FusionSettings {
            rho: c.rho,
            top_m: c.top_m,
            samples_per_primitive: c.samples_per_primitive,
            noise_sigma: c.noise_sigma,
            cost_window: c.cost_window,
        }
    }
}

/// Pass thresholds of the plant and playback self-checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckThresholds {
    /// rad, steady-state leader/follower angle gap in free space
    pub free_space_tracking: f64,
    /// time-averaged |τ_l + τ_f| over contact, as a fraction of peak |τ_f|
    pub contact_force_ratio: f64,
    /// rad, leader angle error at each scripted waypoint
    pub waypoint_tolerance: f64,
    /// s, slack on the waypoint time
    pub waypoint_time_slack: f64,
    /// rad, RMS command error of playback on its own demonstration
    pub playback_rms: f64,
}

impl Default for CheckThresholds {
    fn default() -> Self {
        CheckThresholds {
            free_space_tracking: 0.01,
            contact_force_ratio: 0.1,
            waypoint_tolerance: 0.05,
            waypoint_time_slack: 0.1,
            playback_rms: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub plant: ArmParams,
    pub gains: BilateralGains,
    pub operator: OperatorGains,
    pub gripper: GripperModel,
    pub script: ScriptTiming,
    pub segmentation: SegmentSettings,
    pub lower: LowerSection,
    pub upper: UpperSection,
    pub learning: LearningSection,
    /// Single lower model of the baseline; its upper uses `[upper]`.
    pub baseline: LowerSection,
    pub ltof: MlpSection,
    pub fusion: FusionSettings,
    pub cost: CostWeights,
    pub checks: CheckThresholds,
    pub tasks: Vec<TaskDefinition>,
    pub evaluations: Vec<Evaluation>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mlp = |hidden: Vec<usize>, epochs: usize| MlpSection {
            hidden,
            train: TrainSettings::with_epochs(epochs),
        };
        ExperimentConfig {
            experiment: ExperimentSection::default(),
            plant: ArmParams::default(),
            gains: BilateralGains::default(),
            operator: OperatorGains::default(),
            gripper: GripperModel::default(),
            script: ScriptTiming::default(),
            segmentation: SegmentSettings::default(),
            lower: LowerSection::default(),
            upper: UpperSection::default(),
            learning: LearningSection::default(),
            baseline: LowerSection {
                hidden: vec![64, 64],
                jitter: InputJitter::default(),
                train: TrainSettings::with_epochs(300),
            },
            ltof: mlp(vec![32, 32], 60),
            fusion: FusionSettings::default(),
            cost: CostWeights::default(),
            checks: CheckThresholds::default(),
            tasks: super::tasks::default_tasks(),
            evaluations: super::tasks::default_evaluations(),
        }
    }
}

impl Default for MlpSection {
    fn default() -> Self {
        MlpSection {
            hidden: vec![32, 32],
            train: TrainSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.gains.validate()?;
        self.script.validate()?;
        self.cost.validate()?;
        self.lower.jitter.validate()?;
        self.segment_spec().validate()?;
        self.ce_config().validate()?;
        if self.experiment.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.experiment.controllers.is_empty() {
            return Err(Error::invalid("at least one controller must be selected"));
        }
        if self.learning.primitives == 0 {
            return Err(Error::invalid("learning.primitives must be at least 1"));
        }
        for t in &self.tasks {
            t.validate(&self.plant, &self.script)?;
        }
        if self.primitive_tasks().next().is_none() {
            return Err(Error::invalid("no primitive-source task defined"));
        }
        let mut names: Vec<&str> = self.tasks.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("task names must be unique"));
        }
        for e in &self.evaluations {
            if self.task(&e.task).is_none() {
                return Err(Error::invalid(format!(
                    "evaluation {:?} refers to unknown task {:?}",
                    e.name, e.task
                )));
            }
            if !(e.perturbation.is_finite() && e.perturbation >= 0.0) {
                return Err(Error::invalid("perturbation must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn task(&self, name: &str) -> Option<&TaskDefinition> {
        self.tasks.iter().find(|t| t.name == name)
    }

    pub fn primitive_tasks(&self) -> impl Iterator<Item = &TaskDefinition> {
        self.tasks.iter().filter(|t| t.primitive)
    }

    pub fn seed(&self) -> u64 {
        self.experiment.seed
    }

    pub(crate) fn stream_seed(&self, stream: u64) -> u64 {
        derive_seed(self.experiment.seed, &[stream])
    }

    pub fn segment_spec(&self) -> SegmentSpec {
        SegmentSpec {
            n_segments: self.segmentation.n_segments,
            jitter_lo: self.segmentation.jitter_lo,
            jitter_hi: self.segmentation.jitter_hi,
            seed: self.stream_seed(streams::SEGMENT),
        }
    }

    pub fn ce_config(&self) -> CEConfig {
        CEConfig {
            rho: self.fusion.rho,
            top_m: self.fusion.top_m,
            samples_per_primitive: self.fusion.samples_per_primitive,
            noise_sigma: self.fusion.noise_sigma,
            cost_window: self.fusion.cost_window,
            seed: self.stream_seed(streams::FUSION),
        }
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn meta(&self) -> Result<ArtifactMeta> {
        Ok(ArtifactMeta {
            config_hash: self.hash()?,
            seed: self.seed(),
            version: VERSION.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn shipped_config_matches_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
        assert_eq!(ExperimentConfig::load(&path).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn partial_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml_str("[experiment]\nseed = 42\n").unwrap();
        assert_eq!(cfg.seed(), 42);
        assert_eq!(cfg.fusion, FusionSettings::default());
        assert_eq!(cfg.tasks.len(), 6);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml_str("[fusion]\nrhoo = 1.0\n").unwrap_err();
        assert_eq!(err.kind(), "config");
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.fusion.rho = 0.06;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }

    #[test]
    fn stage_seeds_differ() {
        let cfg = ExperimentConfig::default();
        assert_ne!(cfg.segment_spec().seed, cfg.ce_config().seed);
    }
}
