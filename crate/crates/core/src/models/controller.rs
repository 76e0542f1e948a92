use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::fusion::{fuse, playback_window, FusionDiagnostics, FusionRequest};
use super::lower::{lower_input, LowerBank};
use super::ltof::LToFModel;
use super::upper::{UpperHead, UpperModel};
use super::{softmax, CEConfig, CostWeights, ProportionVector};
use crate::error::{check_len, Error, Result};
use crate::nn::{LstmState, Mlp};
use crate::seeding::derive_seed;
use crate::state::{RobotState, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Baseline,
    Learning,
    Sampling,
    Playback,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Baseline,
        ControllerKind::Learning,
        ControllerKind::Sampling,
        ControllerKind::Playback,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Baseline => "baseline",
            ControllerKind::Learning => "learning",
            ControllerKind::Sampling => "sampling",
            ControllerKind::Playback => "playback",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown controller {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    /// Predicted next leader state, used as the follower command.
    pub command: RobotState,
    pub diagnostics: Option<FusionDiagnostics>,
}

/// A closed-loop policy mapping the current follower state to the next
/// leader command.
pub trait Controller {
    fn kind(&self) -> ControllerKind;

    /// Clears recurrent state and caches; `seed` selects the candidate noise
    /// of fusion controllers.
    fn reset(&mut self, seed: u64);

    fn step(&mut self, tick: usize, follower: &RobotState) -> Result<StepOutput>;
}

fn to_state(v: &[f64]) -> Result<RobotState> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::DynamicsDiverged);
    }
    RobotState::unflatten(v)
}

fn is_update(tick: usize, horizon: usize, cached: bool) -> bool {
    !cached || tick.is_multiple_of(horizon)
}

/// Upper predicts a follower window every `n` ticks; one lower maps the
/// current follower state and the window entry `n` ticks ahead to the
/// command.
#[derive(Clone, Debug)]
pub struct BaselineController {
    upper: UpperModel,
    lower: Mlp,
    state: LstmState,
    window: Option<(usize, Vec<Vec<f64>>)>,
}

impl BaselineController {
    pub fn new(upper: UpperModel, lower: Mlp) -> Result<Self> {
        if upper.head != UpperHead::Window {
            return Err(Error::invalid("baseline needs a window-head upper model"));
        }
        let d = upper.norm.dim();
        check_len(2 * d, lower.input_dim())?;
        check_len(d, lower.output_dim())?;
        let state = upper.initial_state();
        Ok(BaselineController {
            upper,
            lower,
            state,
            window: None,
        })
    }

    /// Window from the last upper update and the tick it was made at.
    pub fn cached_window(&self) -> Option<(usize, &[Vec<f64>])> {
        self.window.as_ref().map(|(k, w)| (*k, w.as_slice()))
    }
}

impl Controller for BaselineController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Baseline
    }

    fn reset(&mut self, _seed: u64) {
        self.state = self.upper.initial_state();
        self.window = None;
    }

    fn step(&mut self, tick: usize, follower: &RobotState) -> Result<StepOutput> {
        let n = self.upper.horizon;
        let f = self.upper.norm.normalize_state(follower)?;
        if is_update(tick, n, self.window.is_some()) {
            let (y, s) = self.upper.step(&self.state, &f)?;
            self.state = s;
            self.window = Some((tick, y.chunks(f.len()).map(<[f64]>::to_vec).collect()));
        }
        let (start, window) = self.window.as_ref().expect("window set above");
        let target = &window[(tick - start + n - 1).min(window.len() - 1)];
        let y = self.lower.forward(&lower_input(&f, target))?;
        Ok(StepOutput {
            command: to_state(&self.upper.norm.denormalize(&y)?)?,
            diagnostics: None,
        })
    }
}

/// Upper emits a follower target plus softmax proportions over a fixed set
/// of primitives; the command is the proportion-weighted primitive output.
#[derive(Clone, Debug)]
pub struct LearningController {
    upper: UpperModel,
    bank: LowerBank,
    state: LstmState,
    cache: Option<(Vec<f64>, ProportionVector)>,
}

impl LearningController {
    /// `bank` must already be restricted to the primitives the upper was
    /// trained with.
    pub fn new(upper: UpperModel, bank: LowerBank) -> Result<Self> {
        let UpperHead::Proportions { primitives } = upper.head else {
            return Err(Error::invalid(
                "learning controller needs a proportion-head upper model",
            ));
        };
        check_len(primitives, bank.len())?;
        check_len(upper.norm.dim(), bank.state_dim())?;
        let state = upper.initial_state();
        Ok(LearningController {
            upper,
            bank,
            state,
            cache: None,
        })
    }

    pub fn proportions(&self) -> Option<&ProportionVector> {
        self.cache.as_ref().map(|(_, p)| p)
    }
}

impl Controller for LearningController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Learning
    }

    fn reset(&mut self, _seed: u64) {
        self.state = self.upper.initial_state();
        self.cache = None;
    }

    fn step(&mut self, tick: usize, follower: &RobotState) -> Result<StepOutput> {
        let d = self.bank.state_dim();
        let f = self.upper.norm.normalize_state(follower)?;
        if is_update(tick, self.upper.horizon, self.cache.is_some()) {
            let (y, s) = self.upper.step(&self.state, &f)?;
            self.state = s;
            let (target, logits) = y.split_at(d);
            self.cache = Some((target.to_vec(), softmax(logits)?));
        }
        let (target, weights) = self.cache.as_ref().expect("cache set above");
        let x = lower_input(&f, target);
        let outs: Vec<Vec<f64>> = self.bank.primitives.iter().map(|m| m.forward_unchecked(&x)).collect();
        let refs: Vec<&[f64]> = outs.iter().map(Vec::as_slice).collect();
        let mixed = weights.combine(&refs)?;
        Ok(StepOutput {
            command: to_state(&self.bank.norm.denormalize(&mixed)?)?,
            diagnostics: None,
        })
    }
}

/// Fusion controller whose reference window comes from a recurrent upper.
#[derive(Clone, Debug)]
pub struct SamplingController {
    upper: UpperModel,
    bank: LowerBank,
    ltof: LToFModel,
    cost: CostWeights,
    ce: CEConfig,
    seed: u64,
    state: LstmState,
    window: Option<(usize, Vec<Vec<f64>>)>,
}

impl SamplingController {
    pub fn new(upper: UpperModel, bank: LowerBank, ltof: LToFModel, cost: CostWeights, ce: CEConfig) -> Result<Self> {
        if upper.head != UpperHead::Window {
            return Err(Error::invalid("sampling controller needs a window-head upper model"));
        }
        if upper.horizon != bank.horizon {
            return Err(Error::invalid("upper and bank horizons differ"));
        }
        cost.validate()?;
        ce.validate()?;
        let state = upper.initial_state();
        let seed = ce.seed;
        Ok(SamplingController {
            upper,
            bank,
            ltof,
            cost,
            ce,
            seed,
            state,
            window: None,
        })
    }
}

impl Controller for SamplingController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Sampling
    }

    fn reset(&mut self, seed: u64) {
        self.state = self.upper.initial_state();
        self.window = None;
        self.seed = derive_seed(self.ce.seed, &[seed]);
    }

    fn step(&mut self, tick: usize, follower: &RobotState) -> Result<StepOutput> {
        let d = self.bank.state_dim();
        let f = self.upper.norm.normalize_state(follower)?;
        if is_update(tick, self.upper.horizon, self.window.is_some()) {
            let (y, s) = self.upper.step(&self.state, &f)?;
            self.state = s;
            self.window = Some((tick, y.chunks(d).map(<[f64]>::to_vec).collect()));
        }
        let (start, window) = self.window.as_ref().expect("window set above");
        let offset = (tick - start).min(window.len() - 1);
        let req = FusionRequest {
            follower: &f,
            window: &window[offset..],
            tick,
            seed: self.seed,
        };
        let out = fuse(&self.bank, &self.ltof, &req, &self.cost, &self.ce)?;
        Ok(StepOutput {
            command: to_state(&out.command)?,
            diagnostics: Some(out.diagnostics),
        })
    }
}

/// Fusion controller whose reference window is read from a recorded
/// follower trajectory.
#[derive(Clone, Debug)]
pub struct PlaybackController {
    playback: Trajectory,
    bank: LowerBank,
    ltof: LToFModel,
    cost: CostWeights,
    ce: CEConfig,
    seed: u64,
}

impl PlaybackController {
    pub fn new(
        playback: Trajectory,
        bank: LowerBank,
        ltof: LToFModel,
        cost: CostWeights,
        ce: CEConfig,
    ) -> Result<Self> {
        check_len(bank.state_dim(), playback.dim() * crate::state::CHANNELS)?;
        cost.validate()?;
        ce.validate()?;
        let seed = ce.seed;
        Ok(PlaybackController {
            playback,
            bank,
            ltof,
            cost,
            ce,
            seed,
        })
    }

    /// Reference window the controller uses at `tick`.
    pub fn window(&self, tick: usize) -> Result<Vec<Vec<f64>>> {
        playback_window(&self.playback, &self.bank.norm, tick, 2 * self.bank.horizon)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl Controller for PlaybackController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Playback
    }

    fn reset(&mut self, seed: u64) {
        self.seed = derive_seed(self.ce.seed, &[seed]);
    }

    fn step(&mut self, tick: usize, follower: &RobotState) -> Result<StepOutput> {
        let f = self.bank.norm.normalize_state(follower)?;
        let window = self.window(tick)?;
        let req = FusionRequest {
            follower: &f,
            window: &window,
            tick,
            seed: self.seed,
        };
        let out = fuse(&self.bank, &self.ltof, &req, &self.cost, &self.ce)?;
        Ok(StepOutput {
            command: to_state(&out.command)?,
            diagnostics: Some(out.diagnostics),
        })
    }
}
