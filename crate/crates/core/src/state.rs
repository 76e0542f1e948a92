//! Robot state, trajectories, and input normalization.
//!
//! A [`RobotState`] holds joint angle, angular velocity and response torque
//! for every joint of one arm at one control tick. Flattened states always use
//! the channel order `[theta_0..theta_{D-1}, omega_0.., tau_0..]`, which is also
//! the column order of every CSV file this crate writes.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Number of channels per joint: angle, velocity, torque.
pub const CHANNELS: usize = 3;

/// Lower bound applied to every standard deviation in [`NormStats`].
pub const STD_FLOOR: f64 = 1e-6;

/// One value per joint. Units depend on the channel it sits in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(Vec<f64>);

impl JointVector {
    /// Builds a vector, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("joint value {i} is not finite")));
        }
        Ok(JointVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        JointVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        JointVector(values)
    }
}

impl Deref for JointVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<[f64; 3]> for JointVector {
    fn from(v: [f64; 3]) -> Self {
        JointVector(v.to_vec())
    }
}

/// Full state of one arm at one tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub theta: JointVector,
    pub omega: JointVector,
    pub tau: JointVector,
}

impl RobotState {
    pub fn new(theta: JointVector, omega: JointVector, tau: JointVector) -> Result<Self> {
        check_len(theta.dim(), omega.dim())?;
        check_len(theta.dim(), tau.dim())?;
        Ok(RobotState { theta, omega, tau })
    }

    pub fn zeros(dim: usize) -> Self {
        RobotState {
            theta: JointVector::zeros(dim),
            omega: JointVector::zeros(dim),
            tau: JointVector::zeros(dim),
        }
    }

    /// Joint count `D`.
    pub fn dim(&self) -> usize {
        self.theta.dim()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.omega.is_finite() && self.tau.is_finite()
    }

    /// Channel-major layout `[theta.., omega.., tau..]` of length `3 * D`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(CHANNELS * self.dim());
        out.extend_from_slice(&self.theta);
        out.extend_from_slice(&self.omega);
        out.extend_from_slice(&self.tau);
        out
    }

    /// Inverse of [`flatten`](Self::flatten). The slice length must be a
    /// multiple of three.
    pub fn unflatten(flat: &[f64]) -> Result<Self> {
        if flat.is_empty() || !flat.len().is_multiple_of(CHANNELS) {
            return Err(Error::invalid(format!(
                "flattened state length {} is not a positive multiple of {CHANNELS}",
                flat.len()
            )));
        }
        let d = flat.len() / CHANNELS;
        Ok(RobotState {
            theta: JointVector::from_raw(flat[..d].to_vec()),
            omega: JointVector::from_raw(flat[d..2 * d].to_vec()),
            tau: JointVector::from_raw(flat[2 * d..].to_vec()),
        })
    }
}

/// Uniformly sampled sequence of states.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dt: f64,
    states: Vec<RobotState>,
}

impl Trajectory {
    pub fn new(dt: f64, states: Vec<RobotState>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("sampling period must be positive, got {dt}")));
        }
        let first = states.first().ok_or(Error::NoData)?;
        let d = first.dim();
        for s in &states {
            check_len(d, s.dim())?;
            if !s.is_finite() {
                return Err(Error::invalid("trajectory contains a non-finite state"));
            }
        }
        Ok(Trajectory { dt, states })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    /// Always false for a constructed trajectory; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn states(&self) -> &[RobotState] {
        &self.states
    }

    /// State at `k`, holding the final state past the end.
    pub fn state_clamped(&self, k: usize) -> &RobotState {
        &self.states[k.min(self.states.len() - 1)]
    }

    pub fn duration(&self) -> f64 {
        (self.states.len() - 1) as f64 * self.dt
    }
}

/// Synchronized leader and follower recordings of one bilateral session.
#[derive(Clone, Debug, PartialEq)]
pub struct Demonstration {
    pub leader: Trajectory,
    pub follower: Trajectory,
}

impl Demonstration {
    pub fn new(leader: Trajectory, follower: Trajectory) -> Result<Self> {
        check_len(leader.len(), follower.len())?;
        check_len(leader.dim(), follower.dim())?;
        if leader.dt() != follower.dt() {
            return Err(Error::invalid("leader and follower sampling periods differ"));
        }
        Ok(Demonstration { leader, follower })
    }

    pub fn len(&self) -> usize {
        self.leader.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.leader.dim()
    }

    pub fn dt(&self) -> f64 {
        self.leader.dt()
    }
}

/// Per-dimension mean and standard deviation of flattened states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Population statistics over every state of every trajectory, with the
    /// standard deviation floored at [`STD_FLOOR`].
    pub fn from_trajectories<'a, I>(trajs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Trajectory>,
    {
        Self::from_vectors(
            trajs
                .into_iter()
                .flat_map(|t| t.states().iter().map(RobotState::flatten)),
        )
    }

    /// Welford accumulation over arbitrary equal-length vectors.
    pub fn from_vectors<I>(vectors: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        let mut count = 0usize;
        let mut mean: Vec<f64> = Vec::new();
        let mut m2: Vec<f64> = Vec::new();
        for v in vectors {
            if count == 0 {
                mean = vec![0.0; v.len()];
                m2 = vec![0.0; v.len()];
            }
            check_len(mean.len(), v.len())?;
            count += 1;
            let n = count as f64;
            for ((m, s), x) in mean.iter_mut().zip(m2.iter_mut()).zip(&v) {
                let delta = x - *m;
                *m += delta / n;
                *s += delta * (x - *m);
            }
        }
        if count < 2 {
            return Err(Error::NoData);
        }
        let std = m2.iter().map(|s| (s / count as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(NormStats { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), v.len())?;
        Ok(self.normalize_unchecked(v))
    }

    pub fn denormalize(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), v.len())?;
        Ok(self.denormalize_unchecked(v))
    }

    pub fn normalize_state(&self, s: &RobotState) -> Result<Vec<f64>> {
        self.normalize(&s.flatten())
    }

    pub(crate) fn normalize_unchecked(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub(crate) fn denormalize_unchecked(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }
}
