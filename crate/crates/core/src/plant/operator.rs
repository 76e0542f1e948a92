use serde::{Deserialize, Serialize};

use super::ARM_DOF;
use crate::error::{Error, Result};
use crate::state::{JointVector, RobotState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// s
    pub time: f64,
    /// rad
    pub theta: [f64; ARM_DOF],
}

/// Deterministic stand-in for a human pushing the leader arm.
///
/// The reference passes through each waypoint at rest: consecutive waypoints
/// are joined by a cubic with zero end slopes. Outside the waypoint span the
/// nearest waypoint is held.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptedOperator {
    waypoints: Vec<Waypoint>,
    kp: [f64; ARM_DOF],
    kd: [f64; ARM_DOF],
}

impl ScriptedOperator {
    pub fn new(waypoints: Vec<Waypoint>, kp: [f64; ARM_DOF], kd: [f64; ARM_DOF]) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::NoData);
        }
        if waypoints.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err(Error::invalid("waypoint times must be strictly increasing"));
        }
        Ok(ScriptedOperator { waypoints, kp, kd })
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.time)
    }

    /// Interpolated joint reference at time `t`.
    pub fn target(&self, t: f64) -> [f64; ARM_DOF] {
        let wps = &self.waypoints;
        if t <= wps[0].time {
            return wps[0].theta;
        }
        let i = wps.partition_point(|w| w.time <= t);
        if i >= wps.len() {
            return wps[wps.len() - 1].theta;
        }
        let (a, b) = (&wps[i - 1], &wps[i]);
        let u = (t - a.time) / (b.time - a.time);
        let s = u * u * (3.0 - 2.0 * u);
        std::array::from_fn(|j| a.theta[j] + s * (b.theta[j] - a.theta[j]))
    }

    /// PD torque pulling the leader toward the reference; zero when the leader
    /// sits on the reference at rest.
    pub fn torque(&self, t: f64, leader: &RobotState) -> JointVector {
        let target = self.target(t);
        JointVector::from_raw(
            (0..ARM_DOF)
                .map(|j| self.kp[j] * (target[j] - leader.theta[j]) - self.kd[j] * leader.omega[j])
                .collect(),
        )
    }
}
