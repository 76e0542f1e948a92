//! Simulated leader/follower arm pair.
//!
//! Each arm is a planar two-link manipulator with point masses at the distal
//! end of each link, plus a one-degree-of-freedom gripper joint. Joint order
//! is `[shoulder, elbow, gripper]`. Gripper angle 0 is fully closed.

mod bilateral;
mod operator;
mod scene;

pub use bilateral::{bilateral_step, follower_step, BilateralGains};
pub use operator::{ScriptedOperator, Waypoint};
pub use scene::{task_success, GripperModel, Scene, SceneObject};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::state::{JointVector, RobotState};

/// Joint count of the simulated arm.
pub const ARM_DOF: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmParams {
    /// m
    pub link_lengths: [f64; 2],
    /// kg, lumped at the distal end of each link
    pub link_masses: [f64; 2],
    /// N·m·s/rad, one entry per joint including the gripper
    pub joint_damping: [f64; ARM_DOF],
    /// kg·m²
    pub gripper_inertia: f64,
    /// N·m/rad, stiffness of a grasped object squeezed between the jaws
    pub gripper_stiffness: f64,
    /// s
    pub dt_sim: f64,
    /// s, sampling period of recorded trajectories and controller updates
    pub control_period: f64,
    /// m/s²; zero disables gravity (arm moving in a horizontal plane)
    pub gravity: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        ArmParams {
            link_lengths: [0.30, 0.25],
            link_masses: [1.0, 0.8],
            joint_damping: [0.3, 0.2, 0.02],
            gripper_inertia: 0.002,
            gripper_stiffness: 4.0,
            dt_sim: 0.001,
            control_period: 0.01,
            gravity: 0.0,
        }
    }
}

impl ArmParams {
    pub fn validate(&self) -> Result<()> {
        let positive = self
            .link_lengths
            .iter()
            .chain(&self.link_masses)
            .chain(&self.joint_damping)
            .chain([
                &self.gripper_inertia,
                &self.gripper_stiffness,
                &self.dt_sim,
                &self.control_period,
            ])
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive {
            return Err(Error::invalid("arm parameters must be strictly positive"));
        }
        if self.dt_sim > self.control_period {
            return Err(Error::invalid("dt_sim must not exceed the control period"));
        }
        if self.gravity < 0.0 {
            return Err(Error::invalid("gravity must be non-negative"));
        }
        Ok(())
    }

    /// Simulation steps per control period.
    pub fn substeps(&self) -> usize {
        (self.control_period / self.dt_sim).round().max(1.0) as usize
    }

    /// Joint-space inertia of the two arm joints, `[[m11, m12], [m12, m22]]`.
    pub fn mass_matrix(&self, q: &[f64]) -> [[f64; 2]; 2] {
        let [l1, l2] = self.link_lengths;
        let [m1, m2] = self.link_masses;
        let c2 = q[1].cos();
        let m22 = m2 * l2 * l2;
        let m12 = m22 + m2 * l1 * l2 * c2;
        let m11 = (m1 + m2) * l1 * l1 + m22 + 2.0 * m2 * l1 * l2 * c2;
        [[m11, m12], [m12, m22]]
    }

    /// Joint accelerations for the given state and net applied joint torque.
    pub fn acceleration(&self, q: &[f64], w: &[f64], torque: &[f64]) -> [f64; ARM_DOF] {
        let [l1, l2] = self.link_lengths;
        let [m1, m2] = self.link_masses;
        let d = &self.joint_damping;
        let h = m2 * l1 * l2 * q[1].sin();
        let coriolis = [-h * (2.0 * w[0] * w[1] + w[1] * w[1]), h * w[0] * w[0]];
        let g = self.gravity;
        let c12 = (q[0] + q[1]).cos();
        let grav = [(m1 + m2) * g * l1 * q[0].cos() + m2 * g * l2 * c12, m2 * g * l2 * c12];
        let rhs = [
            torque[0] - coriolis[0] - grav[0] - d[0] * w[0],
            torque[1] - coriolis[1] - grav[1] - d[1] * w[1],
        ];
        let [[a, b], [_, c]] = self.mass_matrix(q);
        let det = a * c - b * b;
        [
            (c * rhs[0] - b * rhs[1]) / det,
            (a * rhs[1] - b * rhs[0]) / det,
            (torque[2] - d[2] * w[2]) / self.gripper_inertia,
        ]
    }

    /// Kinetic plus gravitational potential energy.
    pub fn energy(&self, state: &RobotState) -> f64 {
        let q = &state.theta;
        let w = &state.omega;
        let [[a, b], [_, c]] = self.mass_matrix(q);
        let kinetic = 0.5 * (a * w[0] * w[0] + 2.0 * b * w[0] * w[1] + c * w[1] * w[1])
            + 0.5 * self.gripper_inertia * w[2] * w[2];
        let [l1, l2] = self.link_lengths;
        let [m1, m2] = self.link_masses;
        let potential = self.gravity * ((m1 + m2) * l1 * q[0].sin() + m2 * l2 * (q[0] + q[1]).sin());
        kinetic + potential
    }

    /// End-effector position in the arm's base frame.
    pub fn forward_kinematics(&self, theta: &[f64]) -> [f64; 2] {
        let [l1, l2] = self.link_lengths;
        let a = theta[0];
        let b = theta[0] + theta[1];
        [l1 * a.cos() + l2 * b.cos(), l1 * a.sin() + l2 * b.sin()]
    }

    /// Elbow-positive inverse kinematics for the two arm joints.
    pub fn inverse_kinematics(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        let [l1, l2] = self.link_lengths;
        let r2 = p[0] * p[0] + p[1] * p[1];
        let c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
        if !(-1.0..=1.0).contains(&c2) {
            return Err(Error::invalid(format!("point ({}, {}) is out of reach", p[0], p[1])));
        }
        let q2 = c2.acos();
        let q1 = p[1].atan2(p[0]) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
        Ok([q1, q2])
    }
}

/// Advances one arm by `params.dt_sim` with semi-implicit Euler.
///
/// `input_torque` is the actuator command; `external_torque` is whatever the
/// operator or environment applies. The returned state records the external
/// torque in its `tau` channel, which is the response torque the bilateral
/// controller exchanges.
pub fn step_dynamics(
    state: &RobotState,
    input_torque: &JointVector,
    external_torque: &JointVector,
    params: &ArmParams,
) -> Result<RobotState> {
    check_len(ARM_DOF, state.dim())?;
    check_len(ARM_DOF, input_torque.dim())?;
    check_len(ARM_DOF, external_torque.dim())?;
    let torque: Vec<f64> = input_torque
        .iter()
        .zip(external_torque.iter())
        .map(|(a, b)| a + b)
        .collect();
    let acc = params.acceleration(&state.theta, &state.omega, &torque);
    let dt = params.dt_sim;
    let omega: Vec<f64> = state.omega.iter().zip(acc).map(|(w, a)| w + dt * a).collect();
    let theta: Vec<f64> = state.theta.iter().zip(&omega).map(|(q, w)| q + dt * w).collect();
    let next = RobotState {
        theta: JointVector::from_raw(theta),
        omega: JointVector::from_raw(omega),
        tau: external_torque.clone(),
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::DynamicsDiverged)
    }
}
