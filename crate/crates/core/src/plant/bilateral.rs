use serde::{Deserialize, Serialize};

use super::{step_dynamics, ArmParams, ARM_DOF};
use crate::error::{check_len, Error, Result};
use crate::state::{JointVector, RobotState};

/// Per-joint gains of the four-channel bilateral law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilateralGains {
    pub kp: [f64; ARM_DOF],
    pub kd: [f64; ARM_DOF],
    pub kf: [f64; ARM_DOF],
}

impl Default for BilateralGains {
    fn default() -> Self {
        BilateralGains {
            kp: [150.0, 80.0, 10.0],
            kd: [6.0, 3.0, 0.25],
            kf: [1.0, 1.0, 1.0],
        }
    }
}

impl BilateralGains {
    pub fn validate(&self) -> Result<()> {
        if self
            .kp
            .iter()
            .chain(&self.kd)
            .chain(&self.kf)
            .all(|g| *g > 0.0 && g.is_finite())
        {
            Ok(())
        } else {
            Err(Error::invalid("bilateral gains must be positive"))
        }
    }

    /// Control torque for the arm at `own`, coupled to `other`.
    ///
    /// Position and velocity channels pull the two arms together. The force
    /// channel splits the residual `tau_leader + tau_follower` between the
    /// arms with opposite signs: the leader is pushed back against its
    /// operator and the follower forward into its environment.
    fn coupling(&self, own: &RobotState, other: &RobotState, force_sum: &[f64], sign: f64) -> JointVector {
        JointVector::from_raw(
            (0..ARM_DOF)
                .map(|j| {
                    self.kp[j] * (other.theta[j] - own.theta[j])
                        + self.kd[j] * (other.omega[j] - own.omega[j])
                        + sign * 0.5 * self.kf[j] * force_sum[j]
                })
                .collect(),
        )
    }
}

/// One simulation step of the coupled pair.
///
/// `operator_torque` acts only on the leader and `env_torque` only on the
/// follower; both are also the response torques fed to the force channel.
pub fn bilateral_step(
    leader: &RobotState,
    follower: &RobotState,
    operator_torque: &JointVector,
    env_torque: &JointVector,
    gains: &BilateralGains,
    params: &ArmParams,
) -> Result<(RobotState, RobotState)> {
    check_len(ARM_DOF, leader.dim())?;
    check_len(ARM_DOF, follower.dim())?;
    check_len(ARM_DOF, operator_torque.dim())?;
    check_len(ARM_DOF, env_torque.dim())?;
    let force_sum: Vec<f64> = operator_torque
        .iter()
        .zip(env_torque.iter())
        .map(|(a, b)| a + b)
        .collect();
    let u_leader = gains.coupling(leader, follower, &force_sum, -1.0);
    let u_follower = gains.coupling(follower, leader, &force_sum, 1.0);
    Ok((
        step_dynamics(leader, &u_leader, operator_torque, params)?,
        step_dynamics(follower, &u_follower, env_torque, params)?,
    ))
}

/// Follower half of [`bilateral_step`] with the leader replaced by a command
/// state. This is how learned controllers drive the follower: the predicted
/// leader response, including its torque channel, is used as the reference.
pub fn follower_step(
    follower: &RobotState,
    command: &RobotState,
    env_torque: &JointVector,
    gains: &BilateralGains,
    params: &ArmParams,
) -> Result<RobotState> {
    check_len(ARM_DOF, command.dim())?;
    check_len(ARM_DOF, env_torque.dim())?;
    let force_sum: Vec<f64> = command.tau.iter().zip(env_torque.iter()).map(|(a, b)| a + b).collect();
    let u = gains.coupling(follower, command, &force_sum, 1.0);
    step_dynamics(follower, &u, env_torque, params)
}
