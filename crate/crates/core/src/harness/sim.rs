use std::time::Instant;

use super::config::ExperimentConfig;
use super::tasks::TaskDefinition;
use crate::error::{Error, Result};
use crate::models::{Controller, FusionDiagnostics};
use crate::plant::{bilateral_step, follower_step, task_success, Scene, ScriptedOperator, ARM_DOF};
use crate::state::{Demonstration, JointVector, RobotState, Trajectory};

/// Arm at rest at the script's first waypoint.
pub fn home_state(op: &ScriptedOperator) -> RobotState {
    RobotState {
        theta: JointVector::from(op.target(0.0)),
        omega: JointVector::zeros(ARM_DOF),
        tau: JointVector::zeros(ARM_DOF),
    }
}

/// Teleoperated demonstration of `task`: the scripted operator pushes the
/// leader, the follower handles the scene. Returns the recording and the
/// final scene.
pub fn simulate_demo(cfg: &ExperimentConfig, task: &TaskDefinition) -> Result<(Demonstration, Scene)> {
    let p = &cfg.plant;
    let op = task.operator(p, &cfg.script, cfg.operator.kp, cfg.operator.kd)?;
    let mut scene = task.scene(&cfg.gripper);
    let start = home_state(&op);
    let (mut l, mut f) = (start.clone(), start);
    let ticks = task.ticks(p);
    let sub = p.substeps();
    let mut leader = Vec::with_capacity(ticks);
    let mut follower = Vec::with_capacity(ticks);
    leader.push(l.clone());
    follower.push(f.clone());
    for k in 1..ticks {
        for s in 0..sub {
            let t = (k - 1) as f64 * p.control_period + s as f64 * p.dt_sim;
            let op_tau = op.torque(t, &l);
            let env = scene.contact_torque(&f, p);
            (l, f) = bilateral_step(&l, &f, &op_tau, &env, &cfg.gains, p)?;
        }
        scene.update(&f, p);
        leader.push(l.clone());
        follower.push(f.clone());
    }
    let demo = Demonstration::new(
        Trajectory::new(p.control_period, leader)?,
        Trajectory::new(p.control_period, follower)?,
    )?;
    Ok((demo, scene))
}

#[derive(Clone, Debug)]
pub struct Rollout {
    /// Follower states; shorter than requested when the rollout diverged.
    pub follower: Vec<RobotState>,
    /// `commands[k]` was issued at tick `k`.
    pub commands: Vec<RobotState>,
    pub diagnostics: Vec<Option<FusionDiagnostics>>,
    /// s, wall-clock time of each controller step
    pub latencies: Vec<f64>,
    pub scene: Scene,
    pub diverged: bool,
}

impl Rollout {
    pub fn success(&self) -> bool {
        !self.diverged && task_success(&self.scene)
    }
}

/// Closed loop: at every tick the controller maps the follower state to a
/// command, which is held for one control period. Divergence of either the
/// controller or the plant ends the rollout early.
pub fn rollout(
    controller: &mut dyn Controller,
    cfg: &ExperimentConfig,
    mut scene: Scene,
    initial: RobotState,
    ticks: usize,
) -> Rollout {
    let p = &cfg.plant;
    let sub = p.substeps();
    let mut out = Rollout {
        follower: vec![initial],
        commands: Vec::with_capacity(ticks),
        diagnostics: Vec::with_capacity(ticks),
        latencies: Vec::with_capacity(ticks),
        scene: scene.clone(),
        diverged: false,
    };
    for k in 0..ticks.saturating_sub(1) {
        let f0 = out.follower[k].clone();
        let started = Instant::now();
        let step = controller.step(k, &f0);
        out.latencies.push(started.elapsed().as_secs_f64());
        let step = match step {
            Ok(s) => s,
            Err(_) => {
                out.diverged = true;
                break;
            }
        };
        let mut f = f0;
        let mut failed = false;
        for _ in 0..sub {
            let env = scene.contact_torque(&f, p);
            match follower_step(&f, &step.command, &env, &cfg.gains, p) {
                Ok(next) => f = next,
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        out.commands.push(step.command);
        out.diagnostics.push(step.diagnostics);
        if failed {
            out.diverged = true;
            break;
        }
        scene.update(&f, p);
        out.follower.push(f);
    }
    out.scene = scene;
    out
}

/// Coupling quality of a recorded demonstration.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingReport {
    /// rad, largest |θ_l − θ_f| over ticks without contact, after settling
    pub free_space_gap: f64,
    /// mean |τ_l + τ_f| over contact ticks divided by peak |τ_f|, per
    /// contact joint maximum
    pub contact_ratio: f64,
    pub contact_ticks: usize,
}

/// Evaluates the bilateral objectives on a demonstration: position
/// synchronization away from contact and force balance during contact.
/// `settle` ticks at the start and after each contact change are skipped.
pub fn coupling_report(demo: &Demonstration, settle: usize) -> Result<CouplingReport> {
    if demo.is_empty() {
        return Err(Error::NoData);
    }
    let l = demo.leader.states();
    let f = demo.follower.states();
    let dim = demo.dim();
    let touching: Vec<bool> = f.iter().map(|s| s.tau.iter().any(|t| *t != 0.0)).collect();
    let mut gap: f64 = 0.0;
    let mut since_change = 0;
    for k in 0..l.len() {
        if k > 0 && touching[k] != touching[k - 1] {
            since_change = 0;
        }
        since_change += 1;
        if !touching[k] && k >= settle && since_change > settle {
            for j in 0..dim {
                gap = gap.max((l[k].theta[j] - f[k].theta[j]).abs());
            }
        }
    }
    let mut ratio: f64 = 0.0;
    let contact_ticks = touching.iter().filter(|t| **t).count();
    for j in 0..dim {
        let ks: Vec<usize> = (0..l.len()).filter(|&k| f[k].tau[j] != 0.0).collect();
        if ks.is_empty() {
            continue;
        }
        let peak = ks.iter().map(|&k| f[k].tau[j].abs()).fold(0.0, f64::max);
        let mean = ks.iter().map(|&k| (l[k].tau[j] + f[k].tau[j]).abs()).sum::<f64>() / ks.len() as f64;
        ratio = ratio.max(mean / peak);
    }
    Ok(CouplingReport {
        free_space_gap: gap,
        contact_ratio: ratio,
        contact_ticks,
    })
}

/// Leader arm-joint error at each waypoint: the smallest over ticks within
/// `slack` seconds of its nominal time of the largest per-joint error. The
/// gripper is left out since a grasped object stops it short of its target.
pub fn waypoint_errors(demo: &Demonstration, op: &ScriptedOperator, slack: f64) -> Vec<f64> {
    let dt = demo.dt();
    let l = demo.leader.states();
    op.waypoints()
        .iter()
        .map(|w| {
            let lo = ((w.time - slack) / dt).ceil().max(0.0) as usize;
            let hi = (((w.time + slack) / dt).floor() as usize).min(l.len() - 1);
            (lo..=hi)
                .map(|k| {
                    (0..ARM_DOF - 1)
                        .map(|j| (l[k].theta[j] - w.theta[j]).abs())
                        .fold(0.0, f64::max)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_demos_succeed_and_track() {
        let cfg = ExperimentConfig::default();
        for task in &cfg.tasks {
            let (demo, scene) = simulate_demo(&cfg, task).unwrap();
            assert_eq!(demo.len(), task.ticks(&cfg.plant));
            assert!(task_success(&scene), "{}: {:?}", task.name, scene);
            let op = task
                .operator(&cfg.plant, &cfg.script, cfg.operator.kp, cfg.operator.kd)
                .unwrap();
            let errs = waypoint_errors(&demo, &op, cfg.checks.waypoint_time_slack);
            assert!(
                errs.iter().all(|e| *e < cfg.checks.waypoint_tolerance),
                "{}: {errs:?}",
                task.name
            );
            let r = coupling_report(&demo, 10).unwrap();
            assert!(r.contact_ticks > 0);
            assert!(
                r.free_space_gap < cfg.checks.free_space_tracking,
                "{}: {r:?}",
                task.name
            );
            assert!(r.contact_ratio < cfg.checks.contact_force_ratio, "{}: {r:?}", task.name);
        }
    }

    #[test]
    fn demo_is_deterministic() {
        let cfg = ExperimentConfig::default();
        let a = simulate_demo(&cfg, &cfg.tasks[0]).unwrap();
        let b = simulate_demo(&cfg, &cfg.tasks[0]).unwrap();
        assert_eq!(a.0, b.0);
    }
}
