use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ScriptTiming;
use crate::error::{Error, Result};
use crate::plant::{ArmParams, GripperModel, Scene, SceneObject, ScriptedOperator, Waypoint};

/// Move one object from `from` to `to` (metres, base frame).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transfer {
    pub from: [f64; 2],
    pub to: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDefinition {
    pub name: String,
    /// Demonstrations of primitive tasks are segmented into the lower bank.
    pub primitive: bool,
    pub transfers: Vec<Transfer>,
    pub grasp_radius: f64,
    pub place_radius: f64,
    /// s, length of demonstrations and rollouts
    pub max_duration: f64,
}

/// A task rolled out under closed-loop control with perturbed object starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evaluation {
    pub name: String,
    pub task: String,
    /// m, half-width of the uniform start offset per coordinate
    pub perturbation: f64,
}

fn transfer(from: [f64; 2], to: [f64; 2]) -> Transfer {
    Transfer { from, to }
}

fn single(name: &str, from: [f64; 2], to: [f64; 2]) -> TaskDefinition {
    TaskDefinition {
        name: name.into(),
        primitive: true,
        transfers: vec![transfer(from, to)],
        grasp_radius: 0.045,
        place_radius: 0.05,
        max_duration: 6.0,
    }
}

pub fn default_tasks() -> Vec<TaskDefinition> {
    vec![
        single("left_to_right", [0.35, 0.15], [0.35, -0.15]),
        single("right_to_left", [0.35, -0.15], [0.35, 0.15]),
        single("front_to_back", [0.45, 0.0], [0.25, 0.0]),
        single("right_back_to_left_front", [0.25, -0.15], [0.45, 0.15]),
        single("right_front_to_left_back", [0.45, -0.15], [0.25, 0.15]),
        TaskDefinition {
            name: "composite".into(),
            primitive: false,
            transfers: vec![
                transfer([0.35, -0.15], [0.38, 0.0]),
                transfer([0.25, -0.15], [0.45, 0.15]),
            ],
            grasp_radius: 0.045,
            place_radius: 0.05,
            max_duration: 9.5,
        },
    ]
}

pub fn default_evaluations() -> Vec<Evaluation> {
    vec![
        Evaluation {
            name: "validation".into(),
            task: "right_to_left".into(),
            perturbation: 0.02,
        },
        Evaluation {
            name: "composite".into(),
            task: "composite".into(),
            perturbation: 0.02,
        },
    ]
}

impl TaskDefinition {
    pub fn validate(&self, plant: &ArmParams, script: &ScriptTiming) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::invalid(format!(
                "task name {:?} must be non-empty [A-Za-z0-9_-]",
                self.name
            )));
        }
        if self.transfers.is_empty() {
            return Err(Error::invalid(format!("task {} has no transfers", self.name)));
        }
        if !(self.grasp_radius > 0.0 && self.place_radius > 0.0) {
            return Err(Error::invalid(format!("task {} radii must be positive", self.name)));
        }
        let wps = self.waypoints(plant, script)?;
        let end = wps.last().map_or(0.0, |w| w.time);
        if !(self.max_duration >= end) {
            return Err(Error::invalid(format!(
                "task {} script ends at {end:.2} s, past max_duration {}",
                self.name, self.max_duration
            )));
        }
        Ok(())
    }

    /// Recorded ticks per demonstration or rollout.
    pub fn ticks(&self, plant: &ArmParams) -> usize {
        (self.max_duration / plant.control_period).round() as usize + 1
    }

    /// Joint-space script: hold at home, then for every transfer approach
    /// open, close, carry, open; finally return home.
    pub fn waypoints(&self, plant: &ArmParams, script: &ScriptTiming) -> Result<Vec<Waypoint>> {
        let pose = |p: [f64; 2], grip: f64| -> Result<[f64; 3]> {
            let [a, b] = plant
                .inverse_kinematics(p)
                .map_err(|e| Error::invalid(format!("task {}: {e}", self.name)))?;
            Ok([a, b, grip])
        };
        let (open, closed) = (script.open_angle, script.closed_angle);
        let home = pose(script.home, open)?;
        let mut t = 0.0;
        let mut wps = vec![Waypoint { time: t, theta: home }];
        let mut push = |dt: f64, theta: [f64; 3]| {
            t += dt;
            wps.push(Waypoint { time: t, theta });
        };
        push(script.start_hold, home);
        for tr in &self.transfers {
            push(script.approach, pose(tr.from, open)?);
            push(script.close, pose(tr.from, closed)?);
            push(script.carry, pose(tr.to, closed)?);
            push(script.open, pose(tr.to, open)?);
        }
        push(script.retreat, home);
        Ok(wps)
    }

    pub fn operator(
        &self,
        plant: &ArmParams,
        script: &ScriptTiming,
        kp: [f64; 3],
        kd: [f64; 3],
    ) -> Result<ScriptedOperator> {
        ScriptedOperator::new(self.waypoints(plant, script)?, kp, kd)
    }

    pub fn scene(&self, gripper: &GripperModel) -> Scene {
        Scene {
            objects: self.transfers.iter().map(|t| SceneObject::new(t.from, t.to)).collect(),
            grasp_radius: self.grasp_radius,
            place_radius: self.place_radius,
            gripper: gripper.clone(),
        }
    }

    /// Scene with every object start shifted uniformly within
    /// `±perturbation` per coordinate.
    pub fn perturbed_scene<R: Rng>(&self, gripper: &GripperModel, perturbation: f64, rng: &mut R) -> Scene {
        let mut scene = self.scene(gripper);
        if perturbation > 0.0 {
            for o in &mut scene.objects {
                for c in &mut o.position {
                    *c += rng.random_range(-perturbation..=perturbation);
                }
            }
        }
        scene
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream_rng;

    #[test]
    fn defaults_are_valid() {
        let plant = ArmParams::default();
        let script = ScriptTiming::default();
        for t in default_tasks() {
            t.validate(&plant, &script).unwrap();
        }
        assert_eq!(default_tasks().iter().filter(|t| t.primitive).count(), 5);
    }

    #[test]
    fn waypoints_hit_object_positions() {
        let plant = ArmParams::default();
        let script = ScriptTiming::default();
        let task = &default_tasks()[5];
        let wps = task.waypoints(&plant, &script).unwrap();
        assert_eq!(wps.len(), 3 + 4 * task.transfers.len());
        let ee = plant.forward_kinematics(&wps[2].theta);
        assert!((ee[0] - 0.35).abs() < 1e-12 && (ee[1] + 0.15).abs() < 1e-12);
        assert_eq!(wps[3].theta[2], script.closed_angle);
        assert_eq!(wps.first().unwrap().theta, wps.last().unwrap().theta);
    }

    #[test]
    fn unreachable_task_is_rejected() {
        let mut t = default_tasks().remove(0);
        t.transfers[0].to = [0.9, 0.0];
        assert!(t.validate(&ArmParams::default(), &ScriptTiming::default()).is_err());
    }

    #[test]
    fn overlong_script_is_rejected() {
        let mut t = default_tasks().remove(0);
        t.max_duration = 3.0;
        assert!(t.validate(&ArmParams::default(), &ScriptTiming::default()).is_err());
    }

    #[test]
    fn perturbation_stays_in_bounds() {
        let t = default_tasks().remove(5);
        let g = GripperModel::default();
        let mut rng = stream_rng(3, &[]);
        for _ in 0..200 {
            let s = t.perturbed_scene(&g, 0.02, &mut rng);
            for (o, tr) in s.objects.iter().zip(&t.transfers) {
                assert!((o.position[0] - tr.from[0]).abs() <= 0.02);
                assert!((o.position[1] - tr.from[1]).abs() <= 0.02);
            }
        }
        assert_eq!(t.perturbed_scene(&g, 0.0, &mut rng), t.scene(&g));
    }
}
