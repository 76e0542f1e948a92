use serde::{Deserialize, Serialize};

use super::{ArmParams, ARM_DOF};
use crate::state::{JointVector, RobotState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    /// m
    pub position: [f64; 2],
    pub goal: [f64; 2],
    pub grasped: bool,
    /// Object position relative to the end effector while grasped.
    #[serde(default)]
    pub grasp_offset: [f64; 2],
}

impl SceneObject {
    pub fn new(position: [f64; 2], goal: [f64; 2]) -> Self {
        SceneObject {
            position,
            goal,
            grasped: false,
            grasp_offset: [0.0, 0.0],
        }
    }

    pub fn distance_to_goal(&self) -> f64 {
        dist(self.position, self.goal)
    }
}

/// Gripper thresholds, rad. Closing below `close_threshold` grasps, opening
/// above `release_threshold` releases, and a grasped object touches the jaws
/// below `contact_angle`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperModel {
    pub close_threshold: f64,
    pub release_threshold: f64,
    pub contact_angle: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        GripperModel {
            close_threshold: 0.35,
            release_threshold: 0.5,
            contact_angle: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    /// m
    pub grasp_radius: f64,
    /// m
    pub place_radius: f64,
    pub gripper: GripperModel,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Scene {
    pub fn grasped_index(&self) -> Option<usize> {
        self.objects.iter().position(|o| o.grasped)
    }

    /// Applies grasp, carry and release rules for the follower's current pose.
    pub fn update(&mut self, follower: &RobotState, params: &ArmParams) {
        let ee = params.forward_kinematics(&follower.theta);
        let grip = follower.theta[2];
        match self.grasped_index() {
            Some(i) => {
                let obj = &mut self.objects[i];
                obj.position = [ee[0] + obj.grasp_offset[0], ee[1] + obj.grasp_offset[1]];
                if grip > self.gripper.release_threshold {
                    obj.grasped = false;
                }
            }
            None if grip < self.gripper.close_threshold => {
                let nearest = self
                    .objects
                    .iter()
                    .enumerate()
                    .map(|(i, o)| (i, dist(o.position, ee)))
                    .filter(|(_, d)| *d <= self.grasp_radius)
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                if let Some((i, _)) = nearest {
                    let obj = &mut self.objects[i];
                    obj.grasped = true;
                    obj.grasp_offset = [obj.position[0] - ee[0], obj.position[1] - ee[1]];
                }
            }
            None => {}
        }
    }

    /// Functional form of [`update`](Self::update).
    pub fn updated(&self, follower: &RobotState, params: &ArmParams) -> Scene {
        let mut next = self.clone();
        next.update(follower, params);
        next
    }

    /// Torque a grasped object exerts on the follower's jaws.
    pub fn contact_torque(&self, follower: &RobotState, params: &ArmParams) -> JointVector {
        let mut tau = vec![0.0; ARM_DOF];
        if self.grasped_index().is_some() {
            let squeeze = self.gripper.contact_angle - follower.theta[2];
            if squeeze > 0.0 {
                tau[2] = params.gripper_stiffness * squeeze;
            }
        }
        JointVector::from_raw(tau)
    }

    /// Mean distance between each object and its goal.
    pub fn mean_placement_error(&self) -> f64 {
        if self.objects.is_empty() {
            return 0.0;
        }
        self.objects.iter().map(SceneObject::distance_to_goal).sum::<f64>() / self.objects.len() as f64
    }
}

/// Every object released and resting within `place_radius` of its goal.
pub fn task_success(scene: &Scene) -> bool {
    scene
        .objects
        .iter()
        .all(|o| !o.grasped && o.distance_to_goal() <= scene.place_radius)
}
