//! Hierarchical motion generation by weighted fusion of learned motion
//! primitives, exercised on a simulated leader/follower arm pair.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod error;
pub mod harness;
pub mod io;
pub mod models;
pub mod nn;
pub mod plant;
pub mod seeding;
pub mod segmentation;
pub mod state;

pub use error::{Error, Result};
pub use state::{Demonstration, JointVector, NormStats, RobotState, Trajectory};
