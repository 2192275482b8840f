//! Receding-horizon motion planner for a velocity-commanded walker.
//!
//! The robot is modeled as four independent linear blocks (forward
//! velocity, lateral velocity, height, yaw rate) identified elsewhere,
//! composed with planar unicycle kinematics. The planner solves a
//! nonlinear program over a short horizon by sequential quadratic
//! programming, keeping obstacle clearance through a discrete barrier
//! chain with relaxation variables and honoring command, output, and
//! ceiling boxes. The quadratic subproblems are solved by an internal
//! dense interior-point method; no external solver is involved, and
//! solves are deterministic.

mod params;
mod qp;
mod rollout;
mod scenario;
mod solve;

pub use params::{Interval, NmpcParams};
pub use qp::{solve_qp, QpError, QpSolution};
pub use rollout::{pose_step, rollout, Rollout};
pub use scenario::{
    obstacle_distance, obstacle_distance_gradient, HeightRegion, Obstacle, Pose, Scenario,
};
pub use solve::{ConstraintRow, ConstraintSet, NmpcProblem, PlanResult, SolveStatus};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Qp(#[from] QpError),
}
