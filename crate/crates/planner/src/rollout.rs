//! Forward prediction used by the planner: linear blocks for the velocity
//! and height channels, unicycle kinematics for the planar pose.
//!
//! Output channel order is fixed as forward velocity, lateral velocity,
//! height, yaw rate. The pose integrates the predicted output velocities
//! (not the commands) with an explicit Euler step that evaluates the
//! heading at the start of each interval.

use nalgebra::{DMatrix, DVector};

/// One planar pose step driven by body-frame velocities.
pub fn pose_step(pose: [f64; 3], vx: f64, vy: f64, yaw_rate: f64, dt: f64) -> [f64; 3] {
    let (s, c) = pose[2].sin_cos();
    [
        pose[0] + dt * (vx * c - vy * s),
        pose[1] + dt * (vx * s + vy * c),
        pose[2] + dt * yaw_rate,
    ]
}

#[derive(Debug, Clone)]
pub struct Rollout {
    /// Block states, `horizon + 1` entries.
    pub states: Vec<DVector<f64>>,
    /// Predicted outputs `y_k = C x_k`.
    pub outputs: Vec<[f64; 4]>,
    /// Planar poses `[x, y, yaw]`.
    pub poses: Vec<[f64; 3]>,
}

/// Simulates the discrete blocks and integrates the pose alongside.
pub fn rollout(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    x0: &DVector<f64>,
    pose0: [f64; 3],
    inputs: &[[f64; 4]],
    dt: f64,
) -> Rollout {
    let n = inputs.len();
    let mut states = Vec::with_capacity(n + 1);
    let mut outputs = Vec::with_capacity(n + 1);
    let mut poses = Vec::with_capacity(n + 1);

    let output_of = |x: &DVector<f64>| {
        let y = c * x;
        [y[0], y[1], y[2], y[3]]
    };

    let mut x = x0.clone();
    let mut pose = pose0;
    states.push(x.clone());
    outputs.push(output_of(&x));
    poses.push(pose);
    for u in inputs {
        let uv = DVector::from_column_slice(u);
        let y = *outputs.last().expect("pushed before the loop");
        pose = pose_step(pose, y[0], y[1], y[3], dt);
        x = a * &x + b * &uv;
        states.push(x.clone());
        outputs.push(output_of(&x));
        poses.push(pose);
    }
    Rollout {
        states,
        outputs,
        poses,
    }
}
