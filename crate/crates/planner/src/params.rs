//! Tuning knobs for the receding-horizon planner.

use serde::{Deserialize, Serialize};

use crate::PlannerError;

/// Per-channel admissible interval.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.min - tol && v <= self.max + tol
    }
}

/// Weights and limits for the planner. Channel order everywhere is
/// forward velocity, lateral velocity, height, yaw rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NmpcParams {
    /// Number of input intervals in the horizon.
    pub horizon: usize,
    /// Planning step in seconds.
    pub dt: f64,
    /// Decay rate of the barrier chain, in (0, 1). Values near 1 let the
    /// solver approach obstacles faster.
    pub alpha_dcbf: f64,
    /// Weight pulling the relaxation variables toward 1 (hard barrier).
    pub rho_dcbf: f64,
    /// Stage weight on the model outputs (velocity channels only; the
    /// height channel carries its setpoint through the input cost).
    pub q_output: [f64; 4],
    /// Stage weight on deviation of the commands from their rest values.
    pub r_input: [f64; 4],
    /// Weight on successive state differences (smoothness).
    pub dq_smooth: f64,
    /// Terminal weight on the pose defect [x, y, yaw].
    pub k_terminal: [f64; 3],
    /// Command a standing robot holds: zero velocities at nominal height.
    pub u_rest: [f64; 4],
    /// Admissible command boxes.
    pub u_adm: [Interval; 4],
    /// Admissible output boxes (same channel order).
    pub x_adm: [Interval; 4],
    /// Height commands must stay this far below a region's ceiling.
    pub height_margin: f64,
    /// Planar margin around height regions when deciding which horizon
    /// steps get a ceiling row.
    pub region_activation_margin: f64,
    /// Trust region half-width on each command step per solve iteration.
    pub trust_radius: f64,
    pub sqp_max_iter: usize,
    /// Step-size threshold that declares the iteration stationary.
    pub kkt_tol: f64,
    /// Tolerance for the final nonlinear feasibility check.
    pub constraint_tol: f64,
}

impl Default for NmpcParams {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.1,
            alpha_dcbf: 0.9,
            rho_dcbf: 1e3,
            q_output: [1e-3, 1e-3, 0.0, 1e-3],
            r_input: [0.05, 0.05, 0.05, 0.05],
            dq_smooth: 0.01,
            k_terminal: [50.0, 50.0, 10.0],
            u_rest: [0.0, 0.0, 0.98, 0.0],
            u_adm: [
                Interval::new(-0.5, 1.0),
                Interval::new(-0.3, 0.3),
                Interval::new(0.65, 1.0),
                Interval::new(-0.5, 0.5),
            ],
            x_adm: [
                Interval::new(-0.5, 1.0),
                Interval::new(-0.3, 0.3),
                Interval::new(0.65, 1.0),
                Interval::new(-0.5, 0.5),
            ],
            height_margin: 0.02,
            region_activation_margin: 0.3,
            trust_radius: 0.25,
            sqp_max_iter: 30,
            kkt_tol: 1e-4,
            constraint_tol: 1e-5,
        }
    }
}

impl NmpcParams {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.horizon < 2 {
            return Err(PlannerError::Config("horizon must be at least 2".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(PlannerError::Config("dt must be positive".into()));
        }
        if !(self.alpha_dcbf > 0.0 && self.alpha_dcbf < 1.0) {
            return Err(PlannerError::Config(
                "alpha_dcbf must lie strictly inside (0, 1)".into(),
            ));
        }
        if self.rho_dcbf <= 0.0 {
            return Err(PlannerError::Config("rho_dcbf must be positive".into()));
        }
        if self.q_output.iter().any(|w| *w < 0.0)
            || self.r_input.iter().any(|w| *w <= 0.0)
            || self.dq_smooth < 0.0
            || self.k_terminal.iter().any(|w| *w <= 0.0)
        {
            return Err(PlannerError::Config(
                "weights must be nonnegative, with r_input and k_terminal positive".into(),
            ));
        }
        for (i, b) in self.u_adm.iter().chain(self.x_adm.iter()).enumerate() {
            if !(b.min.is_finite() && b.max.is_finite() && b.min < b.max) {
                return Err(PlannerError::Config(format!(
                    "admissible box {i} is empty or unbounded"
                )));
            }
        }
        for (i, u) in self.u_rest.iter().enumerate() {
            if !self.u_adm[i].contains(*u, 0.0) {
                return Err(PlannerError::Config(format!(
                    "rest command {u} leaves the admissible box on channel {i}"
                )));
            }
        }
        if self.height_margin < 0.0 || self.region_activation_margin < 0.0 {
            return Err(PlannerError::Config("margins must be nonnegative".into()));
        }
        if self.trust_radius <= 0.0 {
            return Err(PlannerError::Config("trust_radius must be positive".into()));
        }
        if self.sqp_max_iter == 0 {
            return Err(PlannerError::Config("sqp_max_iter must be positive".into()));
        }
        if self.kkt_tol <= 0.0 || self.constraint_tol <= 0.0 {
            return Err(PlannerError::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}
