//! Receding-horizon planner: sequential quadratic programming on a
//! condensed input parameterization.
//!
//! Decision vector per QP: `[dU (4N); dw (N-1)]` where `dU` perturbs the
//! command trajectory and `dw` perturbs the barrier relaxations. Block
//! states never appear as decision variables; they are eliminated through
//! the exact discrete-time sensitivities, and the planar pose through a
//! first-order expansion of the unicycle kinematics along the current
//! rollout. Obstacle clearance is enforced through a discrete barrier
//! chain `d(p_{k+1}) >= alpha * w_k * d(p_k)` with relaxations `w_k >= 0`
//! pulled toward 1 by a quadratic penalty, plus explicit `d(p_k) >= 0`
//! rows (the chain alone has no base case).

use std::time::Instant;

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use linnav_lti::{StateSpaceModel, TimeDomain};

use crate::params::{Interval, NmpcParams};
use crate::qp::solve_qp;
use crate::rollout::{rollout, Rollout};
use crate::scenario::{obstacle_distance, obstacle_distance_gradient, Scenario};
use crate::PlannerError;

/// Trust-region half-width on each relaxation step; the barrier rows are
/// bilinear in (w, d), so steps in w must stay local too.
const OMEGA_TRUST: f64 = 0.5;

// Interior pad left on a relieved ceiling bound, meters.
const RELIEF_PAD: f64 = 5e-3;

// L1 exact-penalty weight on constraint violation in the line-search
// merit; stiff enough to dominate the tracking cost's pull across any
// constraint boundary in this problem family.
const MERIT_MU: f64 = 1.0e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Converged and the nonlinear constraints hold within tolerance.
    Optimal,
    /// Iteration budget exhausted before the step size criterion fired.
    MaxIter,
    /// A quadratic subproblem had no solution, or the converged iterate
    /// still violates the nonlinear constraints.
    InfeasibleQp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanResult {
    /// Horizon + 1 rows of block states with the planar pose appended.
    pub states: Vec<Vec<f64>>,
    /// Commanded [vx, vy, height, yaw rate] per interval.
    pub inputs: Vec<[f64; 4]>,
    /// Barrier relaxations, one per interior step.
    pub omegas: Vec<f64>,
    /// Terminal pose defect [x, y, yaw] relative to the goal.
    pub delta: [f64; 3],
    /// Squared-clearance values per step (rows) and obstacle (columns).
    pub distances: Vec<Vec<f64>>,
    /// Predicted outputs per step.
    pub outputs: Vec<[f64; 4]>,
    pub cost: f64,
    pub sqp_iterations: usize,
    pub status: SolveStatus,
    pub solve_time_s: f64,
    /// Planning step, kept for log timestamps.
    pub dt: f64,
}

impl PlanResult {
    /// One row per horizon step: index, time, command, predicted output,
    /// pose, relaxation and the closest squared clearance.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "step,t,u_vx,u_vy,u_z,u_wyaw,y_vx,y_vy,y_z,y_wyaw,px,py,yaw,omega,min_distance\n",
        );
        let n = self.inputs.len();
        let n_states = self.states[0].len() - 3;
        for k in 0..self.states.len() {
            let u = self.inputs[k.min(n - 1)];
            let y = self.outputs[k];
            let pose = &self.states[k][n_states..];
            let omega = if k >= 1 && k <= self.omegas.len() {
                self.omegas[k - 1]
            } else {
                1.0
            };
            let dmin = self.distances[k]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            out.push_str(&format!(
                "{},{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                k,
                k as f64 * self.dt,
                u[0], u[1], u[2], u[3],
                y[0], y[1], y[2], y[3],
                pose[0], pose[1], pose[2],
                omega,
                if dmin.is_finite() { dmin } else { f64::NAN },
            ));
        }
        out
    }
}

/// One scalar constraint of the nonlinear program. All rows are of the
/// form `value >= 0` except `Output`, which carries a two-sided box
/// handled by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintRow {
    /// Squared clearance to an obstacle at step k must stay nonnegative.
    Distance { obstacle: usize, k: usize },
    /// d(p_{k+1}) - alpha * w_k * d(p_k) >= 0 for k in 1..horizon.
    Barrier { obstacle: usize, k: usize },
    /// Relaxation nonnegativity.
    Relaxation { k: usize },
    /// Ceiling clearance (h_max - margin) - y_height at step k.
    Ceiling { region: usize, k: usize },
    /// Raw output value, bounded by the admissible box.
    Output { k: usize, channel: usize },
}

/// Row set frozen at a linearization point. Membership (which ceiling
/// rows are active) depends on the poses of the defining rollout, but
/// each row's value is a smooth function of the inputs and relaxations,
/// so finite differences against `constraint_jacobian` are well posed.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub rows: Vec<ConstraintRow>,
}

#[derive(Debug, Clone)]
pub struct NmpcProblem {
    params: NmpcParams,
    scenario: Scenario,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    x0: DVector<f64>,
    pose0: [f64; 3],
}

/// Rollout plus first-order sensitivities of states and pose with
/// respect to the stacked input vector.
struct Linearization {
    roll: Rollout,
    /// s[k]: d x_k / d U, size n_states x 4N.
    s: Vec<DMatrix<f64>>,
    jx: Vec<RowDVector<f64>>,
    jy: Vec<RowDVector<f64>>,
    jyaw: Vec<RowDVector<f64>>,
}

fn wrap_angle(a: f64) -> f64 {
    (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI
}

impl NmpcProblem {
    pub fn new(
        scenario: Scenario,
        model: &StateSpaceModel,
        params: NmpcParams,
        x0: DVector<f64>,
        pose0: [f64; 3],
    ) -> Result<Self, PlannerError> {
        params.validate()?;
        scenario.validate()?;
        match model.time_domain() {
            TimeDomain::Discrete(dt) if (dt - params.dt).abs() <= 1e-9 * params.dt.max(1.0) => {}
            TimeDomain::Discrete(dt) => {
                return Err(PlannerError::Dimension(format!(
                    "model sample period {dt} does not match planner dt {}",
                    params.dt
                )))
            }
            TimeDomain::Continuous => {
                return Err(PlannerError::Dimension(
                    "planner needs a discrete-time model".into(),
                ))
            }
        }
        if model.n_inputs() != 4 || model.n_outputs() != 4 {
            return Err(PlannerError::Dimension(format!(
                "model must map 4 commands to 4 outputs, got {}x{}",
                model.n_inputs(),
                model.n_outputs()
            )));
        }
        if model.d().amax() != 0.0 {
            return Err(PlannerError::Dimension(
                "model must be strictly proper (D = 0)".into(),
            ));
        }
        if x0.len() != model.n_states() {
            return Err(PlannerError::Dimension(format!(
                "initial state has {} entries, model has {} states",
                x0.len(),
                model.n_states()
            )));
        }
        if !x0.iter().all(|v| v.is_finite()) || !pose0.iter().all(|v| v.is_finite()) {
            return Err(PlannerError::Dimension(
                "initial state and pose must be finite".into(),
            ));
        }
        Ok(Self {
            params,
            scenario,
            a: model.a().clone(),
            b: model.b().clone(),
            c: model.c().clone(),
            x0,
            pose0,
        })
    }

    pub fn params(&self) -> &NmpcParams {
        &self.params
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Variable counts of the underlying nonlinear program (before the
    /// states and pose defect are eliminated by condensing).
    pub fn state_variable_count(&self) -> usize {
        (self.x0.len() + 3) * (self.params.horizon + 1)
    }

    pub fn input_variable_count(&self) -> usize {
        4 * self.params.horizon
    }

    pub fn relaxation_variable_count(&self) -> usize {
        self.params.horizon - 1
    }

    pub fn defect_variable_count(&self) -> usize {
        3
    }

    pub fn rollout(&self, inputs: &[[f64; 4]]) -> Rollout {
        rollout(
            &self.a,
            &self.b,
            &self.c,
            &self.x0,
            self.pose0,
            inputs,
            self.params.dt,
        )
    }

    fn linearize(&self, inputs: &[[f64; 4]]) -> Linearization {
        let n = self.params.horizon;
        let nu = 4 * n;
        let nx = self.x0.len();
        let dt = self.params.dt;
        let roll = self.rollout(inputs);

        let mut s = Vec::with_capacity(n + 1);
        s.push(DMatrix::zeros(nx, nu));
        let mut jx = Vec::with_capacity(n + 1);
        let mut jy = Vec::with_capacity(n + 1);
        let mut jyaw = Vec::with_capacity(n + 1);
        jx.push(RowDVector::zeros(nu));
        jy.push(RowDVector::zeros(nu));
        jyaw.push(RowDVector::zeros(nu));

        for k in 0..n {
            let mut next = &self.a * &s[k];
            next.view_mut((0, 4 * k), (nx, 4)).copy_from(&self.b);
            s.push(next);

            let y = roll.outputs[k];
            let yaw = roll.poses[k][2];
            let (sin, cos) = yaw.sin_cos();
            let yvx = self.c.row(0) * &s[k];
            let yvy = self.c.row(1) * &s[k];
            let yw = self.c.row(3) * &s[k];
            let jxk = &jx[k] + dt * (cos * &yvx - sin * &yvy + (-y[0] * sin - y[1] * cos) * &jyaw[k]);
            let jyk = &jy[k] + dt * (sin * &yvx + cos * &yvy + (y[0] * cos - y[1] * sin) * &jyaw[k]);
            let jwk = &jyaw[k] + dt * yw;
            jx.push(jxk);
            jy.push(jyk);
            jyaw.push(jwk);
        }
        Linearization {
            roll,
            s,
            jx,
            jy,
            jyaw,
        }
    }

    /// Builds the active row set at the rollout induced by `inputs`.
    pub fn constraint_set(&self, inputs: &[[f64; 4]]) -> ConstraintSet {
        self.set_from(&self.rollout(inputs))
    }

    /// Evaluates each row of `set` at the given inputs and relaxations.
    pub fn constraint_values(
        &self,
        set: &ConstraintSet,
        inputs: &[[f64; 4]],
        omegas: &[f64],
    ) -> DVector<f64> {
        self.values_from(&self.rollout(inputs), set, omegas)
    }

    /// Analytic Jacobian of `constraint_values` with respect to the
    /// stacked decision vector `[inputs (4N); relaxations (N-1)]`.
    pub fn constraint_jacobian(
        &self,
        set: &ConstraintSet,
        inputs: &[[f64; 4]],
        omegas: &[f64],
    ) -> DMatrix<f64> {
        let lin = self.linearize(inputs);
        self.jacobian_from(&lin, set, omegas)
    }

    fn jacobian_from(
        &self,
        lin: &Linearization,
        set: &ConstraintSet,
        omegas: &[f64],
    ) -> DMatrix<f64> {
        let nu = 4 * self.params.horizon;
        let nw = self.params.horizon - 1;
        let radius = self.scenario.effective_radius();
        let mut jac = DMatrix::zeros(set.rows.len(), nu + nw);

        let distance_grad = |jac: &mut DMatrix<f64>, r: usize, obstacle: usize, k: usize, scale: f64| {
            let p = lin.roll.poses[k];
            let (gx, gy) =
                obstacle_distance_gradient(p[0], p[1], &self.scenario.obstacles[obstacle]);
            for i in 0..nu {
                jac[(r, i)] += scale * (gx * lin.jx[k][i] + gy * lin.jy[k][i]);
            }
        };

        for (r, row) in set.rows.iter().enumerate() {
            match *row {
                ConstraintRow::Distance { obstacle, k } => {
                    distance_grad(&mut jac, r, obstacle, k, 1.0);
                }
                ConstraintRow::Barrier { obstacle, k } => {
                    let alpha = self.params.alpha_dcbf;
                    let w = omegas[k - 1];
                    distance_grad(&mut jac, r, obstacle, k + 1, 1.0);
                    distance_grad(&mut jac, r, obstacle, k, -alpha * w);
                    let p = lin.roll.poses[k];
                    let d_k =
                        obstacle_distance(p[0], p[1], &self.scenario.obstacles[obstacle], radius);
                    jac[(r, nu + (k - 1))] = -alpha * d_k;
                }
                ConstraintRow::Relaxation { k } => {
                    jac[(r, nu + k)] = 1.0;
                }
                ConstraintRow::Ceiling { k, .. } => {
                    let row_z = self.c.row(2) * &lin.s[k];
                    for i in 0..nu {
                        jac[(r, i)] = -row_z[i];
                    }
                }
                ConstraintRow::Output { k, channel } => {
                    let row_c = self.c.row(channel) * &lin.s[k];
                    for i in 0..nu {
                        jac[(r, i)] = row_c[i];
                    }
                }
            }
        }
        jac
    }

    /// Nonlinear objective at an iterate.
    fn cost_of(&self, roll: &Rollout, inputs: &[[f64; 4]], omegas: &[f64]) -> f64 {
        let p = &self.params;
        let n = p.horizon;
        let mut j = 0.0;
        for k in 1..=n {
            for ch in 0..4 {
                j += p.q_output[ch] * roll.outputs[k][ch] * roll.outputs[k][ch];
            }
        }
        for u in inputs {
            for ch in 0..4 {
                let e = u[ch] - p.u_rest[ch];
                j += p.r_input[ch] * e * e;
            }
        }
        for k in 0..n {
            let dx = &roll.states[k + 1] - &roll.states[k];
            j += p.dq_smooth * dx.norm_squared();
        }
        for w in omegas {
            j += p.rho_dcbf * (1.0 - w) * (1.0 - w);
        }
        let delta = self.terminal_defect(roll);
        for (t, kt) in p.k_terminal.iter().enumerate() {
            j += kt * delta[t] * delta[t];
        }
        j
    }

    fn terminal_defect(&self, roll: &Rollout) -> [f64; 3] {
        let p_end = roll.poses[self.params.horizon];
        [
            p_end[0] - self.scenario.goal.x,
            p_end[1] - self.scenario.goal.y,
            wrap_angle(p_end[2] - self.scenario.goal.yaw),
        ]
    }

    /// Height trajectory under the strongest descent one QP step can
    /// command: every height input dropped by the trust radius and
    /// clamped to the admissible floor.
    fn max_descent_profile(&self, inputs: &[[f64; 4]]) -> Vec<f64> {
        let mut down = inputs.to_vec();
        for u in down.iter_mut() {
            u[2] = (u[2] - self.params.trust_radius)
                .clamp(self.params.u_adm[2].min, self.params.u_adm[2].max);
        }
        self.rollout(&down).outputs.iter().map(|y| y[2]).collect()
    }

    /// How far a ceiling row may transiently exceed its bound: zero when
    /// the strongest available descent meets the bound, otherwise the
    /// unavoidable remainder plus a small interior pad. Mirrors the
    /// output box stretch: an inherited deficit asks for the fastest
    /// recovery instead of emptying the feasible set.
    fn ceiling_relief(&self, descent: &[f64], region: usize, k: usize) -> f64 {
        let c = self.scenario.height_regions[region].hmax - self.params.height_margin;
        (descent[k] + RELIEF_PAD - c).max(0.0)
    }

    /// Total constraint violation of evaluated rows against the same
    /// relieved bounds the QP enforces.
    fn penalty_of(&self, set: &ConstraintSet, values: &DVector<f64>, descent: &[f64]) -> f64 {
        let x_box = self.output_box();
        let mut violation = 0.0;
        for (row, v) in set.rows.iter().zip(values.iter()) {
            match row {
                ConstraintRow::Output { channel, .. } => {
                    let b = x_box[*channel];
                    violation += (b.min - v).max(0.0) + (v - b.max).max(0.0);
                }
                ConstraintRow::Ceiling { region, k } => {
                    violation += (-self.ceiling_relief(descent, *region, *k) - v).max(0.0);
                }
                _ => violation += (-v).max(0.0),
            }
        }
        violation
    }

    /// Line-search merit at an arbitrary point: tracking cost plus the
    /// stiff violation charge, each measured on the point's own rollout
    /// and active row set.
    fn merit_of(&self, descent: &[f64], inputs: &[[f64; 4]], omegas: &[f64]) -> f64 {
        let roll = self.rollout(inputs);
        let set = self.set_from(&roll);
        let values = self.values_from(&roll, &set, omegas);
        self.cost_of(&roll, inputs, omegas) + MERIT_MU * self.penalty_of(&set, &values, descent)
    }

    /// Admissible output box, stretched per channel just enough to contain
    /// the initial condition's own output. A belief that arrives outside
    /// the box (sensor noise, filter overshoot in the executing loop) is
    /// asked to steer back in rather than making every step infeasible.
    fn output_box(&self) -> [Interval; 4] {
        let y0 = &self.c * &self.x0;
        let mut boxes = self.params.x_adm;
        for (ch, b) in boxes.iter_mut().enumerate() {
            b.min = b.min.min(y0[ch]);
            b.max = b.max.max(y0[ch]);
        }
        boxes
    }

    fn feasible(
        &self,
        roll: &Rollout,
        set: &ConstraintSet,
        descent: &[f64],
        inputs: &[[f64; 4]],
        omegas: &[f64],
    ) -> bool {
        let tol = self.params.constraint_tol;
        let x_box = self.output_box();
        let values = self.values_from(roll, set, omegas);
        for (row, v) in set.rows.iter().zip(values.iter()) {
            let ok = match row {
                ConstraintRow::Output { channel, .. } => x_box[*channel].contains(*v, tol),
                ConstraintRow::Ceiling { region, k } => {
                    *v >= -self.ceiling_relief(descent, *region, *k) - tol
                }
                _ => *v >= -tol,
            };
            if !ok {
                return false;
            }
        }
        inputs.iter().all(|u| {
            (0..4).all(|ch| self.params.u_adm[ch].contains(u[ch], tol))
        })
    }

    /// Runs the SQP iteration. `warm` shifts a previous solution forward
    /// by one interval; without it the iteration starts from the rest
    /// command and fully tight relaxations.
    pub fn solve(&self, warm: Option<&PlanResult>) -> Result<PlanResult, PlannerError> {
        let started = Instant::now();
        let p = &self.params;
        let n = p.horizon;
        let nu = 4 * n;
        let nw = n - 1;
        let nz = nu + nw;

        let mut inputs: Vec<[f64; 4]> = vec![p.u_rest; n];
        let mut omegas: Vec<f64> = vec![1.0; nw];
        if let Some(prev) = warm {
            if prev.inputs.len() != n || prev.omegas.len() != nw {
                return Err(PlannerError::Dimension(format!(
                    "warm start has {} inputs and {} relaxations, expected {} and {}",
                    prev.inputs.len(),
                    prev.omegas.len(),
                    n,
                    nw
                )));
            }
            for k in 0..n {
                inputs[k] = prev.inputs[(k + 1).min(n - 1)];
            }
            for k in 0..nw {
                omegas[k] = prev.omegas[(k + 1).min(nw - 1)].max(0.0);
            }
        }
        for u in inputs.iter_mut() {
            for ch in 0..4 {
                u[ch] = u[ch].clamp(p.u_adm[ch].min, p.u_adm[ch].max);
            }
        }

        let mut status = SolveStatus::MaxIter;
        let mut converged = false;
        let mut iterations = 0;
        // Frozen at the starting iterate so relieved ceiling bounds stay
        // put while the iteration converges, instead of chasing the
        // solver's own descent.
        let descent = self.max_descent_profile(&inputs);

        for _ in 0..p.sqp_max_iter {
            let lin = self.linearize(&inputs);
            if lin.roll.outputs.iter().flatten().any(|v| !v.is_finite()) {
                return Err(PlannerError::Numerical(
                    "rollout produced non-finite outputs".into(),
                ));
            }
            let set = self.set_from(&lin.roll);
            let values = self.values_from(&lin.roll, &set, &omegas);
            let jac = self.jacobian_from(&lin, &set, &omegas);

            // Bounds per constraint row, then per-input box/trust rows.
            let extra = nu;
            let m = set.rows.len() + extra;
            let mut a = DMatrix::zeros(m, nz);
            a.view_mut((0, 0), (set.rows.len(), nz)).copy_from(&jac);
            let mut l = DVector::from_element(m, f64::NEG_INFINITY);
            let mut u = DVector::from_element(m, f64::INFINITY);
            let x_box = self.output_box();
            for (r, row) in set.rows.iter().enumerate() {
                match row {
                    ConstraintRow::Output { channel, .. } => {
                        l[r] = x_box[*channel].min - values[r];
                        u[r] = x_box[*channel].max - values[r];
                    }
                    ConstraintRow::Relaxation { .. } => {
                        l[r] = (-values[r]).max(-OMEGA_TRUST);
                        u[r] = OMEGA_TRUST;
                    }
                    ConstraintRow::Ceiling { region, k } => {
                        l[r] = -self.ceiling_relief(&descent, *region, *k) - values[r];
                    }
                    _ => {
                        l[r] = -values[r];
                    }
                }
            }
            for k in 0..n {
                for ch in 0..4 {
                    let r = set.rows.len() + 4 * k + ch;
                    a[(r, 4 * k + ch)] = 1.0;
                    l[r] = (p.u_adm[ch].min - inputs[k][ch]).max(-p.trust_radius);
                    u[r] = (p.u_adm[ch].max - inputs[k][ch]).min(p.trust_radius);
                }
            }

            let (h, g) = self.quadratic_cost(&lin, &inputs, &omegas);
            let qp = solve_qp(&h, &g, &a, &l, &u)?;
            iterations += 1;
            // A slightly loose duality gap still yields a useful step;
            // only a persistent primal or dual residual means the
            // linearized rows cannot be satisfied in the trust region.
            let acceptable = qp.converged
                || (qp.primal_residual <= 1e-7
                    && qp.dual_residual <= 1e-5
                    && qp.gap <= 1e-4);
            if !acceptable {
                status = SolveStatus::InfeasibleQp;
                break;
            }

            // Backtracking line search on the penalized merit. The QP
            // direction is a descent direction for the linearized model
            // only; near sharp curvature (goal-yaw alignment, active-set
            // flips) a full step can overshoot into a worse iterate, and
            // accepting it sets up a relinearization limit cycle instead
            // of convergence.
            let merit =
                self.cost_of(&lin.roll, &inputs, &omegas) + MERIT_MU * self.penalty_of(&set, &values, &descent);
            let mut alpha = 1.0f64;
            let mut accepted = None;
            for _ in 0..9 {
                let mut trial_inputs = inputs.clone();
                let mut trial_omegas = omegas.clone();
                let mut step = 0.0f64;
                for k in 0..n {
                    for ch in 0..4 {
                        let v = (trial_inputs[k][ch] + alpha * qp.x[4 * k + ch])
                            .clamp(p.u_adm[ch].min, p.u_adm[ch].max);
                        step = step.max((v - trial_inputs[k][ch]).abs());
                        trial_inputs[k][ch] = v;
                    }
                }
                for k in 0..nw {
                    let v = (trial_omegas[k] + alpha * qp.x[nu + k]).max(0.0);
                    step = step.max((v - trial_omegas[k]).abs());
                    trial_omegas[k] = v;
                }
                let trial_merit = self.merit_of(&descent, &trial_inputs, &trial_omegas);
                if trial_merit < merit - 1e-12 {
                    accepted = Some((trial_inputs, trial_omegas, step));
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((ti, tw, step)) => {
                    inputs = ti;
                    omegas = tw;
                    if step <= p.kkt_tol {
                        converged = true;
                        break;
                    }
                }
                // No fraction of the QP direction improves the merit:
                // the iterate is stationary for this linearization.
                None => {
                    converged = true;
                    break;
                }
            }
        }

        let roll = self.rollout(&inputs);
        let set = self.set_from(&roll);
        let feasible = self.feasible(&roll, &set, &descent, &inputs, &omegas);
        if converged {
            // A converged but infeasible iterate means the linearized
            // problem kept a gap the nonlinear constraints do not close.
            status = if feasible {
                SolveStatus::Optimal
            } else {
                SolveStatus::InfeasibleQp
            };
        }

        let radius = self.scenario.effective_radius();
        let distances: Vec<Vec<f64>> = roll
            .poses
            .iter()
            .map(|pose| {
                self.scenario
                    .obstacles
                    .iter()
                    .map(|o| obstacle_distance(pose[0], pose[1], o, radius))
                    .collect()
            })
            .collect();
        let states: Vec<Vec<f64>> = roll
            .states
            .iter()
            .zip(roll.poses.iter())
            .map(|(x, pose)| x.iter().copied().chain(pose.iter().copied()).collect())
            .collect();

        let cost = self.cost_of(&roll, &inputs, &omegas);
        Ok(PlanResult {
            states,
            inputs,
            omegas,
            delta: self.terminal_defect(&roll),
            distances,
            outputs: roll.outputs.clone(),
            cost,
            sqp_iterations: iterations,
            status,
            solve_time_s: started.elapsed().as_secs_f64(),
            dt: p.dt,
        })
    }

    fn set_from(&self, roll: &Rollout) -> ConstraintSet {
        let n = self.params.horizon;
        let mut rows = Vec::new();
        for obstacle in 0..self.scenario.obstacles.len() {
            for k in 1..=n {
                rows.push(ConstraintRow::Distance { obstacle, k });
            }
        }
        for obstacle in 0..self.scenario.obstacles.len() {
            for k in 1..n {
                rows.push(ConstraintRow::Barrier { obstacle, k });
            }
        }
        for k in 0..n - 1 {
            rows.push(ConstraintRow::Relaxation { k });
        }
        for (region, reg) in self.scenario.height_regions.iter().enumerate() {
            for k in 1..=n {
                let p = roll.poses[k];
                if reg.contains_expanded(p[0], p[1], self.params.region_activation_margin) {
                    rows.push(ConstraintRow::Ceiling { region, k });
                }
            }
        }
        for k in 1..=n {
            for channel in 0..4 {
                rows.push(ConstraintRow::Output { k, channel });
            }
        }
        ConstraintSet { rows }
    }

    fn values_from(&self, roll: &Rollout, set: &ConstraintSet, omegas: &[f64]) -> DVector<f64> {
        let radius = self.scenario.effective_radius();
        let d_at = |obstacle: usize, k: usize| {
            let p = roll.poses[k];
            obstacle_distance(p[0], p[1], &self.scenario.obstacles[obstacle], radius)
        };
        DVector::from_iterator(
            set.rows.len(),
            set.rows.iter().map(|row| match *row {
                ConstraintRow::Distance { obstacle, k } => d_at(obstacle, k),
                ConstraintRow::Barrier { obstacle, k } => {
                    d_at(obstacle, k + 1)
                        - self.params.alpha_dcbf * omegas[k - 1] * d_at(obstacle, k)
                }
                ConstraintRow::Relaxation { k } => omegas[k],
                ConstraintRow::Ceiling { region, k } => {
                    self.scenario.height_regions[region].hmax
                        - self.params.height_margin
                        - roll.outputs[k][2]
                }
                ConstraintRow::Output { k, channel } => roll.outputs[k][channel],
            }),
        )
    }

    /// Hessian and gradient of the objective's quadratic model in the
    /// condensed decision vector.
    fn quadratic_cost(
        &self,
        lin: &Linearization,
        inputs: &[[f64; 4]],
        omegas: &[f64],
    ) -> (DMatrix<f64>, DVector<f64>) {
        let p = &self.params;
        let n = p.horizon;
        let nu = 4 * n;
        let nw = n - 1;
        let nz = nu + nw;
        let mut h = DMatrix::zeros(nz, nz);
        let mut g = DVector::zeros(nz);

        // Output magnitude cost.
        for k in 1..=n {
            for ch in 0..4 {
                let q = p.q_output[ch];
                if q == 0.0 {
                    continue;
                }
                let row = (self.c.row(ch) * &lin.s[k]).transpose();
                let y = lin.roll.outputs[k][ch];
                h.view_mut((0, 0), (nu, nu)).ger(2.0 * q, &row, &row, 1.0);
                g.rows_mut(0, nu).axpy(2.0 * q * y, &row, 1.0);
            }
        }
        // Command deviation from rest.
        for k in 0..n {
            for ch in 0..4 {
                let i = 4 * k + ch;
                h[(i, i)] += 2.0 * p.r_input[ch];
                g[i] += 2.0 * p.r_input[ch] * (inputs[k][ch] - p.u_rest[ch]);
            }
        }
        // Successive state difference smoothing.
        if p.dq_smooth > 0.0 {
            for k in 0..n {
                let ds = &lin.s[k + 1] - &lin.s[k];
                let dx = &lin.roll.states[k + 1] - &lin.roll.states[k];
                h.view_mut((0, 0), (nu, nu))
                    .gemm_tr(2.0 * p.dq_smooth, &ds, &ds, 1.0);
                g.rows_mut(0, nu)
                    .gemv_tr(2.0 * p.dq_smooth, &ds, &dx, 1.0);
            }
        }
        // Terminal pose defect.
        let delta = self.terminal_defect(&lin.roll);
        let jrows = [&lin.jx[n], &lin.jy[n], &lin.jyaw[n]];
        for t in 0..3 {
            let kt = p.k_terminal[t];
            let row = jrows[t].transpose();
            h.view_mut((0, 0), (nu, nu)).ger(2.0 * kt, &row, &row, 1.0);
            g.rows_mut(0, nu).axpy(2.0 * kt * delta[t], &row, 1.0);
        }
        // Relaxation penalty.
        for k in 0..nw {
            let i = nu + k;
            h[(i, i)] += 2.0 * p.rho_dcbf;
            g[i] += 2.0 * p.rho_dcbf * (omegas[k] - 1.0);
        }
        (h, g)
    }
}
