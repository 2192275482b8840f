//! Closed-loop navigation episodes: the identified model plans at the
//! replan rate, commands pass through a causal low-pass filter, and the
//! surrogate plant walks the resulting trajectory at the simulation rate.
//!
//! The ground-truth pose integrates the plant's measured velocities through
//! the planar kinematics at every simulation step; collision and goal
//! checks run against that pose, never against the planner's belief.

use crate::grid::{global_path, line_of_sight, DEFAULT_GRID_RESOLUTION};
use crate::NavError;
use linnav_lti::equilibrium_state;
use linnav_planner::{
    pose_step, NmpcParams, NmpcProblem, PlanResult, PlannerError, Pose, Scenario, SolveStatus,
};
use linnav_sysid::{
    make_profile, nominal_core, steady_state_gain, KalmanConfig, PlantState, ProfileKind,
    StackedModel,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::time::Instant;

fn default_replan_rate() -> f64 {
    5.0
}

fn default_lpf_fc() -> f64 {
    0.5
}

fn default_sim_dt() -> f64 {
    0.002
}

fn default_max_sim_time() -> f64 {
    60.0
}

fn default_goal_tolerance() -> f64 {
    0.3
}

/// Everything one reproducible episode depends on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub scenario: Scenario,
    pub profile: ProfileKind,
    #[serde(default)]
    pub params: NmpcParams,
    /// Replanning frequency in Hz.
    #[serde(default = "default_replan_rate")]
    pub replan_rate_hz: f64,
    /// Cutoff of the causal low-pass on outgoing commands, Hz.
    #[serde(default = "default_lpf_fc")]
    pub command_lpf_fc_hz: f64,
    /// Plant and filter sample interval, seconds.
    #[serde(default = "default_sim_dt")]
    pub sim_dt: f64,
    #[serde(default = "default_max_sim_time")]
    pub max_sim_time: f64,
    /// Planar distance to the goal that counts as arrival, meters.
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance: f64,
    #[serde(default)]
    pub seed: u64,
}

impl EpisodeConfig {
    pub fn new(scenario: Scenario, profile: ProfileKind) -> EpisodeConfig {
        EpisodeConfig {
            scenario,
            profile,
            params: NmpcParams::default(),
            replan_rate_hz: default_replan_rate(),
            command_lpf_fc_hz: default_lpf_fc(),
            sim_dt: default_sim_dt(),
            max_sim_time: default_max_sim_time(),
            goal_tolerance: default_goal_tolerance(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), NavError> {
        self.scenario.validate()?;
        self.params.validate()?;
        if !(self.replan_rate_hz.is_finite() && self.replan_rate_hz > 0.0) {
            return Err(NavError::Config(format!(
                "replan rate must be positive, got {} Hz",
                self.replan_rate_hz
            )));
        }
        if !(self.sim_dt.is_finite() && self.sim_dt > 0.0) {
            return Err(NavError::Config(format!(
                "sim_dt must be positive, got {}",
                self.sim_dt
            )));
        }
        let period = 1.0 / self.replan_rate_hz;
        let steps = period / self.sim_dt;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) || steps.round() < 1.0 {
            return Err(NavError::Config(format!(
                "replan period {period} s is not a whole number of {} s simulation steps",
                self.sim_dt
            )));
        }
        // The receding horizon must keep covering the plan that is executed
        // between replans, with room to spare.
        let horizon_s = self.params.horizon as f64 * self.params.dt;
        if horizon_s < 2.0 * period - 1e-9 {
            return Err(NavError::Config(format!(
                "horizon covers {horizon_s} s but must cover at least two replan periods ({} s)",
                2.0 * period
            )));
        }
        if !(self.command_lpf_fc_hz > 0.0 && self.command_lpf_fc_hz < 0.6) {
            return Err(NavError::Config(format!(
                "command filter cutoff must lie in (0, 0.6) Hz, got {}",
                self.command_lpf_fc_hz
            )));
        }
        if !(self.max_sim_time.is_finite() && self.max_sim_time > 0.0) {
            return Err(NavError::Config(format!(
                "max_sim_time must be positive, got {}",
                self.max_sim_time
            )));
        }
        if !(self.goal_tolerance.is_finite() && self.goal_tolerance > 0.0) {
            return Err(NavError::Config(format!(
                "goal_tolerance must be positive, got {}",
                self.goal_tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Reached,
    Timeout,
    Collision,
    /// The planner failed for more than three consecutive ticks and the
    /// episode was aborted for diagnosis.
    SolverFailure,
}

/// One replanning tick: what was targeted and how the solve went.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    /// Goal pose handed to the planner (a line-of-sight waypoint).
    pub target: [f64; 3],
    /// Filter state the plan started from (the planner's belief).
    pub state_estimate: Vec<f64>,
    /// None when the solver returned an error instead of a plan.
    pub status: Option<SolveStatus>,
    /// Whether the episode switched to this tick's plan.
    pub accepted: bool,
    pub sqp_iterations: usize,
    pub solve_time_s: f64,
}

/// Full record of one episode. The per-step series all share one index;
/// `pose[i]` is the pose at `time[i]`, before that step's command acts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub config: EpisodeConfig,
    pub waypoints: Vec<[f64; 2]>,
    pub time: Vec<f64>,
    pub pose: Vec<[f64; 3]>,
    /// Planner commands before the low-pass filter.
    pub command_raw: Vec<[f64; 4]>,
    /// Commands the plant actually received.
    pub command: Vec<[f64; 4]>,
    pub measured: Vec<[f64; 4]>,
    /// Per-obstacle separation (surface to surface, no safety buffer).
    pub separations: Vec<Vec<f64>>,
    pub ticks: Vec<TickRecord>,
    pub outcome: Outcome,
    pub completion_time_s: f64,
    pub final_pose: [f64; 3],
    /// Smallest separation seen at any simulation step; None without
    /// obstacles.
    pub min_separation: Option<f64>,
}

/// First-order low pass for the outgoing commands. First order on purpose:
/// its step response is monotone, so a filtered command never exceeds what
/// the planner asked for (a second-order filter's overshoot would push the
/// plant past the admissible box the plan was built against).
#[derive(Clone, Copy, Debug)]
struct CommandFilter {
    alpha: f64,
    y: f64,
}

impl CommandFilter {
    fn new(dt: f64, fc_hz: f64, y0: f64) -> CommandFilter {
        let tau = 1.0 / (2.0 * std::f64::consts::PI * fc_hz);
        CommandFilter {
            alpha: dt / (tau + dt),
            y: y0,
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        self.y += self.alpha * (x - self.y);
        self.y
    }
}

/// Surface-to-surface separation against every obstacle, in scenario order.
fn separations(scenario: &Scenario, pose: [f64; 3]) -> Vec<f64> {
    scenario
        .obstacles
        .iter()
        .map(|o| {
            let d = ((pose[0] - o.x).powi(2) + (pose[1] - o.y).powi(2)).sqrt();
            d - o.r - scenario.robot_radius
        })
        .collect()
}

fn fold_min(acc: &mut Option<f64>, seps: &[f64]) {
    for &s in seps {
        *acc = Some(acc.map_or(s, |m: f64| m.min(s)));
    }
}

/// The furthest waypoint the robot can see along a straight segment with
/// full planning clearance, falling back to the nearest waypoint when
/// nothing is visible. The final waypoint keeps the scenario's goal yaw;
/// intermediate targets face the direction of travel.
fn select_target(waypoints: &[[f64; 2]], pose: [f64; 3], scenario: &Scenario) -> [f64; 3] {
    let p = [pose[0], pose[1]];
    let clearance = scenario.effective_radius();
    let visible = waypoints
        .iter()
        .rposition(|w| line_of_sight(p, *w, &scenario.obstacles, clearance));
    let idx = visible.unwrap_or_else(|| {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, w) in waypoints.iter().enumerate() {
            let d = (w[0] - p[0]).hypot(w[1] - p[1]);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    });
    let w = waypoints[idx];
    let yaw = if idx + 1 == waypoints.len() {
        scenario.goal.yaw
    } else {
        let dx = w[0] - p[0];
        let dy = w[1] - p[1];
        if dx.hypot(dy) < 1e-9 {
            pose[2]
        } else {
            dy.atan2(dx)
        }
    };
    [w[0], w[1], yaw]
}

/// Command the executed plan prescribes `age_steps` simulation steps after
/// its first interval began. Past the horizon end the last command holds.
fn active_command(
    plan: Option<&PlanResult>,
    age_steps: usize,
    sim_dt: f64,
    rest: [f64; 4],
) -> [f64; 4] {
    match plan {
        None => rest,
        Some(p) => {
            let age = age_steps as f64 * sim_dt;
            let k = ((age / p.dt).floor() as usize).min(p.inputs.len() - 1);
            p.inputs[k]
        }
    }
}

/// Advances a plan by `shifts` intervals so a warm start built from it
/// lines up with the present. The planner itself shifts one more interval.
fn age_plan(plan: &PlanResult, shifts: usize) -> PlanResult {
    let mut aged = plan.clone();
    for _ in 0..shifts {
        if aged.inputs.len() > 1 {
            aged.inputs.remove(0);
            let last = *aged.inputs.last().expect("nonempty inputs");
            aged.inputs.push(last);
        }
        if aged.omegas.len() > 1 {
            aged.omegas.remove(0);
            let last = *aged.omegas.last().expect("nonempty omegas");
            aged.omegas.push(last);
        }
    }
    aged
}

/// Runs one episode to completion. Deterministic: identical configs give
/// identical logs except for the recorded wall-clock solve times.
pub fn run_episode(cfg: &EpisodeConfig) -> Result<EpisodeLog, NavError> {
    cfg.validate()?;
    let waypoints = global_path(&cfg.scenario, DEFAULT_GRID_RESOLUTION)?;

    let plan_model = StackedModel::from_blocks(nominal_core()).discretized(cfg.params.dt)?;
    let sim_model = StackedModel::from_blocks(nominal_core()).discretized(cfg.sim_dt)?;

    let mut profile = make_profile(cfg.profile);
    profile.seed = cfg.seed;
    let u_rest = cfg.params.u_rest;
    let mut plant = PlantState::new(&profile, cfg.sim_dt, u_rest)?;

    // Steady-state filter over the identified model at the simulation rate.
    // The lateral channels carry the stepping oscillation on top of the
    // sensor noise, so their measurement variances include both.
    let osc_var = 0.5 * profile.osc_amplitude * profile.osc_amplitude;
    let mut meas_std = profile.noise_std;
    meas_std[1] = (meas_std[1] * meas_std[1] + osc_var).sqrt();
    meas_std[3] = (meas_std[3] * meas_std[3] + osc_var).sqrt();
    let kf_cfg = KalmanConfig::defaults(
        sim_model.n_states(),
        sim_model.n_outputs(),
        Some(&meas_std),
    );
    let gain = steady_state_gain(&sim_model, &kf_cfg)?;
    let mut xhat = equilibrium_state(&sim_model, &DVector::from_column_slice(&u_rest))?;

    let mut filters: Vec<CommandFilter> = u_rest
        .iter()
        .map(|&u0| CommandFilter::new(cfg.sim_dt, cfg.command_lpf_fc_hz, u0))
        .collect();

    let period_steps = (1.0 / (cfg.replan_rate_hz * cfg.sim_dt)).round() as usize;
    let max_steps = (cfg.max_sim_time / cfg.sim_dt).ceil() as usize;
    // How many planner intervals elapse per replan period; the warm start
    // is pre-aged by all but the one interval the planner shifts itself.
    let intervals_per_tick = (1.0 / (cfg.replan_rate_hz * cfg.params.dt))
        .round()
        .max(1.0) as usize;

    let mut pose = [cfg.scenario.start.x, cfg.scenario.start.y, cfg.scenario.start.yaw];
    let mut plan: Option<PlanResult> = None;
    let mut plan_age_steps = 0usize;
    let mut consecutive_failures = 0usize;

    let mut log = EpisodeLog {
        config: cfg.clone(),
        waypoints: waypoints.clone(),
        time: Vec::new(),
        pose: Vec::new(),
        command_raw: Vec::new(),
        command: Vec::new(),
        measured: Vec::new(),
        separations: Vec::new(),
        ticks: Vec::new(),
        outcome: Outcome::Timeout,
        completion_time_s: cfg.max_sim_time,
        final_pose: pose,
        min_separation: None,
    };

    for step in 0..max_steps {
        let t = step as f64 * cfg.sim_dt;

        if step % period_steps == 0 {
            let target = select_target(&waypoints, pose, &cfg.scenario);
            let mut scen = cfg.scenario.clone();
            scen.start = Pose {
                x: pose[0],
                y: pose[1],
                yaw: pose[2],
            };
            scen.goal = Pose {
                x: target[0],
                y: target[1],
                yaw: target[2],
            };
            let problem =
                NmpcProblem::new(scen, &plan_model, cfg.params.clone(), xhat.clone(), pose)?;
            let warm = plan
                .as_ref()
                .map(|p| age_plan(p, intervals_per_tick.saturating_sub(1)));
            let started = Instant::now();
            let outcome = problem.solve(warm.as_ref());
            let wall = started.elapsed().as_secs_f64();

            let mut record = TickRecord {
                t,
                target,
                state_estimate: xhat.as_slice().to_vec(),
                status: None,
                accepted: false,
                sqp_iterations: 0,
                solve_time_s: wall,
            };
            match outcome {
                Ok(result) => {
                    record.status = Some(result.status);
                    record.sqp_iterations = result.sqp_iterations;
                    record.solve_time_s = result.solve_time_s;
                    if result.status == SolveStatus::InfeasibleQp {
                        consecutive_failures += 1;
                    } else {
                        record.accepted = true;
                        plan = Some(result);
                        plan_age_steps = 0;
                        consecutive_failures = 0;
                    }
                }
                // Numerical trouble counts as a failed tick and the stale
                // plan keeps executing; anything else is a usage bug.
                Err(PlannerError::Numerical(_)) | Err(PlannerError::Qp(_)) => {
                    consecutive_failures += 1;
                }
                Err(other) => return Err(other.into()),
            }
            log.ticks.push(record);
            if consecutive_failures > 3 {
                log.outcome = Outcome::SolverFailure;
                log.completion_time_s = t;
                break;
            }
        }

        let raw = active_command(plan.as_ref(), plan_age_steps, cfg.sim_dt, u_rest);
        let mut cmd = [0.0; 4];
        for (i, f) in filters.iter_mut().enumerate() {
            cmd[i] = f.step(raw[i]);
        }
        let sample = plant.step(&profile, cmd, cfg.sim_dt)?;

        log.time.push(t);
        log.pose.push(pose);
        log.command_raw.push(raw);
        log.command.push(cmd);
        log.measured.push(sample.measured);
        let seps = separations(&cfg.scenario, pose);
        fold_min(&mut log.min_separation, &seps);
        log.separations.push(seps);

        pose = pose_step(
            pose,
            sample.measured[0],
            sample.measured[1],
            sample.measured[3],
            cfg.sim_dt,
        );
        let y = DVector::from_column_slice(&sample.measured);
        let innovation = y - sim_model.c() * &xhat;
        xhat += &gain * innovation;
        xhat = sim_model.a() * &xhat + sim_model.b() * DVector::from_column_slice(&cmd);
        plan_age_steps += 1;

        let seps_now = separations(&cfg.scenario, pose);
        fold_min(&mut log.min_separation, &seps_now);
        if seps_now.iter().any(|s| *s < 0.0) {
            log.outcome = Outcome::Collision;
            log.completion_time_s = t + cfg.sim_dt;
            break;
        }
        let goal_gap = (pose[0] - cfg.scenario.goal.x).hypot(pose[1] - cfg.scenario.goal.y);
        if goal_gap <= cfg.goal_tolerance {
            log.outcome = Outcome::Reached;
            log.completion_time_s = t + cfg.sim_dt;
            break;
        }
    }

    log.final_pose = pose;
    Ok(log)
}

/// One CSV row per simulation step: time, pose, raw and filtered commands,
/// measurements and per-obstacle separations.
pub fn episode_csv(log: &EpisodeLog) -> String {
    let mut out = String::from(
        "t,px,py,yaw,u_raw_vx,u_raw_vy,u_raw_z,u_raw_wyaw,u_vx,u_vy,u_z,u_wyaw,y_vx,y_vy,y_z,y_wyaw",
    );
    for i in 0..log.config.scenario.obstacles.len() {
        let _ = write!(out, ",sep_{i}");
    }
    out.push('\n');
    for i in 0..log.time.len() {
        let _ = write!(out, "{}", log.time[i]);
        for v in log.pose[i] {
            let _ = write!(out, ",{v}");
        }
        for v in log.command_raw[i] {
            let _ = write!(out, ",{v}");
        }
        for v in log.command[i] {
            let _ = write!(out, ",{v}");
        }
        for v in log.measured[i] {
            let _ = write!(out, ",{v}");
        }
        for v in &log.separations[i] {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
