//! Output-error fitting of continuous-time transfer functions.
//!
//! The estimate minimizes the simulation error: the candidate model is
//! discretized (zero-order hold) at the working rate, started from the
//! equilibrium of the first input sample, and simulated over the whole
//! record. A discrete equation-error least squares fit seeds the search
//! through the eigenvalue map s = ln(z)/dt, and Levenberg-Marquardt with
//! exact sensitivities refines the coefficients.

use crate::{fit_percentage, lowpass, Channel, IoRecord, KalmanConfig, SysidError};
use linnav_lti::{
    c2d_zoh, equilibrium_state, poly_from_roots, poly_roots, simulate_lti, StateSpaceModel,
    TimeDomain, TransferFunction,
};
use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_poles: usize,
    pub n_zeros: usize,
    /// Estimation runs at dt * decimation; an anti-alias filter at 80% of
    /// the reduced Nyquist rate is applied before subsampling.
    pub decimation: usize,
    pub max_iterations: usize,
    pub cost_tolerance: f64,
    pub multistart: usize,
    /// When false, right-half-plane poles of the final model are folded
    /// back and the numerator is re-estimated. The search itself is never
    /// constrained.
    pub allow_unstable: bool,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(n_poles: usize, n_zeros: usize) -> Self {
        FitConfig {
            n_poles,
            n_zeros,
            decimation: 20,
            max_iterations: 200,
            cost_tolerance: 1e-10,
            multistart: 5,
            allow_unstable: true,
            seed: 0,
        }
    }

    /// The published per-channel structure: three poles everywhere, two
    /// zeros on the sagittal and yaw channels, one on lateral and height.
    pub fn for_channel(ch: Channel) -> Self {
        let (np, nz) = match ch {
            Channel::Vx | Channel::Wyaw => (3, 2),
            Channel::Vy | Channel::Qz => (3, 1),
        };
        FitConfig::new(np, nz)
    }

    fn validate(&self) -> Result<(), SysidError> {
        if self.n_poles == 0 {
            return Err(SysidError::InvalidOrder("need at least one pole".into()));
        }
        if self.n_zeros >= self.n_poles {
            return Err(SysidError::InvalidOrder(format!(
                "{} zeros with {} poles is not strictly proper",
                self.n_zeros, self.n_poles
            )));
        }
        if self.decimation == 0 || self.multistart == 0 || self.max_iterations == 0 {
            return Err(SysidError::InvalidConfig(
                "decimation, multistart and max_iterations must be positive".into(),
            ));
        }
        if !(self.cost_tolerance > 0.0) {
            return Err(SysidError::InvalidConfig(
                "cost_tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub model: TransferFunction,
    /// Simulation fit on the (decimated) training data.
    pub fit_percent: f64,
    /// Five-step-ahead prediction fit on the same data; absent when the
    /// steady-state observer cannot be formed.
    pub kstep_fit_percent: Option<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Coefficients under optimization, stored ascending: num[j] multiplies
/// s^j; den[i] multiplies s^i with the leading s^n coefficient fixed at 1.
#[derive(Clone, Debug)]
struct Theta {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl Theta {
    fn to_tf(&self) -> Result<TransferFunction, SysidError> {
        let mut num: Vec<f64> = self.num.iter().rev().copied().collect();
        if num.iter().all(|c| *c == 0.0) {
            num = vec![0.0];
        }
        let mut den = vec![1.0];
        den.extend(self.den.iter().rev());
        Ok(TransferFunction::new(num, den)?)
    }
}

/// Companion-form system for a monic denominator given ascending
/// coefficients (without the leading 1), with the full state as output:
/// state j of the simulation is the response of s^j / den(s).
fn companion_states(den_asc: &[f64]) -> StateSpaceModel {
    let n = den_asc.len();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -den_asc[j];
    }
    let mut b = DMatrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    StateSpaceModel::new(
        a,
        b,
        DMatrix::identity(n, n),
        DMatrix::zeros(n, 1),
        TimeDomain::Continuous,
    )
    .expect("companion shapes are consistent")
}

/// Discretizes the companion system, starts it at the equilibrium of the
/// first input sample, and returns the state trajectory (samples x n).
/// None when the model cannot be simulated (singular equilibrium or
/// numerical overflow).
fn companion_trajectory(den_asc: &[f64], u: &DMatrix<f64>, dt: f64) -> Option<DMatrix<f64>> {
    if den_asc.iter().any(|c| !c.is_finite()) {
        return None;
    }
    let ss = companion_states(den_asc);
    let ssd = c2d_zoh(&ss, dt).ok()?;
    if ssd.a().iter().any(|v| !v.is_finite()) || ssd.b().iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x0 = equilibrium_state(&ssd, &DVector::from_element(1, u[(0, 0)])).ok()?;
    let traj = simulate_lti(&ssd, u, &x0).ok()?;
    if traj.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(traj)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn predict_output(theta: &Theta, phi: &DMatrix<f64>) -> DVector<f64> {
    let n = phi.nrows();
    let mut yhat = DVector::zeros(n);
    for (j, c) in theta.num.iter().enumerate() {
        for k in 0..n {
            yhat[k] += c * phi[(k, j)];
        }
    }
    yhat
}

fn cost_of(theta: &Theta, u: &DMatrix<f64>, y: &DVector<f64>, dt: f64) -> Option<(f64, DVector<f64>)> {
    let phi = companion_trajectory(&theta.den, u, dt)?;
    let yhat = predict_output(theta, &phi);
    let r = &yhat - y;
    let cost = r.norm_squared();
    if !cost.is_finite() {
        return None;
    }
    Some((cost, yhat))
}

/// Residual, exact Jacobian and cost at theta.
///
/// The numerator sensitivities are the companion states of 1/den driven
/// by u. The denominator sensitivities are responses of
/// -s^i num(s) / den(s)^2, realized as one companion simulation of
/// 1/den^2 whose states are combined through the numerator; both use the
/// equilibrium-of-first-sample initialization, which makes the columns
/// exact derivatives of the simulated response including its initial
/// state.
fn residual_jacobian(
    theta: &Theta,
    u: &DMatrix<f64>,
    y: &DVector<f64>,
    dt: f64,
) -> Option<(DVector<f64>, DMatrix<f64>, f64)> {
    let np = theta.den.len();
    let nc = theta.num.len();
    let phi = companion_trajectory(&theta.den, u, dt)?;
    let yhat = predict_output(theta, &phi);
    let r = &yhat - y;
    let cost = r.norm_squared();
    if !cost.is_finite() {
        return None;
    }
    let mut den_full = theta.den.clone();
    den_full.push(1.0);
    let den2_full = poly_mul(&den_full, &den_full);
    let den2_asc = &den2_full[..2 * np];
    let psi = companion_trajectory(den2_asc, u, dt)?;
    let n = u.nrows();
    let mut jac = DMatrix::zeros(n, nc + np);
    for j in 0..nc {
        for k in 0..n {
            jac[(k, j)] = phi[(k, j)];
        }
    }
    for i in 0..np {
        for k in 0..n {
            let mut acc = 0.0;
            for (j, c) in theta.num.iter().enumerate() {
                acc += c * psi[(k, i + j)];
            }
            jac[(k, nc + i)] = -acc;
        }
    }
    Some((r, jac, cost))
}

/// Maps a discrete pole to its continuous image s = ln(z)/dt. Poles on or
/// left of the negative real axis have no real-coefficient image; they are
/// folded onto the positive real axis at the same radius.
fn map_pole(z: Complex<f64>, dt: f64) -> Complex<f64> {
    let mut z = z;
    if z.norm() < 1e-6 {
        z = Complex::new(1e-6, 0.0);
    }
    if z.im.abs() < 1e-12 && z.re < 0.0 {
        z = Complex::new(-z.re, 0.0);
    }
    z.ln() / dt
}

fn reflect_unstable(den_asc: &[f64]) -> Vec<f64> {
    let mut den_desc = vec![1.0];
    den_desc.extend(den_asc.iter().rev());
    let mut roots = poly_roots(&den_desc);
    let mut touched = false;
    for r in roots.iter_mut() {
        if r.re > 0.0 {
            r.re = -r.re;
            touched = true;
        }
    }
    if !touched {
        return den_asc.to_vec();
    }
    let monic = poly_from_roots(&roots);
    monic.iter().skip(1).rev().copied().collect()
}

/// Discrete equation-error least squares, then pole mapping, giving the
/// continuous denominator used to seed the search.
fn arx_denominator(u: &DVector<f64>, y: &DVector<f64>, np: usize, dt: f64) -> Option<Vec<f64>> {
    let n = y.len();
    if n <= 2 * np {
        return None;
    }
    let rows = n - np;
    let mut a = DMatrix::zeros(rows, 2 * np);
    let mut b = DVector::zeros(rows);
    for k in np..n {
        let row = k - np;
        for i in 1..=np {
            a[(row, i - 1)] = -y[k - i];
            a[(row, np + i - 1)] = u[k - i];
        }
        b[row] = y[k];
    }
    let svd = a.svd(true, true);
    let sol = svd.solve(&b, 1e-12).ok()?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    // Monic discrete denominator z^np + alpha_1 z^(np-1) + ...
    let mut den_z = vec![1.0];
    den_z.extend(sol.iter().take(np));
    let poles_z = poly_roots(&den_z);
    let poles_s: Vec<Complex<f64>> = poles_z.iter().map(|z| map_pole(*z, dt)).collect();
    if poles_s.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
        return None;
    }
    let monic = poly_from_roots(&poles_s);
    let den_asc: Vec<f64> = monic.iter().skip(1).rev().copied().collect();
    Some(reflect_unstable(&den_asc))
}

/// Least-squares numerator for a fixed denominator.
fn numerator_for(den_asc: &[f64], u: &DMatrix<f64>, y: &DVector<f64>, dt: f64, nc: usize) -> Option<Vec<f64>> {
    let phi = companion_trajectory(den_asc, u, dt)?;
    let basis = phi.columns(0, nc).into_owned();
    let svd = basis.svd(true, true);
    let sol = svd.solve(y, 1e-12).ok()?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(sol.iter().copied().collect())
}

struct Refined {
    theta: Theta,
    cost: f64,
    yhat: DVector<f64>,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(
    start: Theta,
    u: &DMatrix<f64>,
    y: &DVector<f64>,
    dt: f64,
    cfg: &FitConfig,
) -> Option<Refined> {
    let grad_tol = cfg.cost_tolerance.sqrt();
    let mut theta = start;
    let (mut r, mut jac, mut cost) = residual_jacobian(&theta, u, y, dt)?;
    let mut yhat = y + &r;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        let g = jac.transpose() * &r;
        if g.amax() <= grad_tol * (1.0 + cost) {
            converged = true;
            break;
        }
        let h = jac.transpose() * &jac;
        let mut damped = h.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += lambda * h[(i, i)].max(1e-12);
        }
        let Some(delta) = damped.lu().solve(&(-&g)) else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
            continue;
        };
        let mut candidate = theta.clone();
        for (j, d) in delta.iter().enumerate() {
            if j < candidate.num.len() {
                candidate.num[j] += d;
            } else {
                candidate.den[j - candidate.num.len()] += d;
            }
        }
        match cost_of(&candidate, u, y, dt) {
            Some((new_cost, new_yhat)) if new_cost < cost => {
                let improvement = (cost - new_cost) / cost.max(1e-300);
                theta = candidate;
                yhat = new_yhat;
                iterations += 1;
                lambda = (lambda / 3.0).max(1e-12);
                let refreshed = residual_jacobian(&theta, u, y, dt)?;
                r = refreshed.0;
                jac = refreshed.1;
                cost = refreshed.2;
                if improvement < cfg.cost_tolerance {
                    let g = jac.transpose() * &r;
                    converged = g.amax() <= grad_tol * (1.0 + cost);
                    break;
                }
            }
            _ => {
                lambda *= 10.0;
                if lambda > 1e12 {
                    break;
                }
            }
        }
    }
    if !converged {
        let g = jac.transpose() * &r;
        converged = g.amax() <= grad_tol * (1.0 + cost);
    }
    Some(Refined {
        theta,
        cost,
        yhat,
        iterations,
        converged,
    })
}

/// Anti-alias filter (zero phase, 80% of the reduced Nyquist rate) and
/// subsample. Decimation 1 passes the data through untouched.
pub(crate) fn decimate_series(
    u: &[f64],
    y: &[f64],
    dt: f64,
    decimation: usize,
) -> Result<(Vec<f64>, Vec<f64>, f64), SysidError> {
    if decimation <= 1 {
        return Ok((u.to_vec(), y.to_vec(), dt));
    }
    let fc = 0.4 / (dt * decimation as f64);
    let uf = lowpass(u, dt, fc)?;
    let yf = lowpass(y, dt, fc)?;
    let ud: Vec<f64> = uf.into_iter().step_by(decimation).collect();
    let yd: Vec<f64> = yf.into_iter().step_by(decimation).collect();
    Ok((ud, yd, dt * decimation as f64))
}

/// Discretizes the model at dt, starts from the equilibrium of the first
/// input sample and returns the simulated output.
pub(crate) fn simulate_model(
    model: &TransferFunction,
    u: &[f64],
    dt: f64,
) -> Result<Vec<f64>, SysidError> {
    let den_asc: Vec<f64> = model.den().iter().skip(1).rev().copied().collect();
    let um = DMatrix::from_column_slice(u.len(), 1, u);
    let phi = companion_trajectory(&den_asc, &um, dt).ok_or_else(|| {
        SysidError::NotConverged("model cannot be simulated on this record".into())
    })?;
    let theta = Theta {
        num: model.num().iter().rev().copied().collect(),
        den: den_asc,
    };
    Ok(predict_output(&theta, &phi).as_slice().to_vec())
}

/// Simulation fit of a fixed model against a measured pair, after the same
/// anti-alias treatment the estimator uses: discretize, start from the
/// equilibrium of the first input sample, simulate, score.
pub fn simulation_fit(
    model: &TransferFunction,
    u: &[f64],
    y: &[f64],
    dt: f64,
    decimation: usize,
) -> Result<f64, SysidError> {
    if u.len() != y.len() {
        return Err(SysidError::LengthMismatch(format!(
            "input has {} samples, output has {}",
            u.len(),
            y.len()
        )));
    }
    let (ud, yd, dtw) = decimate_series(u, y, dt, decimation)?;
    let den_asc: Vec<f64> = model.den().iter().skip(1).rev().copied().collect();
    let um = DMatrix::from_column_slice(ud.len(), 1, &ud);
    let phi = companion_trajectory(&den_asc, &um, dtw).ok_or_else(|| {
        SysidError::NotConverged("model cannot be simulated on this record".into())
    })?;
    let theta = Theta {
        num: model.num().iter().rev().copied().collect(),
        den: den_asc,
    };
    let yhat = predict_output(&theta, &phi);
    fit_percentage(&yd, yhat.as_slice())
}

pub fn fit_tf(
    data: &IoRecord,
    input: Channel,
    output: Channel,
    cfg: &FitConfig,
) -> Result<FitResult, SysidError> {
    let (u, y) = data.channel_pair(input, output);
    fit_series(&u, &y, data.dt(), cfg)
}

pub fn fit_series(u: &[f64], y: &[f64], dt: f64, cfg: &FitConfig) -> Result<FitResult, SysidError> {
    fit_series_seeded(u, y, dt, cfg, None)
}

/// As fit_series, but the search may start from a caller-provided model
/// of the configured structure instead of the equation-error seed.
pub(crate) fn fit_series_seeded(
    u: &[f64],
    y: &[f64],
    dt: f64,
    cfg: &FitConfig,
    initial: Option<&TransferFunction>,
) -> Result<FitResult, SysidError> {
    cfg.validate()?;
    if u.len() != y.len() {
        return Err(SysidError::LengthMismatch(format!(
            "input has {} samples, output has {}",
            u.len(),
            y.len()
        )));
    }
    let (ud, yd, dtw) = decimate_series(u, y, dt, cfg.decimation)?;
    let needed = 10 * (cfg.n_poles + cfg.n_zeros + 1);
    if ud.len() < needed {
        return Err(SysidError::TooShort {
            needed,
            got: ud.len(),
        });
    }
    let (lo, hi) = ud
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    if hi - lo <= 1e-9 * hi.abs().max(1.0) {
        return Err(SysidError::NotExciting(
            "input is constant over the record".into(),
        ));
    }

    let np = cfg.n_poles;
    let nc = cfg.n_zeros + 1;
    let um = DMatrix::from_column_slice(ud.len(), 1, &ud);
    let yv = DVector::from_column_slice(&yd);

    // Seed: equation-error denominator (or a spread of stable poles when
    // that fails), numerator by least squares against the fixed poles.
    let fallback_den = || -> Vec<f64> {
        let poles: Vec<Complex<f64>> = (1..=np)
            .map(|i| Complex::new(-(i as f64), 0.0))
            .collect();
        poly_from_roots(&poles).iter().skip(1).rev().copied().collect()
    };
    let provided = initial.and_then(|m| {
        let den_asc: Vec<f64> = m.den().iter().skip(1).rev().copied().collect();
        let mut num_asc: Vec<f64> = m.num().iter().rev().copied().collect();
        if den_asc.len() != np || num_asc.len() > nc {
            return None;
        }
        num_asc.resize(nc, 0.0);
        Some(Theta {
            num: num_asc,
            den: den_asc,
        })
    });
    let seed_theta = match provided {
        Some(theta) => theta,
        None => {
            let den0 = arx_denominator(&DVector::from_column_slice(&ud), &yv, np, dtw)
                .unwrap_or_else(fallback_den);
            let num0 = numerator_for(&den0, &um, &yv, dtw, nc).unwrap_or_else(|| {
                let mut v = vec![0.0; nc];
                v[0] = 1.0;
                v
            });
            Theta {
                num: num0,
                den: den0,
            }
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<Refined> = None;
    let mut attempts = 0usize;
    for start_idx in 0..cfg.multistart {
        let mut start = seed_theta.clone();
        if start_idx > 0 {
            for c in start.num.iter_mut().chain(start.den.iter_mut()) {
                *c *= (rng.gen_range(-0.2..0.2) as f64).exp();
            }
            start.den = reflect_unstable(&start.den);
            // Re-anchor the numerator so each start is simulable.
            if let Some(num) = numerator_for(&start.den, &um, &yv, dtw, nc) {
                start.num = num;
            }
        }
        attempts += 1;
        if let Some(run) = levenberg_marquardt(start, &um, &yv, dtw, cfg) {
            let better = best.as_ref().map_or(true, |b| run.cost < b.cost);
            if better {
                best = Some(run);
            }
        }
    }
    let mut best = best.ok_or_else(|| {
        SysidError::NotConverged(format!(
            "all {attempts} starts diverged for a {np}-pole, {}-zero structure at dt {dtw}",
            cfg.n_zeros
        ))
    })?;

    if !cfg.allow_unstable {
        let folded = reflect_unstable(&best.theta.den);
        if folded != best.theta.den {
            let num = numerator_for(&folded, &um, &yv, dtw, nc)
                .unwrap_or_else(|| best.theta.num.clone());
            let theta = Theta { num, den: folded };
            if let Some((cost, yhat)) = cost_of(&theta, &um, &yv, dtw) {
                best = Refined {
                    theta,
                    cost,
                    yhat,
                    iterations: best.iterations,
                    converged: false,
                };
            }
        }
    }

    let model = best.theta.to_tf()?;
    let fit_percent = fit_percentage(&yd, best.yhat.as_slice())?;
    let kstep_fit_percent =
        kstep_on_training(&model, &ud, &yd, dtw).ok().flatten();
    Ok(FitResult {
        model,
        fit_percent,
        kstep_fit_percent,
        residual_norm: best.cost.sqrt(),
        iterations: best.iterations,
        converged: best.converged,
    })
}

/// Five-step-ahead prediction fit on the training record, using the
/// steady-state observer.
fn kstep_on_training(
    model: &TransferFunction,
    u: &[f64],
    y: &[f64],
    dt: f64,
) -> Result<Option<f64>, SysidError> {
    let ssd = c2d_zoh(&linnav_lti::tf_to_ss_ccf(model), dt)?;
    let cfg = KalmanConfig::defaults(ssd.n_states(), 1, None);
    let (_, fit) = crate::predict::k_step_series(&ssd, u, y, 5, &cfg)?;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use linnav_lti::tf_to_ss_ccf;

    fn chirp(f0: f64, f1: f64, duration: f64, dt: f64, amp: f64) -> Vec<f64> {
        let n = (duration / dt).round() as usize + 1;
        (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                let phase =
                    2.0 * std::f64::consts::PI * (f0 * t + (f1 - f0) * t * t / (2.0 * duration));
                amp * phase.sin()
            })
            .collect()
    }

    fn simulate_tf(tf: &TransferFunction, u: &[f64], dt: f64) -> Vec<f64> {
        let ssd = c2d_zoh(&tf_to_ss_ccf(tf), dt).unwrap();
        let x0 = equilibrium_state(&ssd, &DVector::from_element(1, u[0])).unwrap();
        let um = DMatrix::from_column_slice(u.len(), 1, u);
        simulate_lti(&ssd, &um, &x0)
            .unwrap()
            .column(0)
            .iter()
            .copied()
            .collect()
    }

    #[test]
    fn jacobian_matches_central_finite_differences() {
        let dt = 0.05;
        let u = chirp(0.0, 2.0, 20.0, dt, 1.0);
        let um = DMatrix::from_column_slice(u.len(), 1, &u);
        let theta = Theta {
            num: vec![24.0, 13.0],
            den: vec![8.0, 11.0, 6.4],
        };
        let y = DVector::zeros(u.len());
        let (_, jac, _) = residual_jacobian(&theta, &um, &y, dt).unwrap();
        let n_params = theta.num.len() + theta.den.len();
        for p in 0..n_params {
            let h = 1e-6
                * if p < theta.num.len() {
                    theta.num[p].abs().max(1.0)
                } else {
                    theta.den[p - theta.num.len()].abs().max(1.0)
                };
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            if p < theta.num.len() {
                plus.num[p] += h;
                minus.num[p] -= h;
            } else {
                plus.den[p - theta.num.len()] += h;
                minus.den[p - theta.num.len()] -= h;
            }
            let (_, yp) = cost_of(&plus, &um, &y, dt).unwrap();
            let (_, ym) = cost_of(&minus, &um, &y, dt).unwrap();
            let fd = (yp - ym) / (2.0 * h);
            let col = jac.column(p);
            let diff = (&fd - &col.into_owned()).norm();
            let scale = fd.norm().max(1e-12);
            assert!(
                diff / scale < 1e-5,
                "parameter {p}: relative Jacobian error {}",
                diff / scale
            );
        }
    }

    #[test]
    fn recovers_a_first_order_plant_from_noiseless_data() {
        let truth = TransferFunction::new(vec![2.0], vec![1.0, 2.0]).unwrap();
        let dt = 0.02;
        let u = chirp(0.0, 1.5, 60.0, dt, 1.0);
        let y = simulate_tf(&truth, &u, dt);
        let mut cfg = FitConfig::new(1, 0);
        cfg.decimation = 1;
        cfg.multistart = 2;
        let fit = fit_series(&u, &y, dt, &cfg).unwrap();
        assert!(fit.fit_percent >= 99.99, "fit {}", fit.fit_percent);
        assert_relative_eq!(fit.model.den()[1], 2.0, max_relative = 1e-3);
        assert_relative_eq!(fit.model.num()[0], 2.0, max_relative = 1e-3);
        assert!(fit.converged);
    }

    #[test]
    fn recovers_a_third_order_two_zero_structure() {
        let truth = TransferFunction::new(
            vec![0.4694, 6.089, 8.697],
            vec![1.0, 6.432, 11.03, 8.274],
        )
        .unwrap();
        let dt = 0.01;
        let u = chirp(0.0, 1.0, 100.0, dt, 0.75);
        let y = simulate_tf(&truth, &u, dt);
        let mut cfg = FitConfig::new(3, 2);
        cfg.decimation = 1;
        let fit = fit_series(&u, &y, dt, &cfg).unwrap();
        assert!(fit.fit_percent >= 99.9, "fit {}", fit.fit_percent);
        let true_poles = poly_roots(truth.den());
        let got_poles = poly_roots(fit.model.den());
        for tp in &true_poles {
            let err = got_poles
                .iter()
                .map(|g| (g - tp).norm() / tp.norm())
                .fold(f64::INFINITY, f64::min);
            assert!(err < 5e-3, "pole {tp} off by {err}");
        }
    }

    #[test]
    fn tolerates_measurement_noise() {
        use rand::{Rng, SeedableRng};
        let truth = TransferFunction::new(vec![2.0], vec![1.0, 2.0]).unwrap();
        let dt = 0.02;
        let u = chirp(0.0, 1.5, 60.0, dt, 1.0);
        let clean = simulate_tf(&truth, &u, dt);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let noisy: Vec<f64> = clean
            .iter()
            .map(|v| v + 0.03 * rng.gen_range(-1.0..1.0))
            .collect();
        let mut cfg = FitConfig::new(1, 0);
        cfg.decimation = 1;
        let fit = fit_series(&u, &noisy, dt, &cfg).unwrap();
        assert!(fit.fit_percent >= 90.0, "fit {}", fit.fit_percent);
        assert_relative_eq!(fit.model.den()[1], 2.0, max_relative = 0.05);
    }

    #[test]
    fn finds_right_half_plane_zeros_when_the_data_has_them() {
        let truth = TransferFunction::new(vec![-13.59, 24.56], vec![1.0, 11.48, 32.5, 40.13])
            .unwrap();
        let dt = 0.01;
        let u = chirp(0.0, 1.0, 100.0, dt, 0.3);
        let y = simulate_tf(&truth, &u, dt);
        let mut cfg = FitConfig::new(3, 1);
        cfg.decimation = 1;
        let fit = fit_series(&u, &y, dt, &cfg).unwrap();
        assert!(fit.fit_percent >= 99.5, "fit {}", fit.fit_percent);
        let zeros = poly_roots(fit.model.num());
        assert!(zeros[0].re > 0.0, "zero {} not in the RHP", zeros[0]);
    }

    #[test]
    fn constant_input_is_rejected() {
        let u = vec![0.5; 500];
        let y = vec![1.0; 500];
        let cfg = FitConfig::new(1, 0);
        assert!(matches!(
            fit_series(&u, &y, 0.01, &cfg),
            Err(SysidError::NotExciting(_))
        ));
    }

    #[test]
    fn short_records_are_rejected() {
        let u = chirp(0.0, 1.0, 0.2, 0.01, 1.0);
        let y = u.clone();
        let mut cfg = FitConfig::new(3, 2);
        cfg.decimation = 1;
        assert!(matches!(
            fit_series(&u, &y, 0.01, &cfg),
            Err(SysidError::TooShort { .. })
        ));
    }

    #[test]
    fn fits_are_deterministic_for_a_fixed_seed() {
        let truth = TransferFunction::new(vec![3.0, 1.0], vec![1.0, 2.0, 2.0]).unwrap();
        let dt = 0.02;
        let u = chirp(0.0, 2.0, 40.0, dt, 1.0);
        let y = simulate_tf(&truth, &u, dt);
        let mut cfg = FitConfig::new(2, 1);
        cfg.decimation = 1;
        let a = fit_series(&u, &y, dt, &cfg).unwrap();
        let b = fit_series(&u, &y, dt, &cfg).unwrap();
        assert_eq!(a.model.num(), b.model.num());
        assert_eq!(a.model.den(), b.model.den());
    }

    #[test]
    fn simulation_fit_scores_the_generating_model_perfectly() {
        let truth = TransferFunction::new(vec![13.59, 24.56], vec![1.0, 11.48, 32.5, 40.13])
            .unwrap();
        let dt = 0.01;
        let u = chirp(0.0, 1.0, 50.0, dt, 0.3);
        let y = simulate_tf(&truth, &u, dt);
        let fit = simulation_fit(&truth, &u, &y, dt, 1).unwrap();
        assert!(fit > 99.999, "fit {fit}");
    }
}
