//! Discrete-time Kalman filtering over identified state-space models.

use crate::SysidError;
use linnav_lti::{LtiError, StateSpaceModel, TimeDomain};
use nalgebra::{DMatrix, DVector};

/// Noise covariances and the initial state covariance.
#[derive(Clone, Debug)]
pub struct KalmanConfig {
    pub process_noise: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
    pub initial_covariance: DMatrix<f64>,
}

impl KalmanConfig {
    /// Q = 1e-4 I, R from per-channel measurement noise standard deviations
    /// (0.05 where none is given), P0 = I.
    pub fn defaults(n_states: usize, n_outputs: usize, noise_std: Option<&[f64]>) -> Self {
        let r = DMatrix::from_fn(n_outputs, n_outputs, |i, j| {
            if i != j {
                return 0.0;
            }
            let std = noise_std
                .and_then(|s| s.get(i).copied())
                .filter(|s| *s > 0.0)
                .unwrap_or(0.05);
            std * std
        });
        KalmanConfig {
            process_noise: DMatrix::identity(n_states, n_states) * 1e-4,
            measurement_noise: r,
            initial_covariance: DMatrix::identity(n_states, n_states),
        }
    }

    fn validate(&self, n: usize, p: usize) -> Result<(), SysidError> {
        let shapes = [
            ("process noise", &self.process_noise, n),
            ("initial covariance", &self.initial_covariance, n),
            ("measurement noise", &self.measurement_noise, p),
        ];
        for (name, m, dim) in shapes {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(SysidError::InvalidConfig(format!(
                    "{name} must be {dim}x{dim}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let asym = (m - m.transpose()).abs().max();
            if asym > 1e-9 * (1.0 + m.abs().max()) {
                return Err(SysidError::InvalidConfig(format!(
                    "{name} is not symmetric"
                )));
            }
        }
        Ok(())
    }
}

/// Filter mean and covariance; the covariance is re-symmetrized after
/// every step so round-off cannot accumulate asymmetry.
#[derive(Clone, Debug)]
pub struct KalmanState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl KalmanState {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        KalmanState { mean, covariance }
    }

    pub fn from_config(mean: DVector<f64>, cfg: &KalmanConfig) -> Self {
        KalmanState {
            mean,
            covariance: cfg.initial_covariance.clone(),
        }
    }
}

fn require_discrete(model: &StateSpaceModel) -> Result<(), SysidError> {
    match model.time_domain() {
        TimeDomain::Discrete(_) => Ok(()),
        TimeDomain::Continuous => Err(SysidError::Lti(LtiError::ExpectedDiscrete)),
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Time update: mean <- A mean + B u, covariance <- A P A' + Q.
pub fn kf_predict(
    state: &KalmanState,
    model: &StateSpaceModel,
    u: &DVector<f64>,
    cfg: &KalmanConfig,
) -> Result<KalmanState, SysidError> {
    require_discrete(model)?;
    let n = model.n_states();
    cfg.validate(n, model.n_outputs())?;
    if state.mean.len() != n || u.len() != model.n_inputs() {
        return Err(SysidError::LengthMismatch(format!(
            "state {} / input {} against model with {} states, {} inputs",
            state.mean.len(),
            u.len(),
            n,
            model.n_inputs()
        )));
    }
    let mean = model.a() * &state.mean + model.b() * u;
    let mut cov = model.a() * &state.covariance * model.a().transpose() + &cfg.process_noise;
    symmetrize(&mut cov);
    Ok(KalmanState::new(mean, cov))
}

/// Joseph-form measurement update. Feedthrough is unsupported: the models
/// this filter runs on are strictly proper.
pub fn kf_update(
    state: &KalmanState,
    model: &StateSpaceModel,
    y: &DVector<f64>,
    cfg: &KalmanConfig,
) -> Result<KalmanState, SysidError> {
    require_discrete(model)?;
    let n = model.n_states();
    let p = model.n_outputs();
    cfg.validate(n, p)?;
    if model.d().iter().any(|v| *v != 0.0) {
        return Err(SysidError::InvalidConfig(
            "measurement update requires zero feedthrough".into(),
        ));
    }
    if state.mean.len() != n || y.len() != p {
        return Err(SysidError::LengthMismatch(format!(
            "state {} / measurement {} against model with {} states, {} outputs",
            state.mean.len(),
            y.len(),
            n,
            p
        )));
    }
    let c = model.c();
    let s = c * &state.covariance * c.transpose() + &cfg.measurement_noise;
    let chol = s.clone().cholesky().ok_or_else(|| {
        SysidError::Lti(LtiError::SingularSystem(
            "innovation covariance is not positive definite".into(),
        ))
    })?;
    // K = P C' S^-1, computed as (S^-1 C P)' with P symmetric.
    let gain = chol.solve(&(c * &state.covariance)).transpose();
    let innovation = y - c * &state.mean;
    let mean = &state.mean + &gain * innovation;
    let ikc = DMatrix::identity(n, n) - &gain * c;
    let mut cov =
        &ikc * &state.covariance * ikc.transpose() + &gain * &cfg.measurement_noise * gain.transpose();
    symmetrize(&mut cov);
    Ok(KalmanState::new(mean, cov))
}

/// Steady-state filter gain K = P C'(C P C' + R)^-1 with P the fixed point
/// of the a-priori covariance recursion, found by iterating the recursion
/// to relative change below 1e-10.
pub fn steady_state_gain(
    model: &StateSpaceModel,
    cfg: &KalmanConfig,
) -> Result<DMatrix<f64>, SysidError> {
    require_discrete(model)?;
    let n = model.n_states();
    cfg.validate(n, model.n_outputs())?;
    let a = model.a();
    let c = model.c();
    let mut p = cfg.initial_covariance.clone();
    for _ in 0..100_000 {
        let s = c * &p * c.transpose() + &cfg.measurement_noise;
        let chol = s.cholesky().ok_or_else(|| {
            SysidError::Lti(LtiError::SingularSystem(
                "innovation covariance is not positive definite".into(),
            ))
        })?;
        let gain = chol.solve(&(c * &p)).transpose();
        let mut next = a * (&p - &gain * c * &p) * a.transpose() + &cfg.process_noise;
        symmetrize(&mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(SysidError::NotConverged(
                "covariance recursion diverged; the model is not detectable".into(),
            ));
        }
        // Max-entry comparison: squared norms of a diverging covariance
        // overflow to inf and would make the test read inf <= inf.
        let change = (&next - &p).amax();
        let scale = p.amax().max(1.0);
        p = next;
        if change <= 1e-10 * scale {
            let s = c * &p * c.transpose() + &cfg.measurement_noise;
            let chol = s.cholesky().ok_or_else(|| {
                SysidError::Lti(LtiError::SingularSystem(
                    "innovation covariance is not positive definite".into(),
                ))
            })?;
            return Ok(chol.solve(&(c * &p)).transpose());
        }
    }
    Err(SysidError::NotConverged(
        "covariance recursion did not reach a fixed point in 100000 iterations".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use linnav_lti::{c2d_zoh, tf_to_ss_ccf, TransferFunction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn scalar_model(a: f64, c: f64, dt: f64) -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, c),
            DMatrix::zeros(1, 1),
            TimeDomain::Discrete(dt),
        )
        .unwrap()
    }

    fn scalar_cfg(q: f64, r: f64, p0: f64) -> KalmanConfig {
        KalmanConfig {
            process_noise: DMatrix::from_element(1, 1, q),
            measurement_noise: DMatrix::from_element(1, 1, r),
            initial_covariance: DMatrix::from_element(1, 1, p0),
        }
    }

    #[test]
    fn steady_gain_matches_hand_iterated_fixed_point() {
        let model = scalar_model(0.5, 1.0, 0.1);
        let cfg = scalar_cfg(1.0, 1.0, 1.0);
        let gain = steady_state_gain(&model, &cfg).unwrap()[(0, 0)];
        let mut p = 1.0_f64;
        for _ in 0..50 {
            p = 0.25 * (p - p * p / (p + 1.0)) + 1.0;
        }
        assert_relative_eq!(gain, p / (p + 1.0), epsilon = 1e-9);
    }

    #[test]
    fn zero_process_noise_drives_the_gain_to_zero() {
        let model = scalar_model(0.8, 1.0, 0.1);
        let cfg = scalar_cfg(0.0, 1.0, 1.0);
        let gain = steady_state_gain(&model, &cfg).unwrap();
        assert!(gain.abs().max() < 1e-5, "gain {gain}");
    }

    #[test]
    fn steady_gain_ignores_the_starting_covariance() {
        let tf = TransferFunction::new(vec![1.0, 2.0], vec![1.0, 1.4, 1.0]).unwrap();
        let model = c2d_zoh(&tf_to_ss_ccf(&tf), 0.05).unwrap();
        let mut cfg = KalmanConfig::defaults(2, 1, None);
        let g1 = steady_state_gain(&model, &cfg).unwrap();
        cfg.initial_covariance *= 10.0;
        let g2 = steady_state_gain(&model, &cfg).unwrap();
        assert!((g1 - g2).abs().max() < 1e-8);
    }

    #[test]
    fn exact_model_without_noise_tracks_the_truth() {
        let tf = TransferFunction::new(vec![3.0], vec![1.0, 2.0, 5.0]).unwrap();
        let model = c2d_zoh(&tf_to_ss_ccf(&tf), 0.02).unwrap();
        let cfg = KalmanConfig {
            process_noise: DMatrix::zeros(2, 2),
            measurement_noise: DMatrix::identity(1, 1),
            initial_covariance: DMatrix::zeros(2, 2),
        };
        let mut truth = DVector::from_vec(vec![0.3, -0.1]);
        let mut est = KalmanState::new(truth.clone(), DMatrix::zeros(2, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let u = DVector::from_element(1, rng.gen_range(-1.0..1.0));
            truth = model.a() * &truth + model.b() * &u;
            est = kf_predict(&est, &model, &u, &cfg).unwrap();
            assert!((&est.mean - &truth).abs().max() < 1e-12);
        }
    }

    #[test]
    fn random_walk_covariance_grows_by_q_each_step() {
        let model = scalar_model(1.0, 1.0, 0.1);
        let cfg = scalar_cfg(0.25, 1.0, 2.0);
        let est = KalmanState::from_config(DVector::zeros(1), &cfg);
        let next = kf_predict(&est, &model, &DVector::zeros(1), &cfg).unwrap();
        assert_relative_eq!(next.covariance[(0, 0)], 2.25, epsilon = 1e-12);
    }

    #[test]
    fn joseph_update_preserves_psd_over_many_random_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut psd_checks = 0usize;
        for trial in 0..20 {
            let n = 2 + (trial % 3);
            // Entries wide enough that some draws are unstable, which
            // stresses the update.
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.7..0.7));
            let c = DMatrix::from_fn(1, n, |_, _| rng.gen_range(-1.0..1.0));
            let model = StateSpaceModel::new(
                a,
                DMatrix::zeros(n, 1),
                c,
                DMatrix::zeros(1, 1),
                TimeDomain::Discrete(0.01),
            )
            .unwrap();
            let half = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.5..0.5));
            let cfg = KalmanConfig {
                process_noise: &half * half.transpose() * 0.1,
                measurement_noise: DMatrix::from_element(1, 1, rng.gen_range(0.01..1.0)),
                initial_covariance: DMatrix::identity(n, n),
            };
            let mut est = KalmanState::from_config(DVector::zeros(n), &cfg);
            for _ in 0..500 {
                let u = DVector::zeros(1);
                est = kf_predict(&est, &model, &u, &cfg).unwrap();
                let y = DVector::from_element(1, rng.gen_range(-2.0..2.0));
                est = kf_update(&est, &model, &y, &cfg).unwrap();
                let eigs = est.covariance.clone().symmetric_eigen().eigenvalues;
                assert!(
                    eigs.iter().all(|e| *e >= -1e-10),
                    "covariance lost PSD: {eigs}"
                );
                psd_checks += 1;
            }
        }
        assert_eq!(psd_checks, 10_000);
    }

    #[test]
    fn enormous_measurement_noise_leaves_the_estimate_alone() {
        let model = scalar_model(0.9, 1.0, 0.1);
        let cfg = scalar_cfg(0.1, 1e12, 1.0);
        let est = KalmanState::new(DVector::from_element(1, 3.0), DMatrix::identity(1, 1));
        let upd = kf_update(&est, &model, &DVector::from_element(1, -50.0), &cfg).unwrap();
        assert!((upd.mean[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn near_perfect_measurement_snaps_the_estimate_to_it() {
        let model = scalar_model(0.9, 2.0, 0.1);
        let cfg = scalar_cfg(0.1, 1e-12, 1.0);
        let est = KalmanState::new(DVector::from_element(1, 3.0), DMatrix::identity(1, 1));
        let upd = kf_update(&est, &model, &DVector::from_element(1, 5.0), &cfg).unwrap();
        // C = 2, so the posterior state is y / 2.
        assert!((upd.mean[0] - 2.5).abs() < 1e-6);
    }

    #[test]
    fn undetectable_unstable_model_is_reported() {
        let model = scalar_model(1.1, 0.0, 0.1);
        let cfg = scalar_cfg(1.0, 1.0, 1.0);
        assert!(matches!(
            steady_state_gain(&model, &cfg),
            Err(SysidError::NotConverged(_))
        ));
    }

    #[test]
    fn innovations_of_a_matched_filter_sit_in_the_chi_square_band() {
        // True system: stable scalar with measurement noise only. The
        // matched filter's normalized innovation squared is chi-square
        // with one degree of freedom; 95% of samples belong in
        // [0.000982, 5.024].
        let model = scalar_model(0.9, 1.0, 0.1);
        let r = 0.04;
        let cfg = scalar_cfg(0.0, r, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut truth = 0.5_f64;
        let mut est = KalmanState::new(DVector::from_element(1, 0.5), cfg.initial_covariance.clone());
        let mut in_band = 0usize;
        let mut total = 0usize;
        for step in 0..5_000 {
            let u = DVector::from_element(1, (step as f64 * 0.01).sin());
            truth = 0.9 * truth + u[0];
            est = kf_predict(&est, &model, &u, &cfg).unwrap();
            let noise: f64 = rng.sample(StandardNormal);
            let y = truth + r.sqrt() * noise;
            let s = est.covariance[(0, 0)] + r;
            let nis = (y - est.mean[0]).powi(2) / s;
            if step >= 100 {
                total += 1;
                if (0.000982..=5.024).contains(&nis) {
                    in_band += 1;
                }
            }
            est = kf_update(&est, &model, &DVector::from_element(1, y), &cfg).unwrap();
        }
        let frac = in_band as f64 / total as f64;
        assert!(frac >= 0.9, "only {frac:.3} of innovations in band");
    }

    #[test]
    fn dimension_and_domain_errors_are_reported() {
        let tf = TransferFunction::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let cont = tf_to_ss_ccf(&tf);
        let cfg = KalmanConfig::defaults(1, 1, None);
        let est = KalmanState::from_config(DVector::zeros(1), &cfg);
        assert!(kf_predict(&est, &cont, &DVector::zeros(1), &cfg).is_err());
        let disc = c2d_zoh(&cont, 0.1).unwrap();
        assert!(kf_predict(&est, &disc, &DVector::zeros(2), &cfg).is_err());
        let bad = KalmanConfig::defaults(3, 1, None);
        assert!(kf_predict(&est, &disc, &DVector::zeros(1), &bad).is_err());
    }
}
