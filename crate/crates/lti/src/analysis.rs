//! Pole/zero analysis, Hankel singular values and frequency responses.

use crate::poly;
use crate::{LtiError, StateSpaceModel, TimeDomain, TransferFunction};
use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;

/// Root-locus summary of a continuous-time transfer function.
#[derive(Debug, Clone)]
pub struct PoleZeroReport {
    pub poles: Vec<Complex64>,
    pub zeros: Vec<Complex64>,
    /// Every pole strictly in the left half plane.
    pub asymptotically_stable: bool,
    /// Every zero strictly in the left half plane (vacuously true without zeros).
    pub minimum_phase: bool,
}

impl PoleZeroReport {
    pub fn to_json(&self) -> serde_json::Value {
        let complex_list = |v: &[Complex64]| {
            serde_json::Value::Array(
                v.iter()
                    .map(|c| serde_json::json!({ "re": c.re, "im": c.im }))
                    .collect(),
            )
        };
        serde_json::json!({
            "poles": complex_list(&self.poles),
            "zeros": complex_list(&self.zeros),
            "asymptotically_stable": self.asymptotically_stable,
            "minimum_phase": self.minimum_phase,
        })
    }
}

pub fn poles_zeros(tf: &TransferFunction) -> PoleZeroReport {
    let poles = poly::roots(tf.den());
    let zeros = if tf.is_zero() {
        Vec::new()
    } else {
        poly::roots(tf.num())
    };
    let asymptotically_stable = poles.iter().all(|p| p.re < 0.0);
    let minimum_phase = zeros.iter().all(|z| z.re < 0.0);
    PoleZeroReport {
        poles,
        zeros,
        asymptotically_stable,
        minimum_phase,
    }
}

fn kron(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let (xr, xc) = x.shape();
    let (yr, yc) = y.shape();
    DMatrix::from_fn(xr * yr, xc * yc, |i, j| {
        x[(i / yr, j / yc)] * y[(i % yr, j % yc)]
    })
}

/// Solves A X + X Aᵀ = -W by vectorizing to (I⊗A + A⊗I) vec(X) = -vec(W).
fn lyapunov_continuous(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>, LtiError> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let k = kron(&eye, a) + kron(a, &eye);
    let rhs = DMatrix::from_column_slice(n * n, 1, w.as_slice()) * -1.0;
    let x = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| LtiError::SingularSystem("Lyapunov operator is singular".into()))?;
    let mut out = DMatrix::from_column_slice(n, n, x.as_slice());
    // The solution of a symmetric right-hand side is symmetric; enforce it
    // against round-off before downstream factorizations.
    out = (&out + out.transpose()) * 0.5;
    Ok(out)
}

/// Hankel singular values of an asymptotically stable continuous model:
/// sqrt of the eigenvalues of the product of the controllability and
/// observability Gramians, sorted descending.
pub fn hankel_singular_values(ss: &StateSpaceModel) -> Result<Vec<f64>, LtiError> {
    if ss.time_domain() != TimeDomain::Continuous {
        return Err(LtiError::ExpectedContinuous);
    }
    if let Some(bad) = ss.eigenvalues().into_iter().find(|e| e.re >= 0.0) {
        return Err(LtiError::Unstable(format!(
            "eigenvalue {:.6}{:+.6}i is not in the open left half plane",
            bad.re, bad.im
        )));
    }
    let p = lyapunov_continuous(ss.a(), &(ss.b() * ss.b().transpose()))?;
    let q = lyapunov_continuous(&ss.a().transpose(), &(ss.c().transpose() * ss.c()))?;
    let mut sigma: Vec<f64> = match Cholesky::new(p.clone()) {
        Some(chol) => {
            let l = chol.l();
            let m = l.transpose() * &q * &l;
            let sym = (&m + m.transpose()) * 0.5;
            sym.symmetric_eigen()
                .eigenvalues
                .iter()
                .map(|&e| e.max(0.0).sqrt())
                .collect()
        }
        // P can be numerically semidefinite for nearly uncontrollable
        // realizations; fall back to the nonsymmetric product.
        None => (p * q)
            .complex_eigenvalues()
            .iter()
            .map(|e| e.re.max(0.0).sqrt())
            .collect(),
    };
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(sigma)
}

/// Evaluates num(j 2πf) / den(j 2πf) at each frequency in hertz.
pub fn frequency_response(tf: &TransferFunction, freqs_hz: &[f64]) -> Vec<Complex64> {
    freqs_hz
        .iter()
        .map(|&f| tf.evaluate(Complex64::new(0.0, 2.0 * std::f64::consts::PI * f)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tf_to_ss_ccf;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn first_order_report() {
        let tf = TransferFunction::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let r = poles_zeros(&tf);
        assert_eq!(r.poles.len(), 1);
        assert_relative_eq!(r.poles[0].re, -1.0, max_relative = 1e-12);
        assert!(r.zeros.is_empty());
        assert!(r.asymptotically_stable);
        assert!(r.minimum_phase);
    }

    #[test]
    fn right_half_plane_zero_breaks_minimum_phase() {
        let tf = TransferFunction::new(vec![1.0, -2.0], vec![1.0, 3.0, 2.0]).unwrap();
        let r = poles_zeros(&tf);
        assert!(r.asymptotically_stable);
        assert!(!r.minimum_phase);
        assert_relative_eq!(r.zeros[0].re, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn unstable_pole_detected() {
        let tf = TransferFunction::new(vec![1.0], vec![1.0, -0.5]).unwrap();
        assert!(!poles_zeros(&tf).asymptotically_stable);
    }

    #[test]
    fn scalar_gramians_give_known_hankel_value() {
        // x' = -a x + b u, y = c x has the single value |b c| / (2a).
        let ss = StateSpaceModel::new(
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DMatrix::from_row_slice(1, 1, &[3.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
            TimeDomain::Continuous,
        )
        .unwrap();
        let sigma = hankel_singular_values(&ss).unwrap();
        assert_eq!(sigma.len(), 1);
        assert_relative_eq!(sigma[0], 3.0, max_relative = 1e-10);
    }

    #[test]
    fn hankel_values_invariant_under_similarity() {
        use rand::{Rng, SeedableRng};
        let tf = TransferFunction::new(vec![0.4694, 6.089, 8.697], vec![1.0, 6.432, 11.03, 8.274])
            .unwrap();
        let ss = tf_to_ss_ccf(&tf);
        let base = hankel_singular_values(&ss).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let n = ss.n_states();
            let t = loop {
                let cand = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
                    + DMatrix::<f64>::identity(n, n) * 2.0;
                if cand.clone().lu().is_invertible() {
                    break cand;
                }
            };
            let tinv = t.clone().try_inverse().unwrap();
            let sim = StateSpaceModel::new(
                &t * ss.a() * &tinv,
                &t * ss.b(),
                ss.c() * &tinv,
                ss.d().clone(),
                TimeDomain::Continuous,
            )
            .unwrap();
            let transformed = hankel_singular_values(&sim).unwrap();
            for (s0, s1) in base.iter().zip(transformed.iter()) {
                assert_relative_eq!(s0, s1, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn hankel_rejects_unstable_and_discrete() {
        let unstable = StateSpaceModel::new(
            DMatrix::from_row_slice(1, 1, &[0.5]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
            TimeDomain::Continuous,
        )
        .unwrap();
        assert!(matches!(
            hankel_singular_values(&unstable),
            Err(LtiError::Unstable(_))
        ));
        let tf = TransferFunction::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let d = crate::c2d_zoh(&tf_to_ss_ccf(&tf), 0.1).unwrap();
        assert!(matches!(
            hankel_singular_values(&d),
            Err(LtiError::ExpectedContinuous)
        ));
    }

    #[test]
    fn lyapunov_residual_is_small() {
        let tf = TransferFunction::new(vec![13.59, 24.56], vec![1.0, 11.48, 32.5, 40.13]).unwrap();
        let ss = tf_to_ss_ccf(&tf);
        let w = ss.b() * ss.b().transpose();
        let p = lyapunov_continuous(ss.a(), &w).unwrap();
        let resid = ss.a() * &p + &p * ss.a().transpose() + &w;
        assert!(resid.norm() < 1e-10 * (1.0 + p.norm()));
    }

    #[test]
    fn dc_response_matches_gain() {
        let tf = TransferFunction::new(vec![0.3078, 5.267, 5.553], vec![1.0, 4.595, 7.528, 6.045])
            .unwrap();
        let h = frequency_response(&tf, &[0.0]);
        assert_relative_eq!(h[0].re, 5.553 / 6.045, max_relative = 1e-14);
        assert_relative_eq!(h[0].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn unit_lag_magnitude_at_corner() {
        // |1/(1 + jω)| at ω = 1 rad/s, i.e. f = 1/(2π) Hz.
        let tf = TransferFunction::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let f = 1.0 / (2.0 * std::f64::consts::PI);
        let h = frequency_response(&tf, &[f]);
        assert_relative_eq!(h[0].norm(), 1.0 / 2.0_f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn response_below_gridded_peak_everywhere() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let bank = [
            TransferFunction::new(vec![1.0], vec![1.0, 1.0]).unwrap(),
            TransferFunction::new(vec![1.0, 1.0], vec![1.0, 0.2, 1.0]).unwrap(),
            TransferFunction::new(vec![0.4694, 6.089, 8.697], vec![1.0, 6.432, 11.03, 8.274])
                .unwrap(),
        ];
        for tf in &bank {
            let grid: Vec<f64> = (0..40_000).map(|i| i as f64 * 1e-3).collect();
            let peak = frequency_response(tf, &grid)
                .iter()
                .map(|h| h.norm())
                .fold(0.0, f64::max);
            for _ in 0..100 {
                let f = rng.gen_range(0.0..40.0);
                let h = frequency_response(tf, &[f]);
                // The grid resolves these low-order responses well enough
                // that nothing between grid points overshoots the peak by
                // more than a sliver.
                assert!(h[0].norm() <= peak * (1.0 + 1e-3));
            }
        }
    }

    #[test]
    fn report_serializes_with_flags() {
        let tf = TransferFunction::new(vec![1.0, -2.0], vec![1.0, 3.0, 2.0]).unwrap();
        let v = poles_zeros(&tf).to_json();
        assert_eq!(v["asymptotically_stable"], serde_json::json!(true));
        assert_eq!(v["minimum_phase"], serde_json::json!(false));
        assert_eq!(v["poles"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn gramian_energy_interpretation() {
        // For the scalar system above, simulate an impulse response and
        // check that its output energy equals C P Cᵀ (observability dual
        // gives the same number through Q).
        let ss = StateSpaceModel::new(
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DMatrix::from_row_slice(1, 1, &[3.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
            TimeDomain::Continuous,
        )
        .unwrap();
        let p = lyapunov_continuous(ss.a(), &(ss.b() * ss.b().transpose())).unwrap();
        // Analytic: P = b^2 / (2a) = 2, output energy c^2 P = 18.
        assert_relative_eq!(p[(0, 0)], 2.0, max_relative = 1e-12);
        let dt = 1e-4;
        let d = crate::c2d_zoh(&ss, dt).unwrap();
        let mut x = DVector::from_element(1, ss.b()[(0, 0)]);
        let mut energy = 0.0;
        for _ in 0..200_000 {
            let y = ss.c()[(0, 0)] * x[0];
            energy += y * y * dt;
            x = d.a() * x;
        }
        assert_relative_eq!(energy, 18.0, max_relative = 1e-3);
    }
}
