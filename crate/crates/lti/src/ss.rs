//! State-space models, realization, discretization and simulation.

use crate::{LtiError, TransferFunction};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeDomain {
    Continuous,
    /// Sample period in seconds, > 0.
    Discrete(f64),
}

/// x' = A x + B u (or x[k+1] = A x[k] + B u[k]), y = C x + D u.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    time_domain: TimeDomain,
}

impl StateSpaceModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        time_domain: TimeDomain,
    ) -> Result<Self, LtiError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LtiError::DimensionMismatch(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(LtiError::DimensionMismatch(format!(
                "incompatible shapes: A {n}x{n}, B {}x{}, C {}x{}, D {}x{}",
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        if let TimeDomain::Discrete(dt) = time_domain {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(LtiError::NonPositiveDt(dt));
            }
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            time_domain,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn time_domain(&self) -> TimeDomain {
        self.time_domain
    }

    pub fn dt(&self) -> Option<f64> {
        match self.time_domain {
            TimeDomain::Continuous => None,
            TimeDomain::Discrete(dt) => Some(dt),
        }
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.a.complex_eigenvalues().iter().copied().collect()
    }

    /// Re < 0 for every eigenvalue (continuous) or |z| < 1 (discrete).
    pub fn is_asymptotically_stable(&self) -> bool {
        let eigs = self.eigenvalues();
        match self.time_domain {
            TimeDomain::Continuous => eigs.iter().all(|e| e.re < 0.0),
            TimeDomain::Discrete(_) => eigs.iter().all(|e| e.norm() < 1.0),
        }
    }
}

/// Control canonical realization of a strictly proper transfer function:
/// the companion matrix of the denominator in the last row of A, B = e_n,
/// and the numerator coefficients laid out along C.
pub fn tf_to_ss_ccf(tf: &TransferFunction) -> StateSpaceModel {
    let n = tf.n_poles();
    let den = tf.den();
    let num = tf.num();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        // den[n - j] is the coefficient of s^j (den is monic, descending).
        a[(n - 1, j)] = -den[n - j];
    }
    let mut b = DMatrix::<f64>::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    let mut c = DMatrix::<f64>::zeros(1, n);
    for (i, &bi) in num.iter().rev().enumerate() {
        c[(0, i)] = bi;
    }
    let d = DMatrix::<f64>::zeros(1, 1);
    StateSpaceModel::new(a, b, c, d, TimeDomain::Continuous).expect("CCF shapes are consistent")
}

/// Zero-order-hold discretization: matrix exponential of the augmented
/// block [[A, B], [0, 0]] * dt, so A_d = e^{A dt} and B_d = ∫ e^{A τ} B dτ.
pub fn c2d_zoh(ss: &StateSpaceModel, dt: f64) -> Result<StateSpaceModel, LtiError> {
    if ss.time_domain() != TimeDomain::Continuous {
        return Err(LtiError::ExpectedContinuous);
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(LtiError::NonPositiveDt(dt));
    }
    let n = ss.n_states();
    let m = ss.n_inputs();
    let mut aug = DMatrix::<f64>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(ss.a());
    aug.view_mut((0, n), (n, m)).copy_from(ss.b());
    let e = (aug * dt).exp();
    let ad = e.view((0, 0), (n, n)).into_owned();
    let bd = e.view((0, n), (n, m)).into_owned();
    StateSpaceModel::new(ad, bd, ss.c().clone(), ss.d().clone(), TimeDomain::Discrete(dt))
}

/// Runs the discrete recursion over an input sequence.
///
/// `u` has one row per sample and one column per input channel; the result
/// has one row per sample and one column per output. `y[k]` is emitted from
/// the pre-update state, so the first output row depends on `x0` and `u[0]`
/// only.
pub fn simulate_lti(
    ss: &StateSpaceModel,
    u: &DMatrix<f64>,
    x0: &DVector<f64>,
) -> Result<DMatrix<f64>, LtiError> {
    if ss.dt().is_none() {
        return Err(LtiError::ExpectedDiscrete);
    }
    let n = ss.n_states();
    let m = ss.n_inputs();
    let p = ss.n_outputs();
    if u.ncols() != m {
        return Err(LtiError::DimensionMismatch(format!(
            "input has {} channels, model expects {m}",
            u.ncols()
        )));
    }
    if x0.len() != n {
        return Err(LtiError::DimensionMismatch(format!(
            "initial state has length {}, model has {n} states",
            x0.len()
        )));
    }
    let ns = u.nrows();
    let mut y = DMatrix::<f64>::zeros(ns, p);
    let mut x = x0.clone();
    let mut xn = DVector::<f64>::zeros(n);
    let (a, b, c, d) = (ss.a(), ss.b(), ss.c(), ss.d());
    for k in 0..ns {
        for i in 0..p {
            let mut acc = 0.0;
            for j in 0..n {
                acc += c[(i, j)] * x[j];
            }
            for j in 0..m {
                acc += d[(i, j)] * u[(k, j)];
            }
            y[(k, i)] = acc;
        }
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += a[(i, j)] * x[j];
            }
            for j in 0..m {
                acc += b[(i, j)] * u[(k, j)];
            }
            xn[i] = acc;
        }
        std::mem::swap(&mut x, &mut xn);
    }
    Ok(y)
}

/// State at which the model holds still under a constant input: solves
/// (I - A) x = B u for discrete models and A x = -B u for continuous ones.
pub fn equilibrium_state(ss: &StateSpaceModel, u: &DVector<f64>) -> Result<DVector<f64>, LtiError> {
    if u.len() != ss.n_inputs() {
        return Err(LtiError::DimensionMismatch(format!(
            "input has length {}, model expects {}",
            u.len(),
            ss.n_inputs()
        )));
    }
    let n = ss.n_states();
    let (lhs, rhs) = match ss.time_domain() {
        TimeDomain::Discrete(_) => (DMatrix::identity(n, n) - ss.a(), ss.b() * u),
        TimeDomain::Continuous => (ss.a().clone(), -(ss.b() * u)),
    };
    lhs.lu()
        .solve(&rhs)
        .ok_or_else(|| LtiError::SingularSystem("no equilibrium for this input".into()))
}

#[derive(Serialize, Deserialize)]
struct SsRepr {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d: Vec<Vec<f64>>,
    dt: Option<f64>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, LtiError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(LtiError::DimensionMismatch(format!(
            "{what} rows have inconsistent lengths"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl Serialize for StateSpaceModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SsRepr {
            a: to_rows(&self.a),
            b: to_rows(&self.b),
            c: to_rows(&self.c),
            d: to_rows(&self.d),
            dt: self.dt(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StateSpaceModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = SsRepr::deserialize(deserializer)?;
        let build = || -> Result<StateSpaceModel, LtiError> {
            StateSpaceModel::new(
                from_rows(&repr.a, "A")?,
                from_rows(&repr.b, "B")?,
                from_rows(&repr.c, "C")?,
                from_rows(&repr.d, "D")?,
                match repr.dt {
                    None => TimeDomain::Continuous,
                    Some(dt) => TimeDomain::Discrete(dt),
                },
            )
        };
        build().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn first_order() -> StateSpaceModel {
        // x' = -2x + u, y = x
        StateSpaceModel::new(
            DMatrix::from_row_slice(1, 1, &[-2.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
            TimeDomain::Continuous,
        )
        .unwrap()
    }

    #[test]
    fn ccf_of_first_order_lag() {
        let tf = TransferFunction::new(vec![1.0], vec![1.0, 1.0]).unwrap();
        let ss = tf_to_ss_ccf(&tf);
        assert_relative_eq!(ss.a()[(0, 0)], -1.0);
        assert_relative_eq!(ss.b()[(0, 0)], 1.0);
        assert_relative_eq!(ss.c()[(0, 0)], 1.0);
        assert_relative_eq!(ss.d()[(0, 0)], 0.0);
    }

    #[test]
    fn ccf_matches_frequency_response() {
        // Evaluate C (sI - A)^{-1} B against num/den at a few points.
        let tf = TransferFunction::new(vec![2.0, 3.0], vec![1.0, 4.0, 5.0, 6.0]).unwrap();
        let ss = tf_to_ss_ccf(&tf);
        let n = ss.n_states();
        for &w in &[0.0, 0.3, 1.7, 12.0] {
            let s = Complex64::new(0.0, w);
            let mut m = DMatrix::<Complex64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = Complex64::new(-ss.a()[(i, j)], 0.0);
                }
                m[(i, i)] += s;
            }
            let binv = m
                .lu()
                .solve(&DMatrix::<Complex64>::from_fn(n, 1, |i, _| {
                    Complex64::new(ss.b()[(i, 0)], 0.0)
                }))
                .unwrap();
            let mut h = Complex64::new(0.0, 0.0);
            for i in 0..n {
                h += Complex64::new(ss.c()[(0, i)], 0.0) * binv[(i, 0)];
            }
            let expected = tf.evaluate(s);
            assert_relative_eq!(h.re, expected.re, max_relative = 1e-10, epsilon = 1e-12);
            assert_relative_eq!(h.im, expected.im, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn zoh_of_scalar_lag_is_analytic() {
        let d = c2d_zoh(&first_order(), 0.25).unwrap();
        let ad = (-0.5_f64).exp();
        assert_relative_eq!(d.a()[(0, 0)], ad, max_relative = 1e-12);
        assert_relative_eq!(d.b()[(0, 0)], (1.0 - ad) / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn zoh_of_integrator() {
        let ss = StateSpaceModel::new(
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
            TimeDomain::Continuous,
        )
        .unwrap();
        let d = c2d_zoh(&ss, 0.01).unwrap();
        assert_relative_eq!(d.a()[(0, 0)], 1.0, max_relative = 1e-14);
        assert_relative_eq!(d.b()[(0, 0)], 0.01, max_relative = 1e-12);
    }

    #[test]
    fn zoh_rejects_discrete_input_and_bad_dt() {
        let d = c2d_zoh(&first_order(), 0.1).unwrap();
        assert!(matches!(
            c2d_zoh(&d, 0.1),
            Err(LtiError::ExpectedContinuous)
        ));
        assert!(matches!(
            c2d_zoh(&first_order(), 0.0),
            Err(LtiError::NonPositiveDt(_))
        ));
    }

    #[test]
    fn simulate_zero_everything_is_zero() {
        let d = c2d_zoh(&first_order(), 0.1).unwrap();
        let u = DMatrix::zeros(50, 1);
        let y = simulate_lti(&d, &u, &DVector::zeros(1)).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn simulate_is_linear_in_input_and_state() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let tf = TransferFunction::new(vec![2.0, 1.0], vec![1.0, 1.2, 0.8]).unwrap();
        let d = c2d_zoh(&tf_to_ss_ccf(&tf), 0.05).unwrap();
        let ns = 200;
        let u1 = DMatrix::from_fn(ns, 1, |_, _| rng.gen_range(-1.0..1.0));
        let u2 = DMatrix::from_fn(ns, 1, |_, _| rng.gen_range(-1.0..1.0));
        let x1 = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let x2 = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let (alpha, beta) = (0.37, -1.45);
        let ya = simulate_lti(&d, &u1, &x1).unwrap();
        let yb = simulate_lti(&d, &u2, &x2).unwrap();
        let yc = simulate_lti(&d, &(&u1 * alpha + &u2 * beta), &(&x1 * alpha + &x2 * beta)).unwrap();
        for k in 0..ns {
            assert_relative_eq!(
                yc[(k, 0)],
                alpha * ya[(k, 0)] + beta * yb[(k, 0)],
                max_relative = 1e-10,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn step_settles_at_dc_gain() {
        let tf = TransferFunction::new(vec![145.9, 37.55], vec![1.0, 46.43, 161.0, 38.38]).unwrap();
        let d = c2d_zoh(&tf_to_ss_ccf(&tf), 0.01).unwrap();
        let u = DMatrix::from_element(4000, 1, 1.0);
        let y = simulate_lti(&d, &u, &DVector::zeros(3)).unwrap();
        let dc = 37.55 / 38.38;
        assert_relative_eq!(y[(3999, 0)], dc, max_relative = 1e-6);
    }

    #[test]
    fn equilibrium_state_is_fixed_point() {
        let d = c2d_zoh(&first_order(), 0.1).unwrap();
        let u = DVector::from_element(1, 0.7);
        let xeq = equilibrium_state(&d, &u).unwrap();
        let next = d.a() * &xeq + d.b() * &u;
        assert_relative_eq!(next[0], xeq[0], max_relative = 1e-12);
        assert_relative_eq!(xeq[0], 0.35, max_relative = 1e-12);
    }

    #[test]
    fn json_round_trip_preserves_matrices() {
        let tf = TransferFunction::new(vec![1.0, 2.0], vec![1.0, 3.0, 4.0]).unwrap();
        let d = c2d_zoh(&tf_to_ss_ccf(&tf), 0.02).unwrap();
        let text = serde_json::to_string(&d).unwrap();
        let back: StateSpaceModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
        let cont = tf_to_ss_ccf(&tf);
        let text = serde_json::to_string(&cont).unwrap();
        assert!(text.contains("\"dt\":null"));
        let back: StateSpaceModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back.time_domain(), TimeDomain::Continuous);
    }

    #[test]
    fn json_rejects_ragged_matrix() {
        let text = "{\"A\":[[1,2],[3]],\"B\":[[1],[0]],\"C\":[[1,0]],\"D\":[[0]],\"dt\":null}";
        let r: Result<StateSpaceModel, _> = serde_json::from_str(text);
        assert!(r.is_err());
    }
}
