//! Dense convex QP solver: primal-dual interior point with Mehrotra
//! predictor-corrector steps.
//!
//! Problem form:  min 1/2 x'Hx + g'x  subject to  l <= Ax <= u,
//! where each row may leave either side unbounded (f64::INFINITY), but
//! not both. Strict convexity is not required of H alone; the solver
//! regularizes the reduced system when a factorization fails.
//!
//! The iteration keeps slacks s = Ax strictly inside (l, u) with bound
//! multipliers zl, zu > 0 on the finite sides, eliminating everything
//! down to one positive definite solve in x per step:
//!   (H + A' W A) dx = -r_d - A' (e - lambda + W r_p)
//! with W = zl/(s-l) + zu/(u-s) and lambda = zu - zl.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Lower/upper bound multipliers per row (zero on infinite sides).
    pub z_lower: DVector<f64>,
    pub z_upper: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum QpError {
    #[error("bad problem shape: {0}")]
    Shape(String),
    #[error("row {0} has no finite bound")]
    UnboundedRow(usize),
    #[error("row {row} has l {l} > u {u}")]
    CrossedBounds { row: usize, l: f64, u: f64 },
    #[error("reduced KKT system is numerically singular")]
    Singular,
}

const MAX_ITER: usize = 100;
const TAU: f64 = 0.995;
const FEAS_TOL: f64 = 1e-9;
const GAP_TOL: f64 = 1e-10;

pub fn solve_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<QpSolution, QpError> {
    let n = h.nrows();
    let m = a.nrows();
    if h.ncols() != n || g.len() != n || a.ncols() != n || l.len() != m || u.len() != m {
        return Err(QpError::Shape(format!(
            "H {}x{}, g {}, A {}x{}, l {}, u {}",
            h.nrows(),
            h.ncols(),
            g.len(),
            a.nrows(),
            a.ncols(),
            l.len(),
            u.len()
        )));
    }
    for i in 0..m {
        let lf = l[i].is_finite();
        let uf = u[i].is_finite();
        if !lf && !uf {
            return Err(QpError::UnboundedRow(i));
        }
        if lf && uf && l[i] > u[i] {
            return Err(QpError::CrossedBounds {
                row: i,
                l: l[i],
                u: u[i],
            });
        }
    }

    let mut x = DVector::zeros(n);
    let mut s = a * &x;
    // Push slacks strictly inside their bounds.
    for i in 0..m {
        let lo = l[i];
        let hi = u[i];
        let pad = 0.1 * (hi - lo).min(1e8).max(1e-2) + 1e-3;
        if lo.is_finite() && hi.is_finite() {
            s[i] = s[i].clamp(lo + pad.min(0.45 * (hi - lo)), hi - pad.min(0.45 * (hi - lo)));
        } else if lo.is_finite() {
            s[i] = s[i].max(lo + pad);
        } else {
            s[i] = s[i].min(hi - pad);
        }
    }
    let mut zl: DVector<f64> =
        DVector::from_fn(m, |i, _| if l[i].is_finite() { 1.0 } else { 0.0 });
    let mut zu: DVector<f64> =
        DVector::from_fn(m, |i, _| if u[i].is_finite() { 1.0 } else { 0.0 });
    let sides: f64 = (zl.sum() + zu.sum()).max(1.0);

    let at = a.transpose();
    let mut best: Option<QpSolution> = None;
    let mut best_score = f64::INFINITY;
    let mut since_best = 0usize;
    for iter in 0..MAX_ITER {
        let lambda = &zu - &zl;
        let hx = h * &x;
        let atl = &at * &lambda;
        let r_d = &hx + g + &atl;
        let ax = a * &x;
        let r_p = &ax - &s;
        // Relative scales in the OSQP style keep the criteria meaningful
        // whether the data is tiny or huge.
        let scale_b = ax.amax().max(s.amax()).max(1.0);
        let scale_g = hx.amax().max(atl.amax()).max(g.amax()).max(1.0);
        let mu = (0..m)
            .map(|i| {
                let mut c = 0.0;
                if l[i].is_finite() {
                    c += (s[i] - l[i]) * zl[i];
                }
                if u[i].is_finite() {
                    c += (u[i] - s[i]) * zu[i];
                }
                c
            })
            .sum::<f64>()
            / sides;

        let pr = r_p.amax();
        let dr = r_d.amax();
        let score = (pr / (FEAS_TOL * scale_b))
            .max(dr / (FEAS_TOL * scale_g))
            .max(mu / (GAP_TOL * scale_g));
        let solution = QpSolution {
            x: x.clone(),
            z_lower: zl.clone(),
            z_upper: zu.clone(),
            iterations: iter,
            converged: score <= 1.0,
            primal_residual: pr,
            dual_residual: dr,
            gap: mu,
        };
        if solution.converged {
            return Ok(solution);
        }
        if score < best_score {
            best_score = score;
            since_best = 0;
            best = Some(solution);
        } else {
            since_best += 1;
            // The centering steps have stopped paying off; the best
            // iterate so far is as good as this problem gets.
            if since_best >= 12 {
                break;
            }
        }

        // Diagonal W and the reduced matrix.
        let mut w: DVector<f64> = DVector::zeros(m);
        for i in 0..m {
            if l[i].is_finite() {
                w[i] += zl[i] / (s[i] - l[i]);
            }
            if u[i].is_finite() {
                w[i] += zu[i] / (u[i] - s[i]);
            }
        }
        // awa = H + A' W A through scaled copies so the product runs as
        // one fast matrix multiply instead of m rank-one updates.
        let mut scaled = a.clone();
        for i in 0..m {
            let root = w[i].sqrt();
            scaled.row_mut(i).scale_mut(root);
        }
        let scaled_t = scaled.transpose();
        let mut awa = h.clone();
        awa.gemm(1.0, &scaled_t, &scaled, 1.0);
        // Divergence on infeasible problems drives W to infinity; give
        // back the best iterate (marked unconverged) instead of failing.
        if !awa.iter().all(|v| v.is_finite()) {
            break;
        }
        let mut reg = 0.0;
        let chol = 'factor: {
            loop {
                let mut k = awa.clone();
                if reg > 0.0 {
                    for p in 0..n {
                        k[(p, p)] += reg;
                    }
                }
                match k.cholesky() {
                    Some(c) => break 'factor Some(c),
                    None => {
                        reg = if reg == 0.0 { 1e-10 } else { reg * 100.0 };
                        if reg > 1.0 {
                            break 'factor None;
                        }
                    }
                }
            }
        };
        let chol = match chol {
            Some(c) => c,
            None => {
                if iter == 0 {
                    return Err(QpError::Singular);
                }
                break;
            }
        };

        let solve_step = |tl: &DVector<f64>, tu: &DVector<f64>| {
            // e_i = tu/(u-s) - tl/(s-l) on the finite sides.
            let mut e: DVector<f64> = DVector::zeros(m);
            for i in 0..m {
                if u[i].is_finite() {
                    e[i] += tu[i] / (u[i] - s[i]);
                }
                if l[i].is_finite() {
                    e[i] -= tl[i] / (s[i] - l[i]);
                }
            }
            let mut rhs_rows = e - &lambda;
            for i in 0..m {
                rhs_rows[i] += w[i] * r_p[i];
            }
            let rhs = -(&r_d) - &at * rhs_rows;
            let dx = chol.solve(&rhs);
            let ds = a * &dx + &r_p;
            let mut dzl: DVector<f64> = DVector::zeros(m);
            let mut dzu: DVector<f64> = DVector::zeros(m);
            for i in 0..m {
                if l[i].is_finite() {
                    dzl[i] = (tl[i] - zl[i] * (s[i] - l[i]) - zl[i] * ds[i]) / (s[i] - l[i]);
                }
                if u[i].is_finite() {
                    dzu[i] = (tu[i] - zu[i] * (u[i] - s[i]) + zu[i] * ds[i]) / (u[i] - s[i]);
                }
            }
            (dx, ds, dzl, dzu)
        };

        let max_step = |ds: &DVector<f64>, dzl: &DVector<f64>, dzu: &DVector<f64>| {
            let mut alpha = 1.0f64;
            for i in 0..m {
                if l[i].is_finite() {
                    if ds[i] < 0.0 {
                        alpha = alpha.min(-(s[i] - l[i]) / ds[i]);
                    }
                    if dzl[i] < 0.0 {
                        alpha = alpha.min(-zl[i] / dzl[i]);
                    }
                }
                if u[i].is_finite() {
                    if ds[i] > 0.0 {
                        alpha = alpha.min((u[i] - s[i]) / ds[i]);
                    }
                    if dzu[i] < 0.0 {
                        alpha = alpha.min(-zu[i] / dzu[i]);
                    }
                }
            }
            alpha
        };

        // Predictor: drive complementarity toward zero.
        let zeros: DVector<f64> = DVector::zeros(m);
        let (_, ds_a, dzl_a, dzu_a) = solve_step(&zeros, &zeros);
        let alpha_aff = max_step(&ds_a, &dzl_a, &dzu_a);
        let mu_aff = (0..m)
            .map(|i| {
                let mut c = 0.0;
                if l[i].is_finite() {
                    c += (s[i] - l[i] + alpha_aff * ds_a[i]) * (zl[i] + alpha_aff * dzl_a[i]);
                }
                if u[i].is_finite() {
                    c += (u[i] - s[i] - alpha_aff * ds_a[i]) * (zu[i] + alpha_aff * dzu_a[i]);
                }
                c
            })
            .sum::<f64>()
            / sides;
        let sigma = (mu_aff / mu.max(1e-300)).powi(3).clamp(1e-8, 1.0);

        // Corrector: centering plus second-order compensation.
        let mut tl: DVector<f64> = DVector::zeros(m);
        let mut tu: DVector<f64> = DVector::zeros(m);
        for i in 0..m {
            if l[i].is_finite() {
                tl[i] = sigma * mu - ds_a[i] * dzl_a[i];
            }
            if u[i].is_finite() {
                tu[i] = sigma * mu + ds_a[i] * dzu_a[i];
            }
        }
        let (dx, ds, dzl, dzu) = solve_step(&tl, &tu);
        let alpha = TAU * max_step(&ds, &dzl, &dzu);
        x += alpha * dx;
        s += alpha * ds;
        zl += alpha * dzl;
        zu += alpha * dzu;
        for i in 0..m {
            if l[i].is_finite() {
                zl[i] = zl[i].max(1e-14);
            }
            if u[i].is_finite() {
                zu[i] = zu[i].max(1e-14);
            }
        }
    }
    Ok(best.expect("at least one iterate was recorded"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn scalar_bound_becomes_active() {
        // min (x-1)^2 subject to x <= 0.5
        let h = DMatrix::from_element(1, 1, 2.0);
        let g = DVector::from_element(1, -2.0);
        let a = DMatrix::from_element(1, 1, 1.0);
        let l = DVector::from_element(1, -INF);
        let u = DVector::from_element(1, 0.5);
        let sol = solve_qp(&h, &g, &a, &l, &u).unwrap();
        assert!(sol.converged);
        assert!((sol.x[0] - 0.5).abs() < 1e-7, "x {}", sol.x[0]);
    }

    #[test]
    fn interior_minimum_is_untouched() {
        let h = DMatrix::from_element(1, 1, 2.0);
        let g = DVector::from_element(1, -2.0);
        let a = DMatrix::from_element(1, 1, 1.0);
        let l = DVector::from_element(1, -10.0);
        let u = DVector::from_element(1, 10.0);
        let sol = solve_qp(&h, &g, &a, &l, &u).unwrap();
        assert!(sol.converged);
        assert!((sol.x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn shared_load_splits_evenly() {
        // min 1/2 (x1^2 + x2^2) subject to x1 + x2 >= 1
        let h = DMatrix::identity(2, 2);
        let g = DVector::zeros(2);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let l = DVector::from_element(1, 1.0);
        let u = DVector::from_element(1, INF);
        let sol = solve_qp(&h, &g, &a, &l, &u).unwrap();
        assert!(sol.converged);
        assert!((sol.x[0] - 0.5).abs() < 1e-7);
        assert!((sol.x[1] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn box_problems_match_coordinatewise_clamping() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(1..6);
            let hd: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..4.0)).collect();
            let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..0.0)).collect();
            let hi: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
            let h = DMatrix::from_diagonal(&DVector::from_column_slice(&hd));
            let gv = DVector::from_column_slice(&g);
            let a = DMatrix::identity(n, n);
            let l = DVector::from_column_slice(&lo);
            let u = DVector::from_column_slice(&hi);
            let sol = solve_qp(&h, &gv, &a, &l, &u).unwrap();
            assert!(sol.converged);
            for i in 0..n {
                let expected = (-g[i] / hd[i]).clamp(lo[i], hi[i]);
                assert!(
                    (sol.x[i] - expected).abs() < 1e-6,
                    "coord {i}: {} vs {expected}",
                    sol.x[i]
                );
            }
        }
    }

    #[test]
    fn kkt_conditions_hold_on_random_dense_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..30 {
            let n = rng.gen_range(2..7);
            let m = rng.gen_range(1..9);
            let msqrt = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let h = &msqrt * msqrt.transpose() + DMatrix::identity(n, n);
            let g = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
            let mut l = DVector::from_fn(m, |_, _| rng.gen_range(-3.0..-0.2));
            let mut u = DVector::from_fn(m, |_, _| rng.gen_range(0.2..3.0));
            for i in 0..m {
                match rng.gen_range(0..3) {
                    0 => l[i] = -INF,
                    1 => u[i] = INF,
                    _ => {}
                }
            }
            let sol = solve_qp(&h, &g, &a, &l, &u).unwrap();
            assert!(sol.converged, "trial {trial} did not converge");
            // Stationarity: Hx + g + A'(zu - zl) = 0.
            let grad = &h * &sol.x + &g + a.transpose() * (&sol.z_upper - &sol.z_lower);
            assert!(grad.amax() < 1e-6, "trial {trial} stationarity {}", grad.amax());
            let s = &a * &sol.x;
            for i in 0..m {
                if l[i].is_finite() {
                    assert!(s[i] >= l[i] - 1e-7, "trial {trial} row {i} below l");
                    assert!((s[i] - l[i]) * sol.z_lower[i] < 1e-6);
                }
                if u[i].is_finite() {
                    assert!(s[i] <= u[i] + 1e-7, "trial {trial} row {i} above u");
                    assert!((u[i] - s[i]) * sol.z_upper[i] < 1e-6);
                }
            }
        }
    }

    #[test]
    fn contradictory_rows_never_claim_convergence() {
        // x <= -1 and x >= 1 cannot both hold.
        let h = DMatrix::identity(1, 1);
        let g = DVector::zeros(1);
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let l = DVector::from_column_slice(&[-INF, 1.0]);
        let u = DVector::from_column_slice(&[-1.0, INF]);
        let sol = solve_qp(&h, &g, &a, &l, &u).unwrap();
        assert!(!sol.converged);
        assert!(sol.primal_residual > 1e-3);
    }

    #[test]
    fn rows_without_any_bound_are_rejected() {
        let h = DMatrix::identity(1, 1);
        let g = DVector::zeros(1);
        let a = DMatrix::from_element(1, 1, 1.0);
        let l = DVector::from_element(1, -INF);
        let u = DVector::from_element(1, INF);
        assert!(matches!(
            solve_qp(&h, &g, &a, &l, &u),
            Err(QpError::UnboundedRow(0))
        ));
    }
}
