//! Polynomial helpers shared by the transfer-function types.
//!
//! Coefficient slices are in descending powers: `c[0]` multiplies the
//! highest power, `c[c.len()-1]` is the constant term.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Drops leading (highest-power) zero coefficients. Keeps at least one entry.
pub fn trim_leading_zeros(c: &[f64]) -> Vec<f64> {
    let first = c.iter().position(|&x| x != 0.0).unwrap_or(c.len() - 1);
    c[first..].to_vec()
}

pub fn polyval(c: &[f64], s: Complex64) -> Complex64 {
    c.iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &ci| acc * s + ci)
}

/// Derivative coefficients, same descending convention.
pub fn polyder(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    if n <= 1 {
        return vec![0.0];
    }
    c[..n - 1]
        .iter()
        .enumerate()
        .map(|(i, &ci)| ci * (n - 1 - i) as f64)
        .collect()
}

/// Roots via companion-matrix eigenvalues followed by a short Newton polish.
///
/// The polish keeps the relative residual |p(r)| / max|coeff| of each root
/// at the 1e-8 level even for clustered roots of the model bank.
pub fn roots(c: &[f64]) -> Vec<Complex64> {
    let c = trim_leading_zeros(c);
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let monic: Vec<f64> = c.iter().map(|&x| x / c[0]).collect();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        m[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        m[(n - 1, j)] = -monic[n - j];
    }
    let mut rts: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();
    let deriv = polyder(&monic);
    for r in rts.iter_mut() {
        for _ in 0..3 {
            let p = polyval(&monic, *r);
            let dp = polyval(&deriv, *r);
            if dp.norm() < 1e-300 {
                break;
            }
            let step = p / dp;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            *r -= step;
        }
    }
    rts
}

/// Largest relative residual |p(r)| / max|coeff| over the given roots.
pub fn max_relative_residual(c: &[f64], roots: &[Complex64]) -> f64 {
    let scale = c.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    roots
        .iter()
        .map(|&r| polyval(c, r).norm() / scale)
        .fold(0.0, f64::max)
}

/// Monic real polynomial with the given roots; complex roots must come in
/// conjugate pairs (imaginary parts cancel, the result drops them).
pub fn from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &ci) in coeffs.iter().enumerate() {
            next[i] += ci;
            next[i + 1] -= ci * r;
        }
        coeffs = next;
    }
    coeffs.iter().map(|c| c.re).collect()
}
