//! Fit-percentage metric shared by every validation stage.

use crate::SysidError;

/// Normalized root-mean-square fit expressed as a percentage:
/// `(1 - ||a - ahat|| / ||a - mean(a)||) * 100`.
///
/// 100 means the sequences are identical, 0 means the prediction is no
/// better than the reference mean, and negative values are possible for
/// predictions worse than that.
pub fn fit_percentage(actual: &[f64], predicted: &[f64]) -> Result<f64, SysidError> {
    if actual.len() != predicted.len() {
        return Err(SysidError::LengthMismatch(format!(
            "actual has {} samples, predicted has {}",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.len() < 2 {
        return Err(SysidError::TooShort {
            needed: 2,
            got: actual.len(),
        });
    }
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    let spread = actual
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        .sqrt();
    let scale = actual.iter().map(|a| a.abs()).fold(1.0, f64::max);
    // A spread this small is floating-point residue of a constant sequence,
    // not signal; the metric is undefined there.
    if !spread.is_finite() || spread <= 1e-12 * scale {
        return Err(SysidError::DegenerateReference);
    }
    let err = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p) * (a - p))
        .sum::<f64>()
        .sqrt();
    Ok((1.0 - err / spread) * 100.0)
}
