//! k-step-ahead prediction against recorded data.
//!
//! A steady-state observer assimilates every measurement; from each
//! corrected state the model rolls forward k steps open loop on the
//! recorded inputs, and the prediction is scored against the measurement
//! it lands on.

use crate::{fit_percentage, steady_state_gain, IoRecord, KalmanConfig, SysidError};
use linnav_lti::{equilibrium_state, StateSpaceModel, TimeDomain};
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct KStepReport {
    pub k: usize,
    /// Sampling period of the decimated record the predictions live on.
    pub dt: f64,
    /// Rows align with decimated samples k..n; column per channel.
    pub predicted: DMatrix<f64>,
    /// The measured rows the predictions are scored against.
    pub measured: DMatrix<f64>,
    /// Per-channel fit; None when a channel's measurement is constant.
    pub fits: [Option<f64>; 4],
}

/// Core predictor: u and y at the model's own rate, any I/O dimension.
/// Returns predictions for samples k..n (n-k rows).
fn roll_predictions(
    model: &StateSpaceModel,
    gain: &DMatrix<f64>,
    u: &DMatrix<f64>,
    y: &DMatrix<f64>,
    k: usize,
) -> DMatrix<f64> {
    let n = u.nrows();
    let a = model.a();
    let b = model.b();
    let c = model.c();
    let mut xhat = equilibrium_state(model, &u.row(0).transpose())
        .unwrap_or_else(|_| DVector::zeros(model.n_states()));
    let mut out = DMatrix::zeros(n - k, c.nrows());
    for j in 0..n {
        let innovation = y.row(j).transpose() - c * &xhat;
        let corrected = &xhat + gain * innovation;
        if j + k < n {
            let mut z = corrected.clone();
            for i in 0..k {
                z = a * z + b * u.row(j + i).transpose();
            }
            let pred = c * z;
            for p in 0..pred.len() {
                out[(j, p)] = pred[p];
            }
        }
        xhat = a * corrected + b * u.row(j).transpose();
    }
    out
}

/// Single-channel helper used to score a fit on its own training data.
/// Returns the prediction sequence for samples k..n and the fit percent.
pub(crate) fn k_step_series(
    model: &StateSpaceModel,
    u: &[f64],
    y: &[f64],
    k: usize,
    cfg: &KalmanConfig,
) -> Result<(Vec<f64>, Option<f64>), SysidError> {
    if u.len() != y.len() {
        return Err(SysidError::LengthMismatch(format!(
            "input has {} samples, output has {}",
            u.len(),
            y.len()
        )));
    }
    if u.len() < k + 2 {
        return Err(SysidError::TooShort {
            needed: k + 2,
            got: u.len(),
        });
    }
    let gain = steady_state_gain(model, cfg)?;
    let um = DMatrix::from_column_slice(u.len(), 1, u);
    let ym = DMatrix::from_column_slice(y.len(), 1, y);
    let pred = roll_predictions(model, &gain, &um, &ym, k);
    let pred_vec: Vec<f64> = pred.column(0).iter().copied().collect();
    let fit = fit_percentage(&y[k..], &pred_vec).ok();
    Ok((pred_vec, fit))
}

/// Predicts each measured sample from the measurement k model steps
/// earlier. The record is subsampled to the model's rate, which must be
/// an integer multiple of the record's.
pub fn k_step_predict(
    model: &StateSpaceModel,
    data: &IoRecord,
    k: usize,
    cfg: &KalmanConfig,
) -> Result<KStepReport, SysidError> {
    if k == 0 {
        return Err(SysidError::InvalidConfig("k must be at least 1".into()));
    }
    let dt_model = match model.time_domain() {
        TimeDomain::Discrete(dt) => dt,
        TimeDomain::Continuous => {
            return Err(SysidError::Lti(linnav_lti::LtiError::ExpectedDiscrete))
        }
    };
    if model.n_inputs() != 4 || model.n_outputs() != 4 {
        return Err(SysidError::InvalidConfig(format!(
            "record carries 4 channels but the model has {} inputs and {} outputs",
            model.n_inputs(),
            model.n_outputs()
        )));
    }
    let ratio = dt_model / data.dt();
    let factor = ratio.round() as usize;
    if factor == 0 || (ratio - factor as f64).abs() > 1e-6 * ratio.abs().max(1.0) {
        return Err(SysidError::InvalidConfig(format!(
            "model period {dt_model} is not an integer multiple of the record period {}",
            data.dt()
        )));
    }
    let dec = if factor > 1 {
        data.decimate(factor)?
    } else {
        data.clone()
    };
    if dec.len() < k + 2 {
        return Err(SysidError::TooShort {
            needed: k + 2,
            got: dec.len(),
        });
    }
    let gain = steady_state_gain(model, cfg)?;
    let predicted = roll_predictions(model, &gain, dec.u(), dec.y(), k);
    let measured = dec.y().rows(k, dec.len() - k).into_owned();
    let mut fits = [None; 4];
    for (ch, slot) in fits.iter_mut().enumerate() {
        let meas: Vec<f64> = measured.column(ch).iter().copied().collect();
        let pred: Vec<f64> = predicted.column(ch).iter().copied().collect();
        *slot = fit_percentage(&meas, &pred).ok();
    }
    Ok(KStepReport {
        k,
        dt: dec.dt(),
        predicted,
        measured,
        fits,
    })
}
