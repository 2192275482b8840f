//! Structure selection: scan every strictly proper (poles, zeros)
//! combination up to a cap and keep the simplest one whose training fit
//! is within two points of the best.

use crate::fit::{FitConfig, FitResult};
use crate::SysidError;
use linnav_lti::{hankel_singular_values, poly_roots, tf_to_ss_ccf, TransferFunction};
use nalgebra::Complex;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderEntry {
    pub n_poles: usize,
    pub n_zeros: usize,
    /// None when every start diverged for this structure.
    pub fit_percent: Option<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderScan {
    pub selected: (usize, usize),
    pub entries: Vec<OrderEntry>,
    /// Hankel singular values of the best asymptotically stable fit;
    /// empty when no stable fit was found.
    pub hsv: Vec<f64>,
    /// Set when the data looks like pure feedthrough (y proportional to
    /// u), which no strictly proper model can represent exactly.
    pub feedthrough_suspected: bool,
}

const SELECTION_MARGIN: f64 = 2.0;

/// Pads a model with fast poles (DC gain preserved) until it has
/// target_poles of them, so a larger structure can be seeded from a
/// smaller optimum it strictly contains.
fn padded_to(model: &TransferFunction, target_poles: usize) -> Option<TransferFunction> {
    let mut poles = poly_roots(model.den());
    if poles.len() >= target_poles {
        return None;
    }
    let fastest = poles.iter().map(|p| p.norm()).fold(0.0f64, f64::max).max(1.0);
    let mut scale = 1.0;
    let mut mag = 50.0 * fastest;
    while poles.len() < target_poles {
        poles.push(Complex::new(-mag, 0.0));
        scale *= mag;
        mag *= 2.0;
    }
    let den = linnav_lti::poly_from_roots(&poles);
    let num: Vec<f64> = model.num().iter().map(|c| c * scale).collect();
    TransferFunction::new(num, den).ok()
}

/// Fits every structure with n_zeros < n_poles <= max_poles and returns
/// the scan. To keep the grid monotone in pole count, any pole level that
/// scores below the level before it is retried from the smaller model
/// padded with one fast pole.
pub fn select_order(
    u: &[f64],
    y: &[f64],
    dt: f64,
    max_poles: usize,
    base: &FitConfig,
) -> Result<OrderScan, SysidError> {
    if max_poles == 0 || max_poles > 6 {
        return Err(SysidError::InvalidOrder(format!(
            "max_poles must be between 1 and 6, got {max_poles}"
        )));
    }
    if u.len() != y.len() {
        return Err(SysidError::LengthMismatch(format!(
            "input has {} samples, output has {}",
            u.len(),
            y.len()
        )));
    }

    let feedthrough_suspected = {
        let uu: f64 = u.iter().map(|v| v * v).sum();
        let uy: f64 = u.iter().zip(y).map(|(a, b)| a * b).sum();
        if uu > 0.0 {
            let g = uy / uu;
            let res: f64 = u
                .iter()
                .zip(y)
                .map(|(a, b)| (b - g * a) * (b - g * a))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            g != 0.0 && res <= 1e-6 * scale.max(1e-300)
        } else {
            false
        }
    };

    let run = |np: usize, nz: usize, seed: Option<&TransferFunction>| -> Option<FitResult> {
        let cfg = FitConfig {
            n_poles: np,
            n_zeros: nz,
            ..base.clone()
        };
        crate::fit::fit_series_seeded(u, y, dt, &cfg, seed).ok()
    };

    let mut entries: Vec<OrderEntry> = Vec::new();
    let mut results: Vec<Option<FitResult>> = Vec::new();
    let mut best_at_level = vec![f64::NEG_INFINITY; max_poles + 1];
    for np in 1..=max_poles {
        for nz in 0..np {
            let mut fit = run(np, nz, None);
            // Monotone guard: a larger structure contains every smaller
            // one, so falling below the previous pole count means the
            // search stalled; retry it from the padded smaller optimum.
            if np > 1 {
                let floor = best_at_level[np - 1];
                let current = fit.as_ref().map_or(f64::NEG_INFINITY, |f| f.fit_percent);
                if current < floor {
                    let source = entries
                        .iter()
                        .zip(&results)
                        .filter_map(|(e, r)| r.as_ref().map(|f| (e, f)))
                        .filter(|(e, _)| e.n_poles < np && e.n_zeros <= nz)
                        .max_by(|a, b| a.1.fit_percent.total_cmp(&b.1.fit_percent))
                        .map(|(_, f)| f.model.clone());
                    if let Some(retry) = source
                        .and_then(|m| padded_to(&m, np))
                        .and_then(|seed| run(np, nz, Some(&seed)))
                    {
                        if retry.fit_percent > current {
                            fit = Some(retry);
                        }
                    }
                }
            }
            let entry = OrderEntry {
                n_poles: np,
                n_zeros: nz,
                fit_percent: fit.as_ref().map(|f| f.fit_percent),
                converged: fit.as_ref().map_or(false, |f| f.converged),
            };
            if let Some(f) = entry.fit_percent {
                best_at_level[np] = best_at_level[np].max(f);
            }
            entries.push(entry);
            results.push(fit);
        }
        if best_at_level[np] < best_at_level[np - 1] {
            best_at_level[np] = best_at_level[np - 1];
        }
    }

    let best = entries
        .iter()
        .filter_map(|e| e.fit_percent)
        .fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(SysidError::NotConverged(
            "every structure in the scan diverged".into(),
        ));
    }
    let selected = entries
        .iter()
        .filter(|e| e.fit_percent.map_or(false, |f| f >= best - SELECTION_MARGIN))
        .min_by_key(|e| (e.n_poles + e.n_zeros, e.n_poles, e.n_zeros))
        .map(|e| (e.n_poles, e.n_zeros))
        .expect("a finite best fit implies at least one candidate");

    let hsv = results
        .iter()
        .flatten()
        .filter(|f| {
            tf_to_ss_ccf(&f.model).is_asymptotically_stable()
        })
        .max_by(|a, b| a.fit_percent.total_cmp(&b.fit_percent))
        .map(|f| hankel_singular_values(&tf_to_ss_ccf(&f.model)).unwrap_or_default())
        .unwrap_or_default();

    Ok(OrderScan {
        selected,
        entries,
        hsv,
        feedthrough_suspected,
    })
}
