//! Frequency-dependent linearity check on chirp responses.
//!
//! A linear model fitted on low-frequency data keeps its accuracy across
//! the whole sweep iff the plant behaves linearly; a fit that collapses
//! past some frequency locates the band where nonlinear effects wake up.

use crate::fit::simulate_model;
use crate::signal::ChirpLaw;
use crate::{fit_percentage, Channel, IoRecord, SysidError};
use linnav_lti::TransferFunction;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearityReport {
    pub channel: Channel,
    pub fc_hz: f64,
    /// When the chirp's instantaneous frequency crosses fc, seconds from
    /// the start of the record.
    pub crossing_time: f64,
    pub fit_below: f64,
    pub fit_above: f64,
}

impl LinearityReport {
    pub fn gap(&self) -> f64 {
        self.fit_below - self.fit_above
    }
}

/// Splits a chirp record at the time its instantaneous frequency crosses
/// fc and scores the model's full-rate simulation separately on each
/// side. The record must hold the chirp on `channel`'s input.
pub fn linearity_report(
    data: &IoRecord,
    channel: Channel,
    model: &TransferFunction,
    chirp: &ChirpLaw,
    fc_hz: f64,
) -> Result<LinearityReport, SysidError> {
    let tc = chirp.crossing_time(fc_hz)?;
    let idx = (tc / data.dt()).round() as usize;
    if idx < 2 || idx + 2 > data.len() {
        return Err(SysidError::TooShort {
            needed: 4,
            got: data.len(),
        });
    }
    // One full-rate simulation from the quiet start of the sweep; the
    // split shares the model's true state at the crossing instead of
    // pretending the high-frequency half began at rest.
    let (u, y) = data.channel_pair(channel, channel);
    let yhat = simulate_model(model, &u, data.dt())?;
    let fit_below = fit_percentage(&y[..idx], &yhat[..idx])?;
    let fit_above = fit_percentage(&y[idx..], &yhat[idx..])?;
    Ok(LinearityReport {
        channel,
        fc_hz,
        crossing_time: tc,
        fit_below,
        fit_above,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{make_profile, run_profile_experiment, ProfileKind};
    use crate::signal::{ExcitationPlan, SignalSpec};

    fn chirp_record(kind: ProfileKind, channel: Channel) -> (IoRecord, ChirpLaw) {
        let profile = make_profile(kind);
        let dt = 0.005;
        let duration = 100.0;
        let plans = Channel::ALL.map(|ch| {
            if ch == channel {
                ExcitationPlan::single(SignalSpec::chirp(
                    ch.default_range(),
                    0.0,
                    1.0,
                    duration,
                    dt,
                ))
            } else {
                crate::signal::resting_plan(ch, duration, dt)
            }
        });
        let rec = run_profile_experiment(&profile, &plans).unwrap();
        let law = ChirpLaw {
            f0_hz: 0.0,
            f1_hz: 1.0,
            duration,
        };
        (rec, law)
    }

    #[test]
    fn a_distortion_free_plant_scores_evenly_on_both_sides() {
        let (rec, law) = chirp_record(ProfileKind::LinearOnly, Channel::Vx);
        let truth = &crate::plant::nominal_core()[0];
        let report =
            linearity_report(&rec, Channel::Vx, truth, &law, crate::LINEARITY_CUTOFF_HZ)
                .unwrap();
        assert!(
            report.gap().abs() < 5.0,
            "below {} above {}",
            report.fit_below,
            report.fit_above
        );
        assert!(report.fit_below > 95.0);
    }

    #[test]
    fn rate_limited_channels_lose_accuracy_past_the_cutoff() {
        let (rec, law) = chirp_record(ProfileKind::Cnn, Channel::Vx);
        let truth = &crate::plant::nominal_core()[0];
        let report =
            linearity_report(&rec, Channel::Vx, truth, &law, crate::LINEARITY_CUTOFF_HZ)
                .unwrap();
        assert!(
            report.gap() > 0.0,
            "below {} above {}",
            report.fit_below,
            report.fit_above
        );
    }

    #[test]
    fn cutoffs_outside_the_swept_band_are_rejected() {
        let (rec, law) = chirp_record(ProfileKind::LinearOnly, Channel::Vy);
        let truth = &crate::plant::nominal_core()[1];
        assert!(linearity_report(&rec, Channel::Vy, truth, &law, 2.0).is_err());
    }
}
