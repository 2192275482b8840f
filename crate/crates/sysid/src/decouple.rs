//! Four-step channel-independence protocol.
//!
//! 1. Excite channel M with a chirp while every other command rests at
//!    its nominal value, and record the response.
//! 2. Fit a single-channel model on that pair.
//! 3. Run again with chirps on both M and N, everything else resting.
//! 4. Score the step-2 model on the step-3 data. M is independent of N
//!    when the fit survives within drop_threshold points.

use crate::fit::{fit_tf, simulation_fit, FitConfig};
use crate::signal::{ChirpLaw, ExcitationPlan, SignalSpec};
use crate::{Channel, ExperimentRunner, SysidError};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Independent,
    Coupled,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecouplingConfig {
    pub chirp_f0_hz: f64,
    pub chirp_f1_hz: f64,
    pub duration: f64,
    pub dt: f64,
    /// Allowed fit loss between the two stages, percentage points.
    pub drop_threshold: f64,
    /// Frequency bounding the extra below-cutoff score.
    pub cutoff_hz: f64,
    /// Estimator settings; None picks the published structure for M.
    pub fit: Option<FitConfig>,
}

impl Default for DecouplingConfig {
    fn default() -> Self {
        DecouplingConfig {
            chirp_f0_hz: 0.0,
            chirp_f1_hz: 1.0,
            duration: 100.0,
            dt: 0.002,
            drop_threshold: 15.0,
            cutoff_hz: crate::LINEARITY_CUTOFF_HZ,
            fit: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecouplingReport {
    pub dim_m: Channel,
    pub dim_n: Channel,
    pub fit_stage_percent: f64,
    pub test_stage_percent: f64,
    pub verdict: Verdict,
    /// Test-stage fit restricted to samples before the chirp crosses
    /// cutoff_hz; None when the cutoff lies outside the chirp band.
    pub below_cutoff_percent: Option<f64>,
    pub drop_threshold: f64,
}

fn chirp_spec(ch: Channel, cfg: &DecouplingConfig) -> SignalSpec {
    SignalSpec::chirp(
        ch.default_range(),
        cfg.chirp_f0_hz,
        cfg.chirp_f1_hz,
        cfg.duration,
        cfg.dt,
    )
}

fn plans_for(
    m: Channel,
    also_chirped: Option<Channel>,
    cfg: &DecouplingConfig,
) -> [ExcitationPlan; 4] {
    Channel::ALL.map(|ch| {
        if ch == m || Some(ch) == also_chirped {
            ExcitationPlan::single(chirp_spec(ch, cfg))
        } else {
            crate::signal::resting_plan(ch, cfg.duration, cfg.dt)
        }
    })
}

pub fn decoupling_test<R: ExperimentRunner>(
    plant: &mut R,
    dim_m: Channel,
    dim_n: Channel,
    cfg: &DecouplingConfig,
) -> Result<DecouplingReport, SysidError> {
    if dim_m == dim_n {
        return Err(SysidError::InvalidConfig(
            "the tested pair must be two different channels".into(),
        ));
    }
    if !(cfg.duration > 0.0 && cfg.dt > 0.0 && cfg.drop_threshold >= 0.0) {
        return Err(SysidError::InvalidConfig(
            "duration, dt and drop_threshold must be positive".into(),
        ));
    }
    let fit_cfg = cfg
        .fit
        .clone()
        .unwrap_or_else(|| FitConfig::for_channel(dim_m));

    let fit_record = plant.run(&plans_for(dim_m, None, cfg))?;
    let fit = fit_tf(&fit_record, dim_m, dim_m, &fit_cfg)?;
    let fit_stage_percent = fit.fit_percent;

    let test_record = plant.run(&plans_for(dim_m, Some(dim_n), cfg))?;
    let (u_test, y_test) = test_record.channel_pair(dim_m, dim_m);
    let test_stage_percent = simulation_fit(
        &fit.model,
        &u_test,
        &y_test,
        test_record.dt(),
        fit_cfg.decimation,
    )?;

    let law = ChirpLaw {
        f0_hz: cfg.chirp_f0_hz,
        f1_hz: cfg.chirp_f1_hz,
        duration: cfg.duration,
    };
    let below_cutoff_percent = law.crossing_time(cfg.cutoff_hz).ok().and_then(|tc| {
        let idx = (tc / test_record.dt()).floor() as usize;
        if idx < 4 {
            return None;
        }
        simulation_fit(
            &fit.model,
            &u_test[..idx],
            &y_test[..idx],
            test_record.dt(),
            fit_cfg.decimation,
        )
        .ok()
    });

    let verdict = if test_stage_percent >= fit_stage_percent - cfg.drop_threshold {
        Verdict::Independent
    } else {
        Verdict::Coupled
    };
    Ok(DecouplingReport {
        dim_m,
        dim_n,
        fit_stage_percent,
        test_stage_percent,
        verdict,
        below_cutoff_percent,
        drop_threshold: cfg.drop_threshold,
    })
}
