//! Excitation design, surrogate plant, Kalman prediction and output-error
//! identification of low-order velocity models.
//!
//! The identification pipeline mirrors how the models are used downstream:
//! data is decimated to the working rate (default 2 kHz / 20 = 100 Hz),
//! an equation-error least-squares fit seeds a continuous-time model via
//! the eigenvalue map `s = ln(z)/dt`, and Gauss-Newton iterations on the
//! simulation error refine the coefficients. Fit quality is the normalized
//! error percentage `(1 - ||y - yhat|| / ||y - mean(y)||) * 100`.

mod channel;
mod decouple;
mod filter;
mod fit;
mod kalman;
mod linearity;
mod metrics;
mod order;
mod plant;
mod predict;
mod record;
mod signal;
mod stack;

pub use channel::Channel;
pub use decouple::{decoupling_test, DecouplingConfig, DecouplingReport, Verdict};
pub use filter::{lowpass, CausalLowpass};
pub use fit::{fit_series, fit_tf, simulation_fit, FitConfig, FitResult};
pub use kalman::{kf_predict, kf_update, steady_state_gain, KalmanConfig, KalmanState};
pub use linearity::{linearity_report, LinearityReport};
pub use metrics::fit_percentage;
pub use order::{select_order, OrderEntry, OrderScan};
pub use plant::{
    make_profile, nominal_core, run_profile_experiment, ExperimentRunner, PlantProfile,
    PlantState, PlantStep, ProfileKind, STEPPING_RATE_HZ,
};
pub use predict::{k_step_predict, KStepReport};
pub use record::IoRecord;
pub use signal::{
    generate, layout_plan, resting_plan, ChirpLaw, ExcitationPlan, SignalKind, SignalSpec,
};
pub use stack::{stack_model, StackedModel};

use thiserror::Error;

/// Half the nominal stepping rate: the band edge below which the closed
/// loop is expected to respond linearly.
pub const LINEARITY_CUTOFF_HZ: f64 = 0.6;

#[derive(Debug, Error)]
pub enum SysidError {
    #[error(transparent)]
    Lti(#[from] linnav_lti::LtiError),
    #[error("invalid signal spec: {0}")]
    InvalidSignal(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("reference signal is constant; fit percentage undefined")]
    DegenerateReference,
    #[error("not enough data: need at least {needed} samples after decimation, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("input signal does not excite the system: {0}")]
    NotExciting(String),
    #[error("invalid model order: {0}")]
    InvalidOrder(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("did not converge: {0}")]
    NotConverged(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record: {0}")]
    Format(String),
}
