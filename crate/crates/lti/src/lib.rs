//! Linear time-invariant models for closed-loop velocity dynamics.
//!
//! Conventions used throughout the workspace:
//!
//! - Transfer-function coefficients are stored in descending powers of `s`;
//!   denominators are normalized so the leading coefficient is 1, and all
//!   models are strictly proper.
//! - A continuous model is asymptotically stable iff every pole has
//!   `Re < 0`; a discrete one iff every eigenvalue has magnitude `< 1`.
//! - JSON forms: `{"num": [...], "den": [...]}` for transfer functions and
//!   `{"A": [[...]], "B": ..., "C": ..., "D": ..., "dt": number|null}` for
//!   state space (`dt: null` means continuous time).

mod analysis;
mod poly;
mod ss;
mod tf;

pub use analysis::{frequency_response, hankel_singular_values, poles_zeros, PoleZeroReport};
pub use ss::{
    c2d_zoh, equilibrium_state, simulate_lti, tf_to_ss_ccf, StateSpaceModel, TimeDomain,
};
pub use tf::TransferFunction;

pub use poly::{from_roots as poly_from_roots, max_relative_residual, roots as poly_roots};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LtiError {
    #[error("denominator polynomial is zero")]
    ZeroDenominator,
    #[error("coefficients must be finite")]
    NonFiniteCoefficient,
    #[error("model must be strictly proper: numerator degree {num_degree} >= denominator degree {den_degree}")]
    NotStrictlyProper {
        num_degree: usize,
        den_degree: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("sample period must be positive and finite, got {0}")]
    NonPositiveDt(f64),
    #[error("operation requires a continuous-time model")]
    ExpectedContinuous,
    #[error("operation requires a discrete-time model")]
    ExpectedDiscrete,
    #[error("model is not asymptotically stable: {0}")]
    Unstable(String),
    #[error("singular linear system: {0}")]
    SingularSystem(String),
}
