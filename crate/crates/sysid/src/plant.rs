//! Surrogate closed-loop plant: a known four-channel LTI core wrapped in
//! configurable, documented distortions.
//!
//! The distortions model phenomena seen on the real closed loop rather
//! than any physical mechanism: a lateral/yaw oscillation at the stepping
//! rate, measurement noise, loss of linearity above the cutoff frequency
//! (commands cannot slew faster than the gait admits), leakage of the
//! clipped command energy into the other channels, and a cubic command
//! distortion for the badly trained profile.

use crate::{Channel, ExcitationPlan, IoRecord, SysidError, LINEARITY_CUTOFF_HZ};
use linnav_lti::{
    c2d_zoh, equilibrium_state, poly_from_roots, poly_roots, tf_to_ss_ccf, TransferFunction,
};
use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Nominal walking cadence of the closed loop.
pub const STEPPING_RATE_HZ: f64 = 1.25;

const DEFAULT_OSC_AMPLITUDE: f64 = 0.05;
const DEFAULT_NOISE_STD: [f64; 4] = [0.01, 0.02, 0.002, 0.015];
const DEFAULT_HF_GAIN: f64 = 0.5;
const DEFAULT_COUPLING_GAIN: f64 = 0.15;
const UNTRAINED_CUBIC_GAIN: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Cnn,
    Mlp,
    Untrained,
    LinearOnly,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 4] = [
        ProfileKind::Cnn,
        ProfileKind::Mlp,
        ProfileKind::Untrained,
        ProfileKind::LinearOnly,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ProfileKind::Cnn => "cnn",
            ProfileKind::Mlp => "mlp",
            ProfileKind::Untrained => "untrained",
            ProfileKind::LinearOnly => "linear_only",
        }
    }

    pub fn from_label(s: &str) -> Option<ProfileKind> {
        ProfileKind::ALL.into_iter().find(|k| k.label() == s)
    }
}

/// Everything that defines one surrogate plant variant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlantProfile {
    pub name: ProfileKind,
    pub core: [TransferFunction; 4],
    pub osc_amplitude: f64,
    pub osc_freq_hz: f64,
    pub noise_std: [f64; 4],
    pub hf_distortion_gain: f64,
    pub coupling_gain: f64,
    pub cutoff_hz: f64,
    pub cubic_gain: f64,
    pub seed: u64,
}

impl PlantProfile {
    pub fn validate(&self) -> Result<(), SysidError> {
        let gains = [
            ("osc_amplitude", self.osc_amplitude),
            ("hf_distortion_gain", self.hf_distortion_gain),
            ("coupling_gain", self.coupling_gain),
            ("cubic_gain", self.cubic_gain),
        ];
        for (name, g) in gains {
            if !g.is_finite() || g < 0.0 {
                return Err(SysidError::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {g}"
                )));
            }
        }
        if self.hf_distortion_gain > 1.0 {
            return Err(SysidError::InvalidConfig(
                "hf_distortion_gain blends between commanded and slewed input; it cannot exceed 1"
                    .into(),
            ));
        }
        for (ch, std) in Channel::ALL.iter().zip(self.noise_std) {
            if !std.is_finite() || std < 0.0 {
                return Err(SysidError::InvalidConfig(format!(
                    "noise_std for {} must be finite and non-negative",
                    ch.label()
                )));
            }
        }
        if !(self.osc_freq_hz > 0.0) || !(self.cutoff_hz > 0.0) {
            return Err(SysidError::InvalidConfig(
                "osc_freq_hz and cutoff_hz must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The identified third-order transfer functions for sagittal velocity,
/// lateral velocity, pelvis height and yaw rate, in [`Channel::ALL`] order.
pub fn nominal_core() -> [TransferFunction; 4] {
    [
        TransferFunction::new(
            vec![0.4694, 6.089, 8.697],
            vec![1.0, 6.432, 11.03, 8.274],
        )
        .expect("sagittal velocity model is well formed"),
        TransferFunction::new(vec![13.59, 24.56], vec![1.0, 11.48, 32.5, 40.13])
            .expect("lateral velocity model is well formed"),
        TransferFunction::new(vec![145.9, 37.55], vec![1.0, 46.43, 161.0, 38.38])
            .expect("height model is well formed"),
        TransferFunction::new(
            vec![0.3078, 5.267, 5.553],
            vec![1.0, 4.595, 7.528, 6.045],
        )
        .expect("yaw rate model is well formed"),
    ]
}

/// Moves the slowest real left-half-plane zero across the imaginary axis
/// while preserving |H(jw)| at every frequency and the DC gain's sign:
/// for a real zero the factor (s+a) has the same magnitude on the
/// imaginary axis as (s-a), and the overall sign flip restores DC.
fn reflect_slowest_zero(tf: &TransferFunction) -> TransferFunction {
    let mut zeros = poly_roots(tf.num());
    let mut slowest: Option<usize> = None;
    for (i, z) in zeros.iter().enumerate() {
        if z.im.abs() < 1e-9 && z.re < 0.0 {
            let better = slowest.map_or(true, |j| z.re.abs() < zeros[j].re.abs());
            if better {
                slowest = Some(i);
            }
        }
    }
    let idx = slowest.expect("core numerators carry a real stable zero");
    zeros[idx] = Complex::new(-zeros[idx].re, 0.0);
    let monic = poly_from_roots(&zeros);
    let lead = tf.num()[0];
    let num: Vec<f64> = monic.iter().map(|c| -lead * c).collect();
    TransferFunction::new(num, tf.den().to_vec()).expect("reflection preserves properness")
}

/// Built-in plant variants:
/// - `cnn`: the nominal core with the calibrated distortion defaults;
/// - `mlp`: the same dynamics but non-minimum phase in both velocity
///   channels (slowest numerator zero reflected, magnitude preserved);
/// - `untrained`: nominal core with a cubic command distortion and the
///   high-frequency penalty at full strength;
/// - `linear_only`: nominal core with every distortion switched off.
pub fn make_profile(kind: ProfileKind) -> PlantProfile {
    let mut profile = PlantProfile {
        name: kind,
        core: nominal_core(),
        osc_amplitude: DEFAULT_OSC_AMPLITUDE,
        osc_freq_hz: STEPPING_RATE_HZ,
        noise_std: DEFAULT_NOISE_STD,
        hf_distortion_gain: DEFAULT_HF_GAIN,
        coupling_gain: DEFAULT_COUPLING_GAIN,
        cutoff_hz: LINEARITY_CUTOFF_HZ,
        cubic_gain: 0.0,
        seed: 0,
    };
    match kind {
        ProfileKind::Cnn => {}
        ProfileKind::Mlp => {
            profile.core[Channel::Vx.index()] =
                reflect_slowest_zero(&profile.core[Channel::Vx.index()]);
            profile.core[Channel::Vy.index()] =
                reflect_slowest_zero(&profile.core[Channel::Vy.index()]);
        }
        ProfileKind::Untrained => {
            profile.hf_distortion_gain = (2.0 * DEFAULT_HF_GAIN).min(1.0);
            profile.cubic_gain = UNTRAINED_CUBIC_GAIN;
        }
        ProfileKind::LinearOnly => {
            profile.osc_amplitude = 0.0;
            profile.noise_std = [0.0; 4];
            profile.hf_distortion_gain = 0.0;
            profile.coupling_gain = 0.0;
            profile.cubic_gain = 0.0;
        }
    }
    profile
}

/// One plant step: what the sensors report, what the plant actually did,
/// and the command the LTI core actually received.
#[derive(Clone, Copy, Debug)]
pub struct PlantStep {
    pub measured: [f64; 4],
    pub true_output: [f64; 4],
    pub effective_input: [f64; 4],
}

struct ChannelBlock {
    ad: DMatrix<f64>,
    bd: DVector<f64>,
    c: DVector<f64>,
    x: DVector<f64>,
}

/// Simulation state for one episode. The clock starts at zero and the LTI
/// core starts at the equilibrium of the initial command, so a constant
/// command produces no transient.
pub struct PlantState {
    dt: f64,
    steps: u64,
    prev_slew: [f64; 4],
    blocks: Vec<ChannelBlock>,
    rng: ChaCha8Rng,
}

impl PlantState {
    pub fn new(profile: &PlantProfile, dt: f64, u0: [f64; 4]) -> Result<Self, SysidError> {
        profile.validate()?;
        if !dt.is_finite() || dt <= 0.0 {
            return Err(SysidError::InvalidConfig(format!(
                "sample interval must be positive, got {dt}"
            )));
        }
        let u_nl = distort_static(profile, u0);
        let mut blocks = Vec::with_capacity(4);
        for (i, tf) in profile.core.iter().enumerate() {
            let ssd = c2d_zoh(&tf_to_ss_ccf(tf), dt)?;
            let x = equilibrium_state(&ssd, &DVector::from_element(1, u_nl[i]))?;
            blocks.push(ChannelBlock {
                ad: ssd.a().clone(),
                bd: ssd.b().column(0).into_owned(),
                c: ssd.c().row(0).transpose(),
                x,
            });
        }
        Ok(PlantState {
            dt,
            steps: 0,
            prev_slew: u_nl,
            blocks,
            rng: ChaCha8Rng::seed_from_u64(profile.seed),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn clock(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Advances one sample. The returned outputs are emitted from the
    /// pre-update state, matching the LTI simulation convention.
    pub fn step(
        &mut self,
        profile: &PlantProfile,
        u: [f64; 4],
        dt: f64,
    ) -> Result<PlantStep, SysidError> {
        if (dt - self.dt).abs() > 1e-12 {
            return Err(SysidError::InvalidConfig(format!(
                "step dt {dt} does not match the configured rate {}",
                self.dt
            )));
        }
        let t = self.clock();
        let u_nl = distort_static(profile, u);

        // Velocity commands cannot slew faster than the gait admits; the
        // shortfall is partially obeyed (blend) and the clipped energy
        // leaks into the other channels. Height is exempt.
        let mut slew = [0.0; 4];
        let mut shortfall = [0.0; 4];
        let mut eff = [0.0; 4];
        for ch in Channel::ALL {
            let i = ch.index();
            if ch.is_velocity() {
                let max_inc = 2.0 * profile.cutoff_hz * ch.span() * dt;
                let inc = (u_nl[i] - self.prev_slew[i]).clamp(-max_inc, max_inc);
                slew[i] = self.prev_slew[i] + inc;
                shortfall[i] = u_nl[i] - slew[i];
                eff[i] = profile.hf_distortion_gain * slew[i]
                    + (1.0 - profile.hf_distortion_gain) * u_nl[i];
            } else {
                slew[i] = u_nl[i];
                shortfall[i] = 0.0;
                eff[i] = u_nl[i];
            }
        }
        let total_shortfall: f64 = shortfall.iter().sum();
        for i in 0..4 {
            eff[i] += profile.coupling_gain * (total_shortfall - shortfall[i]);
        }

        let mut true_output = [0.0; 4];
        for (i, block) in self.blocks.iter_mut().enumerate() {
            true_output[i] = block.c.dot(&block.x);
            block.x = &block.ad * &block.x + &block.bd * eff[i];
        }

        let mut measured = true_output;
        let osc = profile.osc_amplitude * (2.0 * PI * profile.osc_freq_hz * t).sin();
        measured[Channel::Vy.index()] += osc;
        measured[Channel::Wyaw.index()] += osc;
        for i in 0..4 {
            if profile.noise_std[i] > 0.0 {
                let n: f64 = StandardNormal.sample(&mut self.rng);
                measured[i] += profile.noise_std[i] * n;
            }
        }

        self.prev_slew = slew;
        self.steps += 1;
        Ok(PlantStep {
            measured,
            true_output,
            effective_input: eff,
        })
    }
}

/// Static command distortion applied before the rate penalty: the badly
/// trained profile bends velocity commands by beta * u^3.
fn distort_static(profile: &PlantProfile, u: [f64; 4]) -> [f64; 4] {
    let mut out = u;
    if profile.cubic_gain > 0.0 {
        for ch in Channel::ALL {
            if ch.is_velocity() {
                let i = ch.index();
                out[i] += profile.cubic_gain * u[i] * u[i] * u[i];
            }
        }
    }
    out
}

/// Drives the plant with one excitation plan per channel and collects the
/// commanded inputs and measured outputs. Deterministic for a fixed
/// profile (including its seed) and fixed plans.
pub fn run_profile_experiment(
    profile: &PlantProfile,
    plans: &[ExcitationPlan; 4],
) -> Result<IoRecord, SysidError> {
    let dt = plans[0]
        .dt()
        .ok_or_else(|| SysidError::InvalidSignal("empty excitation plan".into()))?;
    let mut channels = Vec::with_capacity(4);
    for plan in plans {
        if plan.dt() != Some(dt) {
            return Err(SysidError::InvalidSignal(
                "all channels must share one sample interval".into(),
            ));
        }
        channels.push(plan.samples()?);
    }
    let n = channels[0].len();
    if channels.iter().any(|c| c.len() != n) {
        return Err(SysidError::LengthMismatch(
            "channel plans differ in duration".into(),
        ));
    }
    let u0 = [channels[0][0], channels[1][0], channels[2][0], channels[3][0]];
    let mut state = PlantState::new(profile, dt, u0)?;
    let mut u_cols: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
    let mut y_cols: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
    for k in 0..n {
        let u = [
            channels[0][k],
            channels[1][k],
            channels[2][k],
            channels[3][k],
        ];
        let step = state.step(profile, u, dt)?;
        for i in 0..4 {
            u_cols[i].push(u[i]);
            y_cols[i].push(step.measured[i]);
        }
    }
    IoRecord::from_columns(dt, &u_cols, &y_cols)
}

/// Anything that can run a four-channel excitation and hand back the
/// record; lets analysis protocols drive either the surrogate plant or a
/// stub.
pub trait ExperimentRunner {
    fn run(&mut self, plans: &[ExcitationPlan; 4]) -> Result<IoRecord, SysidError>;
}

impl ExperimentRunner for PlantProfile {
    fn run(&mut self, plans: &[ExcitationPlan; 4]) -> Result<IoRecord, SysidError> {
        run_profile_experiment(self, plans)
    }
}
