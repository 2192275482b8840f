//! Excitation signal generation: random steps, random ramps and linear
//! chirps, plus back-to-back composition of segments.

use crate::{Channel, SysidError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub enum SignalKind {
    /// Piecewise-constant levels drawn uniformly from the amplitude range,
    /// each held for a dwell drawn uniformly from `hold_range` seconds.
    RandomSteps { hold_range: (f64, f64) },
    /// Piecewise-linear interpolation between random levels with random
    /// dwells, same distributions as `RandomSteps`.
    RandomRamps { hold_range: (f64, f64) },
    /// offset + amp * sin(2π (f0 t + (f1 - f0) t² / (2 T))): instantaneous
    /// frequency sweeps linearly from f0 to f1 over the duration.
    Chirp { f0_hz: f64, f1_hz: f64 },
    /// Constant hold at the midpoint of the amplitude range.
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub kind: SignalKind,
    /// Seconds; the generated series covers [0, duration] inclusive.
    pub duration: f64,
    /// Sample period, seconds.
    pub dt: f64,
    /// (low, high) bounds of the signal.
    pub range: (f64, f64),
    pub seed: u64,
}

impl SignalSpec {
    pub fn steps(range: (f64, f64), duration: f64, dt: f64, seed: u64) -> Self {
        Self {
            kind: SignalKind::RandomSteps {
                hold_range: (5.0, 20.0),
            },
            duration,
            dt,
            range,
            seed,
        }
    }

    pub fn ramps(range: (f64, f64), duration: f64, dt: f64, seed: u64) -> Self {
        Self {
            kind: SignalKind::RandomRamps {
                hold_range: (5.0, 20.0),
            },
            duration,
            dt,
            range,
            seed,
        }
    }

    pub fn chirp(range: (f64, f64), f0_hz: f64, f1_hz: f64, duration: f64, dt: f64) -> Self {
        Self {
            kind: SignalKind::Chirp { f0_hz, f1_hz },
            duration,
            dt,
            range,
            seed: 0,
        }
    }

    pub fn constant(value: f64, duration: f64, dt: f64) -> Self {
        Self {
            kind: SignalKind::Constant,
            duration,
            dt,
            range: (value, value),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<(), SysidError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SysidError::InvalidSignal(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(SysidError::InvalidSignal(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if self.range.0 > self.range.1 {
            return Err(SysidError::InvalidSignal(format!(
                "amplitude range is inverted: ({}, {})",
                self.range.0, self.range.1
            )));
        }
        match self.kind {
            SignalKind::RandomSteps { hold_range } | SignalKind::RandomRamps { hold_range } => {
                if !(hold_range.0 > 0.0) || hold_range.0 > hold_range.1 {
                    return Err(SysidError::InvalidSignal(format!(
                        "hold range must be positive and ordered: ({}, {})",
                        hold_range.0, hold_range.1
                    )));
                }
            }
            SignalKind::Chirp { f0_hz, f1_hz } => {
                if f0_hz < 0.0 || f1_hz < f0_hz {
                    return Err(SysidError::InvalidSignal(format!(
                        "chirp frequencies must satisfy 0 <= f0 <= f1, got ({f0_hz}, {f1_hz})"
                    )));
                }
                if f1_hz >= 0.5 / self.dt {
                    return Err(SysidError::InvalidSignal(format!(
                        "chirp end frequency {f1_hz} Hz is at or above Nyquist {}",
                        0.5 / self.dt
                    )));
                }
            }
            SignalKind::Constant => {}
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }
}

/// Samples the spec on t = i*dt for i = 0..=round(duration/dt).
pub fn generate(spec: &SignalSpec) -> Result<Vec<f64>, SysidError> {
    spec.validate()?;
    let n = spec.n_samples();
    let (lo, hi) = spec.range;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        }
    }
    let draw_level = |rng: &mut ChaCha8Rng| uniform(rng, lo, hi);
    let out = match spec.kind {
        SignalKind::Constant => vec![(lo + hi) * 0.5; n],
        SignalKind::RandomSteps { hold_range } => {
            let mut out = Vec::with_capacity(n);
            let mut level = draw_level(&mut rng);
            let mut next_switch = uniform(&mut rng, hold_range.0, hold_range.1);
            for i in 0..n {
                let t = i as f64 * spec.dt;
                while t >= next_switch {
                    level = draw_level(&mut rng);
                    next_switch += uniform(&mut rng, hold_range.0, hold_range.1);
                }
                out.push(level);
            }
            out
        }
        SignalKind::RandomRamps { hold_range } => {
            let mut out = Vec::with_capacity(n);
            let mut t_start = 0.0;
            let mut from = draw_level(&mut rng);
            let mut to = draw_level(&mut rng);
            let mut dwell = uniform(&mut rng, hold_range.0, hold_range.1);
            for i in 0..n {
                let t = i as f64 * spec.dt;
                while t >= t_start + dwell {
                    t_start += dwell;
                    from = to;
                    to = draw_level(&mut rng);
                    dwell = uniform(&mut rng, hold_range.0, hold_range.1);
                }
                out.push(from + (to - from) * (t - t_start) / dwell);
            }
            out
        }
        SignalKind::Chirp { f0_hz, f1_hz } => {
            let amp = (hi - lo) * 0.5;
            let offset = (hi + lo) * 0.5;
            let total = spec.duration;
            (0..n)
                .map(|i| {
                    let t = i as f64 * spec.dt;
                    let phase = 2.0 * PI * (f0_hz * t + (f1_hz - f0_hz) * t * t / (2.0 * total));
                    offset + amp * phase.sin()
                })
                .collect()
        }
    };
    Ok(out)
}

/// Chirp phase law bookkeeping: where the sweep crosses a given frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpLaw {
    pub f0_hz: f64,
    pub f1_hz: f64,
    pub duration: f64,
}

impl ChirpLaw {
    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        self.f0_hz + (self.f1_hz - self.f0_hz) * t / self.duration
    }

    /// Time at which the instantaneous frequency reaches `f_hz`.
    pub fn crossing_time(&self, f_hz: f64) -> Result<f64, SysidError> {
        if f_hz <= self.f0_hz || f_hz >= self.f1_hz {
            return Err(SysidError::InvalidConfig(format!(
                "frequency {f_hz} Hz is outside the swept band ({}, {})",
                self.f0_hz, self.f1_hz
            )));
        }
        Ok((f_hz - self.f0_hz) * self.duration / (self.f1_hz - self.f0_hz))
    }
}

/// Segments played back to back on one channel. All segments must share dt;
/// the combined series has round(total/dt)+1 samples (interior segment
/// boundaries belong to the following segment).
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationPlan {
    pub segments: Vec<SignalSpec>,
}

impl ExcitationPlan {
    pub fn single(spec: SignalSpec) -> Self {
        Self {
            segments: vec![spec],
        }
    }

    pub fn dt(&self) -> Option<f64> {
        self.segments.first().map(|s| s.dt)
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn samples(&self) -> Result<Vec<f64>, SysidError> {
        let dt = self
            .dt()
            .ok_or_else(|| SysidError::InvalidSignal("plan has no segments".into()))?;
        if self.segments.iter().any(|s| s.dt != dt) {
            return Err(SysidError::InvalidSignal(
                "all segments of a plan must share the same dt".into(),
            ));
        }
        let mut out = Vec::new();
        let last = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            let frac = seg.duration / dt;
            if (frac - frac.round()).abs() > 1e-6 {
                return Err(SysidError::InvalidSignal(format!(
                    "segment duration {} is not a multiple of dt {}",
                    seg.duration, dt
                )));
            }
            let mut s = generate(seg)?;
            if i != last {
                s.pop();
            }
            out.extend_from_slice(&s);
        }
        Ok(out)
    }
}

/// The standard per-channel excitation layout: 200 s of random steps,
/// 200 s of random ramps, then a 100 s chirp sweeping 0 to 1 Hz, all over
/// the channel's default amplitude range.
pub fn layout_plan(channel: Channel, dt: f64, seed: u64) -> ExcitationPlan {
    let range = channel.default_range();
    let mix = |k: u64| {
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(channel.index() as u64)
            .wrapping_mul(0x2545_F491_4F6C_DD1D)
            .wrapping_add(k)
    };
    ExcitationPlan {
        segments: vec![
            SignalSpec {
                seed: mix(1),
                ..SignalSpec::steps(range, 200.0, dt, 0)
            },
            SignalSpec {
                seed: mix(2),
                ..SignalSpec::ramps(range, 200.0, dt, 0)
            },
            SignalSpec::chirp(range, 0.0, 1.0, 100.0, dt),
        ],
    }
}

/// Plan holding the channel's resting command for the whole duration.
pub fn resting_plan(channel: Channel, duration: f64, dt: f64) -> ExcitationPlan {
    ExcitationPlan::single(SignalSpec::constant(
        channel.resting_command(),
        duration,
        dt,
    ))
}
