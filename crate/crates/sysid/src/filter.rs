//! Second-order Butterworth low-pass filtering, zero-phase and causal.

use crate::SysidError;
use std::f64::consts::{PI, SQRT_2};

/// Discrete biquad from the bilinear transform with frequency prewarping.
/// The coefficients satisfy b0+b1+b2 = 1+a1+a2, so DC gain is exactly 1.
#[derive(Clone, Copy, Debug)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn lowpass(dt: f64, fc_hz: f64) -> Result<Self, SysidError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(SysidError::InvalidConfig(format!(
                "sample interval must be positive, got {dt}"
            )));
        }
        let nyquist = 0.5 / dt;
        if !fc_hz.is_finite() || fc_hz <= 0.0 || fc_hz >= nyquist {
            return Err(SysidError::InvalidConfig(format!(
                "cutoff {fc_hz} Hz outside (0, {nyquist}) Hz"
            )));
        }
        let k = (PI * fc_hz * dt).tan();
        let d = 1.0 + SQRT_2 * k + k * k;
        let b0 = k * k / d;
        Ok(Biquad {
            b0,
            b1: 2.0 * b0,
            b2: b0,
            a1: 2.0 * (k * k - 1.0) / d,
            a2: (1.0 - SQRT_2 * k + k * k) / d,
        })
    }

    /// Transposed direct-form II state that holds the output at `x0` when
    /// the input stays at `x0`.
    fn rest_state(&self, x0: f64) -> (f64, f64) {
        ((1.0 - self.b0) * x0, (self.b2 - self.a2) * x0)
    }

    fn run(&self, x: &[f64]) -> Vec<f64> {
        let (mut z1, mut z2) = self.rest_state(x.first().copied().unwrap_or(0.0));
        x.iter()
            .map(|&xi| {
                let y = self.b0 * xi + z1;
                z1 = self.b1 * xi - self.a1 * y + z2;
                z2 = self.b2 * xi - self.a2 * y;
                y
            })
            .collect()
    }
}

/// Zero-phase low pass: the biquad is applied forward and backward over an
/// odd-reflection extension of the signal, so edges see no step transient
/// and the passband picks up no phase lag.
pub fn lowpass(x: &[f64], dt: f64, fc_hz: f64) -> Result<Vec<f64>, SysidError> {
    let biquad = Biquad::lowpass(dt, fc_hz)?;
    if x.len() < 3 {
        return Ok(x.to_vec());
    }
    let n = x.len();
    // Three filter time constants of padding keep the reflection seam out
    // of the retained samples.
    let pad = ((3.0 / (fc_hz * dt)).ceil() as usize).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    let fwd = biquad.run(&ext);
    let mut rev: Vec<f64> = fwd.into_iter().rev().collect();
    rev = biquad.run(&rev);
    rev.reverse();
    rev.truncate(pad + n);
    Ok(rev.split_off(pad))
}

/// One-directional low pass for use inside closed loops, where filtering
/// backward in time is impossible. Phase lag is the price.
#[derive(Clone, Debug)]
pub struct CausalLowpass {
    biquad: Biquad,
    z1: f64,
    z2: f64,
}

impl CausalLowpass {
    /// Starts at rest on `x0`: a constant stream at `x0` passes through
    /// unchanged from the first sample.
    pub fn new(dt: f64, fc_hz: f64, x0: f64) -> Result<Self, SysidError> {
        let biquad = Biquad::lowpass(dt, fc_hz)?;
        let (z1, z2) = biquad.rest_state(x0);
        Ok(CausalLowpass { biquad, z1, z2 })
    }

    pub fn step(&mut self, x: f64) -> f64 {
        let y = self.biquad.b0 * x + self.z1;
        self.z1 = self.biquad.b1 * x - self.biquad.a1 * y + self.z2;
        self.z2 = self.biquad.b2 * x - self.biquad.a2 * y;
        y
    }
}
