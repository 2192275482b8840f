//! Strictly proper continuous-time transfer functions.

use crate::poly;
use crate::LtiError;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Rational model `num(s) / den(s)` with real coefficients in descending
/// powers of `s`.
///
/// Invariants held by construction: the denominator has degree >= 1 and
/// leading coefficient exactly 1, and deg(num) < deg(den). A numerator of
/// all zeros is stored as `[0.0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self, LtiError> {
        if num.iter().chain(den.iter()).any(|x| !x.is_finite()) {
            return Err(LtiError::NonFiniteCoefficient);
        }
        if den.is_empty() || den.iter().all(|&d| d == 0.0) {
            return Err(LtiError::ZeroDenominator);
        }
        let den = poly::trim_leading_zeros(&den);
        let num = if num.is_empty() || num.iter().all(|&b| b == 0.0) {
            vec![0.0]
        } else {
            poly::trim_leading_zeros(&num)
        };
        if den.len() < 2 || num.len() >= den.len() {
            return Err(LtiError::NotStrictlyProper {
                num_degree: num.len() - 1,
                den_degree: den.len() - 1,
            });
        }
        let lead = den[0];
        Ok(Self {
            num: num.iter().map(|&b| b / lead).collect(),
            den: den.iter().map(|&a| a / lead).collect(),
        })
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    /// Denominator degree.
    pub fn n_poles(&self) -> usize {
        self.den.len() - 1
    }

    /// Numerator degree (0 for a constant or identically zero numerator).
    pub fn n_zeros(&self) -> usize {
        self.num.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.num == [0.0]
    }

    /// Gain at s = 0. Infinite if the model has a pole at the origin.
    pub fn dc_gain(&self) -> f64 {
        self.num[self.num.len() - 1] / self.den[self.den.len() - 1]
    }

    pub fn evaluate(&self, s: Complex64) -> Complex64 {
        poly::polyval(&self.num, s) / poly::polyval(&self.den, s)
    }
}

#[derive(Serialize, Deserialize)]
struct TfRepr {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl Serialize for TransferFunction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TfRepr {
            num: self.num.clone(),
            den: self.den.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TransferFunction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = TfRepr::deserialize(deserializer)?;
        TransferFunction::new(repr.num, repr.den).map_err(serde::de::Error::custom)
    }
}
