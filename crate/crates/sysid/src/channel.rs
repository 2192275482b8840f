//! The four commanded degrees of freedom of the walking controller.

use serde::{Deserialize, Serialize};

/// Command/measurement channel ordering used by every 4-channel record,
/// plant profile and stacked model in the workspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Sagittal (forward) velocity, m/s.
    Vx,
    /// Lateral velocity, m/s.
    Vy,
    /// Walking height, m.
    Qz,
    /// Yaw turn rate, rad/s.
    Wyaw,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Vx, Channel::Vy, Channel::Qz, Channel::Wyaw];

    pub fn index(self) -> usize {
        match self {
            Channel::Vx => 0,
            Channel::Vy => 1,
            Channel::Qz => 2,
            Channel::Wyaw => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Channel::Vx => "vx",
            Channel::Vy => "vy",
            Channel::Qz => "z",
            Channel::Wyaw => "wyaw",
        }
    }

    pub fn from_label(s: &str) -> Option<Channel> {
        Channel::ALL.into_iter().find(|c| c.label() == s)
    }

    /// Height is a position-like channel; the slew-rate nonlinearity and
    /// cross-channel leakage of the surrogate never touch it.
    pub fn is_velocity(self) -> bool {
        !matches!(self, Channel::Qz)
    }

    /// Default excitation range (low, high) in the channel's units.
    pub fn default_range(self) -> (f64, f64) {
        match self {
            Channel::Vx => (-0.5, 1.0),
            Channel::Vy => (-0.3, 0.3),
            Channel::Qz => (0.8, 1.0),
            Channel::Wyaw => (-0.5, 0.5),
        }
    }

    pub fn span(self) -> f64 {
        let (lo, hi) = self.default_range();
        hi - lo
    }

    /// Command held on this channel while another one is being excited.
    pub fn resting_command(self) -> f64 {
        match self {
            Channel::Qz => 0.98,
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for ch in Channel::ALL {
            assert_eq!(Channel::from_label(ch.label()), Some(ch));
        }
        assert_eq!(Channel::from_label("vz"), None);
    }

    #[test]
    fn indices_are_the_record_column_order() {
        assert_eq!(
            Channel::ALL.map(|c| c.index()),
            [0, 1, 2, 3]
        );
    }

    #[test]
    fn height_is_not_a_velocity() {
        assert!(!Channel::Qz.is_velocity());
        assert!(Channel::Vx.is_velocity());
        assert_eq!(Channel::Qz.resting_command(), 0.98);
    }
}
