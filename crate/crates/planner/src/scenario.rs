//! Navigation scenarios: cylindrical obstacles, capped-height regions and
//! the start/goal poses, plus the squared-separation measure the barrier
//! constraints are built on.

use crate::PlannerError;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

/// Axis-aligned region where the walking height must stay at or below
/// hmax (an overhead obstruction).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HeightRegion {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub hmax: f64,
}

impl HeightRegion {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.xmin && x <= self.xmax && y >= self.ymin && y <= self.ymax
    }

    /// Membership against the region grown by `margin` on every side.
    pub fn contains_expanded(&self, x: f64, y: f64, margin: f64) -> bool {
        x >= self.xmin - margin
            && x <= self.xmax + margin
            && y >= self.ymin - margin
            && y <= self.ymax + margin
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub yaw: f64,
}

fn default_safety_buffer() -> f64 {
    0.1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub robot_radius: f64,
    /// Extra clearance added to the robot radius inside every separation
    /// constraint.
    #[serde(default = "default_safety_buffer")]
    pub safety_buffer: f64,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub height_regions: Vec<HeightRegion>,
    pub start: Pose,
    pub goal: Pose,
}

/// Squared center distance minus the squared sum of radii: positive iff
/// the discs are separated, zero when touching.
pub fn obstacle_distance(x: f64, y: f64, obstacle: &Obstacle, robot_radius: f64) -> f64 {
    let dx = x - obstacle.x;
    let dy = y - obstacle.y;
    let rr = robot_radius + obstacle.r;
    dx * dx + dy * dy - rr * rr
}

/// Gradient of obstacle_distance with respect to the robot position.
pub fn obstacle_distance_gradient(x: f64, y: f64, obstacle: &Obstacle) -> (f64, f64) {
    (2.0 * (x - obstacle.x), 2.0 * (y - obstacle.y))
}

impl Scenario {
    /// Robot radius as the constraints see it.
    pub fn effective_radius(&self) -> f64 {
        self.robot_radius + self.safety_buffer
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.robot_radius > 0.0 && self.robot_radius.is_finite()) {
            return Err(PlannerError::Scenario(format!(
                "robot_radius must be positive, got {}",
                self.robot_radius
            )));
        }
        if !(self.safety_buffer >= 0.0 && self.safety_buffer.is_finite()) {
            return Err(PlannerError::Scenario(format!(
                "safety_buffer must be nonnegative, got {}",
                self.safety_buffer
            )));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.r > 0.0) || !o.x.is_finite() || !o.y.is_finite() {
                return Err(PlannerError::Scenario(format!(
                    "obstacle {i} has radius {} at ({}, {})",
                    o.r, o.x, o.y
                )));
            }
        }
        for (i, h) in self.height_regions.iter().enumerate() {
            if !(h.xmin < h.xmax && h.ymin < h.ymax) {
                return Err(PlannerError::Scenario(format!(
                    "height region {i} has an empty extent"
                )));
            }
            if !(h.hmax > 0.65 && h.hmax <= 1.0) {
                return Err(PlannerError::Scenario(format!(
                    "height region {i}: hmax {} outside (0.65, 1.0]",
                    h.hmax
                )));
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if obstacle_distance(self.goal.x, self.goal.y, o, self.effective_radius()) < 0.0 {
                return Err(PlannerError::Scenario(format!(
                    "goal ({}, {}) lies inside the inflated obstacle {i}",
                    self.goal.x, self.goal.y
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, PlannerError> {
        let scenario: Scenario =
            serde_json::from_str(text).map_err(|e| PlannerError::Scenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base() -> Scenario {
        Scenario {
            robot_radius: 0.4,
            safety_buffer: 0.1,
            obstacles: vec![Obstacle {
                x: 3.0,
                y: 4.0,
                r: 0.6,
            }],
            height_regions: vec![],
            start: Pose::default(),
            goal: Pose {
                x: 6.0,
                y: 0.0,
                yaw: 0.0,
            },
        }
    }

    #[test]
    fn separation_of_well_spaced_discs() {
        let o = Obstacle {
            x: 3.0,
            y: 4.0,
            r: 0.6,
        };
        assert_relative_eq!(obstacle_distance(0.0, 0.0, &o, 0.4), 24.0);
    }

    #[test]
    fn touching_discs_measure_zero() {
        let o = Obstacle {
            x: 2.0,
            y: 0.0,
            r: 0.5,
        };
        assert_relative_eq!(obstacle_distance(1.0, 0.0, &o, 0.5), 0.0);
    }

    #[test]
    fn gradient_is_twice_the_center_offset() {
        let o = Obstacle {
            x: 3.0,
            y: 4.0,
            r: 0.6,
        };
        let (gx, gy) = obstacle_distance_gradient(0.0, 0.0, &o);
        assert_relative_eq!(gx, -6.0);
        assert_relative_eq!(gy, -8.0);
    }

    #[test]
    fn json_round_trip_preserves_the_scenario() {
        let s = base();
        let back = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(back.obstacles.len(), 1);
        assert_relative_eq!(back.obstacles[0].r, 0.6);
        assert_relative_eq!(back.safety_buffer, 0.1);
    }

    #[test]
    fn missing_buffer_defaults_to_ten_centimeters() {
        let text = r#"{"robot_radius":0.4,"obstacles":[],"height_regions":[],
            "start":{"x":0,"y":0},"goal":{"x":1,"y":0}}"#;
        let s = Scenario::from_json(text).unwrap();
        assert_relative_eq!(s.safety_buffer, 0.1);
        assert_relative_eq!(s.start.yaw, 0.0);
    }

    #[test]
    fn goals_inside_inflated_obstacles_are_rejected() {
        let mut s = base();
        s.goal = Pose {
            x: 3.2,
            y: 4.0,
            yaw: 0.0,
        };
        assert!(matches!(s.validate(), Err(PlannerError::Scenario(_))));
    }

    #[test]
    fn out_of_range_height_caps_are_rejected() {
        let mut s = base();
        s.height_regions.push(HeightRegion {
            xmin: 0.0,
            xmax: 1.0,
            ymin: 0.0,
            ymax: 1.0,
            hmax: 0.5,
        });
        assert!(matches!(s.validate(), Err(PlannerError::Scenario(_))));
    }

    #[test]
    fn expanded_membership_grows_the_rectangle() {
        let h = HeightRegion {
            xmin: 0.0,
            xmax: 1.0,
            ymin: 0.0,
            ymax: 1.0,
            hmax: 0.9,
        };
        assert!(!h.contains(1.2, 0.5));
        assert!(h.contains_expanded(1.2, 0.5, 0.3));
        assert!(!h.contains_expanded(1.4, 0.5, 0.3));
    }
}
