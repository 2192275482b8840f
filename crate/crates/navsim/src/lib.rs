//! Closed-loop navigation simulation: a global grid planner feeds
//! line-of-sight waypoints to the receding-horizon planner, whose commands
//! are low-pass filtered and executed on the surrogate walking plant.
//!
//! Episodes are deterministic given their seed. Collision and arrival are
//! judged on the simulated ground-truth pose, which integrates the plant's
//! measured velocities; the planner only ever sees the filtered state.

mod episode;
mod grid;
mod report;

pub use episode::{
    episode_csv, run_episode, EpisodeConfig, EpisodeLog, Outcome, TickRecord,
};
pub use grid::{global_path, line_of_sight, DEFAULT_GRID_RESOLUTION};
pub use report::{batch_report, run_batch, BatchAggregate, BatchSummary, EpisodeSummary};

use linnav_lti::LtiError;
use linnav_planner::{HeightRegion, Obstacle, PlannerError, Pose, Scenario};
use linnav_sysid::SysidError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NavError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("global planning: {0}")]
    Planning(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Sysid(#[from] SysidError),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// A compact course exercising everything at once: two staggered pillars
/// force an S-weave and an overhead obstruction between them forces the
/// walker to duck while threading the gap.
pub fn demo_scenario() -> Scenario {
    Scenario {
        robot_radius: 0.2,
        safety_buffer: 0.1,
        obstacles: vec![
            Obstacle {
                x: 1.5,
                y: 0.3,
                r: 0.3,
            },
            Obstacle {
                x: 3.0,
                y: -0.35,
                r: 0.3,
            },
        ],
        height_regions: vec![HeightRegion {
            xmin: 2.1,
            xmax: 2.9,
            ymin: -1.5,
            ymax: 1.5,
            hmax: 0.8,
        }],
        start: Pose {
            x: 0.0,
            y: 0.0,
            yaw: 0.0,
        },
        goal: Pose {
            x: 4.5,
            y: 0.0,
            yaw: 0.0,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_scenario_is_valid_and_routable() {
        let s = demo_scenario();
        s.validate().unwrap();
        let path = global_path(&s, DEFAULT_GRID_RESOLUTION).unwrap();
        assert!(path.len() >= 3, "the pillars force a detour, got {path:?}");
    }
}
