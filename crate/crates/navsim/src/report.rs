//! Batch execution and summary statistics over navigation episodes.

use crate::episode::{run_episode, EpisodeConfig, EpisodeLog, Outcome};
use crate::NavError;
use serde::{Deserialize, Serialize};

/// Nearest-rank percentile of an unsorted sample; 0 for an empty one.
fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub outcome: Outcome,
    pub completion_time_s: f64,
    pub min_separation: Option<f64>,
    pub ticks: usize,
    pub failed_ticks: usize,
    pub mean_solve_time_s: f64,
    pub p95_solve_time_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchAggregate {
    pub episodes: usize,
    pub reached: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub solver_failures: usize,
    /// Smallest separation over every episode; None when no episode had
    /// obstacles.
    pub min_separation: Option<f64>,
    /// Mean completion time over the episodes that reached the goal.
    pub mean_completion_time_s: Option<f64>,
    pub mean_solve_time_s: f64,
    pub p95_solve_time_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchSummary {
    pub episodes: Vec<EpisodeSummary>,
    pub aggregate: BatchAggregate,
}

fn summarize(log: &EpisodeLog) -> EpisodeSummary {
    let times: Vec<f64> = log.ticks.iter().map(|t| t.solve_time_s).collect();
    let mean = if times.is_empty() {
        0.0
    } else {
        times.iter().sum::<f64>() / times.len() as f64
    };
    EpisodeSummary {
        seed: log.config.seed,
        outcome: log.outcome,
        completion_time_s: log.completion_time_s,
        min_separation: log.min_separation,
        ticks: log.ticks.len(),
        failed_ticks: log.ticks.iter().filter(|t| !t.accepted).count(),
        mean_solve_time_s: mean,
        p95_solve_time_s: percentile(&times, 0.95),
    }
}

/// Per-episode and aggregate statistics for one or more episode logs.
pub fn batch_report(logs: &[EpisodeLog]) -> Result<BatchSummary, NavError> {
    if logs.is_empty() {
        return Err(NavError::Config(
            "a batch report needs at least one episode log".into(),
        ));
    }
    let episodes: Vec<EpisodeSummary> = logs.iter().map(summarize).collect();
    let count = |o: Outcome| episodes.iter().filter(|e| e.outcome == o).count();
    let all_times: Vec<f64> = logs
        .iter()
        .flat_map(|l| l.ticks.iter().map(|t| t.solve_time_s))
        .collect();
    let mean_solve = if all_times.is_empty() {
        0.0
    } else {
        all_times.iter().sum::<f64>() / all_times.len() as f64
    };
    let reached_times: Vec<f64> = episodes
        .iter()
        .filter(|e| e.outcome == Outcome::Reached)
        .map(|e| e.completion_time_s)
        .collect();
    let aggregate = BatchAggregate {
        episodes: episodes.len(),
        reached: count(Outcome::Reached),
        collisions: count(Outcome::Collision),
        timeouts: count(Outcome::Timeout),
        solver_failures: count(Outcome::SolverFailure),
        min_separation: episodes
            .iter()
            .filter_map(|e| e.min_separation)
            .min_by(f64::total_cmp),
        mean_completion_time_s: if reached_times.is_empty() {
            None
        } else {
            Some(reached_times.iter().sum::<f64>() / reached_times.len() as f64)
        },
        mean_solve_time_s: mean_solve,
        p95_solve_time_s: percentile(&all_times, 0.95),
    };
    Ok(BatchSummary {
        episodes,
        aggregate,
    })
}

/// Runs every episode, one thread each, and returns the logs in config
/// order. Episodes share nothing mutable, so the results match running
/// them sequentially.
pub fn run_batch(configs: &[EpisodeConfig]) -> Result<Vec<EpisodeLog>, NavError> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| scope.spawn(move || run_episode(cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| match h.join() {
                Ok(result) => result,
                Err(_) => Err(NavError::Config("an episode thread panicked".into())),
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_uses_the_nearest_rank() {
        let xs = [5.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&xs, 0.95), 5.0);
        assert_eq!(percentile(&xs, 0.5), 3.0);
        assert_eq!(percentile(&xs, 0.01), 1.0);
        let twenty: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&twenty, 0.95), 19.0);
    }

    #[test]
    fn empty_batches_are_rejected() {
        assert!(batch_report(&[]).is_err());
    }
}
