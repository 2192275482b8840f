use linnav_navsim::{demo_scenario, run_episode, EpisodeConfig};
use linnav_sysid::ProfileKind;

fn main() {
    let mut cfg = EpisodeConfig::new(demo_scenario(), ProfileKind::Cnn);
    cfg.seed = 2;
    let log = run_episode(&cfg).expect("episode");
    for t in &log.ticks {
        println!(
            "tick t={:5.1} status {:?} iters {:2} time {:.3}s",
            t.t, t.status, t.sqp_iterations, t.solve_time_s
        );
    }
}
