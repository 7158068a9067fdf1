//! Fixtures shared by the benchmarks in `benches/`.

use cpps::experiment::{plan_for, ExperimentConfig};
use cpps::path::{simulate_follow, FollowOutcome, PlannedTrajectory};
use cpps::quality::{block_sum, build_transport, TransportInstance};
use cpps::surface::{default_window, deviation_map, replay_trajectory, DeviationMap, GridSpec};
use cpps::NetworkConditions;

pub const TOOL_RADIUS_MM: f64 = 12.5;

pub fn config() -> ExperimentConfig {
    ExperimentConfig::default()
}

pub fn plan() -> PlannedTrajectory {
    plan_for(&config(), TOOL_RADIUS_MM).expect("default plan")
}

pub fn grid() -> GridSpec {
    let s = config().surface;
    GridSpec::covering(s.width_mm, s.height_mm, s.cell_size_mm).expect("default grid")
}

pub fn outcome(delay_ms: f64) -> FollowOutcome {
    let cfg = config();
    simulate_follow(
        &plan(),
        cfg.controller,
        NetworkConditions::with_delay_ms(delay_ms),
        600.0,
    )
    .expect("simulation")
}

pub fn deviation(delay_ms: f64) -> DeviationMap {
    let g = grid();
    let heat = replay_trajectory(&outcome(delay_ms).log, TOOL_RADIUS_MM, 1.0, g).expect("replay");
    deviation_map(&heat, default_window(&g, TOOL_RADIUS_MM)).expect("deviation")
}

/// Transport instance of a delayed run coarsened by `factor`.
pub fn instance(delay_ms: f64, factor: usize) -> TransportInstance {
    let dev = deviation(delay_ms);
    let coarse = DeviationMap {
        grid: block_sum(&dev.grid, factor),
        ..dev
    };
    build_transport(&coarse)
}
