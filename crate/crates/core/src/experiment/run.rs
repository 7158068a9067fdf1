use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sweep::point_config;
use super::{ExperimentConfig, ExperimentError};
use crate::kpi::{extract_kpis, Phase, RobotKpis};
use crate::netchan::NetworkConditions;
use crate::path::{plan_raster, FollowOutcome, FollowSim, PlannedTrajectory};
use crate::quality::{auto_downsample, score_product, ProductQuality};
use crate::surface::{default_window, deviation_map, replay_trajectory, DeviationMap, GridSpec, Heatmap};
use crate::utility::{emos_cust, emos_robot};

/// Everything computed for one (tool, conditions) point.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub plan: PlannedTrajectory,
    pub outcome: FollowOutcome,
    pub heatmap: Heatmap,
    pub deviation: DeviationMap,
    pub kpis: RobotKpis,
    pub quality: ProductQuality,
    pub emos: EmosRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmosRecord {
    pub robot: f64,
    pub customer: f64,
    pub target: f64,
    pub complete: bool,
}

pub fn plan_for(cfg: &ExperimentConfig, tool_radius: f64) -> Result<PlannedTrajectory, ExperimentError> {
    let s = &cfg.surface;
    let m = s.edge_overrun_tool_radii * tool_radius;
    let mut plan = plan_raster(
        s.width_mm + 2.0 * m,
        s.height_mm + 2.0 * m,
        tool_radius,
        s.overlap,
    )?
    .with_speed(s.nominal_speed_mm_s)?
    .with_z_ref(s.z_ref_mm);
    for w in &mut plan.waypoints {
        *w = *w - crate::geom::Vec2::new(m, m);
    }
    Ok(plan)
}

/// Simulates one run and scores it. Deterministic in its arguments.
pub fn simulate_point(
    cfg: &ExperimentConfig,
    tool_radius: f64,
    cond: NetworkConditions,
) -> Result<RunResult, ExperimentError> {
    let plan = plan_for(cfg, tool_radius)?;
    let outcome = FollowSim::new(&plan, cfg.controller, cond)
        .resolution(cfg.simulation.log_resolution_mm)
        .symmetric_delay(cfg.simulation.symmetric_delay)
        .run(cfg.simulation.duration_limit_s)?;
    let kpis = extract_kpis(&plan, &outcome, Phase::Sanding)?;

    let grid = GridSpec::covering(
        cfg.surface.width_mm,
        cfg.surface.height_mm,
        cfg.surface.cell_size_mm,
    )?;
    let heatmap = replay_trajectory(&outcome.log, tool_radius, cfg.quality.mass_per_sample, grid)?;
    let window = cfg
        .quality
        .window_cells
        .unwrap_or_else(|| default_window(&grid, tool_radius));
    let deviation = deviation_map(&heatmap, window)?;
    let factor = cfg
        .quality
        .downsample
        .unwrap_or_else(|| auto_downsample(&grid, cfg.quality.max_side_cells));
    let quality = score_product(&deviation, factor)?.with_provenance(tool_radius, cond);

    let robot = emos_robot(&kpis, &cfg.utility.sanding)?.value();
    let customer = emos_cust(&quality, &cfg.utility.exogenous, &cfg.utility.customer)?.value();
    let emos = EmosRecord {
        robot,
        customer,
        target: cfg.utility.sanding.target_emos,
        complete: outcome.complete,
    };
    Ok(RunResult {
        plan,
        outcome,
        heatmap,
        deviation,
        kpis,
        quality,
        emos,
    })
}

/// Files written by [`run_once`].
pub const RUN_FILES: [&str; 11] = [
    "config.toml",
    "plan.csv",
    "trajectory.csv",
    "timeline.csv",
    "heatmap.txt",
    "heatmap.pgm",
    "deviation.txt",
    "deviation.pgm",
    "kpis.json",
    "quality.csv",
    "emos.json",
];

/// Runs the configured point and writes its artifacts into
/// `output_dir/run-<hash>/`. Returns the directory and the result.
pub fn run_once(cfg: &ExperimentConfig) -> Result<(PathBuf, RunResult), ExperimentError> {
    cfg.validate()?;
    let cond = cfg.run_conditions();
    let pcfg = point_config(cfg, cfg.tool_radius_mm, cond);
    let result = simulate_point(&pcfg, cfg.tool_radius_mm, cond)?;
    let dir = cfg.output_dir.join(format!("run-{}", pcfg.content_hash()));
    write_artifacts(&dir, &pcfg, &result)?;
    Ok((dir, result))
}

fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), ExperimentError> {
    let path = dir.join(name);
    let f = fs::File::create(&path).map_err(|e| ExperimentError::io(&path, e))?;
    let mut w = std::io::BufWriter::new(f);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| ExperimentError::io(&path, e))
}

fn json_line<T: Serialize>(w: &mut dyn Write, value: &T) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)
}

pub(super) fn write_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    r: &RunResult,
) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    write_file(dir, "config.toml", |w| {
        w.write_all(cfg.to_toml_string().as_bytes())
    })?;
    write_file(dir, "plan.csv", |w| w.write_all(r.plan.write_csv().as_bytes()))?;
    write_file(dir, "trajectory.csv", |w| r.outcome.log.write_csv(w))?;
    write_file(dir, "timeline.csv", |w| r.outcome.timeline.write_csv(w))?;
    write_file(dir, "heatmap.txt", |w| r.heatmap.grid().write_text(w))?;
    write_file(dir, "heatmap.pgm", |w| r.heatmap.grid().write_pgm(w))?;
    write_file(dir, "deviation.txt", |w| r.deviation.grid.write_text(w))?;
    write_file(dir, "deviation.pgm", |w| r.deviation.grid.write_pgm(w))?;
    write_file(dir, "kpis.json", |w| json_line(w, &r.kpis))?;
    write_file(dir, "quality.csv", |w| {
        writeln!(w, "{}", crate::quality::QUALITY_HEADER)?;
        writeln!(w, "{}", r.quality.table_row())
    })?;
    write_file(dir, "emos.json", |w| json_line(w, &r.emos))?;
    Ok(())
}
