use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{simulate_point, RunResult};
use super::{ExperimentConfig, ExperimentError, NrmConfig, SweepConfig};
use crate::kpi::{Phase, RobotKpis};
use crate::netchan::NetworkConditions;
use crate::stats::spearman;

/// One row of the sweep results table. The leading columns are the product
/// quality row; the rest are the robot KPIs and scores of the same run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tool_radius: f64,
    pub delay_ms: f64,
    pub jitter_ms: f64,
    pub loss: f64,
    pub emd: f64,
    pub seed: u64,
    pub work: f64,
    pub traj_err_mean: f64,
    pub traj_err_max: f64,
    pub vel_mean: f64,
    pub vel_max: f64,
    pub vel_min: f64,
    pub vel_std: f64,
    pub z_dev_mean: f64,
    pub z_dev_max: f64,
    pub orient_err_rms: f64,
    pub emos_robot: f64,
    pub emos_cust: f64,
    pub complete: bool,
}

impl SweepRow {
    pub fn from_result(r: &RunResult, seed: u64) -> Self {
        let c = r.quality.conditions;
        let k = r.kpis;
        Self {
            tool_radius: r.quality.tool_radius,
            delay_ms: c.delay_ms,
            jitter_ms: c.jitter_ms,
            loss: c.loss,
            emd: r.quality.emd,
            seed,
            work: r.quality.work,
            traj_err_mean: k.traj_err_mean,
            traj_err_max: k.traj_err_max,
            vel_mean: k.vel_mean,
            vel_max: k.vel_max,
            vel_min: k.vel_min,
            vel_std: k.vel_std,
            z_dev_mean: k.z_dev_mean,
            z_dev_max: k.z_dev_max,
            orient_err_rms: k.orient_err_rms,
            emos_robot: r.emos.robot,
            emos_cust: r.emos.customer,
            complete: r.emos.complete,
        }
    }

    pub fn kpis(&self) -> RobotKpis {
        RobotKpis {
            traj_err_mean: self.traj_err_mean,
            traj_err_max: self.traj_err_max,
            vel_mean: self.vel_mean,
            vel_max: self.vel_max,
            vel_min: self.vel_min,
            vel_std: self.vel_std,
            z_dev_mean: self.z_dev_mean,
            z_dev_max: self.z_dev_max,
            orient_err_rms: self.orient_err_rms,
            phase: Phase::Sanding,
        }
    }
}

pub fn write_rows<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)
            .map_err(|e| ExperimentError::Table(e.to_string()))?;
    }
    w.flush().map_err(|e| ExperimentError::Table(e.to_string()))
}

pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>, ExperimentError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| ExperimentError::Table(e.to_string())))
        .collect()
}

pub fn read_rows_file(path: &Path) -> Result<Vec<SweepRow>, ExperimentError> {
    let f = fs::File::open(path).map_err(|e| ExperimentError::io(path, e))?;
    read_rows(std::io::BufReader::new(f))
}

/// Effective configuration of one sweep point. Sweep and resource-manager
/// settings do not affect a run and are reset, so equal points share a hash
/// (and a run directory) across sweeps.
pub fn point_config(cfg: &ExperimentConfig, tool_radius: f64, cond: NetworkConditions) -> ExperimentConfig {
    ExperimentConfig {
        seed: cond.seed,
        tool_radius_mm: tool_radius,
        network: cond,
        sweep: SweepConfig::default(),
        nrm: NrmConfig::default(),
        ..cfg.clone()
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub results_path: PathBuf,
    /// Points loaded from earlier runs instead of simulated.
    pub reused: usize,
}

const ROW_FILE: &str = "row.csv";

fn sweep_points(cfg: &ExperimentConfig) -> Vec<(f64, NetworkConditions)> {
    let sw = &cfg.sweep;
    let mut points = Vec::new();
    for &r in &sw.tool_radii_mm {
        for &d in &sw.delays_ms {
            for &seed in &sw.seeds {
                points.push((
                    r,
                    NetworkConditions {
                        delay_ms: d,
                        jitter_ms: sw.jitter_ms,
                        loss: sw.loss,
                        seed,
                        ..cfg.network
                    },
                ));
            }
        }
    }
    points
}

fn run_point(
    cfg: &ExperimentConfig,
    r: f64,
    cond: NetworkConditions,
    write_runs: bool,
) -> Result<(SweepRow, bool), ExperimentError> {
    let pcfg = point_config(cfg, r, cond);
    let dir = cfg.output_dir.join(format!("run-{}", pcfg.content_hash()));
    let row_path = dir.join(ROW_FILE);
    if write_runs {
        if let Ok(mut rows) = read_rows_file(&row_path) {
            if rows.len() == 1 {
                return Ok((rows.remove(0), true));
            }
        }
    }
    let result = simulate_point(&pcfg, r, cond)?;
    let row = SweepRow::from_result(&result, cond.seed);
    if write_runs {
        super::run::write_artifacts(&dir, &pcfg, &result)?;
        let mut buf = Vec::new();
        write_rows(&mut buf, std::slice::from_ref(&row))?;
        fs::write(&row_path, buf).map_err(|e| ExperimentError::io(&row_path, e))?;
    }
    Ok((row, false))
}

/// Runs every (tool radius, delay, seed) point without touching the disk.
/// Rows come back in tool, delay, seed order.
pub fn sweep_rows(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, ExperimentError> {
    cfg.validate()?;
    let points = sweep_points(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep.workers)
        .build()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    pool.install(|| {
        points
            .par_iter()
            .map(|&(r, c)| run_point(cfg, r, c, false).map(|(row, _)| row))
            .collect()
    })
}

/// Runs the sweep, writing per-point artifacts and
/// `output_dir/sweep-<hash>/results.csv`. Points whose run directory already
/// holds a result row are reused. If any point fails, the completed rows are
/// written to `results.partial.csv` and the first error is returned.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepOutput, ExperimentError> {
    cfg.validate()?;
    let points = sweep_points(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep.workers)
        .build()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let results: Vec<Result<(SweepRow, bool), ExperimentError>> = pool.install(|| {
        points
            .par_iter()
            .map(|&(r, c)| run_point(cfg, r, c, true))
            .collect()
    });

    let dir = cfg.output_dir.join(format!("sweep-{}", cfg.content_hash()));
    fs::create_dir_all(&dir).map_err(|e| ExperimentError::io(&dir, e))?;
    let mut rows = Vec::with_capacity(results.len());
    let mut reused = 0;
    let mut first_error = None;
    for res in results {
        match res {
            Ok((row, was_reused)) => {
                reused += usize::from(was_reused);
                rows.push(row);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(cause) = first_error {
        let path = dir.join("results.partial.csv");
        write_table(&path, &rows)?;
        return Err(ExperimentError::PartialSweep {
            path,
            completed: rows.len(),
            cause: Box::new(cause),
        });
    }
    let results_path = dir.join("results.csv");
    write_table(&results_path, &rows)?;
    let corr_path = dir.join("correlations.csv");
    let mut buf = Vec::new();
    write_correlations(&mut buf, &rows).map_err(|e| ExperimentError::io(&corr_path, e))?;
    fs::write(&corr_path, buf).map_err(|e| ExperimentError::io(&corr_path, e))?;
    Ok(SweepOutput {
        rows,
        results_path,
        reused,
    })
}

fn write_table(path: &Path, rows: &[SweepRow]) -> Result<(), ExperimentError> {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows)?;
    fs::write(path, buf).map_err(|e| ExperimentError::io(path, e))
}

/// Rows of one tool radius, in table order.
pub fn rows_for_tool(rows: &[SweepRow], tool_radius: f64) -> Vec<&SweepRow> {
    rows.iter().filter(|r| r.tool_radius == tool_radius).collect()
}

/// Spearman correlation of each KPI (and the delay) with the EMD, per tool
/// radius: `tool_radius,quantity,spearman_vs_emd`. Undefined correlations
/// (a constant column) are written as `nan`.
pub fn write_correlations<W: Write>(mut out: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(out, "tool_radius,quantity,spearman_vs_emd")?;
    let mut radii: Vec<f64> = rows.iter().map(|r| r.tool_radius).collect();
    radii.dedup();
    for r in radii {
        let sel = rows_for_tool(rows, r);
        let emd: Vec<f64> = sel.iter().map(|x| x.emd).collect();
        let delay: Vec<f64> = sel.iter().map(|x| x.delay_ms).collect();
        let rho = |xs: &[f64]| spearman(xs, &emd).unwrap_or(f64::NAN);
        writeln!(out, "{r},delay_ms,{}", rho(&delay))?;
        for name in RobotKpis::NAMES {
            let xs: Vec<f64> = sel.iter().map(|x| x.kpis().get(name).unwrap()).collect();
            writeln!(out, "{r},{name},{}", rho(&xs))?;
        }
    }
    Ok(())
}
