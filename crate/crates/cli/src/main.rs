use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cpps::experiment::{
    calibration_table, demo_local, demo_loop, plan_for, read_rows_file, run_once, server_context, sweep,
    write_transcript, DemoMode, ExperimentConfig,
};
use cpps::nrm::{CalibrationTable, NrmServer};
use cpps::quality::{auto_downsample, score_product, DEFAULT_MAX_SIDE};
use cpps::surface::{deviation_map, DeviationMap, Grid, Heatmap};

#[derive(Parser, Debug)]
#[command(
    name = "cpps",
    version,
    about = "Networked sanding-cell simulator and QoS resource manager"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment config (TOML). Built-in defaults are used when absent.
    #[arg(long, short, env = "CPPS_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `tool_radius_mm`.
    #[arg(long)]
    tool_radius_mm: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct LinkArgs {
    #[arg(long)]
    delay_ms: Option<f64>,
    #[arg(long)]
    jitter_ms: Option<f64>,
    #[arg(long)]
    loss: Option<f64>,
    #[arg(long)]
    bandwidth_kbps: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the effective configuration.
    Config {
        #[command(flatten)]
        common: Common,
    },
    /// Write the raster plan for the configured tool as `x,y` rows.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Destination file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one run and write its artifacts.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        link: LinkArgs,
    },
    /// Run every (tool radius, delay, seed) point and write the results table.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated delays, overrides `sweep.delays_ms`.
        #[arg(long, value_delimiter = ',')]
        delays_ms: Option<Vec<f64>>,
        /// Comma-separated tool radii, overrides `sweep.tool_radii_mm`.
        #[arg(long, value_delimiter = ',')]
        tool_radii_mm: Option<Vec<f64>>,
        /// Comma-separated seeds, overrides `sweep.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Worker threads, overrides `sweep.workers`.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Product quality of a map given as a whitespace-separated grid (top
    /// row first). A deviation map is scored by its raw transport work; a
    /// heatmap (see --heatmap-window) by work per unit of removed mass.
    Emd {
        mapfile: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        cell_size_mm: f64,
        /// Treat the input as a heatmap and derive its deviation map with
        /// this (odd) window first.
        #[arg(long)]
        heatmap_window: Option<usize>,
        /// Block size for coarsening; derived from the grid size when absent.
        #[arg(long)]
        downsample: Option<usize>,
    },
    /// Serve the resource manager until interrupted.
    ServeNrm {
        #[command(flatten)]
        common: Common,
        /// Overrides `nrm.listen_addr`.
        #[arg(long)]
        listen: Option<String>,
        /// Sweep results table to calibrate from; a calibration sweep is run
        /// when absent.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Closed loop: grant, simulate, score, feed back, until the target eMOS
    /// is met.
    DemoLoop {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "detailed")]
        mode: DemoMode,
        /// Address of a running resource manager; a private one is started
        /// when absent.
        #[arg(long)]
        server: Option<String>,
        /// Sweep results table for the private server.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Overrides `nrm.max_rounds`.
        #[arg(long)]
        max_rounds: Option<usize>,
        /// Overrides `nrm.initial_latency_ms`.
        #[arg(long)]
        initial_latency_ms: Option<f64>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(r) = common.tool_radius_mm {
        cfg.tool_radius_mm = r;
    }
    Ok(cfg)
}

fn apply_link(cfg: &mut ExperimentConfig, link: &LinkArgs) {
    let n = &mut cfg.network;
    n.delay_ms = link.delay_ms.unwrap_or(n.delay_ms);
    n.jitter_ms = link.jitter_ms.unwrap_or(n.jitter_ms);
    n.loss = link.loss.unwrap_or(n.loss);
    n.bandwidth_kbps = link.bandwidth_kbps.unwrap_or(n.bandwidth_kbps);
}

fn load_table(cfg: &ExperimentConfig, path: Option<&Path>) -> Result<CalibrationTable> {
    match path {
        Some(p) => {
            let rows = read_rows_file(p)?;
            Ok(
                CalibrationTable::from_sweep(&rows, cfg.nrm.calibration_tool_radius_mm)
                    .with_context(|| format!("calibrating from {}", p.display()))?,
            )
        }
        None => Ok(calibration_table(cfg)?),
    }
}

fn read_grid(path: &Path, cell_size: f64) -> Result<Grid> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Grid::read_text(std::io::BufReader::new(f), cell_size)?)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Config { common } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            write!(out, "{}", cfg.to_toml_string())?;
        }
        Command::Plan { common, out: dest } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let plan = plan_for(&cfg, cfg.tool_radius_mm)?;
            match dest {
                Some(p) => std::fs::write(&p, plan.write_csv())
                    .with_context(|| format!("writing {}", p.display()))?,
                None => write!(out, "{}", plan.write_csv())?,
            }
        }
        Command::Run { common, link } => {
            let mut cfg = load_config(&common)?;
            apply_link(&mut cfg, &link);
            let (dir, r) = run_once(&cfg)?;
            writeln!(out, "run directory: {}", dir.display())?;
            writeln!(out, "emd: {}", r.quality.emd)?;
            writeln!(out, "traj_err_max_mm: {}", r.kpis.traj_err_max)?;
            writeln!(out, "vel_max_mm_s: {}", r.kpis.vel_max)?;
            writeln!(out, "emos_robot: {}", r.emos.robot)?;
            writeln!(out, "emos_customer: {}", r.emos.customer)?;
            if !r.emos.complete {
                writeln!(
                    out,
                    "warning: duration limit reached before the plan was completed"
                )?;
            }
        }
        Command::Sweep {
            common,
            delays_ms,
            tool_radii_mm,
            seeds,
            workers,
        } => {
            let mut cfg = load_config(&common)?;
            let sw = &mut cfg.sweep;
            sw.delays_ms = delays_ms.unwrap_or(std::mem::take(&mut sw.delays_ms));
            sw.tool_radii_mm = tool_radii_mm.unwrap_or(std::mem::take(&mut sw.tool_radii_mm));
            sw.seeds = seeds.unwrap_or(std::mem::take(&mut sw.seeds));
            sw.workers = workers.unwrap_or(sw.workers);
            let res = sweep(&cfg)?;
            writeln!(out, "results: {}", res.results_path.display())?;
            writeln!(out, "rows: {}", res.rows.len())?;
        }
        Command::Emd {
            mapfile,
            cell_size_mm,
            heatmap_window,
            downsample,
        } => {
            let grid = read_grid(&mapfile, cell_size_mm)?;
            let dev = match heatmap_window {
                Some(w) => deviation_map(&Heatmap(grid), w)?,
                None => DeviationMap::from_grid(grid, 0),
            };
            let factor = downsample.unwrap_or_else(|| auto_downsample(dev.spec(), DEFAULT_MAX_SIDE));
            let q = score_product(&dev, factor)?;
            writeln!(out, "emd: {}", q.emd)?;
            writeln!(out, "work: {}", q.work)?;
            writeln!(out, "grid: {}x{}", q.grid_dims.0, q.grid_dims.1)?;
        }
        Command::ServeNrm {
            common,
            listen,
            table,
        } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let table = load_table(&cfg, table.as_deref())?;
            let addr = listen.unwrap_or_else(|| cfg.nrm.listen_addr.clone());
            let server = NrmServer::spawn(addr.as_str(), server_context(&cfg, Some(table)))?;
            writeln!(out, "listening on {}", server.local_addr())?;
            out.flush()?;
            server.join();
        }
        Command::DemoLoop {
            common,
            mode,
            server,
            table,
            max_rounds,
            initial_latency_ms,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.nrm.max_rounds = max_rounds.unwrap_or(cfg.nrm.max_rounds);
            cfg.nrm.initial_latency_ms = initial_latency_ms.unwrap_or(cfg.nrm.initial_latency_ms);
            cfg.validate()?;
            let outcome = match server {
                Some(addr) => demo_loop(&cfg, mode, addr.as_str())?,
                None => {
                    let table = match mode {
                        DemoMode::Detailed => Some(load_table(&cfg, table.as_deref())?),
                        DemoMode::Simple => None,
                    };
                    demo_local(&cfg, mode, table)?
                }
            };
            let path = write_transcript(&cfg, &outcome)?;
            writeln!(out, "transcript: {}", path.display())?;
            for r in &outcome.rounds {
                writeln!(
                    out,
                    "round {}: latency {} ms, emos_robot {:.3}",
                    r.round, r.grant.latency_ms, r.emos_robot
                )?;
            }
            match outcome.converged_after {
                Some(n) => writeln!(out, "converged after {n} feedback round(s)")?,
                None => {
                    writeln!(out, "not converged within {} rounds", cfg.nrm.max_rounds)?;
                    return Ok(ExitCode::from(2));
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
