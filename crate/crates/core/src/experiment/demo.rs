use std::fs;
use std::net::ToSocketAddrs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{simulate_point, sweep_rows, ExperimentConfig, ExperimentError, SweepConfig};
use crate::kpi::RobotKpis;
use crate::nrm::{
    AimdParams, CalibrationTable, ClientMessage, DetailedFeedback, NrmClient, NrmError, NrmServer,
    PolicyCaps, QosManagementRequest, QosRequirements, ServerContext, ServerMessage, SimpleFeedback,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoMode {
    Simple,
    Detailed,
}

impl std::str::FromStr for DemoMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simple" => Ok(Self::Simple),
            "detailed" => Ok(Self::Detailed),
            other => Err(format!("unknown demo mode {other:?}")),
        }
    }
}

impl std::fmt::Display for DemoMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Simple => "simple",
            Self::Detailed => "detailed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoRound {
    /// Feedback messages sent before this grant.
    pub round: usize,
    pub grant: QosRequirements,
    pub kpis: RobotKpis,
    pub emos_robot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOutcome {
    pub mode: DemoMode,
    pub rounds: Vec<DemoRound>,
    /// Feedback rounds needed to reach the target; `None` if the round limit
    /// was hit first.
    pub converged_after: Option<usize>,
    /// One JSON object per line: every message sent and received, and every
    /// simulated run.
    pub transcript: String,
}

pub fn policy_caps(cfg: &ExperimentConfig) -> PolicyCaps {
    let n = &cfg.nrm;
    PolicyCaps {
        min_latency_ms: n.min_latency_ms,
        max_latency_ms: n.max_latency_ms,
        max_jitter_ms: n.max_jitter_ms,
        max_loss: n.max_loss,
        max_bandwidth_kbps: n.max_bandwidth_kbps,
    }
}

pub fn default_requirements(cfg: &ExperimentConfig) -> QosRequirements {
    QosRequirements {
        latency_ms: cfg.nrm.initial_latency_ms,
        jitter_ms: 0.0,
        loss: 0.0,
        bandwidth_kbps: cfg.nrm.default_bandwidth_kbps,
    }
}

pub fn server_context(cfg: &ExperimentConfig, table: Option<CalibrationTable>) -> ServerContext {
    ServerContext {
        caps: policy_caps(cfg),
        aimd: AimdParams::default(),
        table,
        defaults: default_requirements(cfg),
    }
}

/// Sweeps the calibration tool over the configured delays and tabulates
/// the KPIs.
pub fn calibration_table(cfg: &ExperimentConfig) -> Result<CalibrationTable, ExperimentError> {
    let r = cfg.nrm.calibration_tool_radius_mm;
    let cal = ExperimentConfig {
        sweep: SweepConfig {
            tool_radii_mm: vec![r],
            jitter_ms: 0.0,
            loss: 0.0,
            ..cfg.sweep.clone()
        },
        ..cfg.clone()
    };
    let rows = sweep_rows(&cal)?;
    Ok(CalibrationTable::from_sweep(&rows, r)?)
}

struct Transcript(String);

impl Transcript {
    fn push(&mut self, value: serde_json::Value) {
        self.0.push_str(&value.to_string());
        self.0.push('\n');
    }
}

fn exchange(
    client: &mut NrmClient,
    log: &mut Transcript,
    msg: ClientMessage,
) -> Result<QosRequirements, ExperimentError> {
    log.push(json!({ "direction": "sent", "message": msg }));
    let reply = client.request(&msg)?;
    log.push(json!({ "direction": "received", "message": reply }));
    match reply {
        ServerMessage::QosGrant(g) => Ok(g.end_to_end_qos_requirements),
        ServerMessage::QosDeny(d) => Err(NrmError::Infeasible(d.reason).into()),
        ServerMessage::Error(e) => Err(NrmError::Invalid(e.message).into()),
    }
}

/// Closed loop against the server at `addr`: request the initial budget,
/// then repeatedly simulate under the grant, score it, and report back until
/// the robot eMOS reaches the target or `nrm.max_rounds` feedback rounds
/// have been spent.
pub fn demo_loop(
    cfg: &ExperimentConfig,
    mode: DemoMode,
    addr: impl ToSocketAddrs,
) -> Result<DemoOutcome, ExperimentError> {
    cfg.validate()?;
    let spec = &cfg.utility.sanding;
    let mut client = NrmClient::connect(addr)?;
    let mut log = Transcript(String::new());
    let request = ClientMessage::QosRequest(QosManagementRequest {
        list_of_val_ues: vec![cfg.nrm.val_ue.clone()],
        ip_address: cfg.nrm.ue_ip_address.clone(),
        end_to_end_qos_requirements: default_requirements(cfg),
    });
    let mut grant = exchange(&mut client, &mut log, request)?;
    let mut rounds = Vec::new();
    let mut converged_after = None;
    for round in 0..=cfg.nrm.max_rounds {
        let cond = grant.to_conditions(cfg.seed);
        let run = simulate_point(cfg, cfg.tool_radius_mm, cond)?;
        let emos = run.emos.robot;
        log.push(json!({
            "event": "run",
            "round": round,
            "latency_ms": grant.latency_ms,
            "emos_robot": emos,
            "target_emos": spec.target_emos,
            "kpis": run.kpis,
        }));
        rounds.push(DemoRound {
            round,
            grant,
            kpis: run.kpis,
            emos_robot: emos,
        });
        if emos >= spec.target_emos {
            converged_after = Some(round);
            break;
        }
        if round == cfg.nrm.max_rounds {
            break;
        }
        let feedback = match mode {
            DemoMode::Simple => ClientMessage::SimpleFeedback(SimpleFeedback {
                emos,
                target_emos: spec.target_emos,
            }),
            DemoMode::Detailed => ClientMessage::DetailedFeedback(DetailedFeedback {
                kpis: run.kpis,
                utility_spec: spec.clone(),
            }),
        };
        grant = exchange(&mut client, &mut log, feedback)?;
    }
    log.push(json!({
        "event": "done",
        "mode": mode,
        "converged": converged_after.is_some(),
        "feedback_rounds": converged_after.unwrap_or(cfg.nrm.max_rounds),
    }));
    Ok(DemoOutcome {
        mode,
        rounds,
        converged_after,
        transcript: log.0,
    })
}

/// Runs [`demo_loop`] against a private server on a loopback port.
pub fn demo_local(
    cfg: &ExperimentConfig,
    mode: DemoMode,
    table: Option<CalibrationTable>,
) -> Result<DemoOutcome, ExperimentError> {
    let server = NrmServer::spawn("127.0.0.1:0", server_context(cfg, table))?;
    let out = demo_loop(cfg, mode, server.local_addr());
    server.shutdown();
    out
}

/// Writes `transcript.jsonl` into `output_dir/demo-<mode>-<hash>/`.
pub fn write_transcript(cfg: &ExperimentConfig, outcome: &DemoOutcome) -> Result<PathBuf, ExperimentError> {
    let dir = cfg
        .output_dir
        .join(format!("demo-{}-{}", outcome.mode, cfg.content_hash()));
    fs::create_dir_all(&dir).map_err(|e| ExperimentError::io(&dir, e))?;
    let path = dir.join("transcript.jsonl");
    fs::write(&path, &outcome.transcript).map_err(|e| ExperimentError::io(&path, e))?;
    Ok(path)
}
