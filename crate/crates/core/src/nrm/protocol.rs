//! Line-delimited JSON wire format. Each message is one JSON object on one
//! line, discriminated by its `type` field. Information-element names of the
//! end-to-end QoS management request are carried as field names.

use serde::{Deserialize, Serialize};

use super::NrmError;
use crate::kpi::RobotKpis;
use crate::netchan::NetworkConditions;
use crate::utility::UtilitySpec;

/// Longest accepted line, terminator excluded.
pub const MAX_LINE_BYTES: usize = 64 * 1024;

/// End-to-end QoS requirements of the application.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosRequirements {
    pub latency_ms: f64,
    pub jitter_ms: f64,
    pub loss: f64,
    pub bandwidth_kbps: f64,
}

impl QosRequirements {
    pub fn validate(&self) -> Result<(), NrmError> {
        for (name, v) in [
            ("latency_ms", self.latency_ms),
            ("jitter_ms", self.jitter_ms),
            ("loss", self.loss),
            ("bandwidth_kbps", self.bandwidth_kbps),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(NrmError::Invalid(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        if self.loss > 1.0 {
            return Err(NrmError::Invalid("loss must be a probability".into()));
        }
        if self.jitter_ms > self.latency_ms {
            return Err(NrmError::Invalid("jitter_ms must not exceed latency_ms".into()));
        }
        if self.bandwidth_kbps == 0.0 {
            return Err(NrmError::Invalid("bandwidth_kbps must be positive".into()));
        }
        Ok(())
    }

    /// Link conditions that just meet the requirements.
    pub fn to_conditions(&self, seed: u64) -> NetworkConditions {
        NetworkConditions {
            delay_ms: self.latency_ms,
            jitter_ms: self.jitter_ms,
            loss: self.loss,
            bandwidth_kbps: self.bandwidth_kbps,
            seed,
        }
    }
}

/// End-to-end QoS management request (direct mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosManagementRequest {
    pub list_of_val_ues: Vec<String>,
    pub ip_address: String,
    pub end_to_end_qos_requirements: QosRequirements,
}

impl QosManagementRequest {
    pub fn validate(&self) -> Result<(), NrmError> {
        if self.list_of_val_ues.is_empty() || self.list_of_val_ues.iter().any(|u| u.trim().is_empty()) {
            return Err(NrmError::Invalid(
                "list_of_val_ues must hold non-empty identifiers".into(),
            ));
        }
        self.ip_address.parse::<std::net::IpAddr>().map_err(|_| {
            NrmError::Invalid(format!("ip_address {:?} is not an IP address", self.ip_address))
        })?;
        self.end_to_end_qos_requirements.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimpleFeedback {
    pub emos: f64,
    pub target_emos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetailedFeedback {
    pub kpis: RobotKpis,
    pub utility_spec: UtilitySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomerFeedback {
    pub emos: f64,
}

/// Robot operator to network operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    QosRequest(QosManagementRequest),
    SimpleFeedback(SimpleFeedback),
    DetailedFeedback(DetailedFeedback),
    /// Reserved; the server answers with an error.
    CustomerFeedback(CustomerFeedback),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Direct,
    Simple,
    Detailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosGrant {
    pub session_id: u64,
    pub mode: Mode,
    pub end_to_end_qos_requirements: QosRequirements,
    /// Calibration-table eMOS at the granted latency, when known.
    #[serde(default)]
    pub predicted_emos: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosDeny {
    pub session_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorReply {
    pub message: String,
}

/// Network operator to robot operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    QosGrant(QosGrant),
    QosDeny(QosDeny),
    Error(ErrorReply),
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        Self::Error(ErrorReply {
            message: message.into(),
        })
    }

    pub fn is_error(&self) -> bool {
        matches!(self, Self::Error(_))
    }
}

/// Serializes a message as one line, terminator included.
pub fn encode<T: Serialize>(msg: &T) -> String {
    let mut line = serde_json::to_string(msg).expect("messages serialize");
    line.push('\n');
    line
}

/// Parses one line (with or without its terminator).
pub fn decode<'a, T: Deserialize<'a>>(line: &'a [u8]) -> Result<T, NrmError> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    if line.len() > MAX_LINE_BYTES {
        return Err(NrmError::Malformed(format!(
            "line longer than {MAX_LINE_BYTES} bytes"
        )));
    }
    let text = std::str::from_utf8(line).map_err(|_| NrmError::Malformed("line is not UTF-8".into()))?;
    serde_json::from_str(text).map_err(|e| NrmError::Malformed(e.to_string()))
}
