use serde::{Deserialize, Serialize};

use super::protocol::{
    decode, ClientMessage, DetailedFeedback, Mode, QosDeny, QosGrant, QosManagementRequest, QosRequirements,
    ServerMessage, SimpleFeedback,
};
use super::{translate_g_nw, CalibrationTable, NrmError};
use crate::kpi::RobotKpis;
use crate::utility::{emos_robot, Emos};

/// What the network operator is able and willing to grant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyCaps {
    /// Lowest latency the network can guarantee.
    pub min_latency_ms: f64,
    /// Loosest latency budget ever granted.
    pub max_latency_ms: f64,
    pub max_jitter_ms: f64,
    pub max_loss: f64,
    pub max_bandwidth_kbps: f64,
}

impl Default for PolicyCaps {
    fn default() -> Self {
        Self {
            min_latency_ms: 1.0,
            max_latency_ms: 200.0,
            max_jitter_ms: 50.0,
            max_loss: 0.1,
            max_bandwidth_kbps: 10_000.0,
        }
    }
}

impl PolicyCaps {
    pub fn validate(&self) -> Result<(), NrmError> {
        let ok = self.min_latency_ms > 0.0
            && self.min_latency_ms <= self.max_latency_ms
            && self.max_latency_ms.is_finite()
            && self.max_jitter_ms >= 0.0
            && (0.0..=1.0).contains(&self.max_loss)
            && self.max_bandwidth_kbps > 0.0
            && self.max_bandwidth_kbps.is_finite();
        if ok {
            Ok(())
        } else {
            Err(NrmError::Invalid("inconsistent policy caps".into()))
        }
    }

    pub fn admits(&self, q: &QosRequirements) -> bool {
        (self.min_latency_ms..=self.max_latency_ms).contains(&q.latency_ms)
            && q.jitter_ms <= self.max_jitter_ms
            && q.loss <= self.max_loss
            && q.bandwidth_kbps <= self.max_bandwidth_kbps
    }

    /// Tightens a request into the granted range, or says why it cannot be
    /// served. Tighter-than-requested latency, jitter and loss are always
    /// acceptable to the requester; more bandwidth than the cap is not.
    pub fn fit(&self, q: &QosRequirements) -> Result<QosRequirements, String> {
        if q.latency_ms < self.min_latency_ms {
            return Err(format!(
                "latency {} ms is below the {} ms the network can guarantee",
                q.latency_ms, self.min_latency_ms
            ));
        }
        if q.bandwidth_kbps > self.max_bandwidth_kbps {
            return Err(format!(
                "bandwidth {} kbps exceeds the {} kbps cap",
                q.bandwidth_kbps, self.max_bandwidth_kbps
            ));
        }
        let latency_ms = q.latency_ms.min(self.max_latency_ms);
        Ok(QosRequirements {
            latency_ms,
            jitter_ms: q.jitter_ms.min(self.max_jitter_ms).min(latency_ms),
            loss: q.loss.min(self.max_loss),
            bandwidth_kbps: q.bandwidth_kbps,
        })
    }

    fn latency_floor(&self) -> f64 {
        self.min_latency_ms.max(1.0)
    }
}

/// Additive increase, multiplicative decrease of the latency budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AimdParams {
    pub decrease_factor: f64,
    pub increase_ms: f64,
    /// Reports at or above `target + headroom` needed in a row before an
    /// increase.
    pub patience: u32,
    pub headroom: f64,
}

impl Default for AimdParams {
    fn default() -> Self {
        Self {
            decrease_factor: 0.5,
            increase_ms: 5.0,
            patience: 3,
            headroom: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Emos(f64),
    Kpis(RobotKpis),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    /// Logical timestamp: position in the session's message sequence.
    pub seq: u64,
    pub feedback: Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: u64,
    pub mode: Option<Mode>,
    pub granted: Option<QosRequirements>,
    pub history: Vec<FeedbackEntry>,
    /// Consecutive simple-mode reports with headroom above the target.
    pub good_streak: u32,
    seq: u64,
}

impl SessionState {
    pub fn new(session_id: u64) -> Self {
        Self {
            session_id,
            mode: None,
            granted: None,
            history: Vec::new(),
            good_streak: 0,
            seq: 0,
        }
    }
}

/// Simple-mode adaptation of the granted latency budget. Returns the new
/// budget; the caller commits it.
pub fn adapt_simple(
    state: &SessionState,
    current: &QosRequirements,
    emos: Emos,
    target: f64,
    caps: &PolicyCaps,
    aimd: &AimdParams,
) -> (QosRequirements, u32) {
    let mut next = *current;
    if emos.value() < target {
        next.latency_ms = (current.latency_ms * aimd.decrease_factor).max(caps.latency_floor());
        next.jitter_ms = next.jitter_ms.min(next.latency_ms);
        return (next, 0);
    }
    if emos.value() >= target + aimd.headroom {
        let streak = state.good_streak + 1;
        if streak >= aimd.patience {
            next.latency_ms = (current.latency_ms + aimd.increase_ms).min(caps.max_latency_ms);
            return (next, 0);
        }
        return (next, streak);
    }
    (next, 0)
}

/// Read-only server context shared by all sessions.
#[derive(Debug, Clone)]
pub struct ServerContext {
    pub caps: PolicyCaps,
    pub aimd: AimdParams,
    /// Needed for detailed feedback only.
    pub table: Option<CalibrationTable>,
    /// Loss and bandwidth used for translated grants.
    pub defaults: QosRequirements,
}

/// One client connection's state machine. Every input line produces exactly
/// one reply; a line that is rejected leaves the state untouched.
#[derive(Debug, Clone)]
pub struct Session<'a> {
    ctx: &'a ServerContext,
    state: SessionState,
}

impl<'a> Session<'a> {
    pub fn new(ctx: &'a ServerContext, session_id: u64) -> Self {
        Self {
            ctx,
            state: SessionState::new(session_id),
        }
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn handle_line(&mut self, line: &[u8]) -> ServerMessage {
        match decode::<ClientMessage>(line) {
            Ok(msg) => self.handle(msg),
            Err(e) => ServerMessage::error(e.to_string()),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> ServerMessage {
        let mut next = self.state.clone();
        next.seq += 1;
        let reply = match msg {
            ClientMessage::QosRequest(r) => self.direct(&mut next, &r),
            ClientMessage::SimpleFeedback(f) => self.simple(&mut next, &f),
            ClientMessage::DetailedFeedback(f) => self.detailed(&mut next, &f),
            ClientMessage::CustomerFeedback(_) => Err(NrmError::Unsupported(
                "customer feedback is reserved and not served".into(),
            )),
        };
        match reply {
            Ok(reply) => {
                if let ServerMessage::QosGrant(g) = &reply {
                    debug_assert!(self.ctx.caps.admits(&g.end_to_end_qos_requirements));
                    next.granted = Some(g.end_to_end_qos_requirements);
                }
                if !matches!(reply, ServerMessage::QosDeny(_)) {
                    self.state = next;
                }
                reply
            }
            Err(e) => ServerMessage::error(e.to_string()),
        }
    }

    fn enter_mode(&self, next: &mut SessionState, mode: Mode) -> Result<(), NrmError> {
        match next.mode {
            Some(m) if m != mode && m != Mode::Direct => Err(NrmError::Invalid(format!(
                "session is in {m:?} mode; {mode:?} feedback not accepted"
            ))),
            _ => {
                next.mode = Some(mode);
                Ok(())
            }
        }
    }

    fn grant(&self, mode: Mode, q: QosRequirements, predicted_emos: Option<f64>) -> ServerMessage {
        ServerMessage::QosGrant(QosGrant {
            session_id: self.state.session_id,
            mode,
            end_to_end_qos_requirements: q,
            predicted_emos,
        })
    }

    fn deny(&self, reason: String) -> ServerMessage {
        ServerMessage::QosDeny(QosDeny {
            session_id: self.state.session_id,
            reason,
        })
    }

    fn direct(&self, next: &mut SessionState, r: &QosManagementRequest) -> Result<ServerMessage, NrmError> {
        r.validate()?;
        if next.mode.is_none() {
            next.mode = Some(Mode::Direct);
        }
        let mode = next.mode.unwrap_or(Mode::Direct);
        Ok(match self.ctx.caps.fit(&r.end_to_end_qos_requirements) {
            Ok(q) => self.grant(mode, q, None),
            Err(reason) => self.deny(reason),
        })
    }

    fn simple(&self, next: &mut SessionState, f: &SimpleFeedback) -> Result<ServerMessage, NrmError> {
        let emos =
            Emos::new(f.emos).ok_or_else(|| NrmError::Invalid(format!("emos {} outside [1, 5]", f.emos)))?;
        if Emos::new(f.target_emos).is_none() {
            return Err(NrmError::Invalid(format!(
                "target_emos {} outside [1, 5]",
                f.target_emos
            )));
        }
        let current = next
            .granted
            .ok_or_else(|| NrmError::Invalid("no grant to adapt; send a qos_request first".into()))?;
        self.enter_mode(next, Mode::Simple)?;
        let (q, streak) = adapt_simple(
            next,
            &current,
            emos,
            f.target_emos,
            &self.ctx.caps,
            &self.ctx.aimd,
        );
        next.good_streak = streak;
        next.history.push(FeedbackEntry {
            seq: next.seq,
            feedback: Feedback::Emos(f.emos),
        });
        Ok(self.grant(Mode::Simple, q, None))
    }

    fn detailed(&self, next: &mut SessionState, f: &DetailedFeedback) -> Result<ServerMessage, NrmError> {
        let table = self
            .ctx
            .table
            .as_ref()
            .ok_or_else(|| NrmError::Unsupported("no calibration table loaded".into()))?;
        if !f.kpis.is_consistent() {
            return Err(NrmError::Invalid("inconsistent KPI record".into()));
        }
        let observed = emos_robot(&f.kpis, &f.utility_spec)?;
        self.enter_mode(next, Mode::Detailed)?;
        let translated = match translate_g_nw(&f.utility_spec, table, &self.ctx.defaults) {
            Ok(q) => q,
            Err(NrmError::Infeasible(reason)) => return Ok(self.deny(reason)),
            Err(e) => return Err(e),
        };
        let mut q = translated;
        if let Some(current) = next.granted {
            // The table promised more than the process delivered: it is
            // inaccurate here, so tighten instead of trusting it again.
            if observed.value() < f.utility_spec.target_emos && q.latency_ms >= current.latency_ms {
                q.latency_ms =
                    (current.latency_ms * self.ctx.aimd.decrease_factor).max(self.ctx.caps.latency_floor());
            }
        }
        let q = match self.ctx.caps.fit(&q) {
            Ok(q) => q,
            Err(reason) => return Ok(self.deny(reason)),
        };
        let predicted = table.predict_emos(&f.utility_spec, q.latency_ms)?;
        next.history.push(FeedbackEntry {
            seq: next.seq,
            feedback: Feedback::Kpis(f.kpis),
        });
        Ok(self.grant(Mode::Detailed, q, Some(predicted)))
    }
}
