//! Network resource management: a network-operator server granting
//! end-to-end QoS to a robot-operator client, driven by direct requests,
//! single-score feedback, or detailed KPI feedback.

pub mod protocol;
mod server;
mod session;
mod table;

use thiserror::Error;

pub use protocol::{
    ClientMessage, DetailedFeedback, Mode, QosGrant, QosManagementRequest, QosRequirements, ServerMessage,
    SimpleFeedback,
};
pub use server::{serve_connection, NrmClient, NrmServer};
pub use session::{
    adapt_simple, AimdParams, Feedback, FeedbackEntry, PolicyCaps, ServerContext, Session, SessionState,
};
pub use table::{translate_g_nw, CalibrationTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NrmError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("invalid message: {0}")]
    Invalid(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("calibration table: {0}")]
    Table(String),
    #[error(transparent)]
    Utility(#[from] crate::utility::UtilityError),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for NrmError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
