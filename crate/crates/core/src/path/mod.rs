//! Raster planning and closed-loop tracking of the plan through a network
//! channel.

mod follow;
mod log;
mod plan;

use thiserror::Error;

use crate::netchan::ChannelError;

pub use follow::{
    simulate_follow, ControllerParams, FollowOutcome, FollowSim, COMMAND_PAYLOAD_BYTES,
    DEFAULT_LOG_RESOLUTION,
};
pub use log::{Pose, TrajectoryLog, LOG_HEADER};
pub use plan::{lane_spacing, plan_raster, PlannedTrajectory, DEFAULT_NOMINAL_SPEED};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("surface {width} x {height} mm is too small for tool radius {tool_radius} mm")]
    SurfaceTooSmall {
        width: f64,
        height: f64,
        tool_radius: f64,
    },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid controller parameters: {0}")]
    InvalidController(String),
    #[error("sample {0} has a non-finite or negative-time field")]
    InvalidSample(usize),
    #[error("sample {0} does not advance in time")]
    NonIncreasingTime(usize),
    #[error("trajectory table: {0}")]
    Parse(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}
