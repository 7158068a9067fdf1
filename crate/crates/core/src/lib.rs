//! Simulation of a networked sanding cell: network conditions degrade robot
//! control, robot control degrades the sanded surface, and a network
//! resource manager adapts the QoS granted to the robot from utility feedback.

pub mod experiment;
pub mod geom;
pub mod kpi;
pub mod netchan;
pub mod nrm;
pub mod path;
pub mod quality;
pub mod stats;
pub mod surface;
pub mod utility;

pub use geom::Vec2;
pub use kpi::{extract_kpis, Phase, RobotKpis};
pub use netchan::{Channel, NetworkConditions};
pub use path::{
    plan_raster, simulate_follow, ControllerParams, FollowOutcome, PlannedTrajectory, TrajectoryLog,
};
pub use quality::{emd_exact, score_product, ProductQuality};
pub use surface::{deviation_map, replay_trajectory, DeviationMap, Grid, GridSpec, Heatmap};
pub use utility::{emos_cust, emos_robot, Emos, ExogenousFactors, KpiRequirement, UtilitySpec};
