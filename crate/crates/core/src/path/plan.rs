use serde::{Deserialize, Serialize};

use super::PathError;
use crate::geom::Vec2;

pub const DEFAULT_NOMINAL_SPEED: f64 = 100.0;

/// Planned tool path: a polyline traversed at `nominal_speed`, with the tool
/// held at constant height `z_ref`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrajectory {
    pub waypoints: Vec<Vec2>,
    pub z_ref: f64,
    pub nominal_speed: f64,
    pub tool_radius: f64,
}

impl PlannedTrajectory {
    pub fn new(
        waypoints: Vec<Vec2>,
        z_ref: f64,
        nominal_speed: f64,
        tool_radius: f64,
    ) -> Result<Self, PathError> {
        let plan = Self {
            waypoints,
            z_ref,
            nominal_speed,
            tool_radius,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), PathError> {
        if self.waypoints.len() < 2 {
            return Err(PathError::InvalidPlan("fewer than two waypoints".into()));
        }
        if self.waypoints.iter().any(|w| !w.is_finite()) || !self.z_ref.is_finite() {
            return Err(PathError::InvalidPlan("non-finite coordinate".into()));
        }
        if self.waypoints.windows(2).any(|w| w[0] == w[1]) {
            return Err(PathError::InvalidPlan("repeated consecutive waypoint".into()));
        }
        if !(self.nominal_speed.is_finite() && self.nominal_speed > 0.0) {
            return Err(PathError::InvalidPlan("nominal_speed must be positive".into()));
        }
        if !(self.tool_radius.is_finite() && self.tool_radius > 0.0) {
            return Err(PathError::InvalidPlan("tool_radius must be positive".into()));
        }
        Ok(())
    }

    pub fn with_speed(mut self, nominal_speed: f64) -> Result<Self, PathError> {
        self.nominal_speed = nominal_speed;
        self.validate()?;
        Ok(self)
    }

    pub fn with_z_ref(mut self, z_ref: f64) -> Self {
        self.z_ref = z_ref;
        self
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Points along the polyline spaced at most `step` apart, including every
    /// vertex.
    pub fn densify(&self, step: f64) -> Vec<Vec2> {
        let mut out = vec![self.waypoints[0]];
        for w in self.waypoints.windows(2) {
            let len = w[0].distance(w[1]);
            let n = (len / step).ceil().max(1.0) as usize;
            for k in 1..=n {
                let s = k as f64 / n as f64;
                out.push(w[0] + (w[1] - w[0]) * s);
            }
        }
        out
    }

    /// Number of raster lanes (segments parallel to the long axis).
    pub fn lane_count(&self) -> usize {
        self.waypoints.len() / 2
    }

    pub fn write_csv(&self) -> String {
        let mut s = String::from("x,y\n");
        for w in &self.waypoints {
            s.push_str(&format!("{},{}\n", w.x, w.y));
        }
        s
    }
}

/// Lane spacing for a given tool radius and fractional overlap.
pub fn lane_spacing(tool_radius: f64, overlap: f64) -> f64 {
    2.0 * tool_radius * (1.0 - overlap)
}

/// Boustrophedon coverage of the `width` x `height` rectangle with origin at
/// (0, 0). Lanes run along the long axis from edge to edge and are spread
/// evenly between `tool_radius` and `short - tool_radius`, never further apart
/// than the nominal spacing.
pub fn plan_raster(
    width: f64,
    height: f64,
    tool_radius: f64,
    overlap: f64,
) -> Result<PlannedTrajectory, PathError> {
    if !(tool_radius.is_finite() && tool_radius > 0.0) {
        return Err(PathError::InvalidPlan("tool_radius must be positive".into()));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(PathError::InvalidPlan(format!(
            "overlap {overlap} outside [0, 1)"
        )));
    }
    if !(width > 2.0 * tool_radius && height > 2.0 * tool_radius) {
        return Err(PathError::SurfaceTooSmall {
            width,
            height,
            tool_radius,
        });
    }
    let along_x = width >= height;
    let (long, short) = if along_x { (width, height) } else { (height, width) };
    let spacing = lane_spacing(tool_radius, overlap);
    let lanes = ((short / spacing) - 1e-9).ceil().max(2.0) as usize;
    let gap = (short - 2.0 * tool_radius) / (lanes - 1) as f64;

    let mut waypoints = Vec::with_capacity(2 * lanes);
    for lane in 0..lanes {
        let across = tool_radius + gap * lane as f64;
        let (a, b) = if lane % 2 == 0 { (0.0, long) } else { (long, 0.0) };
        for along in [a, b] {
            waypoints.push(if along_x {
                Vec2::new(along, across)
            } else {
                Vec2::new(across, along)
            });
        }
    }
    PlannedTrajectory::new(waypoints, 0.0, DEFAULT_NOMINAL_SPEED, tool_radius)
}
