//! Robot-control KPIs extracted from a plan and the recorded trajectory.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::point_polyline_distance;
use crate::path::{FollowOutcome, PlannedTrajectory, TrajectoryLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KpiError {
    #[error("trajectory log is empty")]
    EmptyLog,
    #[error("plan has no waypoints")]
    EmptyPlan,
    #[error("velocity statistics need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("timestamps must strictly increase (sample {0})")]
    NonIncreasingTime(usize),
}

/// Processing phase the KPIs were measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Scanning,
    #[default]
    Sanding,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Scanning => "scanning",
            Phase::Sanding => "sanding",
        })
    }
}

impl FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scanning" => Ok(Phase::Scanning),
            "sanding" => Ok(Phase::Sanding),
            other => Err(format!("unknown phase {other:?}")),
        }
    }
}

/// Robot-control quality (distances in mm, speeds in mm/s, angles in rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotKpis {
    pub traj_err_mean: f64,
    pub traj_err_max: f64,
    pub vel_mean: f64,
    pub vel_max: f64,
    pub vel_min: f64,
    pub vel_std: f64,
    pub z_dev_mean: f64,
    pub z_dev_max: f64,
    pub orient_err_rms: f64,
    #[serde(default)]
    pub phase: Phase,
}

impl RobotKpis {
    pub const NAMES: [&'static str; 9] = [
        "traj_err_mean",
        "traj_err_max",
        "vel_mean",
        "vel_max",
        "vel_min",
        "vel_std",
        "z_dev_mean",
        "z_dev_max",
        "orient_err_rms",
    ];

    /// Looks a KPI up by its field name.
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "traj_err_mean" => self.traj_err_mean,
            "traj_err_max" => self.traj_err_max,
            "vel_mean" => self.vel_mean,
            "vel_max" => self.vel_max,
            "vel_min" => self.vel_min,
            "vel_std" => self.vel_std,
            "z_dev_mean" => self.z_dev_mean,
            "z_dev_max" => self.z_dev_max,
            "orient_err_rms" => self.orient_err_rms,
            _ => return None,
        })
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "traj_err_mean" => &mut self.traj_err_mean,
            "traj_err_max" => &mut self.traj_err_max,
            "vel_mean" => &mut self.vel_mean,
            "vel_max" => &mut self.vel_max,
            "vel_min" => &mut self.vel_min,
            "vel_std" => &mut self.vel_std,
            "z_dev_mean" => &mut self.z_dev_mean,
            "z_dev_max" => &mut self.z_dev_max,
            "orient_err_rms" => &mut self.orient_err_rms,
            _ => return None,
        })
    }

    pub fn values(&self) -> [f64; 9] {
        Self::NAMES.map(|n| self.get(n).expect("known name"))
    }

    /// Field-wise `a + (b - a) * s`; the phase is taken from `a`.
    pub fn lerp(a: &RobotKpis, b: &RobotKpis, s: f64) -> RobotKpis {
        let mut out = *a;
        for name in Self::NAMES {
            let (x, y) = (a.get(name).unwrap(), b.get(name).unwrap());
            *out.get_mut(name).unwrap() = x + (y - x) * s;
        }
        out
    }

    /// Checks the ordering and sign invariants.
    pub fn is_consistent(&self) -> bool {
        let tol = 1e-9;
        self.values().iter().all(|v| v.is_finite() && *v >= 0.0)
            && self.vel_min <= self.vel_mean + tol
            && self.vel_mean <= self.vel_max + tol
            && self.traj_err_mean <= self.traj_err_max + tol
            && self.z_dev_mean <= self.z_dev_max + tol
    }
}

/// Planar distance from each sample to the planned polyline; (mean, max).
pub fn trajectory_error(plan: &PlannedTrajectory, log: &TrajectoryLog) -> Result<(f64, f64), KpiError> {
    if plan.waypoints.is_empty() {
        return Err(KpiError::EmptyPlan);
    }
    if log.is_empty() {
        return Err(KpiError::EmptyLog);
    }
    let (sum, max) = log.samples.iter().fold((0.0, 0.0f64), |(sum, max), p| {
        let d = point_polyline_distance(p.xy(), &plan.waypoints);
        (sum + d, max.max(d))
    });
    Ok((sum / log.len() as f64, max))
}

/// Tool speed statistics over consecutive samples: (mean, max, min, std).
/// The standard deviation is the population one.
pub fn velocity_stats(log: &TrajectoryLog) -> Result<(f64, f64, f64, f64), KpiError> {
    if log.len() < 2 {
        return Err(KpiError::TooFewSamples(log.len()));
    }
    let mut speeds = Vec::with_capacity(log.len() - 1);
    for (i, w) in log.samples.windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        if dt <= 0.0 {
            return Err(KpiError::NonIncreasingTime(i + 1));
        }
        let (dx, dy, dz) = (w[1].x - w[0].x, w[1].y - w[0].y, w[1].z - w[0].z);
        speeds.push((dx * dx + dy * dy + dz * dz).sqrt() / dt);
    }
    let n = speeds.len() as f64;
    let mean = speeds.iter().sum::<f64>() / n;
    let max = speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = speeds.iter().copied().fold(f64::INFINITY, f64::min);
    let var = speeds.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, max, min, var.sqrt()))
}

/// Deviation from the desired tool height: (mean, max) of `|z - z_ref|`.
pub fn z_distance(log: &TrajectoryLog, z_ref: f64) -> Result<(f64, f64), KpiError> {
    if log.is_empty() {
        return Err(KpiError::EmptyLog);
    }
    let (sum, max) = log.samples.iter().fold((0.0, 0.0f64), |(sum, max), p| {
        let d = (p.z - z_ref).abs();
        (sum + d, max.max(d))
    });
    Ok((sum / log.len() as f64, max))
}

/// Angle between the tool axis and the surface normal (+Z) for one pose.
///
/// The tool axis is unit Z rotated by `Rz(yaw) * Ry(pitch) * Rx(roll)`; its Z
/// component is `cos(pitch) * cos(roll)`.
pub fn tilt_angle(roll: f64, pitch: f64) -> f64 {
    (pitch.cos() * roll.cos()).clamp(-1.0, 1.0).acos()
}

/// Root-mean-square tilt of the tool axis over the log.
pub fn orientation_error(log: &TrajectoryLog) -> Result<f64, KpiError> {
    if log.is_empty() {
        return Err(KpiError::EmptyLog);
    }
    let sq: f64 = log
        .samples
        .iter()
        .map(|p| tilt_angle(p.roll, p.pitch).powi(2))
        .sum();
    Ok((sq / log.len() as f64).sqrt())
}

/// All KPIs of one run. Velocity comes from the time-uniform timeline, the
/// rest from the spatially sampled log.
pub fn extract_kpis(
    plan: &PlannedTrajectory,
    outcome: &FollowOutcome,
    phase: Phase,
) -> Result<RobotKpis, KpiError> {
    let (traj_err_mean, traj_err_max) = trajectory_error(plan, &outcome.log)?;
    let (vel_mean, vel_max, vel_min, vel_std) = velocity_stats(&outcome.timeline)?;
    let (z_dev_mean, z_dev_max) = z_distance(&outcome.log, plan.z_ref)?;
    let orient_err_rms = orientation_error(&outcome.log)?;
    Ok(RobotKpis {
        traj_err_mean,
        traj_err_max,
        vel_mean,
        vel_max,
        vel_min,
        vel_std,
        z_dev_mean,
        z_dev_max,
        orient_err_rms,
        phase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::path::Pose;

    fn pose(t: f64, x: f64, y: f64, z: f64) -> Pose {
        Pose {
            t,
            x,
            y,
            z,
            ..Pose::default()
        }
    }

    fn log(samples: Vec<Pose>) -> TrajectoryLog {
        TrajectoryLog {
            samples,
            resolution: 0.5,
        }
    }

    fn plan() -> PlannedTrajectory {
        PlannedTrajectory::new(vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)], 0.0, 100.0, 10.0).unwrap()
    }

    #[test]
    fn densified_plan_has_no_error() {
        let p = PlannedTrajectory::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(50.0, 0.0), Vec2::new(50.0, 30.0)],
            0.0,
            100.0,
            10.0,
        )
        .unwrap();
        let samples = p
            .densify(0.5)
            .into_iter()
            .enumerate()
            .map(|(i, v)| pose(i as f64, v.x, v.y, 0.0))
            .collect();
        assert_eq!(trajectory_error(&p, &log(samples)).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn perpendicular_offset() {
        let l = log(vec![pose(0.0, 40.0, 3.0, 0.0)]);
        assert_eq!(trajectory_error(&plan(), &l).unwrap(), (3.0, 3.0));
    }

    #[test]
    fn constant_speed_line() {
        let samples = (0..=50)
            .map(|i| pose(i as f64 * 0.01, i as f64, 0.0, 0.0))
            .collect();
        let (mean, max, min, std) = velocity_stats(&log(samples)).unwrap();
        for v in [mean, max, min] {
            assert!((v - 100.0).abs() < 1e-9);
        }
        assert!(std < 1e-9);
    }

    #[test]
    fn two_interval_speeds() {
        let l = log(vec![
            pose(0.0, 0.0, 0.0, 0.0),
            pose(1.0, 50.0, 0.0, 0.0),
            pose(2.0, 200.0, 0.0, 0.0),
        ]);
        let (mean, max, min, std) = velocity_stats(&l).unwrap();
        assert_eq!((mean, max, min), (100.0, 150.0, 50.0));
        assert_eq!(std, 50.0);
    }

    #[test]
    fn velocity_errors() {
        assert_eq!(
            velocity_stats(&log(vec![pose(0.0, 0.0, 0.0, 0.0)])),
            Err(KpiError::TooFewSamples(1))
        );
        let bad = log(vec![pose(1.0, 0.0, 0.0, 0.0), pose(1.0, 1.0, 0.0, 0.0)]);
        assert_eq!(velocity_stats(&bad), Err(KpiError::NonIncreasingTime(1)));
    }

    #[test]
    fn z_distance_cases() {
        let flat = log(vec![pose(0.0, 0.0, 0.0, 2.0), pose(1.0, 1.0, 0.0, 2.0)]);
        assert_eq!(z_distance(&flat, 2.0).unwrap(), (0.0, 0.0));
        let wobble = log(vec![pose(0.0, 0.0, 0.0, 5.0), pose(1.0, 1.0, 0.0, -1.0)]);
        assert_eq!(z_distance(&wobble, 2.0).unwrap(), (3.0, 3.0));
        assert_eq!(z_distance(&log(vec![]), 0.0), Err(KpiError::EmptyLog));
    }

    #[test]
    fn orientation_cases() {
        let level = log(vec![Pose {
            yaw: 1.2,
            ..pose(0.0, 0.0, 0.0, 0.0)
        }]);
        assert_eq!(orientation_error(&level).unwrap(), 0.0);
        let pitched: Vec<Pose> = (0..10)
            .map(|i| Pose {
                pitch: 0.1,
                yaw: i as f64 * 0.3,
                ..pose(i as f64, 0.0, 0.0, 0.0)
            })
            .collect();
        assert!((orientation_error(&log(pitched)).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn lookup_by_name() {
        let k = RobotKpis {
            vel_max: 7.0,
            ..RobotKpis::default()
        };
        assert_eq!(k.get("vel_max"), Some(7.0));
        assert_eq!(k.get("bogus"), None);
        for name in RobotKpis::NAMES {
            assert!(k.get(name).is_some());
        }
    }

    #[test]
    fn phase_names_round_trip() {
        for p in [Phase::Scanning, Phase::Sanding] {
            assert_eq!(p.to_string().parse::<Phase>().unwrap(), p);
        }
    }
}
