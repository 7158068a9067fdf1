use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::PathError;
use crate::geom::Vec2;

pub const LOG_HEADER: &str = "t,x,y,z,roll,pitch,yaw";

/// Timestamped tool pose. Positions in millimeters, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn xy(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_valid(&self) -> bool {
        self.t.is_finite()
            && self.t >= 0.0
            && [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]
                .iter()
                .all(|v| v.is_finite())
    }

    fn distance3(&self, other: &Pose) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// An ordered sequence of tool poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub samples: Vec<Pose>,
    /// Target spacing between stored samples, in millimeters.
    pub resolution: f64,
}

impl TrajectoryLog {
    pub fn new(samples: Vec<Pose>, resolution: f64) -> Result<Self, PathError> {
        let log = Self { samples, resolution };
        log.validate()?;
        Ok(log)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<(), PathError> {
        if let Some(i) = self.samples.iter().position(|p| !p.is_valid()) {
            return Err(PathError::InvalidSample(i));
        }
        if let Some(i) = self.samples.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(PathError::NonIncreasingTime(i + 1));
        }
        Ok(())
    }

    /// Largest 3D distance between consecutive samples.
    pub fn max_spacing(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| w[0].distance3(&w[1]))
            .fold(0.0, f64::max)
    }

    /// Largest planar finite-difference speed between consecutive samples.
    pub fn max_planar_speed(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| w[0].xy().distance(w[1].xy()) / (w[1].t - w[0].t))
            .fold(0.0, f64::max)
    }

    /// Writes the comma-separated table `t,x,y,z,roll,pitch,yaw`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{LOG_HEADER}")?;
        for p in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.t, p.x, p.y, p.z, p.roll, p.pitch, p.yaw
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ASCII")
    }

    /// Parses the table written by [`TrajectoryLog::write_csv`].
    pub fn read_csv<R: BufRead>(input: R, resolution: f64) -> Result<Self, PathError> {
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == LOG_HEADER => {}
            _ => return Err(PathError::Parse("missing header".into())),
        }
        let mut samples = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| PathError::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| PathError::Parse(format!("line {}: {e}", n + 2)))?;
            if v.len() != 7 {
                return Err(PathError::Parse(format!("line {}: expected 7 fields", n + 2)));
            }
            samples.push(Pose {
                t: v[0],
                x: v[1],
                y: v[2],
                z: v[3],
                roll: v[4],
                pitch: v[5],
                yaw: v[6],
            });
        }
        Self::new(samples, resolution)
    }
}
