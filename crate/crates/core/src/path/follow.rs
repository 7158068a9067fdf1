//! Closed-loop velocity control of a kinematic plant through an emulated link.
//!
//! The remote controller runs at `control_rate_hz`. Each tick it advances a
//! reference point along the plan (trapezoidal speed profile per segment, at
//! rest on every vertex), and sends the velocity command
//!
//! ```text
//! cmd = reference feedforward + gain * (reference - sensed pose)
//! ```
//!
//! saturated at `max_speed` and rate limited by `max_accel`. The reference
//! only leaves a vertex once the sensed tool position is within the capture
//! radius of it. The plant integrates the most recently delivered command
//! (zero-order hold) in continuous time, so command deliveries are handled at
//! their exact arrival instants.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{PathError, PlannedTrajectory, Pose, TrajectoryLog};
use crate::geom::Vec2;
use crate::netchan::{Channel, NetworkConditions, TimedMessage};

/// Default spatial resolution of the stored trajectory, in millimeters.
pub const DEFAULT_LOG_RESOLUTION: f64 = 0.5;
/// Wire size of one velocity command.
pub const COMMAND_PAYLOAD_BYTES: usize = 32;
/// Wire size of one pose report on the sensing path.
pub const POSE_PAYLOAD_BYTES: usize = 56;
/// The reference profile uses this fraction of `max_accel`, leaving the rest
/// to the feedback term.
const REFERENCE_ACCEL_FRACTION: f64 = 0.5;

const ORIENTATION_STREAM: u64 = 1;
const TIMELINE_ORIENTATION_STREAM: u64 = 2;

fn default_z_response() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerParams {
    pub control_rate_hz: f64,
    /// Proportional gain toward the reference point, 1/s.
    pub gain_per_s: f64,
    pub max_speed_mm_s: f64,
    pub max_accel_mm_s2: f64,
    /// Defaults to a quarter of the tool radius when absent.
    #[serde(default)]
    pub capture_radius_mm: Option<f64>,
    /// Z deflection per unit of lateral acceleration, mm per mm/s^2.
    pub z_compliance_mm_per_mm_s2: f64,
    /// Time constant of the tool's vertical response to a change of
    /// deflection, seconds.
    #[serde(default = "default_z_response")]
    pub z_response_s: f64,
    pub orientation_noise_std_rad: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            control_rate_hz: 100.0,
            gain_per_s: 10.0,
            max_speed_mm_s: 300.0,
            max_accel_mm_s2: 2000.0,
            capture_radius_mm: None,
            z_compliance_mm_per_mm_s2: 0.002,
            z_response_s: default_z_response(),
            orientation_noise_std_rad: 0.01,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<(), PathError> {
        let positive = [
            ("control_rate_hz", self.control_rate_hz),
            ("gain_per_s", self.gain_per_s),
            ("max_speed_mm_s", self.max_speed_mm_s),
            ("max_accel_mm_s2", self.max_accel_mm_s2),
            ("z_response_s", self.z_response_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PathError::InvalidController(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("z_compliance_mm_per_mm_s2", self.z_compliance_mm_per_mm_s2),
            ("orientation_noise_std_rad", self.orientation_noise_std_rad),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PathError::InvalidController(format!(
                    "{name} must be non-negative"
                )));
            }
        }
        if let Some(r) = self.capture_radius_mm {
            if !(r.is_finite() && r > 0.0) {
                return Err(PathError::InvalidController(
                    "capture_radius_mm must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn capture_radius(&self, tool_radius: f64) -> f64 {
        self.capture_radius_mm.unwrap_or(tool_radius / 4.0)
    }
}

/// Result of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowOutcome {
    /// Poses stored every `resolution` millimeters of travel.
    pub log: TrajectoryLog,
    /// Poses at every control tick, used for velocity statistics.
    pub timeline: TrajectoryLog,
    /// False when the duration limit elapsed before the last waypoint was
    /// captured.
    pub complete: bool,
    pub duration_s: f64,
    pub commands_sent: u64,
    pub commands_lost: u64,
}

/// Trapezoidal (or triangular) rest-to-rest profile over one segment.
#[derive(Debug, Clone, Copy)]
struct SegmentProfile {
    length: f64,
    peak_speed: f64,
    accel: f64,
    ramp_time: f64,
    cruise_time: f64,
}

impl SegmentProfile {
    fn new(length: f64, speed: f64, accel: f64) -> Self {
        let peak_speed = speed.min((length * accel).sqrt());
        let ramp_time = peak_speed / accel;
        let ramp_len = 0.5 * accel * ramp_time * ramp_time;
        let cruise_time = ((length - 2.0 * ramp_len) / peak_speed).max(0.0);
        Self {
            length,
            peak_speed,
            accel,
            ramp_time,
            cruise_time,
        }
    }

    fn duration(&self) -> f64 {
        2.0 * self.ramp_time + self.cruise_time
    }

    /// Arc length covered `tau` seconds after the segment start.
    fn distance_at(&self, tau: f64) -> f64 {
        let ta = self.ramp_time;
        let tc = self.cruise_time;
        let s = if tau <= 0.0 {
            0.0
        } else if tau < ta {
            0.5 * self.accel * tau * tau
        } else if tau < ta + tc {
            0.5 * self.accel * ta * ta + self.peak_speed * (tau - ta)
        } else if tau < 2.0 * ta + tc {
            let td = 2.0 * ta + tc - tau;
            self.length - 0.5 * self.accel * td * td
        } else {
            self.length
        };
        s.min(self.length)
    }
}

struct Reference<'a> {
    waypoints: &'a [Vec2],
    speed: f64,
    accel: f64,
    segment: usize,
    start: f64,
    profile: SegmentProfile,
}

impl<'a> Reference<'a> {
    fn new(waypoints: &'a [Vec2], speed: f64, accel: f64) -> Self {
        let profile = SegmentProfile::new(waypoints[0].distance(waypoints[1]), speed, accel);
        Self {
            waypoints,
            speed,
            accel,
            segment: 0,
            start: 0.0,
            profile,
        }
    }

    fn target(&self) -> Vec2 {
        self.waypoints[self.segment + 1]
    }

    fn finished(&self, t: f64) -> bool {
        t >= self.start + self.profile.duration()
    }

    fn is_last(&self) -> bool {
        self.segment + 2 == self.waypoints.len()
    }

    fn advance(&mut self, t: f64) {
        self.segment += 1;
        self.start = t;
        let a = self.waypoints[self.segment];
        let b = self.waypoints[self.segment + 1];
        self.profile = SegmentProfile::new(a.distance(b), self.speed, self.accel);
    }

    fn position(&self, t: f64) -> Vec2 {
        let a = self.waypoints[self.segment];
        let b = self.waypoints[self.segment + 1];
        let s = self.profile.distance_at(t - self.start);
        a + (b - a) * (s / self.profile.length)
    }
}

/// Continuous-time kinematic plant with spatial and temporal logging.
struct Plant {
    time: f64,
    pos: Vec2,
    vel: Vec2,
    z_ref: f64,
    z: f64,
    z_target: f64,
    z_response: f64,
    z_compliance: f64,
    min_accel_window: f64,
    last_change: f64,
    yaw: f64,
    resolution: f64,
    travelled: f64,
    noise: Option<Normal<f64>>,
    orient_rng: ChaCha8Rng,
    samples: Vec<Pose>,
}

impl Plant {
    fn z_after(&self, dt: f64) -> f64 {
        if self.z == self.z_target {
            self.z
        } else {
            self.z_target + (self.z - self.z_target) * (-dt / self.z_response).exp()
        }
    }

    fn orientation(&mut self) -> (f64, f64) {
        match &self.noise {
            Some(n) => (n.sample(&mut self.orient_rng), n.sample(&mut self.orient_rng)),
            None => (0.0, 0.0),
        }
    }

    fn store(&mut self) {
        let (roll, pitch) = self.orientation();
        self.samples.push(Pose {
            t: self.time,
            x: self.pos.x,
            y: self.pos.y,
            z: self.z,
            roll,
            pitch,
            yaw: self.yaw,
        });
    }

    fn advance_to(&mut self, to: f64) {
        let mut remaining = to - self.time;
        if remaining <= 0.0 {
            return;
        }
        let speed = self.vel.norm();
        if speed > 0.0 {
            loop {
                let need = self.resolution - self.travelled;
                let tau = need / speed;
                if tau > remaining {
                    break;
                }
                self.z = self.z_after(tau);
                self.pos += self.vel * tau;
                self.time += tau;
                remaining -= tau;
                self.travelled = 0.0;
                self.store();
            }
            self.travelled += speed * remaining;
        }
        self.z = self.z_after(remaining);
        self.pos += self.vel * remaining;
        self.time = to;
    }

    fn apply(&mut self, cmd: Vec2) {
        let window = (self.time - self.last_change).max(self.min_accel_window);
        let accel = (cmd - self.vel).norm() / window;
        self.last_change = self.time;
        self.vel = cmd;
        self.z_target = self.z_ref + self.z_compliance * accel;
        if cmd.norm() > 0.0 {
            self.yaw = cmd.y.atan2(cmd.x);
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the tilt noise. Tilt is a property of the physical run, not of
/// the link, so runs that differ only in their conditions get unrelated
/// noise instead of prefixes of one shared sequence.
fn tilt_seed(cond: &NetworkConditions) -> u64 {
    [cond.delay_ms, cond.jitter_ms, cond.loss, cond.bandwidth_kbps]
        .iter()
        .fold(splitmix64(cond.seed), |acc, v| splitmix64(acc ^ v.to_bits()))
}

/// Configurable closed-loop run. [`simulate_follow`] covers the default case.
#[derive(Debug, Clone)]
pub struct FollowSim<'a> {
    plan: &'a PlannedTrajectory,
    ctrl: ControllerParams,
    cond: NetworkConditions,
    resolution: f64,
    symmetric_delay: bool,
}

impl<'a> FollowSim<'a> {
    pub fn new(plan: &'a PlannedTrajectory, ctrl: ControllerParams, cond: NetworkConditions) -> Self {
        Self {
            plan,
            ctrl,
            cond,
            resolution: DEFAULT_LOG_RESOLUTION,
            symmetric_delay: false,
        }
    }

    pub fn resolution(mut self, mm: f64) -> Self {
        self.resolution = mm;
        self
    }

    /// Also route pose reports to the controller through an emulated link
    /// with the same conditions (independent random stream).
    pub fn symmetric_delay(mut self, on: bool) -> Self {
        self.symmetric_delay = on;
        self
    }

    pub fn run(&self, duration_limit: f64) -> Result<FollowOutcome, PathError> {
        self.plan.validate()?;
        self.ctrl.validate()?;
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(PathError::InvalidController("resolution must be positive".into()));
        }
        if !(duration_limit.is_finite() && duration_limit > 0.0) {
            return Err(PathError::InvalidController(
                "duration limit must be positive".into(),
            ));
        }
        let ctrl = &self.ctrl;
        let mut commands: Channel<Vec2> = Channel::new(self.cond)?;
        let mut sensing: Option<Channel<Vec2>> = if self.symmetric_delay {
            let mut c = self.cond;
            c.seed = c.seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
            Some(Channel::new(c)?)
        } else {
            None
        };

        let dt = 1.0 / ctrl.control_rate_hz;
        let capture = ctrl.capture_radius(self.plan.tool_radius);
        let noise = (ctrl.orientation_noise_std_rad > 0.0)
            .then(|| Normal::new(0.0, ctrl.orientation_noise_std_rad).expect("validated std"));
        let tilt_seed = tilt_seed(&self.cond);
        let mut orient_rng = ChaCha8Rng::seed_from_u64(tilt_seed);
        orient_rng.set_stream(ORIENTATION_STREAM);
        let mut timeline_rng = ChaCha8Rng::seed_from_u64(tilt_seed);
        timeline_rng.set_stream(TIMELINE_ORIENTATION_STREAM);

        let start = self.plan.waypoints[0];
        let mut plant = Plant {
            time: 0.0,
            pos: start,
            vel: Vec2::ZERO,
            z_ref: self.plan.z_ref,
            z: self.plan.z_ref,
            z_target: self.plan.z_ref,
            z_response: ctrl.z_response_s,
            z_compliance: ctrl.z_compliance_mm_per_mm_s2,
            min_accel_window: dt,
            last_change: 0.0,
            yaw: 0.0,
            resolution: self.resolution,
            travelled: 0.0,
            noise,
            orient_rng,
            samples: Vec::new(),
        };
        plant.store();

        let mut reference = Reference::new(
            &self.plan.waypoints,
            self.plan.nominal_speed,
            ctrl.max_accel_mm_s2 * REFERENCE_ACCEL_FRACTION,
        );
        let mut timeline = Vec::new();
        let mut sensed = start;
        let mut prev_cmd = Vec2::ZERO;
        let mut complete = false;
        let mut tick: u64 = 0;

        loop {
            let t = tick as f64 * dt;
            if let Some(ch) = sensing.as_mut() {
                ch.send(TimedMessage::new(t, POSE_PAYLOAD_BYTES, plant.pos))?;
                for msg in ch.poll(t) {
                    sensed = msg.payload;
                }
            } else {
                sensed = plant.pos;
            }

            let (roll, pitch) = match &plant.noise {
                Some(n) => (n.sample(&mut timeline_rng), n.sample(&mut timeline_rng)),
                None => (0.0, 0.0),
            };
            timeline.push(Pose {
                t,
                x: plant.pos.x,
                y: plant.pos.y,
                z: plant.z,
                roll,
                pitch,
                yaw: plant.yaw,
            });

            if reference.finished(t) && sensed.distance(reference.target()) <= capture {
                if reference.is_last() {
                    complete = true;
                    break;
                }
                reference.advance(t);
            }
            if t >= duration_limit {
                break;
            }

            let t_next = (tick + 1) as f64 * dt;
            let r_now = reference.position(t);
            let r_next = reference.position(t_next);
            let raw = (r_next - r_now) * ctrl.control_rate_hz + (r_now - sensed) * ctrl.gain_per_s;
            let saturated = raw.clamp_norm(ctrl.max_speed_mm_s);
            let cmd = prev_cmd + (saturated - prev_cmd).clamp_norm(ctrl.max_accel_mm_s2 * dt);
            prev_cmd = cmd;
            commands.send(TimedMessage::new(t, COMMAND_PAYLOAD_BYTES, cmd))?;

            while let Some(due) = commands.next_delivery().filter(|d| *d <= t_next) {
                plant.advance_to(due);
                if let Some((_, msg)) = commands.pop_due(due) {
                    plant.apply(msg.payload);
                }
            }
            plant.advance_to(t_next);
            tick += 1;
        }

        if plant.travelled > 0.0 {
            plant.store();
        }
        let duration_s = plant.time;
        let stats = commands.stats();
        Ok(FollowOutcome {
            log: TrajectoryLog {
                samples: plant.samples,
                resolution: self.resolution,
            },
            timeline: TrajectoryLog {
                samples: timeline,
                resolution: ctrl.max_speed_mm_s * dt,
            },
            complete,
            duration_s,
            commands_sent: stats.sent,
            commands_lost: stats.dropped,
        })
    }
}

/// Runs the closed loop with default logging (0.5 mm, command-path delay).
pub fn simulate_follow(
    plan: &PlannedTrajectory,
    ctrl: ControllerParams,
    cond: NetworkConditions,
    duration_limit: f64,
) -> Result<FollowOutcome, PathError> {
    FollowSim::new(plan, ctrl, cond).run(duration_limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::point_polyline_distance;
    use crate::path::plan_raster;

    fn max_err(plan: &PlannedTrajectory, log: &TrajectoryLog) -> f64 {
        log.samples
            .iter()
            .map(|p| point_polyline_distance(p.xy(), &plan.waypoints))
            .fold(0.0, f64::max)
    }

    #[test]
    fn profile_reaches_segment_end() {
        for &(len, v, a) in &[
            (100.0, 100.0, 1000.0),
            (3.0, 100.0, 1000.0),
            (10.0, 100.0, 1000.0),
        ] {
            let p = SegmentProfile::new(len, v, a);
            assert!((p.distance_at(p.duration()) - len).abs() < 1e-9);
            assert!(p.peak_speed <= v + 1e-12);
            let mut prev = 0.0;
            for k in 0..=1000 {
                let s = p.distance_at(p.duration() * k as f64 / 1000.0);
                assert!(s + 1e-12 >= prev);
                prev = s;
            }
        }
    }

    #[test]
    fn straight_line_no_delay_tracks_tightly() {
        let plan = PlannedTrajectory::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(150.0, 40.0)],
            0.0,
            100.0,
            10.0,
        )
        .unwrap();
        let ctrl = ControllerParams {
            max_speed_mm_s: 1000.0,
            ..ControllerParams::default()
        };
        let out = simulate_follow(&plan, ctrl, NetworkConditions::ideal(), 30.0).unwrap();
        assert!(out.complete);
        assert!(max_err(&plan, &out.log) < 0.1);
    }

    #[test]
    fn identical_inputs_give_identical_logs() {
        let plan = plan_raster(120.0, 60.0, 12.5, 0.5).unwrap();
        let cond = NetworkConditions {
            delay_ms: 30.0,
            jitter_ms: 10.0,
            loss: 0.05,
            seed: 99,
            ..NetworkConditions::ideal()
        };
        let a = simulate_follow(&plan, ControllerParams::default(), cond, 60.0).unwrap();
        let b = simulate_follow(&plan, ControllerParams::default(), cond, 60.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn log_invariants_hold() {
        let plan = plan_raster(120.0, 60.0, 12.5, 0.5).unwrap();
        let ctrl = ControllerParams::default();
        for delay in [0.0, 40.0, 80.0] {
            let out = simulate_follow(&plan, ctrl, NetworkConditions::with_delay_ms(delay), 120.0).unwrap();
            out.log.validate().unwrap();
            out.timeline.validate().unwrap();
            assert!(out.log.max_spacing() <= 2.0 * out.log.resolution + 1e-9);
            assert!(out.log.max_planar_speed() <= ctrl.max_speed_mm_s + 1e-6);
            assert!(out.timeline.max_planar_speed() <= ctrl.max_speed_mm_s + 1e-6);
        }
    }

    #[test]
    fn flat_and_level_without_compliance_or_noise() {
        let plan = plan_raster(120.0, 60.0, 12.5, 0.5).unwrap().with_z_ref(4.0);
        let ctrl = ControllerParams {
            z_compliance_mm_per_mm_s2: 0.0,
            orientation_noise_std_rad: 0.0,
            ..ControllerParams::default()
        };
        let out = simulate_follow(&plan, ctrl, NetworkConditions::with_delay_ms(50.0), 120.0).unwrap();
        for p in &out.log.samples {
            assert_eq!(p.z, 4.0);
            assert_eq!(p.roll, 0.0);
            assert_eq!(p.pitch, 0.0);
        }
    }

    #[test]
    fn duration_limit_flags_incomplete() {
        let plan = plan_raster(200.0, 100.0, 12.5, 0.5).unwrap();
        let out = simulate_follow(
            &plan,
            ControllerParams::default(),
            NetworkConditions::ideal(),
            1.0,
        )
        .unwrap();
        assert!(!out.complete);
        assert!(out.duration_s <= 1.0 + 1e-9);
        assert!(!out.log.is_empty());
    }

    #[test]
    fn symmetric_delay_hurts_more() {
        let plan = plan_raster(120.0, 60.0, 12.5, 0.5).unwrap();
        let cond = NetworkConditions::with_delay_ms(40.0);
        let one = FollowSim::new(&plan, ControllerParams::default(), cond)
            .run(120.0)
            .unwrap();
        let both = FollowSim::new(&plan, ControllerParams::default(), cond)
            .symmetric_delay(true)
            .run(120.0)
            .unwrap();
        assert!(max_err(&plan, &both.log) > max_err(&plan, &one.log));
    }
}
