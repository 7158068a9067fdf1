//! Deterministic emulation of the controller-to-plant communication channel.
//!
//! A [`Channel`] applies a fixed mean delay, bounded uniform jitter, Bernoulli
//! loss and a per-message serialization time to timestamped messages. All
//! randomness comes from a ChaCha stream seeded by [`NetworkConditions::seed`],
//! and every `send` consumes exactly two draws from it (loss, then jitter), so
//! a delivery schedule can be replayed from the seed alone.
//!
//! Time is virtual: the caller drives the clock through `send` and `poll`.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BANDWIDTH_KBPS: f64 = 1000.0;

fn default_bandwidth() -> f64 {
    DEFAULT_BANDWIDTH_KBPS
}

/// Network-level QoS of the emulated link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConditions {
    /// Mean one-way delay in milliseconds.
    pub delay_ms: f64,
    /// Half-width of the symmetric uniform delay perturbation, milliseconds.
    #[serde(default)]
    pub jitter_ms: f64,
    /// Per-message drop probability.
    #[serde(default)]
    pub loss: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_kbps: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NetworkConditions {
    fn default() -> Self {
        Self::ideal()
    }
}

impl NetworkConditions {
    /// Zero delay, zero jitter, no loss, default bandwidth.
    pub fn ideal() -> Self {
        Self {
            delay_ms: 0.0,
            jitter_ms: 0.0,
            loss: 0.0,
            bandwidth_kbps: DEFAULT_BANDWIDTH_KBPS,
            seed: 0,
        }
    }

    pub fn with_delay_ms(delay_ms: f64) -> Self {
        Self {
            delay_ms,
            ..Self::ideal()
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |what: &'static str, value: f64| Err(ChannelError::InvalidConditions { what, value });
        if !(self.delay_ms.is_finite() && self.delay_ms >= 0.0) {
            return bad("delay_ms", self.delay_ms);
        }
        if !(self.jitter_ms.is_finite() && self.jitter_ms >= 0.0) {
            return bad("jitter_ms", self.jitter_ms);
        }
        if self.delay_ms - self.jitter_ms < 0.0 {
            return bad("delay_ms - jitter_ms", self.delay_ms - self.jitter_ms);
        }
        if !(0.0..=1.0).contains(&self.loss) {
            return bad("loss", self.loss);
        }
        if !(self.bandwidth_kbps.is_finite() && self.bandwidth_kbps > 0.0) {
            return bad("bandwidth_kbps", self.bandwidth_kbps);
        }
        Ok(())
    }

    /// Serialization time of a payload, in seconds.
    pub fn serialization_s(&self, payload_size: usize) -> f64 {
        (payload_size as f64 * 8.0) / (self.bandwidth_kbps * 1000.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid network conditions: {what} = {value}")]
    InvalidConditions { what: &'static str, value: f64 },
    #[error("message sent at {send_time} s after a message sent at {previous} s")]
    OutOfOrder { send_time: f64, previous: f64 },
}

/// A message stamped with its send time and wire size.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedMessage<P> {
    pub send_time: f64,
    pub payload_size: usize,
    pub payload: P,
}

impl<P> TimedMessage<P> {
    pub fn new(send_time: f64, payload_size: usize, payload: P) -> Self {
        Self {
            send_time,
            payload_size,
            payload,
        }
    }
}

/// Per-channel counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelStats {
    pub sent: u64,
    pub dropped: u64,
    pub delivered: u64,
}

/// Single-owner emulated link. Not meant to be shared across threads while
/// mutating; independent channels are fully independent.
#[derive(Debug)]
pub struct Channel<P> {
    cond: NetworkConditions,
    rng: ChaCha8Rng,
    in_flight: VecDeque<(f64, TimedMessage<P>)>,
    last_send: f64,
    last_delivery: f64,
    stats: ChannelStats,
}

impl<P> Channel<P> {
    pub fn new(cond: NetworkConditions) -> Result<Self, ChannelError> {
        cond.validate()?;
        Ok(Self {
            cond,
            rng: ChaCha8Rng::seed_from_u64(cond.seed),
            in_flight: VecDeque::new(),
            last_send: f64::NEG_INFINITY,
            last_delivery: f64::NEG_INFINITY,
            stats: ChannelStats::default(),
        })
    }

    pub fn conditions(&self) -> &NetworkConditions {
        &self.cond
    }

    pub fn stats(&self) -> ChannelStats {
        self.stats
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    /// Submits a message. Returns the scheduled delivery time, or `None` when
    /// the message was lost.
    pub fn send(&mut self, msg: TimedMessage<P>) -> Result<Option<f64>, ChannelError> {
        if msg.send_time < self.last_send || msg.send_time.is_nan() {
            return Err(ChannelError::OutOfOrder {
                send_time: msg.send_time,
                previous: self.last_send,
            });
        }
        self.last_send = msg.send_time;
        self.stats.sent += 1;

        let loss_draw: f64 = self.rng.random();
        let jitter_draw: f64 = self.rng.random();
        if loss_draw < self.cond.loss {
            self.stats.dropped += 1;
            return Ok(None);
        }

        let offset_ms = self.cond.jitter_ms * (2.0 * jitter_draw - 1.0);
        let latency_s = (self.cond.delay_ms + offset_ms).max(0.0) / 1000.0;
        let mut delivery = msg.send_time + latency_s + self.cond.serialization_s(msg.payload_size);
        // No reordering: a message never overtakes an earlier one.
        if delivery < self.last_delivery {
            delivery = self.last_delivery;
        }
        self.last_delivery = delivery;
        self.in_flight.push_back((delivery, msg));
        Ok(Some(delivery))
    }

    /// Delivery time of the oldest in-flight message.
    pub fn next_delivery(&self) -> Option<f64> {
        self.in_flight.front().map(|(t, _)| *t)
    }

    /// Removes and returns the next message if it is due at `now` (inclusive),
    /// together with its delivery time.
    pub fn pop_due(&mut self, now: f64) -> Option<(f64, TimedMessage<P>)> {
        match self.in_flight.front() {
            Some((t, _)) if *t <= now => {
                self.stats.delivered += 1;
                self.in_flight.pop_front()
            }
            _ => None,
        }
    }

    /// All messages due at `now`, in delivery order.
    pub fn poll(&mut self, now: f64) -> Vec<TimedMessage<P>> {
        let mut out = Vec::new();
        while let Some((_, msg)) = self.pop_due(now) {
            out.push(msg);
        }
        out
    }
}
