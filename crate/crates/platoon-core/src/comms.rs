//! V2V awareness messaging: generation rules, quantized encoding, a
//! delay/loss channel, and the predecessor-only platoon filter.
//!
//! Messages carry position, speed, heading, acceleration and yaw rate as
//! scaled integers (speed in 0.01 m/s steps, heading in 0.1 degree steps,
//! acceleration in 0.1 m/s^2 steps, yaw rate in 0.01 deg/s steps, position in
//! centimeters). Each quantized field reserves its top value as an
//! "unavailable" sentinel. Generation follows the awareness-service rules:
//! never more often than `t_gen_min`, at least every `t_gen_max`, and in
//! between whenever position, speed or heading moved past a threshold.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::LeaderSnapshot;
use crate::dynamics::{wrap_angle, Vec2, VehicleState};

/// Slack for elapsed-time comparisons so that microsecond-exact step times do
/// not miss a trigger boundary by one float ulp.
const TIME_EPS: f64 = 1e-9;

pub const SPEED_UNAVAILABLE: u16 = 16_383;
pub const HEADING_UNAVAILABLE: u16 = 3_601;
pub const ACCEL_UNAVAILABLE: i16 = 161;
pub const YAWRATE_UNAVAILABLE: i16 = 32_767;

const SPEED_MAX_VALID: i64 = 16_382;
const HEADING_MAX_VALID: i64 = 3_600;
const ACCEL_MAX_VALID: i64 = 160;
const YAWRATE_MAX_VALID: i64 = 32_766;

#[derive(Debug, Error, PartialEq)]
pub enum CommsError {
    #[error("clock went backwards: now {now} is before last transmission {last}")]
    TimeWentBackwards { now: f64, last: f64 },
    #[error("{0} field is unavailable")]
    UnavailableField(&'static str),
    #[error("vehicle {0} has no predecessor")]
    NoPredecessor(u32),
    #[error("channel delays must satisfy 0 <= min <= max, got [{0}, {1}]")]
    InvalidDelayRange(f64, f64),
    #[error("loss probability must lie in [0, 1], got {0}")]
    InvalidLossProbability(f64),
    #[error("generation interval bounds must satisfy 0 < min <= max, got [{0}, {1}]")]
    InvalidGenerationInterval(f64, f64),
}

/// Quantized awareness message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CamMessage {
    pub station_id: u32,
    pub seq: u64,
    pub gen_time: f64,
    pub pos_x_cm: i64,
    pub pos_y_cm: i64,
    pub speed_q: u16,
    pub heading_q: u16,
    pub accel_q: i16,
    pub yawrate_q: i16,
}

/// Generation-rule parameters, exposed in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CamServiceConfig {
    pub t_gen_min: f64,
    pub t_gen_max: f64,
    pub d_pos_thresh: f64,
    pub d_speed_thresh: f64,
    pub d_heading_thresh: f64,
}

impl Default for CamServiceConfig {
    fn default() -> Self {
        CamServiceConfig {
            t_gen_min: 0.1,
            t_gen_max: 1.0,
            d_pos_thresh: 4.0,
            d_speed_thresh: 0.5,
            d_heading_thresh: 4.0_f64.to_radians(),
        }
    }
}

impl CamServiceConfig {
    pub fn validate(&self) -> Result<(), CommsError> {
        if !(self.t_gen_min > 0.0 && self.t_gen_min <= self.t_gen_max) {
            return Err(CommsError::InvalidGenerationInterval(
                self.t_gen_min,
                self.t_gen_max,
            ));
        }
        Ok(())
    }
}

/// Per-vehicle awareness-service state: the last transmitted reference plus
/// the trigger parameters.
#[derive(Debug, Clone)]
pub struct CaServiceState {
    pub last_tx_time: f64,
    pub last_tx_pos: Vec2,
    pub last_tx_speed: f64,
    pub last_tx_heading: f64,
    pub t_gen_min: f64,
    pub t_gen_max: f64,
    pub d_pos_thresh: f64,
    pub d_speed_thresh: f64,
    pub d_heading_thresh: f64,
    has_sent: bool,
}

impl CaServiceState {
    pub fn new(cfg: &CamServiceConfig) -> Self {
        CaServiceState {
            last_tx_time: 0.0,
            last_tx_pos: Vec2::ZERO,
            last_tx_speed: 0.0,
            last_tx_heading: 0.0,
            t_gen_min: cfg.t_gen_min,
            t_gen_max: cfg.t_gen_max,
            d_pos_thresh: cfg.d_pos_thresh,
            d_speed_thresh: cfg.d_speed_thresh,
            d_heading_thresh: cfg.d_heading_thresh,
            has_sent: false,
        }
    }

    /// Record a transmission so the trigger rules reference it.
    pub fn record_tx(&mut self, state: &VehicleState, now: f64) {
        self.last_tx_time = now;
        self.last_tx_pos = state.pose.position();
        self.last_tx_speed = state.v;
        self.last_tx_heading = state.pose.theta;
        self.has_sent = true;
    }
}

/// Generation decision for the current reported state. The very first call
/// always transmits; afterwards the min/max interval bounds and the movement
/// thresholds apply.
pub fn should_generate_cam(
    svc: &CaServiceState,
    state: &VehicleState,
    now: f64,
) -> Result<bool, CommsError> {
    if svc.has_sent && now < svc.last_tx_time {
        return Err(CommsError::TimeWentBackwards {
            now,
            last: svc.last_tx_time,
        });
    }
    if !svc.has_sent {
        return Ok(true);
    }
    let elapsed = now - svc.last_tx_time;
    if elapsed < svc.t_gen_min - TIME_EPS {
        return Ok(false);
    }
    if elapsed >= svc.t_gen_max - TIME_EPS {
        return Ok(true);
    }
    let moved = (state.pose.position() - svc.last_tx_pos).norm() >= svc.d_pos_thresh;
    let speed_changed = (state.v - svc.last_tx_speed).abs() >= svc.d_speed_thresh;
    let turned = wrap_angle(state.pose.theta - svc.last_tx_heading).abs() >= svc.d_heading_thresh;
    Ok(moved || speed_changed || turned)
}

/// Round half away from zero, then clamp into [lo, hi].
fn quantize(value: f64, scale: f64, lo: i64, hi: i64) -> i64 {
    ((value * scale).round() as i64).clamp(lo, hi)
}

/// Quantize a vehicle state into a message. Out-of-range values clamp to the
/// widest valid code (the "unavailable" sentinels are never produced here).
pub fn encode_cam(state: &VehicleState, station_id: u32, seq: u64, now: f64) -> CamMessage {
    let heading_deg = state.pose.theta.to_degrees().rem_euclid(360.0);
    CamMessage {
        station_id,
        seq,
        gen_time: now,
        pos_x_cm: quantize(state.pose.x, 100.0, i64::MIN, i64::MAX),
        pos_y_cm: quantize(state.pose.y, 100.0, i64::MIN, i64::MAX),
        speed_q: quantize(state.v, 100.0, 0, SPEED_MAX_VALID) as u16,
        heading_q: quantize(heading_deg, 10.0, 0, HEADING_MAX_VALID) as u16,
        accel_q: quantize(state.a, 10.0, -ACCEL_MAX_VALID, ACCEL_MAX_VALID) as i16,
        yawrate_q: quantize(
            state.omega.to_degrees(),
            100.0,
            -YAWRATE_MAX_VALID,
            YAWRATE_MAX_VALID,
        ) as i16,
    }
}

/// Inverse scaling of `encode_cam`. A sentinel in any field is an error.
pub fn decode_cam(msg: &CamMessage) -> Result<LeaderSnapshot, CommsError> {
    if msg.speed_q == SPEED_UNAVAILABLE {
        return Err(CommsError::UnavailableField("speed"));
    }
    if msg.heading_q == HEADING_UNAVAILABLE {
        return Err(CommsError::UnavailableField("heading"));
    }
    if msg.accel_q == ACCEL_UNAVAILABLE {
        return Err(CommsError::UnavailableField("acceleration"));
    }
    if msg.yawrate_q == YAWRATE_UNAVAILABLE {
        return Err(CommsError::UnavailableField("yaw rate"));
    }
    Ok(LeaderSnapshot {
        pos: Vec2::new(msg.pos_x_cm as f64 / 100.0, msg.pos_y_cm as f64 / 100.0),
        v: msg.speed_q as f64 / 100.0,
        a: msg.accel_q as f64 / 10.0,
        theta: wrap_angle((msg.heading_q as f64 / 10.0).to_radians()),
        omega: (msg.yawrate_q as f64 / 100.0).to_radians(),
        stamp: msg.gen_time,
    })
}

/// Channel parameters: uniform delay on [delay_min, delay_max] plus optional
/// independent loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModel {
    pub delay_min: f64,
    pub delay_max: f64,
    pub loss_prob: f64,
    /// Seed of the channel's random stream; falls back to the scenario seed
    /// when absent.
    pub rng_seed: Option<u64>,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            delay_min: 0.1,
            delay_max: 0.2,
            loss_prob: 0.0,
            rng_seed: None,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), CommsError> {
        if !(self.delay_min.is_finite()
            && self.delay_max.is_finite()
            && 0.0 <= self.delay_min
            && self.delay_min <= self.delay_max)
        {
            return Err(CommsError::InvalidDelayRange(
                self.delay_min,
                self.delay_max,
            ));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(CommsError::InvalidLossProbability(self.loss_prob));
        }
        Ok(())
    }
}

/// A channel instance with its own deterministic random stream.
#[derive(Debug, Clone)]
pub struct Channel {
    model: ChannelModel,
    rng: ChaCha8Rng,
}

impl Channel {
    /// `stream` separates per-vehicle channels that share one seed.
    pub fn new(model: ChannelModel, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(model.rng_seed.unwrap_or(seed));
        rng.set_stream(stream);
        Channel { model, rng }
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    /// Draw the fate of one transmission: `None` when lost, otherwise the
    /// propagation delay in whole microseconds.
    pub fn draw_delay_us(&mut self) -> Option<u64> {
        if self.rng.random::<f64>() < self.model.loss_prob {
            return None;
        }
        let u: f64 = self.rng.random();
        let delay = self.model.delay_min + u * (self.model.delay_max - self.model.delay_min);
        Some((delay * 1e6).round() as u64)
    }

    /// Delivery time for a message sent at `now`, or `None` when dropped.
    pub fn transmit(&mut self, now: f64) -> Option<f64> {
        self.draw_delay_us().map(|us| now + us as f64 / 1e6)
    }
}

/// Predecessor-only acceptance: vehicle `own_id` takes messages from station
/// `own_id - 1` with a generation time strictly newer than anything already
/// accepted. Stale or reordered messages are rejected.
pub fn platoon_filter(
    msg: &CamMessage,
    own_id: u32,
    latest_gen_time: f64,
) -> Result<bool, CommsError> {
    if own_id < 2 {
        return Err(CommsError::NoPredecessor(own_id));
    }
    Ok(msg.station_id == own_id - 1 && msg.gen_time > latest_gen_time)
}
