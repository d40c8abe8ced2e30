//! Cooperative adaptive cruise control with a time-gap spacing policy.
//!
//! Each follower tracks its predecessor from communicated state only. The
//! tracking error compares the predecessor's position (plus a curvature
//! correction derived from its current turning circle) with the follower's
//! look-ahead point one spacing distance ahead. A proportional law in the
//! follower body frame yields acceleration and yaw rate; the acceleration is
//! integrated into a velocity command that is clamped non-negative and gated
//! off when the predecessor stands still.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    yaw_rate_to_steering, AckermannCommand, DynamicsError, Vec2, VehicleParams, VehicleState,
    DEFAULT_WHEELBASE, V_EPS,
};

/// Yaw rate below which the constant-curvature formulas switch to their
/// straight-line limit to avoid numerical blowup (the limit is continuous).
pub const OMEGA_EPS: f64 = 1e-3;

/// Default predecessor speed below which the follower command is forced to
/// zero ("standstill gate").
pub const DEFAULT_STANDSTILL_V: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("standstill distance must be positive, got {0}")]
    NonPositiveStandstillDistance(f64),
    #[error("time gap must be non-negative, got {0}")]
    NegativeTimeGap(f64),
    #[error("controller gains must be strictly positive, got ({0}, {1})")]
    NonPositiveGain(f64, f64),
    #[error("look-ahead distance must be positive, got {0}")]
    NonPositiveLookahead(f64),
    #[error("velocity must be non-negative, got {0}")]
    NegativeVelocity(f64),
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("standstill threshold must be non-negative and finite, got {0}")]
    InvalidStandstillThreshold(f64),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Time-gap spacing policy: desired gap = r + h * v.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingPolicy {
    r: f64,
    h: f64,
}

impl SpacingPolicy {
    pub fn new(r: f64, h: f64) -> Result<Self, ControllerError> {
        if !r.is_finite() || r <= 0.0 {
            return Err(ControllerError::NonPositiveStandstillDistance(r));
        }
        if !h.is_finite() || h < 0.0 {
            return Err(ControllerError::NegativeTimeGap(h));
        }
        Ok(SpacingPolicy { r, h })
    }

    pub fn standstill_distance(&self) -> f64 {
        self.r
    }

    pub fn time_gap(&self) -> f64 {
        self.h
    }

    /// Desired gap at follower speed `v`.
    pub fn gap_at(&self, v: f64) -> f64 {
        self.r + self.h * v.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    k_long: f64,
    k_lat: f64,
}

impl ControllerGains {
    pub fn new(k_long: f64, k_lat: f64) -> Result<Self, ControllerError> {
        if !k_long.is_finite() || !k_lat.is_finite() || k_long <= 0.0 || k_lat <= 0.0 {
            return Err(ControllerError::NonPositiveGain(k_long, k_lat));
        }
        Ok(ControllerGains { k_long, k_lat })
    }

    pub fn k_long(&self) -> f64 {
        self.k_long
    }

    pub fn k_lat(&self) -> f64 {
        self.k_lat
    }
}

/// Predecessor state as received over the air (or the ideal link), stamped
/// with its generation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderSnapshot {
    pub pos: Vec2,
    pub v: f64,
    pub a: f64,
    pub theta: f64,
    pub omega: f64,
    pub stamp: f64,
}

/// Per-follower controller memory: the velocity-command integrator and the
/// freshest accepted predecessor snapshot.
#[derive(Debug, Clone, Default)]
pub struct ControllerState {
    pub v_cmd: f64,
    pub last_leader: Option<LeaderSnapshot>,
    pub last_update: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub a: f64,
    pub omega: f64,
}

/// Flat controller configuration as it appears in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub k_long: f64,
    pub k_lat: f64,
    pub r: f64,
    pub h: f64,
    pub standstill_v: f64,
    pub wheelbase: f64,
    /// Curvature-corrected tracking target; disabling it makes the follower
    /// aim straight at the predecessor position (and cut corners).
    pub extended_lookahead: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            k_long: 3.5,
            k_lat: 3.5,
            r: 1.0,
            h: 0.2,
            standstill_v: DEFAULT_STANDSTILL_V,
            wheelbase: DEFAULT_WHEELBASE,
            extended_lookahead: true,
        }
    }
}

impl ControllerConfig {
    pub fn gains(&self) -> Result<ControllerGains, ControllerError> {
        ControllerGains::new(self.k_long, self.k_lat)
    }

    pub fn policy(&self) -> Result<SpacingPolicy, ControllerError> {
        SpacingPolicy::new(self.r, self.h)
    }

    pub fn params(&self) -> Result<VehicleParams, ControllerError> {
        Ok(VehicleParams::new(self.wheelbase)?)
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        self.gains()?;
        self.policy()?;
        self.params()?;
        if !self.standstill_v.is_finite() || self.standstill_v < 0.0 {
            return Err(ControllerError::InvalidStandstillThreshold(
                self.standstill_v,
            ));
        }
        Ok(())
    }
}

/// Desired spacing vector (r + h * v) along the follower heading.
pub fn desired_spacing_vector(
    policy: &SpacingPolicy,
    v_i: f64,
    theta_i: f64,
) -> Result<Vec2, ControllerError> {
    if v_i < 0.0 {
        return Err(ControllerError::NegativeVelocity(v_i));
    }
    Ok(policy.gap_at(v_i) * Vec2::unit(theta_i))
}

/// Spacing error: actual separation minus desired separation.
pub fn spacing_error(p_prev: Vec2, p_i: Vec2, d_r: Vec2) -> Vec2 {
    (p_prev - p_i) - d_r
}

/// Displacement from the leader's position along its current circular arc
/// (radius v / omega) over arc length `l`. Degenerates to the straight-line
/// extension l * (cos theta, sin theta) for |omega| below `OMEGA_EPS` or
/// non-positive speed.
pub fn lookahead_extension(leader: &LeaderSnapshot, l: f64) -> Result<Vec2, ControllerError> {
    if !l.is_finite() || l <= 0.0 {
        return Err(ControllerError::NonPositiveLookahead(l));
    }
    let theta = leader.theta;
    if leader.omega.abs() <= OMEGA_EPS || leader.v <= 0.0 {
        return Ok(l * Vec2::unit(theta));
    }
    // Chord form of the arc displacement: l * sinc(a/2) along the half-angle
    // direction, with a the swept arc angle. Well conditioned for any
    // curvature.
    let half = 0.5 * l * leader.omega / leader.v;
    Ok((l * sinc(half)) * Vec2::unit(theta + half))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Curvature correction applied to the tracking target. It relocates the
/// target from the predecessor's raw position so that a follower sitting one
/// look-ahead arc behind on the predecessor's circle has zero error: take the
/// heading the predecessor had one arc length `l` earlier, project straight
/// ahead by `l` from there, and subtract the arc displacement back up to the
/// predecessor. The correction vanishes as omega -> 0, so straight-line
/// equilibrium stays at gap r + h * v.
fn arc_spacing_correction(leader: &LeaderSnapshot, l: f64) -> Vec2 {
    if leader.omega.abs() <= OMEGA_EPS || leader.v < V_EPS {
        return Vec2::ZERO;
    }
    let theta_back = leader.theta - l * leader.omega / leader.v;
    let back = LeaderSnapshot {
        theta: theta_back,
        ..*leader
    };
    let arc_up =
        lookahead_extension(&back, l).expect("look-ahead distance is positive by construction");
    l * Vec2::unit(theta_back) - arc_up
}

/// World-frame tracking error with the extended look-ahead target.
pub fn tracking_error(
    leader: &LeaderSnapshot,
    follower: &VehicleState,
    policy: &SpacingPolicy,
) -> Vec2 {
    let v = follower.v.max(0.0);
    let l = policy.gap_at(v);
    let target = leader.pos + arc_spacing_correction(leader, l);
    let d_r = policy.gap_at(v) * Vec2::unit(follower.pose.theta);
    spacing_error(target, follower.pose.position(), d_r)
}

/// Tracking error without the extension: the follower aims straight at the
/// predecessor position, which cuts corners on curved paths.
pub fn tracking_error_direct(
    leader: &LeaderSnapshot,
    follower: &VehicleState,
    policy: &SpacingPolicy,
) -> Vec2 {
    let d_r = policy.gap_at(follower.v.max(0.0)) * Vec2::unit(follower.pose.theta);
    spacing_error(leader.pos, follower.pose.position(), d_r)
}

/// Proportional law in the follower body frame: longitudinal error drives
/// acceleration, lateral error drives yaw rate.
pub fn control_law(e_world: Vec2, follower_theta: f64, gains: &ControllerGains) -> ControlOutput {
    let e_body = e_world.rotated(-follower_theta);
    ControlOutput {
        a: gains.k_long * e_body.x,
        omega: gains.k_lat * e_body.y,
    }
}

/// Integrate the commanded acceleration into the velocity command. The
/// command is clamped non-negative and forced to zero while the predecessor
/// moves slower than `standstill_v`.
pub fn integrate_velocity(
    state: &mut ControllerState,
    a: f64,
    dt: f64,
    leader_v: f64,
    standstill_v: f64,
) -> Result<f64, ControllerError> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(ControllerError::NonPositiveDt(dt));
    }
    state.v_cmd = (state.v_cmd + a * dt).max(0.0);
    if leader_v < standstill_v {
        state.v_cmd = 0.0;
    }
    Ok(state.v_cmd)
}

/// One full controller update: tracking error, body-frame law, velocity
/// integration, and yaw-rate-to-steering conversion.
pub fn controller_step(
    state: &mut ControllerState,
    leader: &LeaderSnapshot,
    follower: &VehicleState,
    cfg: &ControllerConfig,
    dt: f64,
) -> Result<AckermannCommand, ControllerError> {
    let gains = cfg.gains()?;
    let policy = cfg.policy()?;
    let params = cfg.params()?;
    let e = if cfg.extended_lookahead {
        tracking_error(leader, follower, &policy)
    } else {
        tracking_error_direct(leader, follower, &policy)
    };
    let out = control_law(e, follower.pose.theta, &gains);
    let v_cmd = integrate_velocity(state, out.a, dt, leader.v, cfg.standstill_v)?;
    let delta = yaw_rate_to_steering(out.omega, v_cmd, params.wheelbase)?;
    Ok(AckermannCommand { v: v_cmd, delta })
}

/// Body-frame components of the tracking error, as logged in run traces.
pub fn body_frame_error(
    leader: &LeaderSnapshot,
    follower: &VehicleState,
    cfg: &ControllerConfig,
) -> Result<Vec2, ControllerError> {
    let policy = cfg.policy()?;
    let e = if cfg.extended_lookahead {
        tracking_error(leader, follower, &policy)
    } else {
        tracking_error_direct(leader, follower, &policy)
    };
    Ok(e.rotated(-follower.pose.theta))
}
