//! Planar kinematic vehicle models.
//!
//! Two plants are provided: an Ackermann-steered bicycle (single-track) model
//! driven by velocity and steering angle, and a unicycle model driven by
//! acceleration and yaw rate. Both advance with forward Euler at a fixed step.
//! Conversions between steering angle and yaw rate live here as well, since
//! the platoon controller commands a unicycle and the plant may be a bicycle.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Velocity below which the yaw-rate-to-steering conversion returns zero
/// steering instead of dividing by a near-zero speed.
pub const V_EPS: f64 = 1e-3;

/// Default wheelbase in meters (small-scale robot class); configurable per run.
pub const DEFAULT_WHEELBASE: f64 = 0.32;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("steering angle must satisfy |delta| < pi/2, got {0}")]
    SteeringOutOfRange(f64),
    #[error("wheelbase must be positive, got {0}")]
    NonPositiveWheelbase(f64),
    #[error("velocity must be non-negative, got {0}")]
    NegativeVelocity(f64),
}

/// Planar vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector pointing along `angle`.
    pub fn unit(angle: f64) -> Self {
        Vec2 {
            x: angle.cos(),
            y: angle.sin(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counter-clockwise rotation by `angle` radians.
    pub fn rotated(&self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2 {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2 {
            x: self.x + rhs.x,
            y: self.y + rhs.y,
        }
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2 {
            x: self.x - rhs.x,
            y: self.y - rhs.y,
        }
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, rhs: Vec2) -> Vec2 {
        Vec2 {
            x: self * rhs.x,
            y: self * rhs.y,
        }
    }
}

/// Planar pose. `theta` is kept normalized to (-pi, pi] by every operation
/// that produces a pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose { x, y, theta }
    }

    pub fn position(&self) -> Vec2 {
        Vec2 {
            x: self.x,
            y: self.y,
        }
    }
}

/// Velocity / yaw-rate pair, the unicycle control input.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlVector {
    /// Forward velocity, never negative (the framework forbids reverse).
    pub v: f64,
    pub omega: f64,
}

/// Velocity / steering pair, the Ackermann drive input.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AckermannCommand {
    pub v: f64,
    pub delta: f64,
}

impl AckermannCommand {
    pub const STOP: AckermannCommand = AckermannCommand { v: 0.0, delta: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
}

impl VehicleParams {
    pub fn new(wheelbase: f64) -> Result<Self, DynamicsError> {
        if !wheelbase.is_finite() {
            return Err(DynamicsError::NonFinite("wheelbase"));
        }
        if wheelbase <= 0.0 {
            return Err(DynamicsError::NonPositiveWheelbase(wheelbase));
        }
        Ok(VehicleParams { wheelbase })
    }
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            wheelbase: DEFAULT_WHEELBASE,
        }
    }
}

/// Full kinematic state of one vehicle: pose plus the rates the V2V message
/// set carries (velocity, acceleration, yaw rate) and the last steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub pose: Pose,
    pub v: f64,
    pub a: f64,
    pub omega: f64,
    pub delta: f64,
}

impl VehicleState {
    pub fn at_pose(pose: Pose) -> Self {
        VehicleState {
            pose,
            ..Default::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pose.x.is_finite()
            && self.pose.y.is_finite()
            && self.pose.theta.is_finite()
            && self.v.is_finite()
            && self.a.is_finite()
            && self.omega.is_finite()
            && self.delta.is_finite()
    }
}

/// Wrap an angle into (-pi, pi]. The input must be finite.
pub(crate) fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % TAU;
    if t <= -PI {
        t += TAU;
    } else if t > PI {
        t -= TAU;
    }
    t
}

/// Normalize an angle into (-pi, pi]; the boundary -pi maps to +pi.
pub fn normalize_angle(theta: f64) -> Result<f64, DynamicsError> {
    if !theta.is_finite() {
        return Err(DynamicsError::NonFinite("theta"));
    }
    Ok(wrap_angle(theta))
}

/// Steering angle for a requested yaw rate at speed `v`: atan(omega * d / v).
/// Below `V_EPS` the conversion is singular and returns 0.
pub fn yaw_rate_to_steering(omega: f64, v: f64, d: f64) -> Result<f64, DynamicsError> {
    if !omega.is_finite() || !v.is_finite() {
        return Err(DynamicsError::NonFinite("omega or v"));
    }
    if !d.is_finite() {
        return Err(DynamicsError::NonFinite("wheelbase"));
    }
    if d <= 0.0 {
        return Err(DynamicsError::NonPositiveWheelbase(d));
    }
    if v < V_EPS {
        return Ok(0.0);
    }
    Ok((omega * d / v).atan())
}

/// Yaw rate produced by steering angle `delta` at speed `v`: v * tan(delta) / d.
pub fn steering_to_yaw_rate(delta: f64, v: f64, d: f64) -> Result<f64, DynamicsError> {
    if !delta.is_finite() || !v.is_finite() {
        return Err(DynamicsError::NonFinite("delta or v"));
    }
    if !d.is_finite() {
        return Err(DynamicsError::NonFinite("wheelbase"));
    }
    if delta.abs() >= PI / 2.0 {
        return Err(DynamicsError::SteeringOutOfRange(delta));
    }
    if d <= 0.0 {
        return Err(DynamicsError::NonPositiveWheelbase(d));
    }
    Ok(v * delta.tan() / d)
}

/// One forward-Euler step of the bicycle model. Position advances with the
/// commanded velocity along the current heading, heading by v * tan(delta) / d.
/// The stored acceleration is the finite difference of the velocity change.
pub fn bicycle_step(
    state: &VehicleState,
    cmd: &AckermannCommand,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState, DynamicsError> {
    if !state.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    if !cmd.v.is_finite() || !cmd.delta.is_finite() {
        return Err(DynamicsError::NonFinite("command"));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(DynamicsError::NonPositiveDt(dt));
    }
    if cmd.delta.abs() >= PI / 2.0 {
        return Err(DynamicsError::SteeringOutOfRange(cmd.delta));
    }
    if cmd.v < 0.0 {
        return Err(DynamicsError::NegativeVelocity(cmd.v));
    }
    let d = params.wheelbase;
    if d <= 0.0 {
        return Err(DynamicsError::NonPositiveWheelbase(d));
    }

    let Pose { x, y, theta } = state.pose;
    let v = cmd.v;
    let pose = Pose {
        x: x + v * theta.cos() * dt,
        y: y + v * theta.sin() * dt,
        theta: wrap_angle(theta + v * cmd.delta.tan() / d * dt),
    };
    Ok(VehicleState {
        pose,
        v,
        a: (v - state.v) / dt,
        omega: steering_to_yaw_rate(cmd.delta, v, d)?,
        delta: cmd.delta,
    })
}

/// One forward-Euler step of the unicycle model driven by acceleration and
/// yaw rate. Velocity is clamped at zero from below; the stored acceleration
/// is the effective one after clamping.
pub fn unicycle_step(
    state: &VehicleState,
    accel: f64,
    omega: f64,
    dt: f64,
) -> Result<VehicleState, DynamicsError> {
    if !state.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    if !accel.is_finite() || !omega.is_finite() {
        return Err(DynamicsError::NonFinite("input"));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(DynamicsError::NonPositiveDt(dt));
    }

    let Pose { x, y, theta } = state.pose;
    let v = state.v;
    let v_next = (v + accel * dt).max(0.0);
    let pose = Pose {
        x: x + v * theta.cos() * dt,
        y: y + v * theta.sin() * dt,
        theta: wrap_angle(theta + omega * dt),
    };
    Ok(VehicleState {
        pose,
        v: v_next,
        a: (v_next - v) / dt,
        omega,
        delta: state.delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Angular distance between two angles, immune to the +/-pi boundary.
    fn ang_dist(a: f64, b: f64) -> f64 {
        wrap_angle(a - b).abs()
    }

    #[test]
    fn normalize_identity_and_boundaries() {
        assert_eq!(normalize_angle(0.0).unwrap(), 0.0);
        // An odd multiple of pi is equivalent to pi.
        assert!(ang_dist(normalize_angle(3.0 * PI).unwrap(), PI) < 1e-12);
        // The boundary maps to +pi by convention.
        assert_eq!(normalize_angle(-PI).unwrap(), PI);
        assert_eq!(
            normalize_angle(f64::NAN),
            Err(DynamicsError::NonFinite("theta"))
        );
    }

    proptest! {
        #[test]
        fn normalize_range_and_equivalence(theta in -1e6f64..1e6) {
            let n = normalize_angle(theta).unwrap();
            prop_assert!(n > -PI && n <= PI);
            // Same direction modulo 2*pi.
            prop_assert!((n.sin() - theta.sin()).abs() < 1e-7);
            prop_assert!((n.cos() - theta.cos()).abs() < 1e-7);
        }

        #[test]
        fn steering_round_trip(
            v in 0.1f64..20.0,
            delta in -1.0f64..1.0,
            d in 0.1f64..3.0,
        ) {
            let omega = steering_to_yaw_rate(delta, v, d).unwrap();
            let back = yaw_rate_to_steering(omega, v, d).unwrap();
            prop_assert!((back - delta).abs() < 1e-12);
        }

        #[test]
        fn rotational_symmetry(phi in -PI..PI) {
            // Rotating the start pose by phi and de-rotating the trajectory
            // reproduces the unrotated trajectory.
            let cmd = AckermannCommand { v: 1.5, delta: 0.2 };
            let params = VehicleParams::default();
            let mut plain = VehicleState::at_pose(Pose::new(0.3, -0.7, 0.4));
            let mut rotated = VehicleState::at_pose(Pose::new(
                0.3 * phi.cos() - (-0.7) * phi.sin(),
                0.3 * phi.sin() + (-0.7) * phi.cos(),
                wrap_angle(0.4 + phi),
            ));
            for _ in 0..100 {
                plain = bicycle_step(&plain, &cmd, &params, 0.01).unwrap();
                rotated = bicycle_step(&rotated, &cmd, &params, 0.01).unwrap();
                let back = rotated.pose.position().rotated(-phi);
                prop_assert!((back.x - plain.pose.x).abs() < 1e-9);
                prop_assert!((back.y - plain.pose.y).abs() < 1e-9);
                prop_assert!(ang_dist(rotated.pose.theta - phi, plain.pose.theta) < 1e-9);
            }
        }
    }

    #[test]
    fn conversion_values() {
        assert_eq!(yaw_rate_to_steering(0.0, 3.0, 0.32).unwrap(), 0.0);
        // atan(1 * 0.32 / 1) = atan(0.32)
        assert_abs_diff_eq!(
            yaw_rate_to_steering(1.0, 1.0, 0.32).unwrap(),
            0.32f64.atan(),
            epsilon = 1e-15
        );
        // Singularity guard below V_EPS.
        assert_eq!(yaw_rate_to_steering(5.0, 1e-6, 0.32).unwrap(), 0.0);
        assert!(matches!(
            yaw_rate_to_steering(1.0, 1.0, 0.0),
            Err(DynamicsError::NonPositiveWheelbase(_))
        ));

        assert_eq!(steering_to_yaw_rate(0.0, 5.0, 0.32).unwrap(), 0.0);
        // Exact inverse of the atan(0.32) case.
        assert_abs_diff_eq!(
            steering_to_yaw_rate(0.32f64.atan(), 1.0, 0.32).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            steering_to_yaw_rate(0.1, 2.0, 0.5).unwrap(),
            2.0 * 0.1f64.tan() / 0.5,
            epsilon = 1e-15
        );
        assert!(matches!(
            steering_to_yaw_rate(PI / 2.0, 1.0, 0.5),
            Err(DynamicsError::SteeringOutOfRange(_))
        ));
    }

    #[test]
    fn bicycle_trivial_cases() {
        let params = VehicleParams::default();
        let start = VehicleState::at_pose(Pose::new(0.0, 0.0, 0.0));

        // Zero velocity leaves the pose unchanged bit-for-bit.
        let s = bicycle_step(
            &start,
            &AckermannCommand { v: 0.0, delta: 0.3 },
            &params,
            0.1,
        )
        .unwrap();
        assert_eq!(s.pose, start.pose);

        // Straight line.
        let s = bicycle_step(
            &start,
            &AckermannCommand { v: 1.0, delta: 0.0 },
            &params,
            0.1,
        )
        .unwrap();
        assert_abs_diff_eq!(s.pose.x, 0.1, epsilon = 1e-15);
        assert_eq!(s.pose.y, 0.0);
        assert_eq!(s.pose.theta, 0.0);

        assert!(matches!(
            bicycle_step(
                &start,
                &AckermannCommand { v: 1.0, delta: 0.0 },
                &params,
                0.0
            ),
            Err(DynamicsError::NonPositiveDt(_))
        ));
        let mut bad = start;
        bad.v = f64::NAN;
        assert!(matches!(
            bicycle_step(&bad, &AckermannCommand { v: 1.0, delta: 0.0 }, &params, 0.1),
            Err(DynamicsError::NonFinite(_))
        ));
    }

    #[test]
    fn unicycle_trivial_cases() {
        let mut start = VehicleState::at_pose(Pose::new(0.0, 0.0, 0.0));
        start.v = 2.0;
        let s = unicycle_step(&start, 0.0, 0.0, 0.5).unwrap();
        assert_abs_diff_eq!(s.pose.x, 1.0, epsilon = 1e-15);
        assert_eq!(s.v, 2.0);

        // Velocity clamps at zero.
        let mut stopped = VehicleState::at_pose(Pose::new(0.0, 0.0, 0.0));
        stopped.v = 0.0;
        let s = unicycle_step(&stopped, -1.0, 0.0, 0.1).unwrap();
        assert_eq!(s.v, 0.0);
        assert_eq!(s.pose, stopped.pose);
    }

    /// Closed-form pose after driving a constant-curvature arc of radius `r`
    /// for time `t` at speed `v`, starting from the origin heading +x.
    fn arc_oracle(v: f64, r: f64, t: f64) -> Pose {
        let phi = v * t / r;
        Pose::new(r * phi.sin(), r * (1.0 - phi.cos()), wrap_angle(phi))
    }

    fn bicycle_terminal_error(dt: f64) -> f64 {
        // tan(delta) = d / R with R = 1 => unit-radius circle at v = 1.
        let params = VehicleParams::default();
        let cmd = AckermannCommand {
            v: 1.0,
            delta: params.wheelbase.atan(),
        };
        let steps = (1.0 / dt).round() as usize;
        let mut s = VehicleState::at_pose(Pose::new(0.0, 0.0, 0.0));
        for _ in 0..steps {
            s = bicycle_step(&s, &cmd, &params, dt).unwrap();
        }
        let exact = arc_oracle(1.0, 1.0, 1.0);
        ((s.pose.x - exact.x).powi(2) + (s.pose.y - exact.y).powi(2)).sqrt()
    }

    fn unicycle_terminal_error(dt: f64) -> f64 {
        // v = 1, omega = 0.5 => radius 2.
        let steps = (1.0 / dt).round() as usize;
        let mut s = VehicleState::at_pose(Pose::new(0.0, 0.0, 0.0));
        s.v = 1.0;
        for _ in 0..steps {
            s = unicycle_step(&s, 0.0, 0.5, dt).unwrap();
        }
        let exact = arc_oracle(1.0, 2.0, 1.0);
        ((s.pose.x - exact.x).powi(2) + (s.pose.y - exact.y).powi(2)).sqrt()
    }

    #[test]
    fn circular_arc_against_analytic_solution() {
        assert!(bicycle_terminal_error(1e-4) < 1e-2);
        assert!(unicycle_terminal_error(1e-4) < 1e-2);
    }

    #[test]
    fn euler_order_one_convergence() {
        for err_fn in [bicycle_terminal_error, unicycle_terminal_error] {
            let errs: Vec<f64> = [1e-3, 5e-4, 2.5e-4].iter().map(|&dt| err_fn(dt)).collect();
            for pair in errs.windows(2) {
                let ratio = pair[0] / pair[1];
                assert!(
                    (1.8..=2.2).contains(&ratio),
                    "halving dt changed the error by {ratio}, expected ~2"
                );
            }
        }
    }
}
