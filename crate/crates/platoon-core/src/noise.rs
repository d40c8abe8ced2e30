//! Measurement noise on the reported vehicle state. Perturbations apply to
//! what a vehicle reports over the air, never to the plant truth.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_angle, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub enabled: bool,
    pub sigma_pos: f64,
    pub sigma_v: f64,
    pub sigma_heading: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            enabled: false,
            sigma_pos: 0.02,
            sigma_v: 0.02,
            sigma_heading: 0.5_f64.to_radians(),
        }
    }
}

impl NoiseModel {
    pub fn is_valid(&self) -> bool {
        self.sigma_pos.is_finite()
            && self.sigma_v.is_finite()
            && self.sigma_heading.is_finite()
            && self.sigma_pos >= 0.0
            && self.sigma_v >= 0.0
            && self.sigma_heading >= 0.0
    }
}

/// Gaussian perturbation of the reported state. Disabled noise is the exact
/// identity and consumes no random draws; enabled noise always consumes four
/// draws (x, y, v, heading) so the stream stays aligned across steps.
pub fn apply_noise<R: Rng>(state: &VehicleState, noise: &NoiseModel, rng: &mut R) -> VehicleState {
    if !noise.enabled {
        return *state;
    }
    let zx: f64 = rng.sample(StandardNormal);
    let zy: f64 = rng.sample(StandardNormal);
    let zv: f64 = rng.sample(StandardNormal);
    let zt: f64 = rng.sample(StandardNormal);
    let mut out = *state;
    out.pose.x += noise.sigma_pos * zx;
    out.pose.y += noise.sigma_pos * zy;
    out.v = (out.v + noise.sigma_v * zv).max(0.0);
    out.pose.theta = wrap_angle(out.pose.theta + noise.sigma_heading * zt);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Pose;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base_state() -> VehicleState {
        let mut s = VehicleState::at_pose(Pose::new(1.0, -2.0, 0.3));
        s.v = 2.0;
        s
    }

    #[test]
    fn disabled_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = base_state();
        let out = apply_noise(&s, &NoiseModel::default(), &mut rng);
        assert_eq!(out, s);
    }

    #[test]
    fn zero_sigmas_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = NoiseModel {
            enabled: true,
            sigma_pos: 0.0,
            sigma_v: 0.0,
            sigma_heading: 0.0,
        };
        let s = base_state();
        let out = apply_noise(&s, &noise, &mut rng);
        assert_eq!(out.pose.x, s.pose.x);
        assert_eq!(out.pose.y, s.pose.y);
        assert_eq!(out.v, s.v);
        assert_eq!(out.pose.theta, s.pose.theta);
    }

    #[test]
    fn position_sigma_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let noise = NoiseModel {
            enabled: true,
            sigma_pos: 0.05,
            ..NoiseModel::default()
        };
        let s = base_state();
        let n = 10_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let dx = apply_noise(&s, &noise, &mut rng).pose.x - s.pose.x;
            sum += dx;
            sum_sq += dx * dx;
        }
        let mean = sum / n as f64;
        let std = (sum_sq / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 0.002, "mean {mean}");
        assert!((std - 0.05).abs() < 0.002, "std {std}");
    }

    #[test]
    fn velocity_stays_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = NoiseModel {
            enabled: true,
            sigma_v: 10.0,
            ..NoiseModel::default()
        };
        let mut s = base_state();
        s.v = 0.1;
        for _ in 0..1_000 {
            assert!(apply_noise(&s, &noise, &mut rng).v >= 0.0);
        }
    }
}
