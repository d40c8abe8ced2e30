//! Synthetic leader input profiles: piecewise (velocity, yaw-rate) segments
//! with linear velocity ramps at segment boundaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::ControlVector;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("profile has no segments")]
    Empty,
    #[error("segment {0} has non-positive duration {1}")]
    NonPositiveDuration(usize, f64),
    #[error("segment {0} has invalid target velocity {1}")]
    InvalidTargetVelocity(usize, f64),
    #[error("ramp time {0} must be non-negative and no longer than the shortest segment")]
    InvalidRampTime(f64),
    #[error("profile evaluated at negative time {0}")]
    NegativeTime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSegment {
    pub duration: f64,
    pub target_v: f64,
    #[serde(default)]
    pub yaw_rate: f64,
}

/// Ordered segments. Velocity ramps linearly over `ramp_time` at the start of
/// each segment, from the previous segment's target (zero before the first
/// segment, so runs begin from standstill). Yaw rate switches stepwise at
/// segment boundaries. Past the end the last segment's values hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderProfile {
    #[serde(default)]
    pub ramp_time: f64,
    pub segments: Vec<ProfileSegment>,
}

impl LeaderProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.segments.is_empty() {
            return Err(ProfileError::Empty);
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if !seg.duration.is_finite() || seg.duration <= 0.0 {
                return Err(ProfileError::NonPositiveDuration(i, seg.duration));
            }
            if !seg.target_v.is_finite() || seg.target_v < 0.0 || !seg.yaw_rate.is_finite() {
                return Err(ProfileError::InvalidTargetVelocity(i, seg.target_v));
            }
        }
        let shortest = self
            .segments
            .iter()
            .map(|s| s.duration)
            .fold(f64::INFINITY, f64::min);
        if !self.ramp_time.is_finite() || self.ramp_time < 0.0 || self.ramp_time > shortest {
            return Err(ProfileError::InvalidRampTime(self.ramp_time));
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Leader control input at time `t`.
    pub fn eval(&self, t: f64) -> Result<ControlVector, ProfileError> {
        if self.segments.is_empty() {
            return Err(ProfileError::Empty);
        }
        if !t.is_finite() || t < 0.0 {
            return Err(ProfileError::NegativeTime(t));
        }
        let mut start = 0.0;
        let mut prev_v = 0.0;
        for seg in &self.segments {
            let end = start + seg.duration;
            if t < end {
                let v = ramp(prev_v, seg.target_v, t - start, self.ramp_time);
                return Ok(ControlVector {
                    v,
                    omega: seg.yaw_rate,
                });
            }
            start = end;
            prev_v = seg.target_v;
        }
        let last = self.segments.last().expect("non-empty");
        Ok(ControlVector {
            v: last.target_v,
            omega: last.yaw_rate,
        })
    }
}

fn ramp(from: f64, to: f64, into_segment: f64, ramp_time: f64) -> f64 {
    if ramp_time <= 0.0 || into_segment >= ramp_time {
        return to;
    }
    from + (to - from) * (into_segment / ramp_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_segment_holds_target() {
        let p = LeaderProfile {
            ramp_time: 0.0,
            segments: vec![ProfileSegment {
                duration: 10.0,
                target_v: 3.0,
                yaw_rate: 0.0,
            }],
        };
        p.validate().unwrap();
        let u = p.eval(5.0).unwrap();
        assert_eq!(u.v, 3.0);
        assert_eq!(u.omega, 0.0);
    }

    #[test]
    fn ramp_midpoint() {
        let p = LeaderProfile {
            ramp_time: 1.0,
            segments: vec![
                ProfileSegment {
                    duration: 5.0,
                    target_v: 0.0,
                    yaw_rate: 0.0,
                },
                ProfileSegment {
                    duration: 5.0,
                    target_v: 2.0,
                    yaw_rate: 0.1,
                },
            ],
        };
        p.validate().unwrap();
        assert_abs_diff_eq!(p.eval(5.5).unwrap().v, 1.0, epsilon = 1e-12);
        // Yaw rate switches stepwise at the boundary.
        assert_eq!(p.eval(5.0).unwrap().omega, 0.1);
        assert_eq!(p.eval(4.999).unwrap().omega, 0.0);
    }

    #[test]
    fn holds_last_segment_past_end() {
        let p = LeaderProfile {
            ramp_time: 0.5,
            segments: vec![ProfileSegment {
                duration: 2.0,
                target_v: 1.5,
                yaw_rate: -0.2,
            }],
        };
        let u = p.eval(100.0).unwrap();
        assert_eq!(u.v, 1.5);
        assert_eq!(u.omega, -0.2);
    }

    #[test]
    fn first_segment_ramps_from_standstill() {
        let p = LeaderProfile {
            ramp_time: 2.0,
            segments: vec![ProfileSegment {
                duration: 10.0,
                target_v: 4.0,
                yaw_rate: 0.0,
            }],
        };
        assert_abs_diff_eq!(p.eval(1.0).unwrap().v, 2.0, epsilon = 1e-12);
        assert_eq!(p.eval(2.0).unwrap().v, 4.0);
    }

    #[test]
    fn validation_errors() {
        let empty = LeaderProfile {
            ramp_time: 0.0,
            segments: vec![],
        };
        assert_eq!(empty.validate(), Err(ProfileError::Empty));
        assert_eq!(empty.eval(0.0), Err(ProfileError::Empty));

        let bad = LeaderProfile {
            ramp_time: 0.0,
            segments: vec![ProfileSegment {
                duration: -1.0,
                target_v: 1.0,
                yaw_rate: 0.0,
            }],
        };
        assert!(matches!(
            bad.validate(),
            Err(ProfileError::NonPositiveDuration(0, _))
        ));

        let long_ramp = LeaderProfile {
            ramp_time: 3.0,
            segments: vec![ProfileSegment {
                duration: 2.0,
                target_v: 1.0,
                yaw_rate: 0.0,
            }],
        };
        assert!(matches!(
            long_ramp.validate(),
            Err(ProfileError::InvalidRampTime(_))
        ));
    }
}
