//! Scenario assembly and execution: config parsing/validation, single runs,
//! the ideal-vs-radio channel comparison, and data-parallel batch execution
//! for sweeps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::{CamServiceConfig, ChannelModel, CommsError};
use crate::controller::{ControllerConfig, ControllerError};
use crate::dynamics::DynamicsError;
use crate::kernel::{
    CamLogRow, ChannelKind, KernelError, MessageCounters, PlantKind, ReceivedRow, TraceRow, World,
    WorldConfig,
};
use crate::metrics::{assemble_report, MetricsError, MetricsReport};
use crate::noise::NoiseModel;
use crate::profile::{LeaderProfile, ProfileError, ProfileSegment};

/// Environment variable capping how many scenario instances run in parallel.
pub const THREADS_ENV: &str = "PLATOON_SIM_THREADS";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config: {0}")]
    Config(String),
    #[error("config parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    /// Whether the failure is a usage/validation problem (as opposed to a
    /// runtime one).
    pub fn is_validation(&self) -> bool {
        matches!(self, ScenarioError::Config(_) | ScenarioError::Parse(_))
    }
}

impl From<ControllerError> for ScenarioError {
    fn from(e: ControllerError) -> Self {
        ScenarioError::Config(e.to_string())
    }
}

impl From<CommsError> for ScenarioError {
    fn from(e: CommsError) -> Self {
        ScenarioError::Config(e.to_string())
    }
}

impl From<ProfileError> for ScenarioError {
    fn from(e: ProfileError) -> Self {
        ScenarioError::Config(format!("leader_profile: {e}"))
    }
}

impl From<DynamicsError> for ScenarioError {
    fn from(e: DynamicsError) -> Self {
        ScenarioError::Config(e.to_string())
    }
}

/// Full experiment definition; this is the JSON schema of scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_vehicles: u32,
    pub dt: f64,
    pub duration: f64,
    pub plant: PlantKind,
    pub channel: ChannelKind,
    pub channel_model: ChannelModel,
    pub cam: CamServiceConfig,
    pub controller: ControllerConfig,
    pub leader_profile: LeaderProfile,
    pub noise: NoiseModel,
    pub seed: u64,
    /// Initial gap between consecutive vehicles; defaults to the standstill
    /// distance when absent.
    pub initial_spacing: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig::theoretical()
    }
}

impl ScenarioConfig {
    /// Idealized setup: unicycle plant, zero-delay full-resolution link,
    /// gains (3.5, 3.5), standstill distance 1 m, time gap 0.2 s, no noise.
    pub fn theoretical() -> Self {
        ScenarioConfig {
            n_vehicles: 4,
            dt: 0.01,
            duration: 120.0,
            plant: PlantKind::Unicycle,
            channel: ChannelKind::Ideal,
            channel_model: ChannelModel::default(),
            cam: CamServiceConfig::default(),
            controller: ControllerConfig::default(),
            leader_profile: LeaderProfile::mixed_maneuver(3.0),
            noise: NoiseModel::default(),
            seed: 42,
            initial_spacing: None,
        }
    }

    /// Deployment-like setup: bicycle plant, radio channel with delay and
    /// quantization, measurement noise, softer gains (1.0, 1.0), time gap
    /// 1.0 s, lowered speed.
    pub fn realistic() -> Self {
        ScenarioConfig {
            plant: PlantKind::Bicycle,
            channel: ChannelKind::ItsG5,
            controller: ControllerConfig {
                k_long: 1.0,
                k_lat: 1.0,
                h: 1.0,
                ..ControllerConfig::default()
            },
            leader_profile: LeaderProfile::mixed_maneuver(1.0),
            noise: NoiseModel {
                enabled: true,
                ..NoiseModel::default()
            },
            ..ScenarioConfig::theoretical()
        }
    }

    /// Communication-focused setup: 60 s of sustained weaving at varying
    /// speed over the radio channel. The constant turn keeps the heading
    /// trigger firing at the minimum interval, like a vehicle on a curvy
    /// course.
    pub fn comms_eval() -> Self {
        ScenarioConfig {
            duration: 60.0,
            channel: ChannelKind::ItsG5,
            leader_profile: LeaderProfile::weaving(),
            ..ScenarioConfig::theoretical()
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_vehicles < 2 {
            return Err(ScenarioError::Config(format!(
                "n_vehicles must be >= 2, got {}",
                self.n_vehicles
            )));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(ScenarioError::Config(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if !self.duration.is_finite() || self.duration <= 0.0 {
            return Err(ScenarioError::Config(format!(
                "duration must be > 0, got {}",
                self.duration
            )));
        }
        self.channel_model.validate()?;
        self.cam.validate()?;
        self.controller.validate()?;
        self.leader_profile.validate()?;
        if !self.noise.is_valid() {
            return Err(ScenarioError::Config(
                "noise sigmas must be non-negative".into(),
            ));
        }
        if let Some(s) = self.initial_spacing {
            if !s.is_finite() || s <= 0.0 {
                return Err(ScenarioError::Config(format!(
                    "initial_spacing must be > 0, got {s}"
                )));
            }
        }
        Ok(())
    }

    fn world_config(&self) -> WorldConfig {
        WorldConfig {
            n_vehicles: self.n_vehicles,
            dt: self.dt,
            plant: self.plant,
            channel: self.channel,
            channel_model: self.channel_model,
            cam: self.cam,
            controller: self.controller,
            leader_profile: self.leader_profile.clone(),
            noise: self.noise,
            seed: self.seed,
            initial_spacing: self.initial_spacing.unwrap_or(self.controller.r),
        }
    }
}

impl LeaderProfile {
    /// Default maneuver: accelerate to cruise, a long straight stretch, an
    /// S-curve, another straight stretch, then brake to a stop. 120 s total.
    /// The straights are long enough for the whole platoon to settle after
    /// each transient (the cascade is underdamped at the default gains).
    pub fn mixed_maneuver(cruise_v: f64) -> Self {
        LeaderProfile {
            ramp_time: 4.0,
            segments: vec![
                ProfileSegment {
                    duration: 5.0,
                    target_v: 0.0,
                    yaw_rate: 0.0,
                },
                ProfileSegment {
                    duration: 40.0,
                    target_v: cruise_v,
                    yaw_rate: 0.0,
                },
                ProfileSegment {
                    duration: 15.0,
                    target_v: cruise_v,
                    yaw_rate: 0.1,
                },
                ProfileSegment {
                    duration: 15.0,
                    target_v: cruise_v,
                    yaw_rate: -0.1,
                },
                ProfileSegment {
                    duration: 35.0,
                    target_v: cruise_v,
                    yaw_rate: 0.0,
                },
                ProfileSegment {
                    duration: 10.0,
                    target_v: 0.0,
                    yaw_rate: 0.0,
                },
            ],
        }
    }

    /// Sustained slalom with speed changes, for communication evaluation.
    /// The 0.7 rad/s weave crosses the 4-degree heading trigger about every
    /// 0.1 s, holding the message rate at the minimum-interval bound.
    pub fn weaving() -> Self {
        let weave = |duration: f64, v: f64, sign: f64| ProfileSegment {
            duration,
            target_v: v,
            yaw_rate: sign * 0.7,
        };
        LeaderProfile {
            ramp_time: 1.0,
            segments: vec![
                ProfileSegment {
                    duration: 4.0,
                    target_v: 0.0,
                    yaw_rate: 0.0,
                },
                weave(8.0, 1.0, 1.0),
                weave(8.0, 1.0, -1.0),
                weave(8.0, 1.5, 1.0),
                weave(8.0, 1.5, -1.0),
                weave(8.0, 1.2, 1.0),
                weave(8.0, 0.8, -1.0),
                weave(8.0, 1.0, 1.0),
            ],
        }
    }

    /// Straight-line cruise at `v`, preceded by a short standstill.
    pub fn cruise(v: f64) -> Self {
        LeaderProfile {
            ramp_time: 2.0,
            segments: vec![
                ProfileSegment {
                    duration: 2.0,
                    target_v: 0.0,
                    yaw_rate: 0.0,
                },
                ProfileSegment {
                    duration: 1e4,
                    target_v: v,
                    yaw_rate: 0.0,
                },
            ],
        }
    }

    /// Straight-line speed step from `v0` to `v1`, for string-stability runs.
    pub fn speed_step(v0: f64, v1: f64) -> Self {
        LeaderProfile {
            ramp_time: 1.0,
            segments: vec![
                ProfileSegment {
                    duration: 5.0,
                    target_v: 0.0,
                    yaw_rate: 0.0,
                },
                ProfileSegment {
                    duration: 25.0,
                    target_v: v0,
                    yaw_rate: 0.0,
                },
                ProfileSegment {
                    duration: 1e4,
                    target_v: v1,
                    yaw_rate: 0.0,
                },
            ],
        }
    }
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub channel: ChannelKind,
    pub trace: Vec<TraceRow>,
    pub cam_log: Vec<CamLogRow>,
    pub received: Vec<ReceivedRow>,
    pub counters: MessageCounters,
    pub in_flight: u64,
    pub metrics: MetricsReport,
}

/// Build the world, run it to the configured duration, and compute metrics.
/// Deterministic for a fixed config (the seed covers channel and noise).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, ScenarioError> {
    cfg.validate()?;
    let mut world = World::new(cfg.world_config())?;
    world.run_until(cfg.duration)?;
    let counters = world.counters();
    let stats = world.comm_stats();
    let in_flight = world.in_flight();
    let metrics = assemble_report(
        world.trace(),
        counters,
        stats,
        &cfg.leader_profile,
        cfg.duration,
    );
    Ok(RunOutput {
        channel: cfg.channel,
        trace: world.trace().to_vec(),
        cam_log: world.cam_log().to_vec(),
        received: world.received().to_vec(),
        counters,
        in_flight,
        metrics,
    })
}

/// Paired runs of the identical scenario over the ideal link and the radio
/// channel, same seed for the dynamics.
#[derive(Debug, Clone)]
pub struct ChannelComparison {
    pub ideal: RunOutput,
    pub itsg5: RunOutput,
}

pub fn compare_channels(cfg: &ScenarioConfig) -> Result<ChannelComparison, ScenarioError> {
    let mut ideal_cfg = cfg.clone();
    ideal_cfg.channel = ChannelKind::Ideal;
    let mut radio_cfg = cfg.clone();
    radio_cfg.channel = ChannelKind::ItsG5;

    let mut results = run_batch(&[ideal_cfg, radio_cfg]);
    let itsg5 = results.pop().expect("two results")?;
    let ideal = results.pop().expect("two results")?;
    Ok(ChannelComparison { ideal, itsg5 })
}

/// Thread cap from the environment; unset or unparsable values mean "no cap".
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()?
        .parse::<usize>()
        .ok()
        .filter(|&n| n >= 1)
}

/// Run every scenario in the batch sequentially.
pub fn run_batch_sequential(cfgs: &[ScenarioConfig]) -> Vec<Result<RunOutput, ScenarioError>> {
    cfgs.iter().map(run_scenario).collect()
}

/// Run a batch of independent scenarios, in parallel when the `parallel`
/// feature is enabled (honoring `PLATOON_SIM_THREADS`), sequentially
/// otherwise. Results come back in input order either way.
#[cfg(feature = "parallel")]
pub fn run_batch(cfgs: &[ScenarioConfig]) -> Vec<Result<RunOutput, ScenarioError>> {
    use rayon::prelude::*;
    let work = || cfgs.par_iter().map(run_scenario).collect();
    match thread_cap() {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(work),
            Err(_) => run_batch_sequential(cfgs),
        },
        None => work(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch(cfgs: &[ScenarioConfig]) -> Vec<Result<RunOutput, ScenarioError>> {
    run_batch_sequential(cfgs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ScenarioConfig::theoretical().validate().unwrap();
        ScenarioConfig::realistic().validate().unwrap();
        ScenarioConfig::comms_eval().validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut cfg = ScenarioConfig::theoretical();
        cfg.n_vehicles = 1;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("n_vehicles"));
        assert!(err.is_validation());

        let mut cfg = ScenarioConfig::theoretical();
        cfg.dt = 0.0;
        assert!(cfg.validate().is_err());

        let mut cfg = ScenarioConfig::theoretical();
        cfg.controller.k_long = -1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = ScenarioConfig::theoretical();
        cfg.channel_model.loss_prob = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_round_trip_with_defaults() {
        let cfg = ScenarioConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg, ScenarioConfig::theoretical());

        let cfg = ScenarioConfig::from_json_str(
            r#"{"n_vehicles": 2, "channel": "itsg5", "plant": "bicycle", "seed": 9}"#,
        )
        .unwrap();
        assert_eq!(cfg.n_vehicles, 2);
        assert_eq!(cfg.channel, ChannelKind::ItsG5);
        assert_eq!(cfg.plant, PlantKind::Bicycle);

        let text = serde_json::to_string(&ScenarioConfig::realistic()).unwrap();
        let back = ScenarioConfig::from_json_str(&text).unwrap();
        assert_eq!(back, ScenarioConfig::realistic());
    }

    #[test]
    fn malformed_json_reports_location() {
        let err = ScenarioConfig::from_json_str("{\n  \"dt\": \"oops\"\n}").unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("line"));
    }

    #[test]
    fn all_zero_profile_keeps_platoon_at_rest() {
        let mut cfg = ScenarioConfig::theoretical();
        cfg.duration = 5.0;
        cfg.leader_profile = LeaderProfile {
            ramp_time: 0.0,
            segments: vec![ProfileSegment {
                duration: 10.0,
                target_v: 0.0,
                yaw_rate: 0.0,
            }],
        };
        let out = run_scenario(&cfg).unwrap();
        for row in &out.trace {
            assert_eq!(row.v, 0.0);
            assert_eq!(row.x, row.x); // finite
        }
        // Errors are constant over time per vehicle.
        for id in 2..=cfg.n_vehicles {
            let errs: Vec<f64> = out
                .trace
                .iter()
                .filter(|r| r.vehicle_id == id)
                .filter_map(|r| r.e_long)
                .collect();
            if let Some(first) = errs.first() {
                assert!(errs.iter().all(|e| (e - first).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn batch_matches_sequential() {
        let mut a = ScenarioConfig::theoretical();
        a.duration = 2.0;
        let mut b = ScenarioConfig::comms_eval();
        b.duration = 2.0;
        let batch = run_batch(&[a.clone(), b.clone()]);
        let seq = run_batch_sequential(&[a, b]);
        for (x, y) in batch.iter().zip(seq.iter()) {
            let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
            assert_eq!(x.trace, y.trace);
            assert_eq!(x.cam_log, y.cam_log);
            assert_eq!(x.metrics, y.metrics);
        }
    }
}
