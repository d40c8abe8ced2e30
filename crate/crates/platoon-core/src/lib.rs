//! Deterministic co-simulation engine for cooperative vehicle platooning.
//!
//! The crate combines four pieces behind one scenario interface:
//!
//! - [`dynamics`]: planar bicycle and unicycle kinematics with fixed-step
//!   integration and steering/yaw-rate conversions;
//! - [`controller`]: a cooperative adaptive cruise controller with a time-gap
//!   spacing policy and an extended look-ahead tracking target;
//! - [`comms`]: awareness-message generation rules, quantized encoding, and a
//!   delay/loss channel with a predecessor-only platoon filter;
//! - [`kernel`]: a two-clock loop where fixed-step physics drives a discrete
//!   event queue that never runs ahead of physics time.
//!
//! [`scenario`] assembles worlds from JSON configs and runs them (optionally
//! in parallel across scenario instances), [`metrics`] distills traces into
//! report figures, and [`output`] serializes everything into stable CSV/JSON
//! files. Runs are bit-reproducible for a fixed config and seed.

pub mod comms;
pub mod controller;
pub mod dynamics;
pub mod kernel;
pub mod metrics;
pub mod noise;
pub mod output;
pub mod profile;
pub mod scenario;

pub use scenario::{
    compare_channels, run_batch, run_batch_sequential, run_scenario, ChannelComparison, RunOutput,
    ScenarioConfig, ScenarioError,
};
