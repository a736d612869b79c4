//! Simulation toolkit for RIS-based spatially selective jamming.
//!
//! * [`env`]: seeded plane-wave multipath environment and RSSI metering.
//! * [`ris`]: binary RIS configurations and channel composition.
//! * [`optimizer`]: greedy table-based configuration search and baselines.
//! * [`link`]: JSR / SJNR, packet success, rate adaptation and goodput.
//! * [`scenario`]: experiment harness producing [`scenario::RunResult`]s.

pub mod env;
pub mod link;
pub mod optimizer;
pub mod ris;
pub mod rng;
pub mod scenario;
pub mod stats;

pub use env::{Antenna, DeviceId, DeviceRole, DeviceSpec, Environment, EnvironmentSpec, Position, RssiMeter};
pub use link::{LinkParams, LinkState, McsTable};
pub use optimizer::{CostWeights, Measurement, MeasurementOracle, OptimizerParams};
pub use ris::RisConfig;
pub use scenario::{RunResult, Scenario, ScenarioSpec};
