//! Distribution-grid Volt/VAr oscillation laboratory.
//!
//! The crate wires a steady-state AC power-flow model of a medium-voltage
//! feeder to inverter Volt/VAr controllers, weather-driven generation and
//! load series, scripted and learned attackers, and a soft actor-critic
//! learner built from scratch. Numeric code is generic over the scalar
//! type (`f32`/`f64` via [`scalar::Real`]); the aliases at the crate root
//! fix `f64`, which is what the scenario harness and CLI use.

pub mod agents;
pub mod grid;
pub mod harness;
pub mod learner;
pub mod linalg;
pub mod powerflow;
pub mod scalar;
pub mod timeseries;
pub mod voltvar;

/// `f64` instantiations of the core types.
pub type Grid = grid::Grid<f64>;
pub type Bus = grid::Bus<f64>;
pub type Branch = grid::Branch<f64>;
pub type InverterUnit = grid::InverterUnit<f64>;
pub type Injection = powerflow::Injection<f64>;
pub type SolveOptions = powerflow::SolveOptions<f64>;
pub type PowerflowResult = powerflow::PowerflowResult<f64>;
pub type ControllerState = voltvar::ControllerState<f64>;
pub type TimeSeries = timeseries::TimeSeries<f64>;
pub type ObjectiveParams = agents::ObjectiveParams<f64>;
pub type Sac = learner::Sac<f64>;
pub type SacConfig = learner::SacConfig<f64>;
pub type ReplayBuffer = learner::ReplayBuffer<f64>;
pub type Transition = learner::Transition<f64>;
