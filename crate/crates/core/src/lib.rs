//! Socially aware spatiotemporal tubes for multi-agent reach-avoid-stay tasks.
//!
//! Each agent carries a ball-shaped tube whose centre and radius are
//! synthesized online from its target, the obstacles and the broadcast centres
//! of its neighbours. A closed-form funnel controller keeps the agent's output
//! inside the tube without a model of the plant, and the monitors check the
//! recorded traces against the reach, avoid, disjointness and containment
//! guarantees.

pub mod cli;
pub mod controller;
pub mod error;
pub mod monitors;
pub mod plants;
pub mod plot;
pub mod scenario;
pub mod sim;
pub mod trace_io;
pub mod tube;

pub use error::{Error, Result};
pub use scenario::{parse_scenario, validate_scenario, Scenario, Vector};
pub use sim::{run_simulation, SimConfig, SimTrace};
