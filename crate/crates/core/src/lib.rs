//! Discrete-event simulator for two priority-aware MAC protocols on a
//! single-hop star network: slot-stealing SS-MAC and fragmentation-based
//! FROG-MAC.
//!
//! A run is a [`mac::Simulation`] over a [`config::SimConfig`]; the
//! [`harness`] module turns sets of runs into CSV tables, manifests and
//! SVG plots.

pub mod channel;
pub mod config;
pub mod error;
pub mod frogmac;
pub mod harness;
pub mod kernel;
pub mod mac;
pub mod metrics;
pub mod plot;
pub mod ssmac;
pub mod traffic;

pub use config::SimConfig;
pub use error::{ConfigError, HarnessError, SimError};
pub use metrics::{Protocol, ScenarioKey, ScenarioResult};
