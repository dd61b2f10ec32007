//! Discrete-event system-level simulator for dense enterprise WLANs with
//! multi-user MIMO access points.

pub mod channel;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod mac;
pub mod phy;
pub mod rng;
pub mod scenario;
pub mod scheduler;
pub mod traffic;

pub use config::{Preset, SimConfig};
pub use error::{Result, SimError};
