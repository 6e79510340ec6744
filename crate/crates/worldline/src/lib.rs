//! Experiment harness for `worldline_core`: TOML configuration, selector
//! construction (including a chat-completions endpoint client), JSON Lines
//! evidence ledgers, parallel sweeps, summary tables and the ledger
//! recompute pass.

pub mod config;
pub mod endpoint;
pub mod ledger;
pub mod sweep;
pub mod table;
pub mod verify;

pub use config::{ExperimentConfig, RuntimeSpec, SelectorSpec};
pub use sweep::{run_seeds, Axis};
