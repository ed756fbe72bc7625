//! Scenario-file front end for the floqryd simulator.

pub mod catalog;
pub mod connectivity;
pub mod error;
pub mod output;
pub mod runner;
pub mod scenario;

pub use error::{CliError, CliResult};
