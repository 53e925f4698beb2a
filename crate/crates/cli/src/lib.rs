//! Experiment runner: scenario files in, CSV and JSON artifacts out.

pub mod error;
pub mod freq;
pub mod runner;
pub mod scenario;
pub mod table2;

pub use error::CliError;
