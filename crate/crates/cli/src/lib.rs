//! Command-line front end: file ingestion, the fit / LOOCV / simulation
//! drivers and their JSON reports.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod report;

pub use commands::{run, Status};
pub use error::{CliError, Result};
