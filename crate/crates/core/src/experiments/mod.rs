//! Scenario registry, configuration, run and sweep drivers, rate fitting and
//! result files.

pub mod config;
pub mod fit;
pub mod output;
pub mod runner;
pub mod scenario;
pub mod verify;
