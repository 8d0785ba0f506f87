//! Simulation, solving, evaluation and benchmarking commands behind the `mwe` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod plot;
pub mod runner;
