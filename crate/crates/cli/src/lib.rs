//! Experiment runner for the two-stage solvers: instance files, generators
//! and CSV reports.

pub mod experiment;
pub mod instance;
