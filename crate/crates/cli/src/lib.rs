//! Experiment runner, aggregation and plot-data export for the kicked Ising chain.

pub mod config;
pub mod plot;
pub mod records;
pub mod run;
pub mod summary;
