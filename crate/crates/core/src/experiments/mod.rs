//! Scenario configuration, Monte Carlo harness, and metric series.
//!
//! [`config`] declares the [`ScenarioConfig`] every sweep runs under,
//! [`harness`] implements the per-trial pipeline and the sweep
//! operations, and [`series`] is the tabular output format the CLI
//! serializes to CSV or JSON.

pub mod config;
pub mod harness;
pub mod series;

pub use config::{dbm_to_watts, watts_to_dbm, ConfigError, Platform, ScenarioConfig};
pub use harness::{
    correlation_sweep, dbm_grid, energy_efficiency, favorable_propagation_variance, favprop_sweep,
    linear_grid, place_users, run_qos_sweep, run_sum_rate_sweep, ExperimentError,
};
pub use series::{generator_string, MetricColumn, MetricSeries, SeriesError, SeriesMetadata};
