//! Sweeps over the synthetic benchmark, CSV output and SVG charts for the
//! `batchrobust` estimator.

pub mod config;
pub mod notation;
pub mod plot;
pub mod sweep;

pub use config::{ConfigError, SweepConfig, SweepKind};
pub use plot::{emit_plot, Axes};
pub use sweep::{run_sweep, summarize, Estimator, Row, SummaryPoint};
