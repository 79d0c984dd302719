//! Experiment runner: JSON configuration, seeded sweeps, CSV/JSON reports and
//! SVG plots.

pub mod config;
pub mod plot;
pub mod report;
pub mod run;

pub use config::{EnvName, ExperimentConfig, Protocol, Resolved, TrainConfig};
pub use plot::plot_svg;
pub use report::{report_csv, strategies_csv, write_report, REPORT_HEADER};
pub use run::{agent_truth, run_experiment, strategy_summary, AggregateRow, RunReport, RunRow, StrategyRow, STRATEGIES};
