//! Experiment driving: suite runner, metrics, sweeps, and report writers.

mod ablation;
mod config;
mod curve;
mod suite;
mod svg;

pub use ablation::{run_ablation, write_ablation_csv, AblationPoint, AblationSweep};
pub use config::{ConfigError, ConfigMap};
pub use curve::{query_grid, success_curve, write_curve_csv, CurvePoint};
pub use suite::{
    run_suite, summarize_seed, write_rows_csv, write_summary_csv, AttackMethod, GoalSpec,
    ImageRow, SeedReport, SuiteConfig, SuiteReport,
};
pub use svg::{write_line_chart, Series};
