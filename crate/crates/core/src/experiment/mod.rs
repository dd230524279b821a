//! Experiment orchestration: single runs with on-disk artifacts, sweeps over
//! the (setting x strategy x fold x seed) matrix, aggregation with paired
//! t-tests, and figure-ready data bundles.

pub mod analyze;
pub mod config;
pub mod run;
pub mod stats;
pub mod sweep;

pub use analyze::{
    build_table, compare_policies, compare_settings, significance, write_accuracy_bars,
    write_pvalues_csv, write_run_rows, write_similarity_bars, write_similarity_curve, CellStats,
    Comparison, ResultTable, SignificanceReport, SimilarityBar,
};
pub use config::{
    desk_run, full_run, CellConfig, CheckpointConfig, PresetLabel, RunConfig, SettingName,
    SweepConfig,
};
pub use run::{collect_rows, evaluate_population, execute_run, RunManifest, RunResult, RunRow};
pub use stats::{paired_ttest, PairedTTest};
pub use sweep::{execute_sweep, CellSummary, SweepReport};
