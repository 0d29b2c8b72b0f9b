//! Experiment plumbing: configuration, comparison baselines, seeded runs,
//! persisted records and aggregation.
//!
//! A results file holds one JSON object per line: a `run` record for every
//! seed, each carrying the full config, followed by one `aggregate` record.
//! Wall-clock times go to a `.timing.json` sidecar instead, so rerunning a
//! config with the same seeds rewrites the results file byte for byte.

mod baselines;
mod config;
mod ntk_report;
mod run;
mod summary;

pub use baselines::{MarginRule, RandomRule};
pub use config::{
    Algorithm, DataSettings, DataSource, ExperimentConfig, NetSettings, NetSettingsBuilder,
    PoolSettings,
};
pub use ntk_report::{ntk_report, NtkRecord, NtkSettings};
pub use run::{
    derive_seed, read_records, results_path, run_experiment, run_seed, split_data,
    ExperimentOutcome, Record, RoundDetail, RunMetrics, RunRecord,
};
pub use summary::{
    metrics_summary, render_table, series_rows, summarise_groups, write_series_csv, LabelPoint,
    RegretPoint, SeriesRow, Stat, Summary,
};
