//! Dataset ingestion and splitting, experiment orchestration, and result persistence.

pub mod data;
mod experiment;
mod report;

pub use data::{
    generate_synthetic, largest_remainder, load_csv_dataset, split_dataset, stratified_counts, CsvOptions, Dataset,
    LabelColumn, Partition, RejectedRow, SplitDataset, SplitSpec, SyntheticSpec,
};
pub use experiment::{
    apply_overrides, apply_set, config_field_names, load_run_files, read_run_file, run_experiment, run_file_path,
    split_seed, write_atomic, ExperimentOutcome, ExperimentSpec, RunFailure, RunFile, StatsSpec,
};
pub use report::{
    baseline_index, build_report, compare_metric, fmt_f64, metric_names, metric_orientation, metric_value,
    model_order, score_matrix, ExperimentReport, IntervalSpec, MetricSummary, WtlRow, CONVERGENCE_METRICS,
    GENERALIZATION_METRICS, INTERVALS, SERIES_LEN,
};
