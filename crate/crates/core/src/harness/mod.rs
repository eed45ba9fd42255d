//! Datasets, experiment configuration, evaluation and report emission.

mod config;
mod dataset;
mod error;
mod experiment;
mod report;

pub use config::{
    CalibrationConfig, DatasetConfig, DefenseConfig, ExperimentConfig, ModelConfig, OrTuning, TransferConfig,
    SCHEMA_VERSION,
};
pub use dataset::{
    blob_means, encode_idx_images, encode_idx_labels, load_mnist_idx, parse_idx_images, parse_idx_labels,
    synth_dataset, Dataset, Provenance, SynthSpec, BLOB_STD, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use error::{HarnessError, IdxError};
pub use experiment::{
    accuracy, calibration_table, defended_accuracy, load_dataset, prepare_model, run_experiment, select_eval_images,
    train_model, transfer_attack_eval, tune_or_sigma, AccuracyRow, AttackRow, CalibrationRow, ExperimentReport,
    ModelSummary, OrTuningRow, Timing, TraceRow, TransferReport,
};
pub use report::{
    accuracy_table, attack_table, calibration_rows_table, emit_report, load_report, success_curve_table, summary_table,
    trace_table, verify_table, write_tables, write_timing, Cell, Format, Table, ATTACK_COLUMNS,
};
