//! Datasets, calibration inputs, accuracy measurement and run reports.

mod collect;
mod dataset;
mod metrics;
mod report;

pub use collect::{collect_grams, DEFAULT_COLLECT_BATCH};
pub use dataset::{
    load_csv, load_idx, sample_calibration, white_noise, Dataset, Preprocess, SampleCount, Split, Targets,
    IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use metrics::{evaluate, Metrics, DEFAULT_EVAL_BATCH};
pub use report::{
    emit_report, read_report, report_bytes, AccuracyDelta, LayerReport, PruneReport, ReportFormat, Totals,
    CSV_COLUMNS, REPORT_SCHEMA_VERSION,
};
