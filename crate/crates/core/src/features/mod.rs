//! Sensor ingestion, five-minute windowing, feature statistics, labelling and
//! per-participant matrix preprocessing.

mod cohort;
mod label;
mod matrix;
mod preprocess;
mod record;
mod stats;
mod synthetic;
mod window;

pub use cohort::{build_matrices, load_cohort_dir, write_study_dir, COVERAGE_FILE, EVENTS_FILE, SENSORS_FILE};
pub use label::{label_windows, CoverageSpan, UseEvent};
pub use matrix::{matrices_from_frames, FeatureMatrix, Label, PreprocessStep, DroppedFeature, NormalizationParam};
pub use preprocess::{preprocess, PreprocessConfig, DEFAULT_CORR_THRESHOLD};
pub use record::{read_records_csv, write_records_csv, SensorRecord, Stream, StreamValue};
pub use stats::{excess_kurtosis, mean, median, pearson, population_std, quantile};
pub use synthetic::{
    generate_synthetic_cohort, generate_synthetic_study, read_events_csv, write_events_csv, CohortConfig,
    SyntheticStudy,
};
pub use window::{extract_features, segment_windows, WindowBucket, WindowFrame, FEATURE_NAMES, WINDOW_SECONDS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("non-finite timestamp {timestamp} for participant {participant_id}")]
    NonFiniteTimestamp { participant_id: String, timestamp: f64 },
    #[error("invalid sensor record: {0}")]
    InvalidRecord(String),
    #[error("window length must be positive, got {0}")]
    InvalidWindow(f64),
    #[error("event references participant {0} with no frames")]
    UnknownParticipant(String),
    #[error("malformed event interval [{start}, {end}) for participant {participant_id}")]
    MalformedEvent { participant_id: String, start: f64, end: f64 },
    #[error("column {0} has no observed values")]
    AllMissingColumn(String),
    #[error("feature matrix is empty")]
    EmptyMatrix,
    #[error("feature matrix is not rectangular: row {row} has {len} cells, expected {expected}")]
    Ragged { row: usize, len: usize, expected: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FeatureError>;
