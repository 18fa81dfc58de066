//! Cohort representation, CSV ingestion and the preprocessing pipeline.

mod cohort;
mod csv_io;
mod preprocess;

pub use cohort::{CategoricalColumn, Cohort, ColumnKind, ColumnMeta, Dtype};
pub use csv_io::{load_cohort, write_cohort, write_sidecar, ColumnOverride, Schema};
pub use preprocess::{
    cap_features_by_frequency, expand_categoricals, filter_low_variance, impute_missing,
    normalize_continuous, population_variance, CategoricalLevels, ImputePolicy, ImputeStats,
    NormStats, PreprocessConfig, Preprocessor, DEFAULT_MAX_LEVELS,
};
