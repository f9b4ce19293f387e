//! Tabular cohort handling: schema, ingestion, cleaning, categorical coding,
//! standardization and train/test splitting.

mod cohort;
mod scale;
mod schema;
mod split;

pub use cohort::{drop_incomplete, encode_categoricals, load_csv, read_csv, Cohort};
pub use scale::{apply_scaler, fit_scaler, FeatureStats, ScalerStats};
pub use schema::{
    Column, ColumnKind, FeatureSchema, LABEL_COLUMN, REFERENCE_SELECTION,
};
pub use split::{split, split_positions, train_size, SplitPair};
