//! Tabular data: loading, schema fitting, encoding and fold splits.

mod batch;
mod folds;
mod registry;
mod schema;
mod table;

pub use batch::{Batch, FieldLayout};
pub use folds::{make_folds, FoldSplit, N_FOLDS};
pub use registry::{DatasetEntry, Registry};
pub use schema::{ColumnKind, ColumnSchema, FeatureSchema};
pub use table::{load_csv, Dataset, LabelSpec, RawColumn};
