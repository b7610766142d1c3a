//! Benchmark ingestion: CSV loading, chronological splits, dataset-level
//! standardization, sliding windows and minibatches.

mod scaler;
mod split;
mod synthetic;
mod table;
mod window;

pub use scaler::{fit_apply_scaler, ScalerStats};
pub use split::{make_splits, IndexRange, SplitConvention, SplitSpec};
pub use synthetic::sinusoid_table;
pub use table::{load_dataset, DatasetTable};
pub use window::{
    few_shot_subset, windowize, BatchOrder, WindowBatch, WindowMode, WindowSet,
};
