//! Dual-branch forecasting of multivariate time series with a frozen
//! language-model text branch and balanced cross-modal alignment.

pub mod alignment;
pub mod bench;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod model;
pub mod params;
pub mod text;
pub mod train;
pub mod ts_branch;

pub use error::{Error, Result};
pub use model::{Forecaster, ModelConfig};
