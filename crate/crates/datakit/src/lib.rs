//! Data plumbing around the forecasting core: CSV datasets, synthetic
//! benchmarks, the smoothing baseline and flat report documents.

pub mod baseline;
pub mod dataset;
pub mod report;
pub mod synthetic;

pub use baseline::{baseline_exs, DEFAULT_SMOOTHING};
pub use dataset::{load_dataset, save_forecast, save_matrix, Dataset, DatasetError};
pub use report::{render_table, Report};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
