//! Frequency-domain detection of structural breaks in multivariate time series.
//!
//! Compares local periodograms to the left and right of each candidate time,
//! tests for any break with an AR-sieve bootstrap, and localizes breaks with
//! data-driven thresholds. The numeric core is generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix the common choice.

pub mod ar;
pub mod detect;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod series;
pub mod sim;
pub mod spectral;

pub use ar::{aic_order, autocovariances, yule_walker, ARModel, AutocovarianceSeq};
pub use detect::{bootstrap_test, detect, full_pipeline, select_window, BreakReport, PipelineConfig, TestResult};
pub use error::{Error, Result};
pub use experiments::{run_experiment, ExperimentConfig, McResult, ModelSpec, Study};
pub use scalar::Scalar;
pub use series::TimeSeries;
pub use sim::ProcessModel;
pub use spectral::{d_grid, limit_kernel, local_periodogram, sup_statistic, DGrid, SupProfile};

pub type TimeSeriesF64 = TimeSeries<f64>;
pub type TimeSeriesF32 = TimeSeries<f32>;
pub type ARModelF64 = ARModel<f64>;
pub type ARModelF32 = ARModel<f32>;
pub type ProcessModelF64 = ProcessModel<f64>;
pub type ProcessModelF32 = ProcessModel<f32>;
pub type DGridF64 = DGrid<f64>;
pub type DGridF32 = DGrid<f32>;
pub type SupProfileF64 = SupProfile<f64>;
pub type SupProfileF32 = SupProfile<f32>;
pub type TestResultF64 = TestResult<f64>;
pub type TestResultF32 = TestResult<f32>;
