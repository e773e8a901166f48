//! Self-supervised representation learning for multivariate time series.
//!
//! A dilated convolutional encoder is pretrained with three complementary
//! objectives (hierarchical contextual contrast, stationarity-aware temporal
//! neighborhoods and augmentation-based transformation consistency) whose
//! losses are balanced by learned uncertainty weights. The resulting
//! per-timestamp representations feed classification, forecasting and
//! anomaly-detection probes.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod downstream;
pub mod encoder;
pub mod error;
pub mod heads;
pub mod losses;
pub mod optim;
pub mod rng;
pub mod sampler;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
