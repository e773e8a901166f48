//! Evaluation of frozen representations: classification probes, ridge
//! forecasting and masking-based anomaly detection.

mod anomaly;
mod classify;
mod forecast;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::Dataset;
use crate::encoder::{encode_batch, instance_repr, EncoderParams, MaskConfig};
use crate::error::{Error, Result};
use crate::rng::seeded;

pub use anomaly::{anomaly_scores, detect, score_window, AnomalyConfig, Detection, Prf};
pub use classify::{
    eval_classification, eval_classification_with, fit_probe, ClassifierProbe, ProbeConfig, ProbeKind, C_GRID,
};
pub use forecast::{
    eval_forecast, ridge_fit, window_reps, ForecastConfig, ForecastReport, RidgeModel, DEFAULT_RIDGE_GRID,
};

/// Rows per stacked encoder pass.
pub(crate) const ENCODE_CHUNK: usize = 32;

/// Instance-level representations `[N, K]`: unmasked encoding followed by
/// a max over time.
pub fn encode_dataset(ds: &Dataset, params: &EncoderParams) -> Result<Tensor> {
    if ds.dims() != params.input_dims && !ds.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dims,
            found: ds.dims(),
        });
    }
    let k = params.repr_dims();
    let mut data = Vec::with_capacity(ds.len() * k);
    // an unmasked pass draws no random numbers
    let mut rng = seeded(0);
    for chunk in ds.instances.chunks(ENCODE_CHUNK) {
        let segs: Vec<&Tensor> = chunk.iter().map(|i| &i.values).collect();
        for r in encode_batch(&segs, params, &MaskConfig::none(), &mut rng)? {
            data.extend_from_slice(instance_repr(&r)?.data());
        }
    }
    Tensor::matrix(ds.len(), k, data)
}

/// Structured metrics file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: String,
    pub dataset: String,
    pub fingerprint: String,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(task: &str, dataset: &str, fingerprint: &str) -> Self {
        Self {
            task: task.into(),
            dataset: dataset.into(),
            fingerprint: fingerprint.into(),
            metrics: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.into(), value);
        self
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}
