//! Anomaly scores from the effect of masking the latest timestamp.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};

use super::forecast::encode_last;
use super::ENCODE_CHUNK;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnomalyConfig {
    /// Threshold multiplier on the calibration standard deviation.
    pub beta: f64,
    /// Leading share of the scores used to fit the threshold.
    pub calibration_fraction: f64,
    /// Trailing timestamps encoded for each scored point.
    pub context: usize,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        Self {
            beta: 3.0,
            calibration_fraction: 0.5,
            context: 128,
        }
    }
}

impl AnomalyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config("anomaly beta must be positive".into()));
        }
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) {
            return Err(Error::Config("calibration_fraction must lie in (0, 1)".into()));
        }
        if self.context < 2 {
            return Err(Error::Config("anomaly context must be ≥ 2".into()));
        }
        Ok(())
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Scores windows by encoding each twice in one pass (unmasked, then with
/// its last timestamp masked).
fn score_batch(windows: &[Tensor], params: &EncoderParams) -> Result<Vec<f64>> {
    let mut refs: Vec<&Tensor> = windows.iter().collect();
    refs.extend(windows.iter());
    let total: usize = windows.iter().map(|w| w.rows()).sum();
    let mut mask = vec![false; 2 * total];
    let mut end = total;
    for w in windows {
        end += w.rows();
        mask[end - 1] = true;
    }
    let last = encode_last(&refs, params, Some(&mask))?;
    let n = windows.len();
    Ok((0..n).map(|i| l1(last.row(i), last.row(n + i))).collect())
}

/// L1 distance between the last-timestamp representations of `window`
/// with and without masking that timestamp.
pub fn score_window(window: &Tensor, params: &EncoderParams) -> Result<f64> {
    if window.rows() < 2 {
        return Err(Error::Data("anomaly window must span at least two timestamps".into()));
    }
    Ok(score_batch(std::slice::from_ref(window), params)?[0])
}

/// Score per timestamp of an (already normalized) `[T, m]` series; the
/// window for `t` is `[max(0, t−C+1), t]` and `score[0] = 0`.
pub fn anomaly_scores(series: &Tensor, params: &EncoderParams, cfg: &AnomalyConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if series.cols() != params.input_dims {
        return Err(Error::DimensionMismatch {
            expected: params.input_dims,
            found: series.cols(),
        });
    }
    let t = series.rows();
    let mut scores = Vec::with_capacity(t);
    if t > 0 {
        scores.push(0.0);
    }
    let ends: Vec<usize> = (1..t).collect();
    for chunk in ends.chunks(ENCODE_CHUNK / 2) {
        let windows: Vec<Tensor> = chunk
            .iter()
            .map(|&e| {
                let start = (e + 1).saturating_sub(cfg.context);
                series.slice_rows(start, e + 1 - start)
            })
            .collect();
        scores.extend(score_batch(&windows, params)?);
    }
    Ok(scores)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Point-wise metrics; undefined ratios are reported as 0.
    pub fn from_flags(flags: &[bool], labels: &[bool]) -> Result<Self> {
        if flags.len() != labels.len() {
            return Err(Error::Shape(format!("{} flags for {} labels", flags.len(), labels.len())));
        }
        let tp = flags.iter().zip(labels).filter(|(f, l)| **f && **l).count() as f64;
        let flagged = flags.iter().filter(|f| **f).count() as f64;
        let positive = labels.iter().filter(|l| **l).count() as f64;
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        let precision = ratio(tp, flagged);
        let recall = ratio(tp, positive);
        Ok(Self {
            precision,
            recall,
            f1: ratio(2.0 * precision * recall, precision + recall),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub threshold: f64,
    /// Number of leading scores used for calibration.
    pub calibration_len: usize,
    pub flags: Vec<bool>,
    /// Metrics over the timestamps after the calibration prefix.
    pub metrics: Option<Prf>,
}

/// Thresholds scores at `mean + β·std` of the calibration prefix and, when
/// labels are given, scores the flags after that prefix.
pub fn detect(scores: &[f64], labels: Option<&[bool]>, cfg: &AnomalyConfig) -> Result<Detection> {
    cfg.validate()?;
    let cal = ((scores.len() as f64) * cfg.calibration_fraction).round() as usize;
    if cal == 0 {
        return Err(Error::Data("empty calibration split".into()));
    }
    let calib = &scores[..cal];
    let mean = calib.iter().sum::<f64>() / cal as f64;
    let var = calib.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / cal as f64;
    let threshold = mean + cfg.beta * var.sqrt();
    let flags: Vec<bool> = scores.iter().map(|&s| s > threshold).collect();
    let metrics = match labels {
        Some(l) => {
            if l.len() != scores.len() {
                return Err(Error::Shape(format!("{} labels for {} scores", l.len(), scores.len())));
            }
            Some(Prf::from_flags(&flags[cal..], &l[cal..])?)
        }
        None => None,
    };
    Ok(Detection {
        threshold,
        calibration_len: cal,
        flags,
        metrics,
    })
}
