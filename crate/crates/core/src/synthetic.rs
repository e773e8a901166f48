//! Seeded synthetic datasets: multi-class sinusoids, AR(1) processes and
//! sinusoids with injected spikes.

use std::f64::consts::TAU;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::{Dataset, Labels, TimeSeriesInstance};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SinusoidClassConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub length: usize,
    pub dims: usize,
    /// Cycles per series for each class.
    pub frequencies: Vec<f64>,
    /// Standard deviation of additive Gaussian noise (unit amplitude signal).
    pub noise: f64,
    pub seed: u64,
}

impl Default for SinusoidClassConfig {
    fn default() -> Self {
        Self {
            n_train: 300,
            n_test: 300,
            length: 128,
            dims: 3,
            frequencies: vec![4.0, 4.5, 5.0],
            noise: 0.3,
            seed: 0,
        }
    }
}

/// Train and test splits of sinusoids whose class is their frequency.
///
/// Each variable of each instance gets its own random phase; classes are
/// assigned round-robin so both splits are balanced.
pub fn sinusoid_classes(cfg: &SinusoidClassConfig) -> Result<(Dataset, Dataset)> {
    if cfg.frequencies.len() < 2 || cfg.length < 2 || cfg.dims == 0 || cfg.noise < 0.0 {
        return Err(Error::Config("invalid sinusoid dataset parameters".into()));
    }
    let mut rng = stream_rng(cfg.seed, Stream::Synthetic);
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut make = |n: usize, id0: usize| -> Result<Dataset> {
        let mut instances = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % cfg.frequencies.len();
            let f = cfg.frequencies[class];
            let phases: Vec<f64> = (0..cfg.dims).map(|_| rng.random_range(0.0..TAU)).collect();
            let mut data = Vec::with_capacity(cfg.length * cfg.dims);
            for t in 0..cfg.length {
                for phase in &phases {
                    let x = (TAU * f * t as f64 / cfg.length as f64 + phase).sin();
                    data.push(x + noise.sample(&mut rng));
                }
            }
            instances.push(TimeSeriesInstance {
                id: (id0 + i) as i64,
                values: Tensor::matrix(cfg.length, cfg.dims, data)?,
            });
            labels.push(class as i64);
        }
        Dataset::new(instances, Labels::Class(labels))
    };
    let train = make(cfg.n_train, 0)?;
    let test = make(cfg.n_test, cfg.n_train)?;
    Ok((train, test))
}

/// `x_t = φ·x_{t−1} + ε_t`, `ε ~ N(0, 1)`, started from the stationary law.
pub fn ar1(length: usize, phi: f64, seed: u64) -> Result<Tensor> {
    if !(phi.abs() < 1.0) || length == 0 {
        return Err(Error::Config("AR(1) needs |phi| < 1 and length ≥ 1".into()));
    }
    let mut rng = stream_rng(seed, Stream::Synthetic);
    let mut x: f64 = StandardNormal.sample(&mut rng);
    x /= (1.0 - phi * phi).sqrt();
    let mut data = Vec::with_capacity(length);
    for _ in 0..length {
        data.push(x);
        let e: f64 = StandardNormal.sample(&mut rng);
        x = phi * x + e;
    }
    Tensor::matrix(length, 1, data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpikeConfig {
    pub length: usize,
    pub spikes: usize,
    pub period: f64,
    pub noise: f64,
    /// Absolute spike height; the sign is random.
    pub magnitude: f64,
    /// Spikes are placed only after this many clean timestamps.
    pub clean_prefix: usize,
    /// Minimum distance between spikes.
    pub min_gap: usize,
    pub seed: u64,
}

impl Default for SpikeConfig {
    fn default() -> Self {
        Self {
            length: 2000,
            spikes: 20,
            period: 50.0,
            noise: 0.05,
            magnitude: 4.0,
            clean_prefix: 1000,
            min_gap: 20,
            seed: 0,
        }
    }
}

/// A noisy sinusoid with isolated point spikes and its per-timestamp labels.
pub fn spiky_sinusoid(cfg: &SpikeConfig) -> Result<(Tensor, Vec<bool>)> {
    let free = cfg.length.saturating_sub(cfg.clean_prefix);
    let slots = free / cfg.min_gap.max(1);
    if cfg.spikes > slots || cfg.period <= 0.0 || cfg.noise < 0.0 {
        return Err(Error::Config(format!(
            "cannot place {} spikes with gap {} after {} of {} timestamps",
            cfg.spikes, cfg.min_gap, cfg.clean_prefix, cfg.length
        )));
    }
    let mut rng = stream_rng(cfg.seed, Stream::Synthetic);
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut data: Vec<f64> = (0..cfg.length)
        .map(|t| (TAU * t as f64 / cfg.period).sin() + noise.sample(&mut rng))
        .collect();
    let mut labels = vec![false; cfg.length];
    let gap = cfg.min_gap.max(1);
    for slot in index::sample(&mut rng, slots, cfg.spikes) {
        let jitter = rng.random_range(0..gap.div_ceil(2));
        let t = cfg.clean_prefix + slot * gap + gap / 4 + jitter;
        let t = t.min(cfg.length - 1);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        data[t] += sign * cfg.magnitude;
        labels[t] = true;
    }
    Ok((Tensor::matrix(cfg.length, 1, data)?, labels))
}

/// Cuts a long `[T, m]` series into consecutive windows of `window` rows
/// (the remainder is dropped when shorter than `min_tail`).
pub fn split_windows(series: &Tensor, window: usize, min_tail: usize) -> Result<Dataset> {
    if window < 2 {
        return Err(Error::Config("window must be ≥ 2".into()));
    }
    let t = series.rows();
    let mut instances = Vec::new();
    let mut start = 0;
    while start < t {
        let len = window.min(t - start);
        if len < window && len < min_tail.max(2) {
            break;
        }
        instances.push(TimeSeriesInstance {
            id: instances.len() as i64,
            values: series.slice_rows(start, len),
        });
        start += len;
    }
    if instances.is_empty() {
        return Err(Error::Data(format!("series of length {t} yields no window of {window}")));
    }
    Dataset::new(instances, Labels::None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_shapes_and_balance() {
        let cfg = SinusoidClassConfig {
            n_train: 30,
            n_test: 12,
            ..Default::default()
        };
        let (train, test) = sinusoid_classes(&cfg).unwrap();
        assert_eq!(train.len(), 30);
        assert_eq!(test.len(), 12);
        assert!(train.instances.iter().all(|i| i.values.shape() == [128, 3]));
        let labels = train.class_labels().unwrap();
        assert_eq!(labels.iter().filter(|&&c| c == 2).count(), 10);
        let (again, _) = sinusoid_classes(&cfg).unwrap();
        assert_eq!(again, train);
    }

    #[test]
    fn ar1_lag_one_correlation() {
        let x = ar1(20000, 0.9, 1).unwrap();
        let d = x.data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var: f64 = d.iter().map(|v| (v - mean).powi(2)).sum();
        let cov: f64 = d.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        assert!((cov / var - 0.9).abs() < 0.02);
    }

    #[test]
    fn spikes_are_placed_after_prefix() {
        let (x, labels) = spiky_sinusoid(&SpikeConfig::default()).unwrap();
        assert_eq!(x.rows(), 2000);
        assert_eq!(labels.iter().filter(|&&l| l).count(), 20);
        assert!(labels[..1000].iter().all(|&l| !l));
        for (t, _) in labels.iter().enumerate().filter(|(_, &l)| l) {
            assert!(x.get(t, 0).abs() > 2.5);
        }
    }

    #[test]
    fn windows_cover_the_series() {
        let x = Tensor::matrix(10, 1, (0..10).map(f64::from).collect()).unwrap();
        let ds = split_windows(&x, 4, 2).unwrap();
        let lens: Vec<usize> = ds.instances.iter().map(|i| i.len()).collect();
        assert_eq!(lens, vec![4, 4, 2]);
        let ds = split_windows(&x, 4, 3).unwrap();
        assert_eq!(ds.len(), 2);
    }
}
