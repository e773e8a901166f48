//! Temporal neighborhoods and non-neighbor sampling.
//!
//! The neighborhood of an overlap `[a2, b1]` at scale `η` is the window of
//! half-width `η·(b1 − a2)` around its center. It is widened while every
//! variable still passes the ADF stationarity criterion. Non-neighbor
//! windows have the overlap's length and a center farther than
//! `3·⌈√(η·(b1 − a2))⌉` from the overlap center.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adf::{adf_test, default_max_lag};
use super::crop::CropSpec;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Windows shorter than this are never considered stationary.
pub const MIN_ADF_WINDOW: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeighborhoodConfig {
    pub eta_max: usize,
    pub p_threshold: f64,
    /// Fixed ADF lag; `None` uses the capped Schwert rule per window.
    pub max_lag: Option<usize>,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        Self {
            eta_max: 3,
            p_threshold: 0.05,
            max_lag: None,
        }
    }
}

impl NeighborhoodConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta_max == 0 {
            return Err(Error::Config("eta_max must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_threshold) {
            return Err(Error::Config("p_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorChoice {
    FirstCrop,
    SecondCrop,
}

impl AnchorChoice {
    /// The crop whose center lies farther from the non-neighbor center;
    /// ties go to the first crop. Centers are passed doubled to stay integral.
    pub fn farther(first_center2: usize, second_center2: usize, other_center2: usize) -> Self {
        if first_center2.abs_diff(other_center2) >= second_center2.abs_diff(other_center2) {
            AnchorChoice::FirstCrop
        } else {
            AnchorChoice::SecondCrop
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodSpec {
    pub eta: usize,
    /// Non-neighbor window `[a3, b3]`, 1-based inclusive.
    pub a3: usize,
    pub b3: usize,
    pub anchor: AnchorChoice,
    /// No admissible center existed; the farthest feasible one was used.
    pub degraded: bool,
}

/// `3·⌈√(η·span)⌉` with `span = b1 − a2`.
pub fn exclusion_radius(eta: usize, span: usize) -> usize {
    3 * ((eta * span) as f64).sqrt().ceil() as usize
}

/// Window `[lo, hi]` (1-based inclusive) of the neighborhood at scale `eta`.
pub fn neighborhood_window(crop: &CropSpec, eta: usize, t: usize) -> (usize, usize) {
    let span = (crop.b1 - crop.a2) as f64;
    let center = (crop.a2 + crop.b1) as f64 / 2.0;
    let half = eta as f64 * span;
    let lo = ((center - half).floor() as isize).max(1) as usize;
    let hi = ((center + half).ceil() as usize).min(t);
    (lo, hi)
}

/// True when every variable of `x` restricted to `[lo, hi]` passes ADF.
pub fn window_is_stationary(x: &Tensor, lo: usize, hi: usize, cfg: &NeighborhoodConfig) -> bool {
    let n = hi + 1 - lo;
    if n < MIN_ADF_WINDOW {
        return false;
    }
    let lag = cfg.max_lag.unwrap_or_else(|| default_max_lag(n));
    (0..x.cols()).all(|j| {
        let col: Vec<f64> = (lo - 1..hi).map(|r| x.get(r, j)).collect();
        matches!(adf_test(&col, lag), Ok(r) if r.p_value <= cfg.p_threshold)
    })
}

/// Widens the neighborhood from `η = 1` while it stays stationary and
/// returns the last passing `η` (or 1 when even `η = 1` fails).
pub fn find_neighborhood(x: &Tensor, crop: &CropSpec, cfg: &NeighborhoodConfig) -> usize {
    let t = x.rows();
    let passes = |eta: usize| {
        let (lo, hi) = neighborhood_window(crop, eta, t);
        window_is_stationary(x, lo, hi, cfg)
    };
    if !passes(1) {
        return 1;
    }
    let mut eta = 1;
    while eta < cfg.eta_max && passes(eta + 1) {
        eta += 1;
    }
    eta
}

/// Samples a non-neighbor window for the overlap of `crop` in a series of
/// length `t`, uniformly among admissible positions.
pub fn sample_non_neighbor(
    t: usize,
    crop: &CropSpec,
    eta: usize,
    rng: &mut SeededRng,
) -> Result<NeighborhoodSpec> {
    crop.check(t)?;
    let span = crop.b1 - crop.a2;
    let radius2 = 2 * exclusion_radius(eta, span);
    let overlap2 = crop.a2 + crop.b1;
    let last_start = t - span;
    let center2 = |a3: usize| 2 * a3 + span;
    let admissible: Vec<usize> = (1..=last_start)
        .filter(|&a3| center2(a3).abs_diff(overlap2) > radius2)
        .collect();
    let (a3, degraded) = if admissible.is_empty() {
        // first start maximizing the distance from the overlap center
        let best = (1..=last_start)
            .max_by_key(|&a3| (center2(a3).abs_diff(overlap2), std::cmp::Reverse(a3)))
            .ok_or_else(|| Error::Sampling("empty series".into()))?;
        (best, true)
    } else {
        (admissible[rng.random_range(0..admissible.len())], false)
    };
    let b3 = a3 + span;
    let anchor = AnchorChoice::farther(crop.a1 + crop.b1, crop.a2 + crop.b2, center2(a3));
    Ok(NeighborhoodSpec {
        eta,
        a3,
        b3,
        anchor,
        degraded,
    })
}
