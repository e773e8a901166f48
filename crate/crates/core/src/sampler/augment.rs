//! Weak (scale + jitter) and strong (permute sub-series + jitter) views.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub weak_scale_ratio: f64,
    pub strong_jitter_ratio: f64,
    pub max_subseries: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            weak_scale_ratio: 0.001,
            strong_jitter_ratio: 0.001,
            max_subseries: 5,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weak_scale_ratio > 0.0 && self.strong_jitter_ratio > 0.0) {
            return Err(Error::Config("augmentation ratios must be > 0".into()));
        }
        if self.max_subseries < 2 {
            return Err(Error::Config("max_subseries must be ≥ 2".into()));
        }
        Ok(())
    }
}

fn gaussian(std: f64, rng: &mut SeededRng) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        Normal::new(0.0, std).expect("finite std").sample(rng)
    }
}

/// Weak view plus the scale factor that produced it.
pub fn weak_augment_parts(seg: &Tensor, cfg: &AugmentConfig, rng: &mut SeededRng) -> (Tensor, f64) {
    let scale = 1.0 + gaussian(cfg.weak_scale_ratio, rng);
    let mut out = seg.clone();
    for v in out.data_mut() {
        *v = *v * scale + gaussian(cfg.weak_scale_ratio, rng);
    }
    (out, scale)
}

/// `seg·s + ε` with one `s ~ N(1, r)` for the whole segment and
/// `ε ~ N(0, r)` per entry.
pub fn weak_augment(seg: &Tensor, cfg: &AugmentConfig, rng: &mut SeededRng) -> Tensor {
    weak_augment_parts(seg, cfg, rng).0
}

/// How a strong view rearranges time: cut points and block order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrongPlan {
    /// Strictly increasing interior cut points; block `i` spans
    /// `bounds[i]..bounds[i+1]` of `[0, cuts..., T]`.
    pub cuts: Vec<usize>,
    pub order: Vec<usize>,
}

impl StrongPlan {
    pub fn blocks(&self) -> usize {
        self.cuts.len() + 1
    }

    /// Applies the block permutation to a `[T, m]` segment.
    pub fn apply(&self, seg: &Tensor) -> Tensor {
        let t = seg.rows();
        let mut bounds = Vec::with_capacity(self.cuts.len() + 2);
        bounds.push(0);
        bounds.extend_from_slice(&self.cuts);
        bounds.push(t);
        let c = seg.cols();
        let mut data = Vec::with_capacity(seg.len());
        for &b in &self.order {
            data.extend_from_slice(&seg.data()[bounds[b] * c..bounds[b + 1] * c]);
        }
        Tensor::new(seg.shape().to_vec(), data).expect("same size")
    }
}

/// Draws `k` contiguous blocks (uniform in `2..=max_subseries`, or `k` when
/// forced; capped at `t`) and a random order for them.
pub fn sample_strong_plan(t: usize, cfg: &AugmentConfig, forced_k: Option<usize>, rng: &mut SeededRng) -> StrongPlan {
    let upper = cfg.max_subseries.min(t).max(1);
    let k = match forced_k {
        Some(k) => k.clamp(1, t.max(1)),
        None if upper >= 2 => rng.random_range(2..=upper),
        None => 1,
    };
    let mut cuts: Vec<usize> = if k > 1 {
        index::sample(rng, t - 1, k - 1).into_iter().map(|i| i + 1).collect()
    } else {
        Vec::new()
    };
    cuts.sort_unstable();
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    StrongPlan { cuts, order }
}

/// Strong view with an explicit block count (`None` draws it).
pub fn strong_augment_with(
    seg: &Tensor,
    cfg: &AugmentConfig,
    forced_k: Option<usize>,
    rng: &mut SeededRng,
) -> Tensor {
    let plan = sample_strong_plan(seg.rows(), cfg, forced_k, rng);
    let mut out = plan.apply(seg);
    for v in out.data_mut() {
        *v += gaussian(cfg.strong_jitter_ratio, rng);
    }
    out
}

/// Splits into 2..=`max_subseries` blocks, permutes them and adds jitter.
pub fn strong_augment(seg: &Tensor, cfg: &AugmentConfig, rng: &mut SeededRng) -> Tensor {
    strong_augment_with(seg, cfg, None, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn seg(t: usize, m: usize) -> Tensor {
        Tensor::matrix(t, m, (0..t * m).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap()
    }

    fn zero_noise() -> AugmentConfig {
        AugmentConfig {
            weak_scale_ratio: 0.0,
            strong_jitter_ratio: 0.0,
            max_subseries: 5,
        }
    }

    #[test]
    fn zero_noise_weak_is_identity() {
        let x = seg(10, 2);
        assert_eq!(weak_augment(&x, &zero_noise(), &mut seeded(0)), x);
        let y = weak_augment(&x, &AugmentConfig::default(), &mut seeded(0));
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn single_block_without_jitter_is_identity() {
        let x = seg(12, 3);
        assert_eq!(strong_augment_with(&x, &zero_noise(), Some(1), &mut seeded(2)), x);
    }

    #[test]
    fn strong_without_jitter_preserves_values() {
        let x = seg(40, 2);
        let y = strong_augment(&x, &zero_noise(), &mut seeded(5));
        let mut a = x.data().to_vec();
        let mut b = y.data().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn block_count_capped_by_length() {
        let cfg = AugmentConfig::default();
        let mut rng = seeded(0);
        for t in 1..6 {
            let p = sample_strong_plan(t, &cfg, None, &mut rng);
            assert!(p.blocks() <= t.max(1));
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(zero_noise().validate().is_err());
        let cfg = AugmentConfig {
            max_subseries: 1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(AugmentConfig::default().validate().is_ok());
    }
}
