use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

const MAX_ATTEMPTS: usize = 100;

/// Two overlapping windows `[a1, b1]` and `[a2, b2]` (1-based, inclusive)
/// with `0 < a1 ≤ a2 ≤ b1 ≤ b2 ≤ T`. The overlap is `[a2, b1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropSpec {
    pub a1: usize,
    pub b1: usize,
    pub a2: usize,
    pub b2: usize,
}

impl CropSpec {
    pub fn new(a1: usize, b1: usize, a2: usize, b2: usize, t: usize) -> Result<Self> {
        let c = Self { a1, b1, a2, b2 };
        c.check(t)?;
        Ok(c)
    }

    /// Checks the ordering invariant against a series of length `t`.
    pub fn check(&self, t: usize) -> Result<()> {
        if 0 < self.a1 && self.a1 <= self.a2 && self.a2 <= self.b1 && self.b1 <= self.b2 && self.b2 <= t {
            Ok(())
        } else {
            Err(Error::Sampling(format!("invalid crop {self:?} for T={t}")))
        }
    }

    pub fn first_len(&self) -> usize {
        self.b1 - self.a1 + 1
    }

    pub fn second_len(&self) -> usize {
        self.b2 - self.a2 + 1
    }

    /// Number of timestamps in `[a2, b1]`.
    pub fn overlap_len(&self) -> usize {
        self.b1 - self.a2 + 1
    }

    /// Offset of the overlap inside the first window.
    pub fn overlap_offset_in_first(&self) -> usize {
        self.a2 - self.a1
    }

    /// Moves all four indices by `offset`.
    pub fn shifted(&self, offset: isize) -> Self {
        let mv = |v: usize| (v as isize + offset) as usize;
        Self {
            a1: mv(self.a1),
            b1: mv(self.b1),
            a2: mv(self.a2),
            b2: mv(self.b2),
        }
    }
}

/// Longest crop allowed for a series of length `t` at ratio `l`.
pub fn max_crop_len(t: usize, l: f64) -> usize {
    ((t as f64 * l).ceil() as usize).min(t)
}

/// Samples an overlapping crop pair for a series of length `t`.
///
/// Both lengths are drawn uniformly from `[2, ⌈T·l⌉]`; the first window is
/// placed uniformly and the second uniformly among positions that keep
/// the ordering `a1 ≤ a2 ≤ b1 ≤ b2 ≤ T`.
pub fn crop_pair(t: usize, l: f64, rng: &mut SeededRng) -> Result<CropSpec> {
    if !(0.0..=1.0).contains(&l) {
        return Err(Error::Sampling(format!("crop ratio {l} outside [0, 1]")));
    }
    let cap = max_crop_len(t, l);
    if t < 4 || cap < 2 {
        return Err(Error::Sampling(format!(
            "cannot crop overlapping windows from T={t} with l={l}"
        )));
    }
    for _ in 0..MAX_ATTEMPTS {
        let len1 = rng.random_range(2..=cap);
        let len2 = rng.random_range(2..=cap);
        let a1 = rng.random_range(1..=t - len1 + 1);
        let b1 = a1 + len1 - 1;
        let lo = a1.max((b1 + 1).saturating_sub(len2));
        let hi = b1.min(t + 1 - len2);
        if lo > hi {
            continue;
        }
        let a2 = rng.random_range(lo..=hi);
        let spec = CropSpec {
            a1,
            b1,
            a2,
            b2: a2 + len2 - 1,
        };
        debug_assert!(spec.check(t).is_ok());
        return Ok(spec);
    }
    Err(Error::Sampling(format!(
        "no feasible crop for T={t}, l={l} after {MAX_ATTEMPTS} attempts"
    )))
}
