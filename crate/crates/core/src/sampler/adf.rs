//! Augmented Dickey-Fuller unit-root test (constant-only regression).
//!
//! Regression: `Δy_t = c + γ·y_{t−1} + Σ_{j=1..p} β_j·Δy_{t−j} + e_t`.
//! The statistic is the t-ratio of `γ`; the p-value follows MacKinnon's
//! (1994) response-surface approximation for the constant-only case.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdfResult {
    pub statistic: f64,
    pub p_value: f64,
    pub lags: usize,
    pub nobs: usize,
    /// The series was constant; `p_value` is 0 and `statistic` is `-inf`.
    pub constant: bool,
}

// MacKinnon (1994) coefficients, constant-only regression, one series.
const TAU_MAX: f64 = 2.74;
const TAU_MIN: f64 = -18.83;
const TAU_STAR: f64 = -1.61;
const TAU_SMALL_P: [f64; 3] = [2.1659, 1.4412, 0.038269];
const TAU_LARGE_P: [f64; 4] = [1.7339, 0.93202, -0.12745, -0.010368];

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Approximate p-value of an ADF statistic.
pub fn mackinnon_p_value(stat: f64) -> f64 {
    if stat.is_nan() {
        return 1.0;
    }
    if stat > TAU_MAX {
        return 1.0;
    }
    if stat < TAU_MIN {
        return 0.0;
    }
    let coefs: &[f64] = if stat <= TAU_STAR {
        &TAU_SMALL_P
    } else {
        &TAU_LARGE_P
    };
    let poly = coefs.iter().rev().fold(0.0, |acc, c| acc * stat + c);
    normal_cdf(poly)
}

/// Schwert's rule `⌊12·(n/100)^{1/4}⌋`.
pub fn schwert_max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Schwert's rule, capped so the regression keeps at least a few degrees
/// of freedom on short windows.
pub fn default_max_lag(n: usize) -> usize {
    schwert_max_lag(n).min(n.saturating_sub(4) / 3)
}

/// ADF test with a fixed number of difference lags.
pub fn adf_test(series: &[f64], max_lag: usize) -> Result<AdfResult> {
    let n = series.len();
    if n <= max_lag + 3 {
        return Err(Error::Numeric(format!(
            "ADF needs more than {} points, got {n}",
            max_lag + 3
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("ADF input is not finite".into()));
    }
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let scale = lo.abs().max(hi.abs()).max(1.0);
    if hi - lo <= 1e-12 * scale {
        return Ok(AdfResult {
            statistic: f64::NEG_INFINITY,
            p_value: 0.0,
            lags: max_lag,
            nobs: 0,
            constant: true,
        });
    }

    let p = max_lag;
    let diff: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let nobs = diff.len() - p;
    let k = p + 2;
    if nobs <= k {
        return Err(Error::Numeric(format!(
            "ADF regression with {k} regressors needs more than {k} observations, got {nobs}"
        )));
    }
    // Row r models diff[p + r]; columns: y level, lagged diffs, constant.
    let x = DMatrix::from_fn(nobs, k, |r, c| {
        let t = p + r;
        match c {
            0 => series[t],
            c if c <= p => diff[t - c],
            _ => 1.0,
        }
    });
    let y = DVector::from_fn(nobs, |r, _| diff[p + r]);

    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= 1e-12 * rmax.max(1e-300)) {
        return Err(Error::Numeric("ADF regression is rank deficient".into()));
    }
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numeric("ADF triangular solve failed".into()))?;
    let resid = &y - &x * &beta;
    let sigma2 = resid.norm_squared() / (nobs - k) as f64;
    // (XᵀX)⁻¹ = R⁻¹R⁻ᵀ; its [0,0] entry is ‖R⁻ᵀ e₀‖².
    let mut e0 = DVector::zeros(k);
    e0[0] = 1.0;
    let v = r
        .transpose()
        .solve_lower_triangular(&e0)
        .ok_or_else(|| Error::Numeric("ADF covariance solve failed".into()))?;
    let se = (sigma2 * v.norm_squared()).sqrt();
    let statistic = beta[0] / se;
    Ok(AdfResult {
        statistic,
        p_value: mackinnon_p_value(statistic),
        lags: p,
        nobs,
        constant: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn white_noise_is_stationary() {
        let x = noise(256, 1);
        let r = adf_test(&x, schwert_max_lag(256)).unwrap();
        assert!(r.p_value < 0.05, "{r:?}");
    }

    #[test]
    fn random_walk_is_not() {
        let mut acc = 0.0;
        let x: Vec<f64> = noise(256, 2)
            .into_iter()
            .map(|e| {
                acc += e;
                acc
            })
            .collect();
        let r = adf_test(&x, schwert_max_lag(256)).unwrap();
        assert!(r.p_value > 0.1, "{r:?}");
    }

    #[test]
    fn constant_series_is_flagged() {
        let r = adf_test(&[3.0; 40], 2).unwrap();
        assert!(r.constant);
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn too_short_is_an_error() {
        assert!(adf_test(&[1.0, 2.0, 0.5, 1.5], 2).is_err());
    }

    #[test]
    fn p_value_is_monotone_and_bounded() {
        let mut prev = 0.0;
        for i in 0..400 {
            let s = -20.0 + i as f64 * 0.06;
            let p = mackinnon_p_value(s);
            assert!((0.0..=1.0).contains(&p));
            assert!(p + 1e-3 >= prev, "non-monotone at {s}");
            prev = p;
        }
        // 5% critical value of the constant-only case is about −2.86
        assert!((mackinnon_p_value(-2.86) - 0.05).abs() < 0.005);
    }

    #[test]
    fn schwert_rule() {
        assert_eq!(schwert_max_lag(100), 12);
        assert_eq!(schwert_max_lag(256), 15);
        assert!(default_max_lag(20) <= 5);
    }
}
