//! Ridge forecasting from last-timestamp representations.

use std::rc::Rc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Segment, Tensor};
use crate::data::{Dataset, Normalization};
use crate::encoder::{stack_segments, EncoderParams};
use crate::error::{Error, Result};

use super::ENCODE_CHUNK;

pub const DEFAULT_RIDGE_GRID: [f64; 13] =
    [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0];

/// Fraction of training rows held out (from the tail) to choose α.
const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastConfig {
    pub horizon: usize,
    pub ridge_grid: Vec<f64>,
    /// Trailing timestamps encoded for each forecast origin.
    pub context: usize,
    /// Leading share of the series used for normalization and ridge fitting.
    pub train_fraction: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            horizon: 24,
            ridge_grid: DEFAULT_RIDGE_GRID.to_vec(),
            context: 128,
            train_fraction: 0.6,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("forecast horizon must be ≥ 1".into()));
        }
        if self.ridge_grid.is_empty() || self.ridge_grid.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::Config("ridge grid must be nonempty with finite positive values".into()));
        }
        if self.context == 0 {
            return Err(Error::Config("forecast context must be ≥ 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Intercept-free linear map `[K, out]` and its regularization.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel {
    pub weights: Tensor,
    pub alpha: f64,
}

fn to_matrix(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

fn from_matrix(m: &DMatrix<f64>) -> Tensor {
    let data = (0..m.nrows()).flat_map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect();
    Tensor::matrix(m.nrows(), m.ncols(), data).expect("consistent shape")
}

/// `(XᵀX + αI)⁻¹XᵀY` for several α from one thin SVD.
struct RidgeSolver {
    v: DMatrix<f64>,
    s: Vec<f64>,
    uty: DMatrix<f64>,
}

impl RidgeSolver {
    fn new(x: DMatrix<f64>, y: &DMatrix<f64>) -> Self {
        let svd = x.svd(true, true);
        let u = svd.u.expect("u requested");
        let v = svd.v_t.expect("v requested").transpose();
        Self {
            uty: u.transpose() * y,
            s: svd.singular_values.iter().copied().collect(),
            v,
        }
    }

    fn solve(&self, alpha: f64) -> DMatrix<f64> {
        let mut scaled = self.uty.clone();
        for (i, s) in self.s.iter().enumerate() {
            let f = s / (s * s + alpha);
            scaled.row_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        &self.v * scaled
    }
}

fn mse(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().map(|d| d * d).sum::<f64>() / a.len() as f64
}

impl RidgeModel {
    /// Closed-form fit at a fixed α.
    pub fn fit_alpha(x: &Tensor, y: &Tensor, alpha: f64) -> Result<Self> {
        check_xy(x, y)?;
        if !(alpha > 0.0) {
            return Err(Error::Config("ridge α must be positive".into()));
        }
        let w = RidgeSolver::new(to_matrix(x), &to_matrix(y)).solve(alpha);
        Ok(Self {
            weights: from_matrix(&w),
            alpha,
        })
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.weights.rows() {
            return Err(Error::Shape(format!(
                "ridge expects {} features, got {}",
                self.weights.rows(),
                x.cols()
            )));
        }
        Ok(from_matrix(&(to_matrix(x) * to_matrix(&self.weights))))
    }
}

fn check_xy(x: &Tensor, y: &Tensor) -> Result<()> {
    if x.rank() != 2 || y.rank() != 2 || x.rows() != y.rows() {
        return Err(Error::Shape("ridge needs X [n, K] and Y [n, d] with equal n".into()));
    }
    if x.rows() < 2 {
        return Err(Error::Data("ridge needs at least two rows".into()));
    }
    Ok(())
}

/// Chooses α by validation MSE on the last fifth of the rows, then refits on
/// all rows.
pub fn ridge_fit(x: &Tensor, y: &Tensor, grid: &[f64]) -> Result<RidgeModel> {
    check_xy(x, y)?;
    if grid.is_empty() || grid.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::Config("ridge grid must be nonempty and positive".into()));
    }
    let (xm, ym) = (to_matrix(x), to_matrix(y));
    let n = xm.nrows();
    let alpha = if grid.len() == 1 {
        grid[0]
    } else {
        let n_val = ((n as f64 * VALIDATION_FRACTION).round() as usize).clamp(1, n - 1);
        let n_tr = n - n_val;
        let solver = RidgeSolver::new(xm.rows(0, n_tr).into_owned(), &ym.rows(0, n_tr).into_owned());
        let (xv, yv) = (xm.rows(n_tr, n_val), ym.rows(n_tr, n_val).into_owned());
        let mut best = (grid[0], f64::INFINITY);
        for &a in grid {
            let err = mse(&(xv * solver.solve(a)), &yv);
            if err < best.1 {
                best = (a, err);
            }
        }
        best.0
    };
    let w = RidgeSolver::new(xm, &ym).solve(alpha);
    Ok(RidgeModel {
        weights: from_matrix(&w),
        alpha,
    })
}

/// Last-timestamp representation of each window `[max(0, t−C+1), t]`,
/// encoded unmasked. Returns `[ends.len(), K]`.
pub fn window_reps(series: &Tensor, params: &EncoderParams, ends: &[usize], context: usize) -> Result<Tensor> {
    let k = params.repr_dims();
    let mut data = Vec::with_capacity(ends.len() * k);
    for chunk in ends.chunks(ENCODE_CHUNK) {
        let windows: Vec<Tensor> = chunk
            .iter()
            .map(|&t| {
                let start = (t + 1).saturating_sub(context);
                series.slice_rows(start, t + 1 - start)
            })
            .collect();
        let refs: Vec<&Tensor> = windows.iter().collect();
        let out = encode_last(&refs, params, None)?;
        data.extend_from_slice(out.data());
    }
    Tensor::matrix(ends.len(), k, data)
}

/// Encodes stacked windows with an optional explicit mask and returns the
/// last row of each.
pub(crate) fn encode_last(windows: &[&Tensor], params: &EncoderParams, mask: Option<&[bool]>) -> Result<Tensor> {
    let (stacked, segments): (Tensor, Rc<[Segment]>) = stack_segments(windows)?;
    let mut g = Graph::new();
    let enc = params.bind(&mut g, false);
    let x = g.constant(stacked);
    let out = enc.forward(&mut g, x, segments.clone(), mask)?;
    let out = g.value(out);
    let rows: Vec<Vec<f64>> = segments.iter().map(|s| out.row(s.start + s.len - 1).to_vec()).collect();
    Tensor::from_rows(&rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub mse: f64,
    pub mae: f64,
    /// Last-value persistence on the same test origins.
    pub baseline_mse: f64,
    pub baseline_mae: f64,
    pub alpha: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl ForecastReport {
    pub fn rmse(&self) -> f64 {
        self.mse.sqrt()
    }
}

/// Targets `[origins, H·m]`: the next `H` rows after each origin, flattened.
fn targets(series: &Tensor, origins: &[usize], h: usize) -> Result<Tensor> {
    let m = series.cols();
    let mut data = Vec::with_capacity(origins.len() * h * m);
    for &t in origins {
        data.extend_from_slice(&series.data()[(t + 1) * m..(t + 1 + h) * m]);
    }
    Tensor::matrix(origins.len(), h * m, data)
}

fn errors(pred: &Tensor, truth: &Tensor) -> (f64, f64) {
    let n = truth.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (p, t) in pred.data().iter().zip(truth.data()) {
        se += (p - t) * (p - t);
        ae += (p - t).abs();
    }
    (se / n, ae / n)
}

/// Normalizes with statistics of the leading `train_fraction` of `series`,
/// fits ridge on origins whose targets stay inside that part and reports
/// errors on the remaining origins, in normalized units.
pub fn eval_forecast(series: &Tensor, params: &EncoderParams, cfg: &ForecastConfig) -> Result<ForecastReport> {
    cfg.validate()?;
    let (len, h) = (series.rows(), cfg.horizon);
    if len <= cfg.context + h {
        return Err(Error::Data(format!(
            "series of length {len} is too short for context {} and horizon {h}",
            cfg.context
        )));
    }
    if series.cols() != params.input_dims {
        return Err(Error::DimensionMismatch {
            expected: params.input_dims,
            found: series.cols(),
        });
    }
    let split = ((len as f64) * cfg.train_fraction).round() as usize;
    let train_origins: Vec<usize> = (0..split.saturating_sub(h)).collect();
    let test_origins: Vec<usize> = (split..len - h).collect();
    if train_origins.len() < 2 || test_origins.is_empty() {
        return Err(Error::Data(format!(
            "split at {split} of {len} leaves too few forecast origins for horizon {h}"
        )));
    }
    let norm = Normalization::fit(&Dataset::single(series.slice_rows(0, split))?)?;
    let z = norm.apply(series);
    let xtr = window_reps(&z, params, &train_origins, cfg.context)?;
    let ytr = targets(&z, &train_origins, h)?;
    let model = ridge_fit(&xtr, &ytr, &cfg.ridge_grid)?;
    let xte = window_reps(&z, params, &test_origins, cfg.context)?;
    let yte = targets(&z, &test_origins, h)?;
    let (mse, mae) = errors(&model.predict(&xte)?, &yte);
    let m = z.cols();
    let persist: Vec<Vec<f64>> = test_origins.iter().map(|&t| z.row(t).repeat(h)).collect();
    let (baseline_mse, baseline_mae) = errors(&Tensor::from_rows(&persist)?, &yte);
    debug_assert_eq!(persist[0].len(), h * m);
    Ok(ForecastReport {
        mse,
        mae,
        baseline_mse,
        baseline_mae,
        alpha: model.alpha,
        n_train: train_origins.len(),
        n_test: test_origins.len(),
    })
}
