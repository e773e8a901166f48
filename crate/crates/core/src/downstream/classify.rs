//! Classification probes on instance-level representations.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Regularization grid; `1e6` stands in for an unregularized fit.
pub const C_GRID: [f64; 10] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4, 1e6];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// One-vs-rest RBF kernel regularized least squares.
    #[default]
    Rbf,
    /// Multinomial logistic regression on standardized features.
    Logistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    pub folds: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            kind: ProbeKind::Rbf,
            folds: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
enum Fitted {
    Rbf {
        train: DMatrix<f64>,
        gamma: f64,
        coef: DMatrix<f64>,
    },
    Logistic {
        mean: Vec<f64>,
        std: Vec<f64>,
        /// `[K + 1, classes]`, last row is the bias.
        weights: DMatrix<f64>,
    },
}

/// A fitted probe.
#[derive(Clone, Debug)]
pub struct ClassifierProbe {
    pub classes: Vec<i64>,
    /// Selected regularization (RBF only).
    pub c: Option<f64>,
    fitted: Fitted,
}

impl ClassifierProbe {
    pub fn predict(&self, reps: &Tensor) -> Result<Vec<i64>> {
        let x = to_matrix(reps);
        let scores = match &self.fitted {
            Fitted::Rbf { train, gamma, coef } => {
                if x.ncols() != train.ncols() {
                    return Err(Error::DimensionMismatch {
                        expected: train.ncols(),
                        found: x.ncols(),
                    });
                }
                rbf_kernel(&x, train, *gamma) * coef
            }
            Fitted::Logistic { mean, std, weights } => {
                if x.ncols() != mean.len() {
                    return Err(Error::DimensionMismatch {
                        expected: mean.len(),
                        found: x.ncols(),
                    });
                }
                standardized_with_bias(&x, mean, std) * weights
            }
        };
        Ok((0..scores.nrows()).map(|i| self.classes[argmax(scores.row(i).iter().copied())]).collect())
    }
}

fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in it.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn to_matrix(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(−γ‖a_i − b_j‖²)` for all row pairs.
fn rbf_kernel(a: &DMatrix<f64>, b: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let ra: Vec<Vec<f64>> = a.row_iter().map(|r| r.iter().copied().collect()).collect();
    let rb: Vec<Vec<f64>> = b.row_iter().map(|r| r.iter().copied().collect()).collect();
    DMatrix::from_fn(ra.len(), rb.len(), |i, j| (-gamma * sq_dist(&ra[i], &rb[j])).exp())
}

/// `1 / (2σ²)` with `σ` the median pairwise distance (1 when all points coincide).
fn median_gamma(x: &DMatrix<f64>) -> f64 {
    let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
    let mut d: Vec<f64> = Vec::with_capacity(rows.len() * rows.len() / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(sq_dist(&rows[i], &rows[j]).sqrt());
        }
    }
    d.retain(|v| *v > 0.0);
    if d.is_empty() {
        return 0.5;
    }
    d.sort_by(f64::total_cmp);
    let med = d[d.len() / 2];
    1.0 / (2.0 * med * med)
}

/// ±1 one-vs-rest targets.
fn targets(idx: &[usize], class_of: &[usize], n_classes: usize) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), n_classes, |r, c| if class_of[idx[r]] == c { 1.0 } else { -1.0 })
}

/// Solves `(K + I/C) A = Y` for every `C` from one eigendecomposition.
struct KernelSolver {
    vectors: DMatrix<f64>,
    values: Vec<f64>,
    proj_y: DMatrix<f64>,
}

impl KernelSolver {
    fn new(k: DMatrix<f64>, y: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(k);
        let proj_y = eig.eigenvectors.transpose() * y;
        Self {
            values: eig.eigenvalues.iter().map(|v| v.max(0.0)).collect(),
            vectors: eig.eigenvectors,
            proj_y,
        }
    }

    fn solve(&self, c: f64) -> DMatrix<f64> {
        let mut scaled = self.proj_y.clone();
        for (i, lam) in self.values.iter().enumerate() {
            let f = 1.0 / (lam + 1.0 / c);
            scaled.row_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        &self.vectors * scaled
    }
}

fn stratified_folds(class_of: &[usize], n_classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, Stream::Probe);
    let mut fold = vec![0; class_of.len()];
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..class_of.len()).filter(|&i| class_of[i] == c).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold[i] = pos % folds;
        }
    }
    fold
}

fn sub_kernel(k: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| k[(rows[i], cols[j])])
}

fn fit_rbf(x: DMatrix<f64>, class_of: &[usize], n_classes: usize, cfg: &ProbeConfig) -> (Fitted, f64) {
    let n = x.nrows();
    let gamma = median_gamma(&x);
    let k = rbf_kernel(&x, &x, gamma);
    let min_count = (0..n_classes)
        .map(|c| class_of.iter().filter(|&&k| k == c).count())
        .min()
        .unwrap_or(0);
    let folds = cfg.folds.min(min_count);
    let best_c = if folds < 2 {
        C_GRID[C_GRID.len() - 1]
    } else {
        let fold = stratified_folds(class_of, n_classes, folds, cfg.seed);
        let mut correct = vec![0usize; C_GRID.len()];
        for f in 0..folds {
            let tr: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
            let va: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
            let solver = KernelSolver::new(sub_kernel(&k, &tr, &tr), &targets(&tr, class_of, n_classes));
            let kv = sub_kernel(&k, &va, &tr);
            for (ci, &c) in C_GRID.iter().enumerate() {
                let scores = &kv * solver.solve(c);
                correct[ci] += va
                    .iter()
                    .enumerate()
                    .filter(|(r, &i)| argmax(scores.row(*r).iter().copied()) == class_of[i])
                    .count();
            }
        }
        let best = (0..C_GRID.len()).fold(0, |b, i| if correct[i] > correct[b] { i } else { b });
        C_GRID[best]
    };
    let all: Vec<usize> = (0..n).collect();
    let coef = KernelSolver::new(k, &targets(&all, class_of, n_classes)).solve(best_c);
    (Fitted::Rbf { train: x, gamma, coef }, best_c)
}

fn standardized_with_bias(x: &DMatrix<f64>, mean: &[f64], std: &[f64]) -> DMatrix<f64> {
    let k = mean.len();
    DMatrix::from_fn(x.nrows(), k + 1, |i, j| if j == k { 1.0 } else { (x[(i, j)] - mean[j]) / std[j] })
}

fn fit_logistic(x: DMatrix<f64>, class_of: &[usize], n_classes: usize) -> Fitted {
    const STEPS: usize = 500;
    const LR: f64 = 0.05;
    const L2: f64 = 1e-3;
    let (n, k) = (x.nrows(), x.ncols());
    let mean: Vec<f64> = (0..k).map(|j| x.column(j).mean()).collect();
    let std: Vec<f64> = (0..k)
        .map(|j| {
            let s = x.column(j).variance().sqrt();
            if s > 1e-12 { s } else { 1.0 }
        })
        .collect();
    let xb = standardized_with_bias(&x, &mean, &std);
    let mut w = DMatrix::<f64>::zeros(k + 1, n_classes);
    let (mut m1, mut m2) = (w.clone(), w.clone());
    for step in 1..=STEPS {
        let mut p = &xb * &w;
        for mut row in p.row_iter_mut() {
            let mx = row.max();
            row.iter_mut().for_each(|v| *v = (*v - mx).exp());
            let s = row.sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        for (i, &c) in class_of.iter().enumerate() {
            p[(i, c)] -= 1.0;
        }
        let mut grad = xb.transpose() * p / n as f64;
        for r in 0..k {
            for c in 0..n_classes {
                grad[(r, c)] += L2 * w[(r, c)];
            }
        }
        m1 = &m1 * 0.9 + &grad * 0.1;
        m2 = &m2 * 0.999 + grad.component_mul(&grad) * 0.001;
        let b1 = 1.0 - 0.9f64.powi(step as i32);
        let b2 = 1.0 - 0.999f64.powi(step as i32);
        for (wv, (a, b)) in w.iter_mut().zip(m1.iter().zip(m2.iter())) {
            *wv -= LR * (a / b1) / ((b / b2).sqrt() + 1e-8);
        }
    }
    Fitted::Logistic { mean, std, weights: w }
}

/// Fits a probe on `reps` with integer labels.
pub fn fit_probe(reps: &Tensor, labels: &[i64], cfg: &ProbeConfig) -> Result<ClassifierProbe> {
    if reps.rows() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!(
            "{} representations for {} labels",
            reps.rows(),
            labels.len()
        )));
    }
    let mut index = BTreeMap::new();
    for &l in labels {
        let next = index.len();
        index.entry(l).or_insert(next);
    }
    if index.len() < 2 {
        return Err(Error::Data("classification needs at least two classes in the training set".into()));
    }
    let classes: Vec<i64> = {
        let mut v: Vec<(i64, usize)> = index.iter().map(|(&l, &i)| (l, i)).collect();
        v.sort_by_key(|&(_, i)| i);
        v.into_iter().map(|(l, _)| l).collect()
    };
    let class_of: Vec<usize> = labels.iter().map(|l| index[l]).collect();
    let x = to_matrix(reps);
    let (fitted, c) = match cfg.kind {
        ProbeKind::Rbf => {
            let (f, c) = fit_rbf(x, &class_of, classes.len(), cfg);
            (f, Some(c))
        }
        ProbeKind::Logistic => (fit_logistic(x, &class_of, classes.len()), None),
    };
    Ok(ClassifierProbe { classes, c, fitted })
}

/// Test accuracy of the default probe.
pub fn eval_classification(
    train_reps: &Tensor,
    train_labels: &[i64],
    test_reps: &Tensor,
    test_labels: &[i64],
) -> Result<f64> {
    eval_classification_with(train_reps, train_labels, test_reps, test_labels, &ProbeConfig::default())
}

pub fn eval_classification_with(
    train_reps: &Tensor,
    train_labels: &[i64],
    test_reps: &Tensor,
    test_labels: &[i64],
    cfg: &ProbeConfig,
) -> Result<f64> {
    if test_reps.rows() != test_labels.len() || test_labels.is_empty() {
        return Err(Error::Shape("test representations and labels differ in length".into()));
    }
    let probe = fit_probe(train_reps, train_labels, cfg)?;
    let pred = probe.predict(test_reps)?;
    let hits = pred.iter().zip(test_labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / test_labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(n: usize, sep: f64, seed: u64) -> (Tensor, Vec<i64>) {
        let mut rng = seeded(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = (i % 2) as i64;
            for j in 0..4 {
                let center = if j == 0 { sep * c as f64 } else { 0.0 };
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(center + 0.3 * z);
            }
            labels.push(c);
        }
        (Tensor::matrix(n, 4, data).unwrap(), labels)
    }

    #[test]
    fn separable_blobs_are_classified_perfectly() {
        let (xtr, ytr) = blobs(60, 5.0, 1);
        let (xte, yte) = blobs(40, 5.0, 2);
        assert_eq!(eval_classification(&xtr, &ytr, &xte, &yte).unwrap(), 1.0);
        let cfg = ProbeConfig {
            kind: ProbeKind::Logistic,
            ..Default::default()
        };
        assert_eq!(eval_classification_with(&xtr, &ytr, &xte, &yte, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn shuffled_labels_give_chance_accuracy() {
        let (xtr, _) = blobs(200, 0.0, 3);
        let (xte, _) = blobs(200, 0.0, 4);
        let mut rng = seeded(5);
        let mut ytr: Vec<i64> = (0..200).map(|i| i % 2).collect();
        ytr.shuffle(&mut rng);
        let yte: Vec<i64> = (0..200).map(|_| rng.random_range(0..2)).collect();
        let acc = eval_classification(&xtr, &ytr, &xte, &yte).unwrap();
        assert!((0.35..=0.65).contains(&acc), "{acc}");
    }

    #[test]
    fn one_point_per_class() {
        let x = Tensor::matrix(3, 2, vec![0., 0., 1., 1., -1., 2.]).unwrap();
        let y = vec![4, 9, 2];
        assert_eq!(eval_classification(&x, &y, &x, &y).unwrap(), 1.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Tensor::zeros(&[3, 2]);
        assert!(eval_classification(&x, &[1, 1, 1], &x, &[1, 1, 1]).is_err());
    }

    #[test]
    fn kernel_solver_matches_direct_solve() {
        let (x, y) = blobs(12, 1.0, 7);
        let xm = to_matrix(&x);
        let k = rbf_kernel(&xm, &xm, median_gamma(&xm));
        let class_of: Vec<usize> = y.iter().map(|&c| c as usize).collect();
        let all: Vec<usize> = (0..12).collect();
        let t = targets(&all, &class_of, 2);
        let a = KernelSolver::new(k.clone(), &t).solve(10.0);
        let direct = (k + DMatrix::identity(12, 12) * 0.1).lu().solve(&t).unwrap();
        assert!((a - direct).abs().max() < 1e-9);
    }
}
