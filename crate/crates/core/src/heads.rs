//! Task heads on top of instance-level representations: a pair
//! discriminator for neighborhood detection and a two-layer projection head
//! for augmentation contrast.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::encoder::uniform_tensor;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Probabilities are kept inside `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadsConfig {
    /// Discriminator hidden width as a multiple of `K`.
    pub disc_hidden_factor: usize,
    /// Projection hidden width; 0 means `K / 2`.
    pub proj_hidden: usize,
    pub proj_out: usize,
}

impl Default for HeadsConfig {
    fn default() -> Self {
        Self {
            disc_hidden_factor: 4,
            proj_hidden: 0,
            proj_out: 128,
        }
    }
}

impl HeadsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.disc_hidden_factor == 0 || self.proj_out == 0 {
            return Err(Error::Config("head widths must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn proj_hidden_for(&self, k: usize) -> usize {
        if self.proj_hidden == 0 {
            (k / 2).max(1)
        } else {
            self.proj_hidden
        }
    }
}

/// `2K → H_d → 1` with GELU in between and a logistic output.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// `K → H_p → K_p` with GELU in between.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

pub fn init_discriminator(k: usize, hidden: usize, rng: &mut SeededRng) -> DiscriminatorParams {
    DiscriminatorParams {
        w1: uniform_tensor(&[2 * k, hidden], 2 * k, rng),
        b1: uniform_tensor(&[hidden], 2 * k, rng),
        w2: uniform_tensor(&[hidden, 1], hidden, rng),
        b2: uniform_tensor(&[1], hidden, rng),
    }
}

pub fn init_projection(k: usize, hidden: usize, out: usize, rng: &mut SeededRng) -> ProjectionParams {
    ProjectionParams {
        w1: uniform_tensor(&[k, hidden], k, rng),
        b1: uniform_tensor(&[hidden], k, rng),
        w2: uniform_tensor(&[hidden, out], hidden, rng),
        b2: uniform_tensor(&[out], hidden, rng),
    }
}

/// Two linear layers bound on a graph.
#[derive(Clone, Copy, Debug)]
pub struct BoundMlp {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl BoundMlp {
    pub fn vars(&self) -> Vec<Var> {
        vec![self.w1, self.b1, self.w2, self.b2]
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = g.linear(x, self.w1, self.b1)?;
        let h = g.gelu(h);
        g.linear(h, self.w2, self.b2)
    }
}

fn bind4(g: &mut Graph, ts: [&Tensor; 4], trainable: bool) -> BoundMlp {
    let mut leaf = |t: &Tensor| {
        if trainable {
            g.param(t.clone())
        } else {
            g.constant(t.clone())
        }
    };
    BoundMlp {
        w1: leaf(ts[0]),
        b1: leaf(ts[1]),
        w2: leaf(ts[2]),
        b2: leaf(ts[3]),
    }
}

macro_rules! mlp_common {
    ($ty:ty) => {
        impl $ty {
            pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundMlp {
                bind4(g, [&self.w1, &self.b1, &self.w2, &self.b2], trainable)
            }

            pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
                vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
            }

            pub fn tensors(&self) -> [&Tensor; 4] {
                [&self.w1, &self.b1, &self.w2, &self.b2]
            }

            pub fn all_finite(&self) -> bool {
                self.tensors().iter().all(|t| t.all_finite())
            }

            pub fn input_dims(&self) -> usize {
                self.w1.rows()
            }
        }
    };
}

mlp_common!(DiscriminatorParams);
mlp_common!(ProjectionParams);

impl DiscriminatorParams {
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        ["w1", "b1", "w2", "b2"]
            .iter()
            .zip(self.tensors())
            .map(|(n, t)| (format!("disc.{n}"), t))
            .collect()
    }
}

impl ProjectionParams {
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        ["w1", "b1", "w2", "b2"]
            .iter()
            .zip(self.tensors())
            .map(|(n, t)| (format!("proj.{n}"), t))
            .collect()
    }

    pub fn output_dims(&self) -> usize {
        self.w2.cols()
    }
}

/// Pair probabilities `D([a_i; b_i])` for row-aligned `a, b: [B, K]`, giving `[B, 1]`.
/// The ordering is (anchor, other).
pub fn discriminate(g: &mut Graph, d: &BoundMlp, a: Var, b: Var) -> Result<Var> {
    let (ka, kb) = (g.value(a).cols(), g.value(b).cols());
    let expected = g.value(d.w1).rows();
    if ka + kb != expected || ka != kb {
        return Err(Error::DimensionMismatch {
            expected: expected / 2,
            found: ka,
        });
    }
    let pair = g.concat_cols(a, b)?;
    let logit = d.forward(g, pair)?;
    Ok(g.sigmoid(logit))
}

/// `Linear₂(GELU(Linear₁(r)))` for each row of `r: [B, K]`.
pub fn project(g: &mut Graph, p: &BoundMlp, r: Var) -> Result<Var> {
    let expected = g.value(p.w1).rows();
    if g.value(r).cols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: g.value(r).cols(),
        });
    }
    p.forward(g, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::rng::seeded;

    fn zero_disc(k: usize, h: usize) -> DiscriminatorParams {
        DiscriminatorParams {
            w1: Tensor::zeros(&[2 * k, h]),
            b1: Tensor::zeros(&[h]),
            w2: Tensor::zeros(&[h, 1]),
            b2: Tensor::zeros(&[1]),
        }
    }

    #[test]
    fn zero_discriminator_outputs_one_half() {
        let mut g = Graph::new();
        let d = zero_disc(3, 12).bind(&mut g, true);
        let a = g.constant(Tensor::matrix(2, 3, vec![1., -2., 3., 0.5, 0.1, 9.]).unwrap());
        let b = g.constant(Tensor::matrix(2, 3, vec![4., 4., 4., -1., -1., -1.]).unwrap());
        let p = discriminate(&mut g, &d, a, b).unwrap();
        assert_eq!(g.value(p).data(), &[0.5, 0.5]);
    }

    #[test]
    fn discriminator_is_order_sensitive_but_deterministic() {
        let d = init_discriminator(4, 16, &mut seeded(1));
        let mut g = Graph::new();
        let bd = d.bind(&mut g, false);
        let a = g.constant(Tensor::matrix(1, 4, vec![1., 0., 2., -1.]).unwrap());
        let b = g.constant(Tensor::matrix(1, 4, vec![0., 3., -2., 1.]).unwrap());
        let p1 = discriminate(&mut g, &bd, a, b).unwrap();
        let p2 = discriminate(&mut g, &bd, a, b).unwrap();
        let p3 = discriminate(&mut g, &bd, b, a).unwrap();
        let v = g.value(p1).item();
        assert!(v > 0.0 && v < 1.0);
        assert_eq!(v, g.value(p2).item());
        assert_ne!(v, g.value(p3).item());
    }

    #[test]
    fn identity_projection_is_gelu_of_input() {
        let p = ProjectionParams {
            w1: Tensor::identity(4),
            b1: Tensor::zeros(&[4]),
            w2: Tensor::identity(4),
            b2: Tensor::zeros(&[4]),
        };
        let mut g = Graph::new();
        let bp = p.bind(&mut g, false);
        let r = g.constant(Tensor::matrix(1, 4, vec![-1., 0., 0.5, 2.]).unwrap());
        let z = project(&mut g, &bp, r).unwrap();
        let gelu = |x: f64| 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
        for (got, x) in g.value(z).data().iter().zip([-1., 0., 0.5, 2.]) {
            assert!((got - gelu(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn default_projection_width() {
        let cfg = HeadsConfig::default();
        let p = init_projection(320, cfg.proj_hidden_for(320), cfg.proj_out, &mut seeded(0));
        let mut g = Graph::new();
        let bp = p.bind(&mut g, false);
        let r = g.constant(Tensor::zeros(&[3, 320]));
        let z = project(&mut g, &bp, r).unwrap();
        assert_eq!(g.shape(z), &[3, 128]);
        assert_eq!(p.w1.shape(), &[320, 160]);
    }

    #[test]
    fn head_gradients_match_finite_differences() {
        let mut rng = seeded(9);
        let d = init_discriminator(3, 6, &mut rng);
        let p = init_projection(3, 4, 5, &mut rng);
        let x = uniform_tensor(&[2, 3], 1, &mut rng);
        let y = uniform_tensor(&[2, 3], 1, &mut rng);
        let mut inputs: Vec<Tensor> = d.tensors().iter().map(|t| (*t).clone()).collect();
        inputs.extend(p.tensors().iter().map(|t| (*t).clone()));
        let report = grad_check(&inputs, 1e-6, |g, v| {
            let dm = BoundMlp { w1: v[0], b1: v[1], w2: v[2], b2: v[3] };
            let pm = BoundMlp { w1: v[4], b1: v[5], w2: v[6], b2: v[7] };
            let a = g.constant(x.clone());
            let b = g.constant(y.clone());
            let prob = discriminate(g, &dm, a, b)?;
            let lp = g.ln(prob);
            let z = project(g, &pm, a)?;
            let zz = g.mul(z, z)?;
            let s1 = g.sum(lp);
            let s2 = g.sum(zz);
            g.add(s1, s2)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn width_mismatch_rejected() {
        let d = init_discriminator(3, 6, &mut seeded(0));
        let mut g = Graph::new();
        let bd = d.bind(&mut g, false);
        let a = g.constant(Tensor::zeros(&[1, 4]));
        assert!(discriminate(&mut g, &bd, a, a).is_err());
    }
}
