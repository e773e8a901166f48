use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest relative error over all checked coordinates.
    pub max_rel_error: f64,
    /// `(input index, flat coordinate)` where the largest error occurred.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

/// Compares the reverse-mode gradient of a scalar function against the
/// central difference `(f(x+eps) − f(x−eps)) / 2eps` on every coordinate
/// of every input.
///
/// `f` rebuilds the computation on a fresh graph from the supplied input
/// vars and returns the scalar output. The relative error of a coordinate
/// is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(inputs: &[Tensor], eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let analytic = grads
            .raw(*var)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[which].len()]);
        for coord in 0..inputs[which].len() {
            let orig = inputs[which].data()[coord];
            work[which].data_mut()[coord] = orig + eps;
            let plus = eval(&work)?;
            work[which].data_mut()[coord] = orig - eps;
            let minus = eval(&work)?;
            work[which].data_mut()[coord] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[coord];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((which, coord));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let r = grad_check(&[Tensor::vector(vec![1.0, 2.0])], 1e-4, |g, v| {
            let sq = g.mul(v[0], v[0])?;
            Ok(g.sum(sq))
        })
        .unwrap();
        assert!(r.max_rel_error <= 1e-8, "{r:?}");
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let r = grad_check(&[Tensor::vector(vec![1.0, 2.0])], 1e-4, |g, _| {
            Ok(g.constant(Tensor::scalar(3.0)))
        })
        .unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.coordinates, 2);
    }
}
