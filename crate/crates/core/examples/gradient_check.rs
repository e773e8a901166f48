//! Compares reverse-mode gradients with central differences for the
//! transformation loss of a small projection head.

use mtsrl::autodiff::{grad_check, Tensor};
use mtsrl::heads::{init_projection, project, BoundMlp};
use mtsrl::losses::{transformation_loss, TransformationLossConfig};
use mtsrl::rng::seeded;
use rand_distr::{Distribution, StandardNormal};

fn main() -> mtsrl::Result<()> {
    let mut rng = seeded(0);
    let mut normal = |r: usize, c: usize| {
        let v = (0..r * c).map(|_| StandardNormal.sample(&mut rng)).collect();
        Tensor::matrix(r, c, v).unwrap()
    };
    let (weak, strong) = (normal(4, 8), normal(4, 8));
    let head = init_projection(8, 6, 4, &mut seeded(1));

    let mut inputs = vec![weak, strong];
    inputs.extend(head.tensors().into_iter().cloned());
    let report = grad_check(&inputs, 1e-5, |g, v| {
        let mlp = BoundMlp {
            w1: v[2],
            b1: v[3],
            w2: v[4],
            b2: v[5],
        };
        let zw = project(g, &mlp, v[0])?;
        let zs = project(g, &mlp, v[1])?;
        transformation_loss(g, zw, zs, &TransformationLossConfig::default())
    })?;
    println!(
        "{} coordinates checked, max relative error {:.2e} at {:?}",
        report.coordinates, report.max_rel_error, report.worst
    );
    Ok(())
}
