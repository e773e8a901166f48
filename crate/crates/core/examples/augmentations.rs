//! Weak (scaling + jitter) and strong (permutation + jitter) views of one
//! segment.

use mtsrl::autodiff::Tensor;
use mtsrl::rng::seeded;
use mtsrl::sampler::{sample_strong_plan, strong_augment, weak_augment, AugmentConfig};

fn main() {
    let t = 12;
    let x = Tensor::matrix(t, 1, (0..t).map(|i| (i as f64 * 0.5).sin()).collect()).unwrap();
    let cfg = AugmentConfig::default();
    let mut rng = seeded(3);

    let weak = weak_augment(&x, &cfg, &mut rng);
    let strong = strong_augment(&x, &cfg, &mut rng);
    let plan = sample_strong_plan(t, &cfg, Some(3), &mut rng);
    let permuted = plan.apply(&x);

    println!("blocks cut at {:?}, reordered as {:?}", plan.cuts, plan.order);
    println!("{:>3} {:>8} {:>8} {:>8} {:>8}", "t", "input", "weak", "strong", "permuted");
    for i in 0..t {
        println!(
            "{i:>3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            x.get(i, 0),
            weak.get(i, 0),
            strong.get(i, 0),
            permuted.get(i, 0)
        );
    }
}
