//! ADF tests on white noise and a random walk, and the temporal
//! neighborhood found around a crop of each.

use mtsrl::autodiff::Tensor;
use mtsrl::rng::seeded;
use mtsrl::sampler::{adf_test, crop_pair, find_neighborhood, sample_non_neighbor, NeighborhoodConfig};
use rand_distr::{Distribution, StandardNormal};

fn main() -> mtsrl::Result<()> {
    let mut rng = seeded(7);
    let noise: Vec<f64> = (0..400).map(|_| StandardNormal.sample(&mut rng)).collect();
    let walk: Vec<f64> = noise
        .iter()
        .scan(0.0, |s, v| {
            *s += v;
            Some(*s)
        })
        .collect();

    let cfg = NeighborhoodConfig::default();
    for (name, x) in [("white noise", noise), ("random walk", walk)] {
        let r = adf_test(&x, 12)?;
        println!(
            "{name}: statistic {:.3}, p-value {:.4}, lags {}, nobs {}",
            r.statistic, r.p_value, r.lags, r.nobs
        );
        let series = Tensor::matrix(x.len(), 1, x)?;
        let crop = crop_pair(series.rows(), 0.5, &mut rng)?;
        let eta = find_neighborhood(&series, &crop, &cfg);
        let nn = sample_non_neighbor(series.rows(), &crop, eta, &mut rng)?;
        println!(
            "  overlap [{}, {}] → eta {eta}, non-neighbor [{}, {}]{}",
            crop.a2,
            crop.b1,
            nn.a3,
            nn.b3,
            if nn.degraded { " (degraded)" } else { "" }
        );
    }
    Ok(())
}
