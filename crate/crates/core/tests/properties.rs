use mtsrl::autodiff::{Graph, Tensor};
use mtsrl::data::{normalize, BatchIter, Dataset, Labels, TimeSeriesInstance};
use mtsrl::encoder::{encode, init_encoder, EncoderConfig, MaskConfig};
use mtsrl::losses::{contextual_instance_loss, contextual_timestamp_loss, transformation_loss, TransformationLossConfig};
use mtsrl::rng::seeded;
use mtsrl::sampler::neighborhood::{neighborhood_window, window_is_stationary};
use mtsrl::sampler::{
    crop_pair, exclusion_radius, find_neighborhood, max_crop_len, sample_non_neighbor, strong_augment,
    AugmentConfig, NeighborhoodConfig,
};
use mtsrl::synthetic::{sinusoid_classes, SinusoidClassConfig};
use mtsrl::trainer::{pretrain, TaskFlags, TrainConfig};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Rows of `[batch·n, k]` reordered by instance.
fn permute_instances(x: &Tensor, batch: usize, perm: &[usize]) -> Tensor {
    let n = x.rows() / batch;
    let parts: Vec<Tensor> = perm.iter().map(|&i| x.slice_rows(i * n, n)).collect();
    Tensor::vstack(&parts.iter().collect::<Vec<_>>()).unwrap()
}

fn shuffled(batch: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded(seed);
    let mut p: Vec<usize> = (0..batch).collect();
    for i in (1..batch).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crops_respect_order_and_cap(t in 2usize..3000, l in 0.05f64..=1.0, seed in any::<u64>()) {
        prop_assume!(max_crop_len(t, l) >= 2);
        let mut rng = seeded(seed);
        for _ in 0..200 {
            let c = crop_pair(t, l, &mut rng).unwrap();
            prop_assert!(0 < c.a1 && c.a1 <= c.a2 && c.a2 <= c.b1 && c.b1 <= c.b2 && c.b2 <= t);
            prop_assert!(c.first_len() <= max_crop_len(t, l));
            prop_assert!(c.second_len() <= max_crop_len(t, l));
        }
    }

    #[test]
    fn non_neighbors_keep_length_and_distance(t in 8usize..2000, eta in 1usize..=3, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        for _ in 0..100 {
            let c = crop_pair(t, 0.5, &mut rng).unwrap();
            let s = sample_non_neighbor(t, &c, eta, &mut rng).unwrap();
            let span = c.b1 - c.a2;
            prop_assert!(s.a3 >= 1 && s.b3 <= t);
            prop_assert_eq!(s.b3 - s.a3, span);
            if !s.degraded {
                prop_assert!((s.a3 + s.b3).abs_diff(c.a2 + c.b1) > 2 * exclusion_radius(eta, span));
            }
        }
    }

    #[test]
    fn jitter_free_strong_augmentation_permutes_values(t in 1usize..200, m in 1usize..4, seed in any::<u64>()) {
        let x = gaussian(t, m, seed);
        let cfg = AugmentConfig { strong_jitter_ratio: 0.0, ..Default::default() };
        let y = strong_augment(&x, &cfg, &mut seeded(seed ^ 1));
        prop_assert_eq!(y.shape(), x.shape());
        let sorted = |v: &Tensor| {
            let mut d = v.data().to_vec();
            d.sort_by(f64::total_cmp);
            d
        };
        prop_assert_eq!(sorted(&x), sorted(&y));
    }

    #[test]
    fn contextual_losses_ignore_instance_order(batch in 1usize..6, n in 1usize..7, seed in any::<u64>()) {
        let a = gaussian(batch * n, 5, seed);
        let b = gaussian(batch * n, 5, seed.wrapping_add(1));
        let perm = shuffled(batch, seed);
        let eval = |a: &Tensor, b: &Tensor| {
            let mut g = Graph::new();
            let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
            let t = contextual_timestamp_loss(&mut g, va, vb, batch).unwrap();
            let i = contextual_instance_loss(&mut g, va, vb, batch).unwrap();
            (g.value(t).item(), g.value(i).item())
        };
        let (t0, i0) = eval(&a, &b);
        let (t1, i1) = eval(&permute_instances(&a, batch, &perm), &permute_instances(&b, batch, &perm));
        prop_assert!((t0 - t1).abs() <= 1e-12);
        prop_assert!((i0 - i1).abs() <= 1e-12);
    }

    #[test]
    fn ntxent_ignores_order_and_scale(batch in 1usize..7, seed in any::<u64>(), scale in 0.01f64..100.0) {
        let zw = gaussian(batch, 4, seed);
        let zs = gaussian(batch, 4, seed.wrapping_add(7));
        let perm = shuffled(batch, seed);
        let eval = |zw: &Tensor, zs: &Tensor| {
            let mut g = Graph::new();
            let (a, b) = (g.constant(zw.clone()), g.constant(zs.clone()));
            let l = transformation_loss(&mut g, a, b, &TransformationLossConfig::default()).unwrap();
            g.value(l).item()
        };
        let base = eval(&zw, &zs);
        let permuted = eval(&permute_instances(&zw, batch, &perm), &permute_instances(&zs, batch, &perm));
        prop_assert!((base - permuted).abs() <= 1e-12);
        let mut scaled = zs.clone();
        let row = seed as usize % batch;
        for v in scaled.row_mut(row) {
            *v *= scale;
        }
        prop_assert!((base - eval(&zw, &scaled)).abs() <= 1e-10);
    }

    #[test]
    fn normalization_is_idempotent(n in 1usize..5, t in 2usize..40, m in 1usize..4, seed in any::<u64>()) {
        let instances = (0..n)
            .map(|i| {
                let mut v = gaussian(t, m, seed.wrapping_add(i as u64));
                v.data_mut().iter_mut().for_each(|x| *x = 3.0 * *x + 10.0);
                TimeSeriesInstance { id: i as i64, values: v }
            })
            .collect();
        let once = normalize(&Dataset::new(instances, Labels::None).unwrap()).unwrap();
        let twice = normalize(&once).unwrap();
        for (a, b) in once.instances.iter().zip(&twice.instances) {
            for (x, y) in a.values.data().iter().zip(b.values.data()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn batches_cover_each_epoch_once(n in 1usize..60, batch in 1usize..16, seed in any::<u64>()) {
        let mut it = BatchIter::new(n, batch, seed).unwrap();
        for _ in 0..3 {
            let mut seen = Vec::new();
            while seen.len() < n {
                let b = it.next().unwrap();
                prop_assert!(!b.is_empty() && b.len() <= batch);
                seen.extend(b);
            }
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn encoder_preserves_length(t in 1usize..=512, seed in any::<u64>()) {
        let cfg = EncoderConfig { hidden: 4, repr_dims: 6, depth: 3, kernel_size: 3 };
        let p = init_encoder(2, cfg, seed).unwrap();
        let r = encode(&gaussian(t, 2, seed), &p, &MaskConfig::none(), &mut seeded(0)).unwrap();
        prop_assert_eq!(r.shape(), &[t, 6][..]);
    }

    #[test]
    fn found_neighborhood_is_the_widest_stationary_one(seed in any::<u64>(), walk in any::<bool>()) {
        let t = 400;
        let mut x = gaussian(t, 1, seed);
        if walk {
            let mut acc = 0.0;
            for v in x.data_mut() {
                acc += *v;
                *v = acc;
            }
        }
        let cfg = NeighborhoodConfig::default();
        let crop = crop_pair(t, 0.5, &mut seeded(seed)).unwrap();
        let eta = find_neighborhood(&x, &crop, &cfg);
        prop_assert!((1..=cfg.eta_max).contains(&eta));
        let passes = |e: usize| {
            let (lo, hi) = neighborhood_window(&crop, e, t);
            window_is_stationary(&x, lo, hi, &cfg)
        };
        if passes(1) {
            prop_assert!(passes(eta));
            if eta < cfg.eta_max {
                prop_assert!(!passes(eta + 1));
            }
        } else {
            prop_assert_eq!(eta, 1);
        }
    }
}

#[test]
fn disabled_task_ignores_its_stream_seed() {
    let (train, _) = sinusoid_classes(&SinusoidClassConfig {
        n_train: 12,
        n_test: 3,
        length: 64,
        ..Default::default()
    })
    .unwrap();
    let train = normalize(&train).unwrap();
    let run = |neighborhood_seed: u64| {
        let mut cfg = TrainConfig {
            iterations: Some(4),
            tasks: TaskFlags {
                use_temp: false,
                ..Default::default()
            },
            ..Default::default()
        };
        cfg.seeds.neighborhood = Some(neighborhood_seed);
        pretrain(&train, &cfg).unwrap()
    };
    let (a, b) = (run(1), run(2));
    assert_eq!(a.checkpoint.model, b.checkpoint.model);
    assert_eq!(a.log, b.log);
}
