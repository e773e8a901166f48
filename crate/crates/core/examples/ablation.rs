//! Trains with each task switched off in turn and reports probe accuracy.
//!
//! `cargo run --release --example ablation -- [seed]`

use mtsrl::data::normalize;
use mtsrl::downstream::{encode_dataset, eval_classification};
use mtsrl::synthetic::{sinusoid_classes, SinusoidClassConfig};
use mtsrl::trainer::{pretrain, TaskFlags, TrainConfig};

fn main() -> mtsrl::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed must be an integer"));
    let (train, test) = sinusoid_classes(&SinusoidClassConfig {
        seed,
        ..Default::default()
    })?;
    let train = normalize(&train)?;
    let test = test.normalized_with(train.normalization.as_ref().unwrap())?;

    let variants = [
        ("full", TaskFlags::default()),
        ("w/o uncertainty weights", ablated(&["uw"])),
        ("w/o contextual", ablated(&["cont"])),
        ("w/o temporal", ablated(&["temp"])),
        ("w/o transformation", ablated(&["trans"])),
        ("temporal only", ablated(&["cont", "trans"])),
    ];
    for (name, tasks) in variants {
        let cfg = TrainConfig {
            seed,
            iterations: Some(200),
            tasks,
            ..Default::default()
        };
        let enc = pretrain(&train, &cfg)?.checkpoint.model.encoder;
        let acc = eval_classification(
            &encode_dataset(&train, &enc)?,
            train.class_labels().unwrap(),
            &encode_dataset(&test, &enc)?,
            test.class_labels().unwrap(),
        )?;
        println!("{name:<24} {acc:.3}");
    }
    Ok(())
}

fn ablated(names: &[&str]) -> TaskFlags {
    let mut t = TaskFlags::default();
    for n in names {
        t.ablate(n).expect("known task name");
    }
    t
}
