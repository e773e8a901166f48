//! Pretrains an encoder on synthetic sinusoids and saves the checkpoint and
//! loss log.
//!
//! `cargo run --release --example pretrain -- [out_dir] [iterations]`

use std::path::PathBuf;

use mtsrl::data::normalize;
use mtsrl::synthetic::{sinusoid_classes, SinusoidClassConfig};
use mtsrl::trainer::{pretrain, save_checkpoint, save_loss_log, TrainConfig};

fn main() -> mtsrl::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "pretrain_out".into()));
    let iterations = args.next().map(|s| s.parse().expect("iterations must be an integer"));

    let (train, _) = sinusoid_classes(&SinusoidClassConfig {
        n_train: 60,
        ..Default::default()
    })?;
    let train = normalize(&train)?;
    let cfg = TrainConfig {
        iterations: Some(iterations.unwrap_or(50)),
        ..Default::default()
    };
    let run = pretrain(&train, &cfg)?;

    for r in run.log.iter().step_by(10) {
        let [c1, c2, t, tr] = r.bundle.to_array();
        println!(
            "step {:>4}  cont_temp {c1:.4}  cont_inst {c2:.4}  temp {t:.4}  trans {tr:.4}  total {:.4}",
            r.step, r.total
        );
    }
    std::fs::create_dir_all(&out)?;
    save_checkpoint(&run.checkpoint, out.join("checkpoint.bin"))?;
    save_loss_log(&run.log, out.join("loss_log.csv"))?;
    println!("fingerprint {}", run.checkpoint.fingerprint);
    println!("wrote {}", out.display());
    Ok(())
}
