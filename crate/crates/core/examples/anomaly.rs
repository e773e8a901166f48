//! Spike detection: pretrain on the clean prefix, score every timestamp by
//! the effect of masking it, threshold at mean + 3 std of the prefix scores.

use mtsrl::data::normalize;
use mtsrl::downstream::{anomaly_scores, detect, AnomalyConfig};
use mtsrl::synthetic::{spiky_sinusoid, split_windows, SpikeConfig};
use mtsrl::trainer::{pretrain, TrainConfig};

fn main() -> mtsrl::Result<()> {
    let spikes = SpikeConfig::default();
    let (x, labels) = spiky_sinusoid(&spikes)?;
    let prefix = normalize(&split_windows(&x.slice_rows(0, spikes.clean_prefix), 128, 64)?)?;
    let encoder = pretrain(&prefix, &TrainConfig::default())?.checkpoint.model.encoder;

    let z = prefix.normalization.as_ref().unwrap().apply(&x);
    let cfg = AnomalyConfig {
        calibration_fraction: spikes.clean_prefix as f64 / spikes.length as f64,
        ..Default::default()
    };
    let scores = anomaly_scores(&z, &encoder, &cfg)?;
    let d = detect(&scores, Some(&labels), &cfg)?;
    let m = d.metrics.unwrap();
    println!("threshold {:.2}", d.threshold);
    println!("precision {:.3} recall {:.3} f1 {:.3}", m.precision, m.recall, m.f1);

    let first = labels.iter().position(|l| *l).unwrap();
    for t in first.saturating_sub(2)..first + 4 {
        let tag = if labels[t] { "spike" } else { "" };
        println!("t={t:>4} score {:>8.2} flagged {:<5} {tag}", scores[t], d.flags[t]);
    }
    Ok(())
}
