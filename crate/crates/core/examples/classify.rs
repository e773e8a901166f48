//! Linear-evaluation style classification: pretrain, encode each instance
//! and fit the RBF probe on the frozen representations.

use mtsrl::data::normalize;
use mtsrl::downstream::{encode_dataset, eval_classification};
use mtsrl::encoder::init_encoder;
use mtsrl::synthetic::{sinusoid_classes, SinusoidClassConfig};
use mtsrl::trainer::{pretrain, TrainConfig};

fn main() -> mtsrl::Result<()> {
    let (train, test) = sinusoid_classes(&SinusoidClassConfig {
        n_train: 120,
        n_test: 120,
        ..Default::default()
    })?;
    let train = normalize(&train)?;
    let test = test.normalized_with(train.normalization.as_ref().unwrap())?;
    let (ytr, yte) = (train.class_labels().unwrap(), test.class_labels().unwrap());

    let cfg = TrainConfig {
        iterations: Some(100),
        ..Default::default()
    };
    let encoder = pretrain(&train, &cfg)?.checkpoint.model.encoder;
    let random = init_encoder(train.dims(), cfg.encoder, 1)?;

    for (name, params) in [("pretrained", &encoder), ("random init", &random)] {
        let acc = eval_classification(
            &encode_dataset(&train, params)?,
            ytr,
            &encode_dataset(&test, params)?,
            yte,
        )?;
        println!("{name:>11}: accuracy {acc:.3}");
    }
    Ok(())
}
