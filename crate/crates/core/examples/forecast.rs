//! Ridge forecasting on last-timestamp representations of an AR(1) series,
//! compared with the persistence baseline.

use mtsrl::data::normalize;
use mtsrl::downstream::{eval_forecast, ForecastConfig};
use mtsrl::synthetic::{ar1, split_windows};
use mtsrl::trainer::{pretrain, TrainConfig};

fn main() -> mtsrl::Result<()> {
    let series = ar1(2000, 0.9, 0)?;
    let cfg = ForecastConfig::default();
    let split = (series.rows() as f64 * cfg.train_fraction).round() as usize;

    let windows = normalize(&split_windows(&series.slice_rows(0, split), 128, 64)?)?;
    let encoder = pretrain(&windows, &TrainConfig::default())?.checkpoint.model.encoder;

    for horizon in [1, 24] {
        let r = eval_forecast(&series, &encoder, &ForecastConfig { horizon, ..cfg.clone() })?;
        println!(
            "H={horizon:>2}: mse {:.4} mae {:.4} | persistence mse {:.4} mae {:.4} | ridge alpha {}",
            r.mse, r.mae, r.baseline_mse, r.baseline_mae, r.alpha
        );
    }
    Ok(())
}
