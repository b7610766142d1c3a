//! End to end: build a forecaster on the stub backbone, train it on a noisy
//! multi-seasonal series and compare test error with a seasonal-naive guess.

use dualcast::data::{fit_apply_scaler, make_splits, sinusoid_table, windowize, SplitConvention, WindowMode, WindowSet};
use dualcast::model::BackendConfig;
use dualcast::text::StubConfig;
use dualcast::train::{evaluate, train, TrainConfig};
use dualcast::{Forecaster, ModelConfig};

fn main() -> dualcast::Result<()> {
    env_logger::init();
    let (lookback, horizon) = (96, 24);
    let raw = sinusoid_table(1200, &[24, 12, 48], 0.3, 1)?;
    let split = make_splits(raw.len(), SplitConvention::Ratio701020)?;
    let (table, _) = fit_apply_scaler(&raw, &split)?;

    let train_set = WindowSet::new(&table, windowize(split.train, lookback, horizon, 4, WindowMode::Train)?, lookback, horizon);
    let val_set = WindowSet::new(&table, windowize(split.val.extend_back(lookback), lookback, horizon, 4, WindowMode::Eval)?, lookback, horizon);
    let test_starts = windowize(split.test.extend_back(lookback), lookback, horizon, 1, WindowMode::Eval)?;
    let test_set = WindowSet::new(&table, test_starts.clone(), lookback, horizon);

    let config = ModelConfig {
        dataset: "synthetic".into(),
        lookback,
        horizon,
        n_channels: 3,
        patch_len: 16,
        stride: 8,
        d_model: 16,
        n_learn: 4,
        backend: BackendConfig {
            stub: StubConfig { d_llm: 32, ..StubConfig::default() },
            ..BackendConfig::default()
        },
        ..ModelConfig::default()
    };
    let mut model = Forecaster::new(config, 2021)?;
    let count = model.count_params();
    println!("{} trainable of {} parameters", count.trainable, count.total);

    let history = train(&mut model, &train_set, Some(&val_set), &TrainConfig { epochs: 5, batch_size: 16, ..TrainConfig::default() })?;
    for e in &history.epochs {
        println!("epoch {}: task {:.4} align {:.4} val {:.4}", e.epoch, e.train_task, e.train_align, e.val_mse.unwrap_or(f64::NAN));
    }

    let metrics = evaluate(&model, &test_set, 64)?;
    // seasonal naive: repeat the last 48 steps, the common period of all channels
    let (mut se, mut n) = (0.0, 0usize);
    for &s in &test_starts {
        for h in 0..horizon {
            for c in 0..3 {
                let guess = table.value(s + lookback - 48 + h, c);
                se += (guess - table.value(s + lookback + h, c)).powi(2);
                n += 1;
            }
        }
    }
    println!("test MSE {:.4}, MAE {:.4}; seasonal naive MSE {:.4}", metrics.mse, metrics.mae, se / n as f64);
    Ok(())
}
