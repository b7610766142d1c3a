//! Saves the trainable parameters after a short fit and restores them into
//! a freshly initialized model with the same configuration.

use dualcast::checkpoint;
use dualcast::data::{sinusoid_table, WindowBatch, WindowSet};
use dualcast::train::{train, TrainConfig};
use dualcast::{Forecaster, ModelConfig};

fn main() -> dualcast::Result<()> {
    let table = sinusoid_table(300, &[12, 8], 0.1, 5)?;
    let config = ModelConfig { lookback: 64, horizon: 16, n_channels: 2, d_model: 8, n_learn: 2, ..ModelConfig::default() };
    let set = WindowSet::new(&table, (0..64).step_by(2).collect(), 64, 16);

    let mut model = Forecaster::new(config.clone(), 1)?;
    train(&mut model, &set, None, &TrainConfig { epochs: 2, batch_size: 8, ..TrainConfig::default() })?;

    let path = std::env::temp_dir().join("dualcast-example.ckpt");
    checkpoint::save(&model, &path)?;
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0));

    let restored = Forecaster::new(config.clone(), 99)?;
    let batch = WindowBatch::from_table(&table, &[200], 64, 16);
    let before = restored.predict(&batch)?;
    checkpoint::load(&restored, &path)?;
    let after = restored.predict(&batch)?;
    let reference = model.predict(&batch)?;
    let gap = |a: &[f64]| a.iter().zip(&reference).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("max |pred - trained| before load {:.3e}, after load {:.3e}", gap(&before), gap(&after));

    let other = Forecaster::new(ModelConfig { horizon: 32, ..config }, 1)?;
    match checkpoint::load(&other, &path) {
        Err(e) => println!("loading into a different architecture fails: {e}"),
        Ok(()) => unreachable!("fingerprints differ"),
    }
    let _ = std::fs::remove_file(&path);
    Ok(())
}
