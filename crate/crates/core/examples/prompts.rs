//! Statistical prompts: per-channel summaries, dominant autocorrelation lags
//! and the rendered prompt the text branch encodes.

use dualcast::data::{sinusoid_table, WindowBatch};
use dualcast::text::{summarize, top_lags};
use dualcast::{Forecaster, ModelConfig};

fn main() -> dualcast::Result<()> {
    let (lookback, horizon) = (96, 24);
    let table = sinusoid_table(400, &[24, 7], 0.1, 3)?;
    let batch = WindowBatch::from_table(&table, &[100], lookback, horizon);

    let config = ModelConfig {
        dataset: "synthetic".into(),
        lookback,
        horizon,
        n_channels: 2,
        ..ModelConfig::default()
    };
    let model = Forecaster::new(config, 0)?;

    for c in 0..2 {
        let window = batch.input_channel(0, c);
        let summary = summarize(&window)?;
        println!("channel {c}: min {:.3} max {:.3} median {:.3} trend {:?}", summary.min_value, summary.max_value, summary.median_value, summary.trend);
        println!("  top 5 lags {:?}, top 2 {:?}", summary.top_lags, top_lags(&window, 2)?);
        println!("  prompt: {}", model.prompt_text(&window)?);
        println!("  {} tokens", model.prompt_tokens(&window)?.len());
    }
    Ok(())
}
