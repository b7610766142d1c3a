//! Loads a local GPT-2 checkpoint (`config.json`, `model.safetensors`,
//! `tokenizer.json`), truncates it to its first layers and encodes a prompt.
//!
//!     cargo run --release --example pretrained -- /path/to/gpt2 6
//!
//! Without arguments it uses `DUALCAST_GPT2_DIR`, then the two-layer test
//! fixture shipped with the crate.

use std::path::PathBuf;

use candle_core::Device;
use dualcast::model::BackendConfig;
use dualcast::text::{BackendKind, TextEncoder};
use dualcast::{Forecaster, ModelConfig};

fn main() -> dualcast::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("DUALCAST_GPT2_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny_gpt2"));
    let layers: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);

    let config = ModelConfig {
        lookback: 96,
        horizon: 24,
        n_channels: 1,
        d_model: 8,
        backend: BackendConfig {
            kind: BackendKind::Pretrained,
            llm_layers: layers,
            llm_weights_dir: Some(dir.clone()),
            ..BackendConfig::default()
        },
        ..ModelConfig::default()
    };
    let encoder = TextEncoder::pretrained(&dir, layers, config.precision.dtype(), &Device::Cpu)?;
    println!(
        "{}: {} layers, width {}, {} frozen parameters, embedding std {:.4}",
        dir.display(),
        encoder.layer_count(),
        encoder.d_llm(),
        encoder.frozen_param_count(),
        encoder.embedding_std()?
    );

    let model = Forecaster::with_encoder(config, 0, encoder)?;
    let window: Vec<f64> = (0..96).map(|t| (t as f64 * 0.26).sin()).collect();
    let ids = model.prompt_tokens(&window)?;
    let embedded = model.encoder().embed_words(&ids)?;
    let hidden = model.encoder().encode(&embedded)?;
    println!("prompt of {} tokens -> hidden states {:?}", ids.len(), hidden.dims());
    let count = model.count_params();
    println!("trainable {} / total {} ({:.2}%)", count.trainable, count.total, 100.0 * count.fraction());
    Ok(())
}
