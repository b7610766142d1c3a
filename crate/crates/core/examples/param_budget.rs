//! Trainable vs. frozen parameter counts for the GPT-2 backbone, without
//! loading any weights.

use dualcast::model::{count_params_for_config, BackendConfig, HeadKind};
use dualcast::text::BackendKind;
use dualcast::ModelConfig;

fn main() -> dualcast::Result<()> {
    let base = ModelConfig {
        backend: BackendConfig { kind: BackendKind::Pretrained, llm_layers: 6, ..BackendConfig::default() },
        ..ModelConfig::default()
    };
    println!("{:<22} {:>10} {:>12} {:>9}", "head", "trainable", "total", "share");
    for head in [HeadKind::Full, HeadKind::LowRank { rank: 16 }, HeadKind::LowRank { rank: 4 }] {
        let c = count_params_for_config(&ModelConfig { head, ..base.clone() })?;
        println!(
            "{:<22} {:>9.2}M {:>11.2}M {:>8.2}%",
            format!("{head:?}"),
            c.trainable as f64 / 1e6,
            c.total as f64 / 1e6,
            100.0 * c.fraction()
        );
    }
    for layers in [2, 6, 12] {
        let c = count_params_for_config(&ModelConfig {
            backend: BackendConfig { llm_layers: layers, ..base.backend.clone() },
            ..base.clone()
        })?;
        println!("{layers:>2} frozen layers: {:.2}M frozen", (c.total - c.trainable) as f64 / 1e6);
    }
    Ok(())
}
