//! Exports raw text, scaled text and time-series token embeddings for a few
//! instances and draws their 2-D PCA projection as an SVG.

use dualcast::bench::{export_embeddings, pca_2d, plot_pca, read_embeddings, EmbeddingKind};
use dualcast::data::{sinusoid_table, WindowBatch};
use dualcast::{Forecaster, ModelConfig};

fn main() -> dualcast::Result<()> {
    let out = std::env::temp_dir().join("dualcast-embeddings");
    std::fs::create_dir_all(&out).map_err(|e| dualcast::Error::file(&out, e))?;
    let table = sinusoid_table(400, &[24, 12], 0.1, 0)?;
    let config = ModelConfig { lookback: 96, horizon: 24, n_channels: 2, d_model: 8, ..ModelConfig::default() };
    let model = Forecaster::new(config, 0)?;
    let batch = WindowBatch::from_table(&table, &[0, 50, 100, 150, 200], 96, 24);

    let csv = out.join("embeddings.csv");
    let rows = export_embeddings(&model, &batch, &csv)?;
    for kind in [EmbeddingKind::RawText, EmbeddingKind::ScaledText, EmbeddingKind::Time] {
        let stds: Vec<f64> = rows.iter().filter(|r| r.kind == kind).map(|r| r.std).collect();
        println!("{kind:?}: {} instances, token std {:.4}..{:.4}", stds.len(), stds.iter().cloned().fold(f64::INFINITY, f64::min), stds.iter().cloned().fold(0.0, f64::max));
    }

    let points: Vec<Vec<f64>> = read_embeddings(&csv)?.into_iter().map(|r| r.pooled).collect();
    let projected = pca_2d(&points)?;
    println!("first projected point {:.3?}", projected[0]);
    let svg = out.join("pca.svg");
    plot_pca(&csv, &svg)?;
    println!("wrote {} and {}", csv.display(), svg.display());
    Ok(())
}
