//! Experiment driver: runs, sweeps, ablations, reports and embedding export.

mod config;
mod embed;
mod report;
mod run;

pub use config::{Ablation, RunConfig, SweepAxis};
pub use embed::{export_embeddings, pca_2d, plot_pca, read_embeddings, EmbeddingKind, EmbeddingRow};
pub use report::{report, seed_rows_csv, summary_json};
pub use run::{
    ablate, run_experiment, run_on_data, sweep, thin_windows, PreparedData, RunResult, SeedResult, SeedStatus,
};
