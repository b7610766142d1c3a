use std::path::Path;

use serde_json::json;

use super::run::{RunResult, SeedStatus};
use crate::error::{Error, Result};

const CSV_HEADER: [&str; 12] = [
    "dataset",
    "lookback",
    "horizon",
    "seed",
    "status",
    "mse",
    "mae",
    "params_trainable",
    "params_total",
    "wall_clock_s",
    "ablation",
    "fingerprint",
];

fn sorted(results: &[RunResult]) -> Vec<&RunResult> {
    let mut out: Vec<&RunResult> = results.iter().collect();
    out.sort_by(|a, b| a.fingerprint.cmp(&b.fingerprint));
    out
}

/// One row per seed per run, sorted by fingerprint then seed.
pub fn seed_rows_csv(results: &[RunResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in sorted(results) {
        let mut seeds: Vec<_> = r.seeds.iter().collect();
        seeds.sort_by_key(|s| s.seed);
        for s in seeds {
            let status = match &s.status {
                SeedStatus::Ok => "ok",
                SeedStatus::Failed { .. } => "failed",
            };
            w.write_record([
                r.config.dataset_label(),
                r.config.lookback.to_string(),
                r.config.horizon.to_string(),
                s.seed.to_string(),
                status.to_string(),
                format!("{:.6}", s.mse),
                format!("{:.6}", s.mae),
                r.params.trainable.to_string(),
                r.params.total.to_string(),
                format!("{:.3}", s.wall_clock_s),
                r.config.ablation.map_or("none", |a| a.as_str()).to_string(),
                r.fingerprint.clone(),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

/// Seed-averaged entries, one per run.
pub fn summary_json(results: &[RunResult]) -> Result<String> {
    let entries: Vec<_> = sorted(results)
        .into_iter()
        .map(|r| {
            let mut seeds: Vec<_> = r.seeds.iter().collect();
            seeds.sort_by_key(|s| s.seed);
            json!({
                "fingerprint": r.fingerprint,
                "dataset": r.config.dataset_label(),
                "lookback": r.config.lookback,
                "horizon": r.config.horizon,
                "lambda": r.config.lambda,
                "text_len_override": r.config.text_len_override,
                "few_shot_ratio": r.config.few_shot_ratio,
                "ablation": r.config.ablation.map(|a| a.as_str()),
                "params": {
                    "trainable": r.params.trainable,
                    "total": r.params.total,
                    "fraction": r.params.fraction(),
                },
                "mean_mse": finite_or_null(r.mean_mse),
                "mean_mae": finite_or_null(r.mean_mae),
                "seeds": seeds.iter().map(|s| json!({
                    "seed": s.seed,
                    "status": s.status,
                    "mse": finite_or_null(s.mse),
                    "mae": finite_or_null(s.mae),
                    "epochs": s.history.epochs.len(),
                    "best_epoch": s.history.best_epoch,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    serde_json::to_string_pretty(&entries).map_err(|e| Error::Data(e.to_string()))
}

/// Writes `results.csv` and `results.json` into `out_dir`.
pub fn report(results: &[RunResult], out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    if results.is_empty() {
        return Err(Error::Config("nothing to report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let csv_path = dir.join("results.csv");
    std::fs::write(&csv_path, seed_rows_csv(results)?).map_err(|e| Error::file(&csv_path, e))?;
    let json_path = dir.join("results.json");
    std::fs::write(&json_path, summary_json(results)? + "\n").map_err(|e| Error::file(&json_path, e))
}
