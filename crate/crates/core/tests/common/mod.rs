#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use dualcast::data::{DatasetTable, WindowBatch};
use dualcast::model::{BackendConfig, HeadKind, ModelConfig};
use dualcast::text::{BackendKind, StubConfig};

/// Hourly table whose channel `c` is `sin(2 pi t / periods[c] + c) + noise`.
pub fn sinusoid_table(rows: usize, periods: &[usize], noise: f64, seed: u64) -> DatasetTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
    let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let timestamps = (0..rows).map(|i| start + Duration::hours(i as i64)).collect();
    let mut values = Vec::with_capacity(rows * periods.len());
    for t in 0..rows {
        for (c, &p) in periods.iter().enumerate() {
            let clean = (2.0 * std::f64::consts::PI * t as f64 / p as f64 + c as f64).sin();
            values.push(clean + if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 });
        }
    }
    let names = (0..periods.len()).map(|c| format!("ch{c}")).collect();
    DatasetTable::new("synthetic", timestamps, values, names).unwrap()
}

pub fn random_batch(b: usize, l: usize, h: usize, n: usize, seed: u64) -> WindowBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let level: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut draw = |len: usize| -> Vec<f64> {
        (0..b * len * n)
            .map(|i| level[i % n] + rng.random_range(-1.0..1.0))
            .collect()
    };
    let inputs = draw(l);
    let targets = draw(h);
    WindowBatch {
        inputs,
        targets,
        window_start_indices: (0..b).collect(),
        lookback: l,
        horizon: h,
        n_channels: n,
    }
}

pub fn tiny_stub(d_llm: usize) -> StubConfig {
    StubConfig {
        vocab_size: 512,
        d_llm,
        seed: 7,
        decay: 0.8,
        context_len: 512,
    }
}

/// Small stub-backed model configuration.
pub fn tiny_config(l: usize, h: usize, n: usize, d_llm: usize) -> ModelConfig {
    ModelConfig {
        dataset: "synthetic".into(),
        lookback: l,
        horizon: h,
        n_channels: n,
        patch_len: 8,
        stride: 4,
        d_model: 4,
        n_learn: 3,
        head: HeadKind::Full,
        backend: BackendConfig {
            kind: BackendKind::Stub,
            llm_layers: 1,
            llm_weights_dir: None,
            stub: tiny_stub(d_llm),
        },
        ..ModelConfig::default()
    }
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny_gpt2")
}

/// Directory with a real 768-wide GPT-2 (`config.json`, `model.safetensors`,
/// `tokenizer.json`), taken from `DUALCAST_GPT2_DIR`.
pub fn pretrained_dir() -> Option<PathBuf> {
    let dir = PathBuf::from(std::env::var_os("DUALCAST_GPT2_DIR")?);
    ["config.json", "model.safetensors", "tokenizer.json"]
        .iter()
        .all(|f| dir.join(f).is_file())
        .then_some(dir)
}

/// Benchmark CSV from `DUALCAST_DATA_DIR`.
pub fn benchmark_csv(name: &str) -> Option<PathBuf> {
    let path = PathBuf::from(std::env::var_os("DUALCAST_DATA_DIR")?).join(format!("{name}.csv"));
    path.is_file().then_some(path)
}

pub fn population_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Double-loop InfoNCE: `-(1/K) sum_i log softmax_j(q_i . k_j / tau)[i]`.
pub fn infonce_loop(q: &[Vec<f64>], k: &[Vec<f64>], tau: f64) -> f64 {
    let n = q.len();
    let mut total = 0.0;
    for i in 0..n {
        let logits: Vec<f64> = (0..n)
            .map(|j| q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum::<f64>() / tau)
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        total += lse - logits[i];
    }
    total / n as f64
}

/// `O(L^2)` circular autocorrelation of the mean-removed window, divided by `L`.
pub fn direct_autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    (0..n)
        .map(|lag| (0..n).map(|t| (x[t] - m) * (x[(t + lag) % n] - m)).sum::<f64>() / n as f64)
        .collect()
}
