use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const STUB_EMBEDDING_STD: f64 = 0.02;

/// Shape of the deterministic stand-in backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubConfig {
    pub vocab_size: usize,
    pub d_llm: usize,
    pub seed: u64,
    /// Weight ratio between consecutive preceding rows in the causal mix.
    pub decay: f64,
    pub context_len: usize,
}

impl Default for StubConfig {
    fn default() -> Self {
        StubConfig {
            vocab_size: 4096,
            d_llm: 32,
            seed: 0,
            decay: 0.8,
            context_len: 1024,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Embedding row of `token` under `seed`: `d_llm` draws from `N(0, 0.02^2)`
/// using a ChaCha8 stream keyed by `splitmix64(seed ^ splitmix64(token))`.
pub fn stub_embedding_row(seed: u64, token: u32, d_llm: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(u64::from(token))));
    let normal = Normal::new(0.0, STUB_EMBEDDING_STD).expect("valid std");
    (0..d_llm).map(|_| normal.sample(&mut rng)).collect()
}

/// Frozen seeded embedding table followed by strictly causal
/// exponential-decay mixing and a fixed residual nonlinearity:
/// `m_t = sum_{s<=t} decay^(t-s) v_s / sum_{s<=t} decay^(t-s)`,
/// `out_t = m_t + tanh(m_t W)`.
#[derive(Debug, Clone)]
pub struct StubBackbone {
    pub config: StubConfig,
    pub table: Tensor,
    pub mix: Tensor,
}

impl StubBackbone {
    pub fn new(config: StubConfig, dtype: DType, device: &Device) -> Result<Self> {
        let d = config.d_llm;
        let mut rows = Vec::with_capacity(config.vocab_size * d);
        for token in 0..config.vocab_size as u32 {
            rows.extend(stub_embedding_row(config.seed, token, d));
        }
        let table = Tensor::from_vec(rows, (config.vocab_size, d), device)?.to_dtype(dtype)?;
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ 0x5354_5542_4D49_5821));
        let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid std");
        let mix: Vec<f64> = (0..d * d).map(|_| normal.sample(&mut rng)).collect();
        let mix = Tensor::from_vec(mix, (d, d), device)?.to_dtype(dtype)?;
        Ok(StubBackbone { config, table, mix })
    }

    pub fn decay_matrix(&self, len: usize, dtype: DType, device: &Device) -> Result<Tensor> {
        let g = self.config.decay;
        let mut w = vec![0.0; len * len];
        for t in 0..len {
            let norm: f64 = (0..=t).map(|s| g.powi((t - s) as i32)).sum();
            for s in 0..=t {
                w[t * len + s] = g.powi((t - s) as i32) / norm;
            }
        }
        Ok(Tensor::from_vec(w, (len, len), device)?.to_dtype(dtype)?)
    }

    /// `(K, T, d)` to `(K, T, d)`.
    pub fn forward(&self, v: &Tensor) -> Result<Tensor> {
        let (k, t, _) = v.dims3()?;
        let w = self
            .decay_matrix(t, v.dtype(), v.device())?
            .unsqueeze(0)?
            .broadcast_as((k, t, t))?
            .contiguous()?;
        let m = w.matmul(v)?;
        Ok((&m + m.broadcast_matmul(&self.mix)?.tanh()?)?)
    }

    pub fn frozen_tensors(&self) -> Vec<(String, Tensor)> {
        vec![
            ("stub.table".to_string(), self.table.clone()),
            ("stub.mix".to_string(), self.mix.clone()),
        ]
    }

    pub fn param_shapes(config: &StubConfig) -> Vec<(String, Vec<usize>)> {
        vec![
            ("stub.table".to_string(), vec![config.vocab_size, config.d_llm]),
            ("stub.mix".to_string(), vec![config.d_llm, config.d_llm]),
        ]
    }
}
