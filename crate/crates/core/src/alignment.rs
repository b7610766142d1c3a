//! Balanced cross-modal alignment: horizon-aware truncation of the text
//! embedding, std-ratio rescaling onto the time-series embedding, and an
//! InfoNCE objective with a learnable temperature.

use candle_core::{Tensor, Var, D};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Error, Result};
use crate::params::{to_f64_vec, ParamStore};

pub const TAU_MIN: f64 = 1e-2;
pub const TAU_MAX: f64 = 1e2;
const DEGENERATE_STD: f64 = 1e-8;
const UNIT_NORM_TOLERANCE: f64 = 1e-4;

/// Number of text tokens kept: `clamp(min(N_P, floor(N_P * H / L)), 1, N_P)`.
pub fn truncation_length(n_patches: usize, horizon: usize, lookback: usize) -> usize {
    let n_patches = n_patches.max(1);
    let raw = n_patches * horizon / lookback.max(1);
    raw.min(n_patches).max(1)
}

/// Keeps the last `n_keep` rows of a `(N_T, d)` embedding. Requests longer
/// than the prompt are clamped to `N_T`.
pub fn truncate(embedding: &Tensor, n_keep: usize) -> Result<Tensor> {
    let (n_tokens, _) = embedding.dims2()?;
    let n_keep = if n_keep > n_tokens {
        log::warn!("keeping {n_tokens} text tokens instead of {n_keep}: prompt is shorter");
        n_tokens
    } else {
        n_keep
    };
    Ok(embedding.narrow(0, n_tokens - n_keep, n_keep)?)
}

/// Batched truncation of right-padded `(K, T_max, d)` encodings whose real
/// lengths are `lengths`. Returns `(K, n, d)` with `n = min(n_keep, min(lengths))`.
pub fn truncate_batch(encoded: &Tensor, lengths: &[usize], n_keep: usize) -> Result<(Tensor, usize)> {
    let (k, t_max, d) = encoded.dims3()?;
    if lengths.len() != k {
        return shape_err(format!("{} lengths for {k} prompts", lengths.len()));
    }
    let shortest = lengths.iter().copied().min().unwrap_or(0);
    if shortest == 0 || lengths.iter().any(|&l| l > t_max) {
        return shape_err("prompt lengths must lie in 1..=T_max");
    }
    let n = if n_keep > shortest {
        log::warn!("keeping {shortest} text tokens instead of {n_keep}: prompt is shorter");
        shortest
    } else {
        n_keep
    };
    let idx: Vec<u32> = lengths
        .iter()
        .enumerate()
        .flat_map(|(i, &len)| (len - n..len).map(move |j| (i * t_max + j) as u32))
        .collect();
    let idx = Tensor::from_vec(idx, k * n, encoded.device())?;
    let rows = encoded.reshape((k * t_max, d))?.index_select(&idx, 0)?;
    Ok((rows.reshape((k, n, d))?, n))
}

/// How the text/time standard deviations are reduced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdMode {
    /// One scalar over all token x feature entries of an instance.
    #[default]
    Scalar,
    /// One value per feature, over the token dimension.
    PerFeature,
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// `alpha = STD_time / STD_text` for one instance, from detached statistics.
/// A degenerate text embedding (`STD_text < 1e-8`) yields `alpha = 1`.
pub fn scaling_factor(text_trunc: &Tensor, time: &Tensor) -> Result<f64> {
    if text_trunc.elem_count() == 0 || time.elem_count() == 0 {
        return config_err("scaling needs nonempty embeddings");
    }
    let std_text = population_std(&to_f64_vec(text_trunc)?);
    let std_time = population_std(&to_f64_vec(time)?);
    Ok(std_ratio(std_time, std_text))
}

fn std_ratio(std_time: f64, std_text: f64) -> f64 {
    if std_text < DEGENERATE_STD {
        log::warn!("text embedding std {std_text:e} is degenerate; using alpha = 1");
        1.0
    } else {
        std_time / std_text
    }
}

/// Batched, detached scaling factors for `(K, N_E, d)` text and `(K, N_P, d)`
/// time embeddings: shape `(K, 1, 1)` (scalar) or `(K, 1, d)` (per feature).
pub fn scaling_factors(text_trunc: &Tensor, time: &Tensor, mode: StdMode) -> Result<Tensor> {
    let (k, n_e, d) = text_trunc.dims3()?;
    let (k2, n_p, d2) = time.dims3()?;
    if k != k2 || d != d2 {
        return shape_err(format!("text {:?} vs time {:?}", text_trunc.dims(), time.dims()));
    }
    let text = to_f64_vec(text_trunc)?;
    let ts = to_f64_vec(time)?;
    let mut alphas = Vec::new();
    for i in 0..k {
        let tx = &text[i * n_e * d..(i + 1) * n_e * d];
        let tm = &ts[i * n_p * d..(i + 1) * n_p * d];
        match mode {
            StdMode::Scalar => alphas.push(std_ratio(population_std(tm), population_std(tx))),
            StdMode::PerFeature => {
                for f in 0..d {
                    let col = |x: &[f64], rows: usize| -> Vec<f64> { (0..rows).map(|r| x[r * d + f]).collect() };
                    alphas.push(std_ratio(population_std(&col(tm, n_p)), population_std(&col(tx, n_e))));
                }
            }
        }
    }
    let shape = match mode {
        StdMode::Scalar => (k, 1, 1),
        StdMode::PerFeature => (k, 1, d),
    };
    Ok(Tensor::from_vec(alphas, shape, text_trunc.device())?.to_dtype(text_trunc.dtype())?)
}

/// Text embedding after truncation and rescaling.
#[derive(Debug, Clone)]
pub struct ScaledTextEmbedding {
    pub values: Tensor,
    pub alpha: f64,
}

pub fn scale(text_trunc: &Tensor, alpha: f64) -> Result<ScaledTextEmbedding> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return config_err(format!("scaling factor must be positive, got {alpha}"));
    }
    Ok(ScaledTextEmbedding {
        values: (text_trunc * alpha)?,
        alpha,
    })
}

/// Mean over the token dimension followed by l2 normalization. Accepts
/// `(rows, d)` or `(K, rows, d)`.
pub fn pool_and_normalize(x: &Tensor) -> Result<Tensor> {
    let token_dim = x.rank().checked_sub(2).ok_or_else(|| Error::Shape("need at least 2 dims".into()))?;
    if x.dims()[token_dim] == 0 {
        return shape_err("cannot pool zero rows");
    }
    let mean = x.mean(token_dim)?;
    let norm = mean.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?;
    let smallest = to_f64_vec(&norm)?.into_iter().fold(f64::INFINITY, f64::min);
    if !(smallest > 1e-12) {
        return Err(Error::Normalization("pooled embedding has zero norm".into()));
    }
    Ok(mean.broadcast_div(&norm)?)
}

/// Learnable log-temperature, `tau = exp(theta)` clamped to `[1e-2, 1e2]`.
#[derive(Debug, Clone)]
pub struct AlignmentState {
    pub theta: Var,
    pub tau_min: f64,
    pub tau_max: f64,
}

impl AlignmentState {
    pub fn new(store: &mut ParamStore) -> Result<Self> {
        Ok(AlignmentState {
            theta: store.constant("align.theta", &[], 0.0)?,
            tau_min: TAU_MIN,
            tau_max: TAU_MAX,
        })
    }

    pub fn tau(&self) -> Result<Tensor> {
        Ok(self.theta.as_tensor().exp()?.clamp(self.tau_min, self.tau_max)?)
    }
}

/// One-directional InfoNCE over `K` pairs of unit vectors: row `i` of
/// `queries` is positive with row `i` of `keys` and negative with every
/// other row. `tau` is a scalar tensor.
pub fn alignment_loss(queries: &Tensor, keys: &Tensor, tau: &Tensor) -> Result<Tensor> {
    let (k, d) = queries.dims2()?;
    if keys.dims() != [k, d] {
        return shape_err(format!("queries {:?} vs keys {:?}", queries.dims(), keys.dims()));
    }
    if k == 0 {
        return config_err("alignment needs at least one pair");
    }
    for (label, t) in [("query", queries), ("key", keys)] {
        let norms = to_f64_vec(&t.sqr()?.sum(1)?.sqrt()?)?;
        if let Some(bad) = norms.iter().find(|n| (*n - 1.0).abs() > UNIT_NORM_TOLERANCE) {
            return Err(Error::Contract(format!("{label} vector has norm {bad}, expected 1")));
        }
    }
    let logits = queries.matmul(&keys.t()?)?.broadcast_div(tau)?;
    let max = logits.max_keepdim(1)?.detach();
    let lse = (logits.broadcast_sub(&max)?.exp()?.sum_keepdim(1)?.log()? + &max)?;
    let eye = Tensor::eye(k, logits.dtype(), logits.device())?;
    let positive = (&logits * eye)?.sum_keepdim(1)?;
    Ok((lse - positive)?.mean_all()?)
}
