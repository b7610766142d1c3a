//! Time-series branch: reversible instance normalization, patching, patch
//! embedding and projection into the language-model hidden space.

use candle_core::{Tensor, Var};

use crate::error::{config_err, shape_err, Error, Result};
use crate::params::{affine, Linear, ParamStore};

pub const DEFAULT_NORM_EPS: f64 = 1e-5;

/// Statistics captured by [`instance_normalize`] for one instance
/// (all channels of one window).
#[derive(Debug, Clone, PartialEq)]
pub struct NormState {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub gain: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
    pub eps: f64,
    /// Channels whose variance fell below `eps` and were clamped.
    pub degenerate: Vec<usize>,
}

/// Standardizes each channel of a row-major `(len, n_channels)` window with
/// its own mean and population standard deviation, `std = sqrt(max(var, eps))`.
pub fn instance_normalize(window: &[f64], n_channels: usize, eps: f64) -> Result<(Vec<f64>, NormState)> {
    if n_channels == 0 || window.len() % n_channels != 0 {
        return shape_err(format!("{} values do not split into {n_channels} channels", window.len()));
    }
    let len = window.len() / n_channels;
    if len < 2 {
        return config_err("instance normalization needs at least two time steps");
    }
    let mut mean = vec![0.0; n_channels];
    let mut std = vec![0.0; n_channels];
    let mut degenerate = Vec::new();
    for c in 0..n_channels {
        let m = (0..len).map(|t| window[t * n_channels + c]).sum::<f64>() / len as f64;
        let var = (0..len)
            .map(|t| (window[t * n_channels + c] - m).powi(2))
            .sum::<f64>()
            / len as f64;
        if var < eps {
            log::debug!("channel {c}: variance {var:e} below eps, clamping");
            degenerate.push(c);
        }
        mean[c] = m;
        std[c] = var.max(eps).sqrt();
    }
    let out = window
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = i % n_channels;
            (v - mean[c]) / std[c]
        })
        .collect();
    Ok((
        out,
        NormState {
            mean,
            std,
            gain: None,
            bias: None,
            eps,
            degenerate,
        },
    ))
}

/// Undoes the affine map (if any) then the standardization of `state` on a
/// row-major `(horizon, n_channels)` forecast.
pub fn instance_denormalize(forecast: &[f64], n_channels: usize, state: &NormState) -> Result<Vec<f64>> {
    if n_channels != state.mean.len() || n_channels == 0 || forecast.len() % n_channels != 0 {
        return shape_err(format!(
            "forecast with {n_channels} channels against state with {}",
            state.mean.len()
        ));
    }
    Ok(forecast
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = i % n_channels;
            let mut x = *v;
            if let (Some(g), Some(b)) = (&state.gain, &state.bias) {
                x = (x - b[c]) / (g[c] + state.eps * state.eps);
            }
            x * state.std[c] + state.mean[c]
        })
        .collect())
}

/// Tensor statistics of a batched instance normalization, shaped `(B, 1, N)`.
#[derive(Debug, Clone)]
pub struct RevInStats {
    pub mean: Tensor,
    pub std: Tensor,
}

/// Batched reversible instance normalization over `(B, L, N)` inputs with an
/// optional learnable per-channel affine map.
#[derive(Debug, Clone)]
pub struct RevIn {
    pub gain: Option<Var>,
    pub bias: Option<Var>,
    pub eps: f64,
}

impl RevIn {
    pub fn new(store: &mut ParamStore, n_channels: usize, affine: bool, eps: f64) -> Result<Self> {
        let (gain, bias) = if affine {
            (
                Some(store.constant("revin.gain", &[n_channels], 1.0)?),
                Some(store.constant("revin.bias", &[n_channels], 0.0)?),
            )
        } else {
            (None, None)
        };
        Ok(RevIn { gain, bias, eps })
    }

    /// Statistics are computed on detached inputs (the data carries no gradient).
    pub fn normalize(&self, x: &Tensor) -> Result<(Tensor, RevInStats)> {
        let (_, len, _) = x.dims3()?;
        if len < 2 {
            return config_err("instance normalization needs at least two time steps");
        }
        let data = x.detach();
        let mean = data.mean_keepdim(1)?;
        let centered = data.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(1)?;
        let std = var.maximum(self.eps)?.sqrt()?;
        let mut out = x.broadcast_sub(&mean)?.broadcast_div(&std)?;
        if let (Some(g), Some(b)) = (&self.gain, &self.bias) {
            out = out.broadcast_mul(g.as_tensor())?.broadcast_add(b.as_tensor())?;
        }
        Ok((out, RevInStats { mean, std }))
    }

    /// Inverse of [`RevIn::normalize`] for `(B, H, N)` outputs.
    pub fn denormalize(&self, y: &Tensor, stats: &RevInStats) -> Result<Tensor> {
        let (_, _, n) = y.dims3()?;
        let (_, _, n_stats) = stats.mean.dims3()?;
        if n != n_stats {
            return shape_err(format!("forecast has {n} channels, statistics have {n_stats}"));
        }
        let mut out = y.clone();
        if let (Some(g), Some(b)) = (&self.gain, &self.bias) {
            out = out
                .broadcast_sub(b.as_tensor())?
                .broadcast_div(&(g.as_tensor() + self.eps * self.eps)?)?;
        }
        Ok(out.broadcast_mul(&stats.std)?.broadcast_add(&stats.mean)?)
    }
}

/// Number of patches after end-padding by `stride` copies of the last value:
/// `floor((lookback - patch_len) / stride) + 2`.
pub fn compute_patch_count(lookback: usize, patch_len: usize, stride: usize) -> Result<usize> {
    if patch_len == 0 || stride == 0 {
        return config_err("patch length and stride must be positive");
    }
    if lookback < patch_len {
        return config_err(format!(
            "look-back {lookback} is shorter than the patch length {patch_len}"
        ));
    }
    Ok((lookback - patch_len) / stride + 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    /// Row-major `(n_patches, patch_len)`.
    pub patches: Vec<f64>,
    pub n_patches: usize,
    pub patch_len: usize,
    pub stride: usize,
}

impl PatchSet {
    pub fn patch(&self, k: usize) -> &[f64] {
        &self.patches[k * self.patch_len..(k + 1) * self.patch_len]
    }
}

/// Indices into the padded series, patch-major: entry `k * patch_len + j`
/// is `k * stride + j`.
pub fn patch_gather_indices(lookback: usize, patch_len: usize, stride: usize) -> Result<Vec<u32>> {
    let n = compute_patch_count(lookback, patch_len, stride)?;
    Ok((0..n)
        .flat_map(|k| (0..patch_len).map(move |j| (k * stride + j) as u32))
        .collect())
}

fn padded(series: &[f64], stride: usize) -> Vec<f64> {
    let last = *series.last().expect("non-empty series");
    let mut out = series.to_vec();
    out.extend(std::iter::repeat(last).take(stride));
    out
}

/// Splits one series into overlapping patches.
pub fn patch(series: &[f64], patch_len: usize, stride: usize) -> Result<PatchSet> {
    let idx = patch_gather_indices(series.len(), patch_len, stride)?;
    let padded = padded(series, stride);
    Ok(PatchSet {
        patches: idx.iter().map(|&i| padded[i as usize]).collect(),
        n_patches: idx.len() / patch_len,
        patch_len,
        stride,
    })
}

/// Batched patching: `(K, L)` to `(K, N_P, L_P)`.
pub fn patch_tensor(series: &Tensor, patch_len: usize, stride: usize) -> Result<Tensor> {
    let (k, len) = series.dims2()?;
    let idx = patch_gather_indices(len, patch_len, stride)?;
    let n_patches = idx.len() / patch_len;
    let last = series.narrow(1, len - 1, 1)?;
    let pad = last.broadcast_as((k, stride))?.contiguous()?;
    let padded = Tensor::cat(&[series, &pad], 1)?;
    let idx = Tensor::from_vec(idx, n_patches * patch_len, series.device())?;
    Ok(padded
        .index_select(&idx, 1)?
        .reshape((k, n_patches, patch_len))?)
}

/// Per-patch linear embedding, `(.., L_P) -> (.., d_m)`.
pub fn embed_patches(patches: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    affine(patches, weight, bias)
}

/// Projection into the language-model hidden space, `(.., d_m) -> (.., d_LLM)`.
pub fn map_to_llm_dim(embedded: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    affine(embedded, weight, bias)
}

/// Trainable part of the time-series branch.
#[derive(Debug, Clone)]
pub struct PatchEncoder {
    pub patch_len: usize,
    pub stride: usize,
    pub embed: Linear,
    pub map: Linear,
    pub position: Option<Var>,
}

impl PatchEncoder {
    pub fn new(
        store: &mut ParamStore,
        lookback: usize,
        patch_len: usize,
        stride: usize,
        d_model: usize,
        d_llm: usize,
        positional: bool,
    ) -> Result<Self> {
        let n_patches = compute_patch_count(lookback, patch_len, stride)?;
        let embed = store.linear("patch.embed", patch_len, d_model)?;
        let position = if positional {
            Some(store.normal("patch.position", &[n_patches, d_model], 0.02)?)
        } else {
            None
        };
        let map = store.linear("patch.map", d_model, d_llm)?;
        Ok(PatchEncoder {
            patch_len,
            stride,
            embed,
            map,
            position,
        })
    }

    /// `(K, L)` normalized series to the `(K, N_P, d_LLM)` embedding.
    pub fn forward(&self, series: &Tensor) -> Result<Tensor> {
        let patches = patch_tensor(series, self.patch_len, self.stride)?;
        let mut emb = embed_patches(&patches, self.embed.weight.as_tensor(), self.embed.bias.as_tensor())?;
        if let Some(pos) = &self.position {
            emb = emb.broadcast_add(pos.as_tensor())?;
        }
        map_to_llm_dim(&emb, self.map.weight.as_tensor(), self.map.bias.as_tensor())
    }
}

/// Single-instance view of the time-series embedding, `(N_P, d_LLM)`.
#[derive(Debug, Clone)]
pub struct TimeSeriesEmbedding {
    pub values: Tensor,
}

impl TimeSeriesEmbedding {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.rank() != 2 {
            return Err(Error::Shape(format!("expected (N_P, d_LLM), got {:?}", values.dims())));
        }
        Ok(TimeSeriesEmbedding { values })
    }

    pub fn n_patches(&self) -> usize {
        self.values.dims()[0]
    }

    pub fn d_llm(&self) -> usize {
        self.values.dims()[1]
    }
}
