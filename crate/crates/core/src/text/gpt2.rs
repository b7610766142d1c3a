//! Decoder-only GPT-2 backbone run as a frozen feature encoder over input
//! embeddings (no generation head).

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::affine;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gpt2Config {
    pub vocab_size: usize,
    pub n_positions: usize,
    pub n_embd: usize,
    pub n_head: usize,
    pub n_layer: usize,
    #[serde(default = "default_ln_eps")]
    pub layer_norm_epsilon: f64,
}

fn default_ln_eps() -> f64 {
    1e-5
}

impl Gpt2Config {
    /// The 768-wide GPT-2 truncated to `n_layer` blocks.
    pub fn base(n_layer: usize) -> Self {
        Gpt2Config {
            vocab_size: 50257,
            n_positions: 1024,
            n_embd: 768,
            n_head: 12,
            n_layer,
            layer_norm_epsilon: 1e-5,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Encoding(format!("bad backbone config {}: {e}", path.display())))
    }

    /// Every frozen array with its shape, in load order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.n_embd;
        let mut shapes = vec![
            ("wte.weight".to_string(), vec![self.vocab_size, d]),
            ("wpe.weight".to_string(), vec![self.n_positions, d]),
        ];
        for i in 0..self.n_layer {
            for (name, shape) in [
                ("ln_1.weight", vec![d]),
                ("ln_1.bias", vec![d]),
                ("attn.c_attn.weight", vec![d, 3 * d]),
                ("attn.c_attn.bias", vec![3 * d]),
                ("attn.c_proj.weight", vec![d, d]),
                ("attn.c_proj.bias", vec![d]),
                ("ln_2.weight", vec![d]),
                ("ln_2.bias", vec![d]),
                ("mlp.c_fc.weight", vec![d, 4 * d]),
                ("mlp.c_fc.bias", vec![4 * d]),
                ("mlp.c_proj.weight", vec![4 * d, d]),
                ("mlp.c_proj.bias", vec![d]),
            ] {
                shapes.push((format!("h.{i}.{name}"), shape));
            }
        }
        shapes.push(("ln_f.weight".to_string(), vec![d]));
        shapes.push(("ln_f.bias".to_string(), vec![d]));
        shapes
    }
}

#[derive(Debug, Clone)]
struct Block {
    ln_1: (Tensor, Tensor),
    c_attn: (Tensor, Tensor),
    c_proj: (Tensor, Tensor),
    ln_2: (Tensor, Tensor),
    c_fc: (Tensor, Tensor),
    mlp_proj: (Tensor, Tensor),
}

#[derive(Debug, Clone)]
pub struct Gpt2Backbone {
    pub config: Gpt2Config,
    weights: Vec<(String, Tensor)>,
    wte: Tensor,
    wpe: Tensor,
    blocks: Vec<Block>,
    ln_f: (Tensor, Tensor),
}

impl Gpt2Backbone {
    /// Builds from named arrays. Names may carry a `transformer.` prefix;
    /// blocks beyond `config.n_layer` are ignored.
    pub fn from_tensors(config: Gpt2Config, mut raw: HashMap<String, Tensor>, dtype: DType) -> Result<Self> {
        let mut weights = Vec::new();
        for (name, shape) in config.param_shapes() {
            let t = raw
                .remove(&name)
                .or_else(|| raw.remove(&format!("transformer.{name}")))
                .ok_or_else(|| Error::Encoding(format!("backbone weights lack {name}")))?;
            if t.dims() != shape.as_slice() {
                return Err(Error::Encoding(format!(
                    "{name}: expected shape {shape:?}, found {:?}",
                    t.dims()
                )));
            }
            weights.push((name, t.to_dtype(dtype)?));
        }
        let get = |name: &str| -> Tensor {
            weights
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .expect("validated above")
        };
        let pair = |prefix: &str| (get(&format!("{prefix}.weight")), get(&format!("{prefix}.bias")));
        let blocks = (0..config.n_layer)
            .map(|i| Block {
                ln_1: pair(&format!("h.{i}.ln_1")),
                c_attn: pair(&format!("h.{i}.attn.c_attn")),
                c_proj: pair(&format!("h.{i}.attn.c_proj")),
                ln_2: pair(&format!("h.{i}.ln_2")),
                c_fc: pair(&format!("h.{i}.mlp.c_fc")),
                mlp_proj: pair(&format!("h.{i}.mlp.c_proj")),
            })
            .collect();
        Ok(Gpt2Backbone {
            wte: get("wte.weight"),
            wpe: get("wpe.weight"),
            ln_f: pair("ln_f"),
            blocks,
            weights,
            config,
        })
    }

    /// Loads `config.json` and `model.safetensors` from `dir`, keeping the
    /// first `n_layer` blocks.
    pub fn load(dir: impl AsRef<Path>, n_layer: usize, dtype: DType, device: &Device) -> Result<Self> {
        let dir = dir.as_ref();
        let mut config = Gpt2Config::from_file(dir.join("config.json"))?;
        if n_layer > config.n_layer {
            return Err(Error::Config(format!(
                "requested {n_layer} layers, checkpoint has {}",
                config.n_layer
            )));
        }
        config.n_layer = n_layer;
        let path = dir.join("model.safetensors");
        let raw = candle_core::safetensors::load(&path, device)
            .map_err(|e| Error::Encoding(format!("cannot read {}: {e}", path.display())))?;
        Gpt2Backbone::from_tensors(config, raw, dtype)
    }

    pub fn word_embeddings(&self) -> &Tensor {
        &self.wte
    }

    pub fn frozen_tensors(&self) -> &[(String, Tensor)] {
        &self.weights
    }

    /// Last hidden states for `(K, T, d)` input embeddings.
    pub fn forward(&self, v: &Tensor) -> Result<Tensor> {
        let (_, t, _) = v.dims3()?;
        if t > self.config.n_positions {
            return Err(Error::PromptOverflow {
                tokens: t,
                capacity: self.config.n_positions,
            });
        }
        let mut h = v.broadcast_add(&self.wpe.narrow(0, 0, t)?)?;
        let mask = causal_mask(t, v.dtype(), v.device())?;
        let eps = self.config.layer_norm_epsilon;
        for block in &self.blocks {
            let a = self.attention(&layer_norm(&h, &block.ln_1, eps)?, block, &mask)?;
            h = (h + a)?;
            let x = layer_norm(&h, &block.ln_2, eps)?;
            let m = affine(&x, &block.c_fc.0, &block.c_fc.1)?.gelu()?;
            h = (h + affine(&m, &block.mlp_proj.0, &block.mlp_proj.1)?)?;
        }
        layer_norm(&h, &self.ln_f, eps)
    }

    fn attention(&self, x: &Tensor, block: &Block, mask: &Tensor) -> Result<Tensor> {
        let (k, t, d) = x.dims3()?;
        let heads = self.config.n_head;
        let hd = d / heads;
        let qkv = affine(x, &block.c_attn.0, &block.c_attn.1)?;
        let split = |i: usize| -> Result<Tensor> {
            Ok(qkv
                .narrow(2, i * d, d)?
                .reshape((k, t, heads, hd))?
                .transpose(1, 2)?
                .contiguous()?)
        };
        let (q, key, val) = (split(0)?, split(1)?, split(2)?);
        let scores = (q.matmul(&key.t()?)? / (hd as f64).sqrt())?.broadcast_add(mask)?;
        let probs = softmax_last(&scores)?;
        let y = probs
            .matmul(&val)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((k, t, d))?;
        affine(&y, &block.c_proj.0, &block.c_proj.1)
    }
}

fn causal_mask(t: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mask: Vec<f64> = (0..t)
        .flat_map(|i| (0..t).map(move |j| if j > i { -1e9 } else { 0.0 }))
        .collect();
    Ok(Tensor::from_vec(mask, (t, t), device)?.to_dtype(dtype)?)
}

pub(crate) fn layer_norm(x: &Tensor, (w, b): &(Tensor, Tensor), eps: f64) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let xc = x.broadcast_sub(&mean)?;
    let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
    let xn = xc.broadcast_div(&(var + eps)?.sqrt()?)?;
    Ok(xn.broadcast_mul(w)?.broadcast_add(b)?)
}

pub(crate) fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}
