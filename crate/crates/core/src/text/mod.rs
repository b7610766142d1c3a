//! Text branch: statistical prompts, learnable prompt prefix and a frozen
//! causal language-model encoder.

mod gpt2;
mod prompt;
mod stats;
mod stub;
mod tokenizer;

use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use gpt2::{Gpt2Backbone, Gpt2Config};
pub use prompt::{
    dataset_description, format_sig4, render_prompt, PromptMeta, PromptTemplate, PromptText,
    DEFAULT_TEMPLATE,
};
pub use stats::{
    circular_autocorrelation, max_candidate_lag, rank_lags, summarize, top_lags, StatSummary, Trend,
    DEFAULT_TOP_LAGS,
};
pub use stub::{stub_embedding_row, StubBackbone, StubConfig, STUB_EMBEDDING_STD};
pub use tokenizer::TextTokenizer;

use crate::error::{shape_err, Error, Result};
use crate::params::{to_f64_vec, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Pretrained,
    Stub,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrained" => Ok(BackendKind::Pretrained),
            "stub" => Ok(BackendKind::Stub),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Backbone {
    Stub(StubBackbone),
    Gpt2(Box<Gpt2Backbone>),
}

/// Identity of a frozen encoder: kind, depth, width and a digest of every
/// frozen array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextEncoderHandle {
    pub backend: BackendKind,
    pub layer_count: usize,
    pub d_llm: usize,
    pub fingerprint: String,
}

/// Frozen backbone plus its tokenizer. Nothing in here is ever updated.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub backbone: Backbone,
    pub tokenizer: TextTokenizer,
}

impl TextEncoder {
    pub fn stub(config: StubConfig, dtype: DType, device: &Device) -> Result<Self> {
        let tokenizer = TextTokenizer::stub(config.vocab_size);
        Ok(TextEncoder {
            backbone: Backbone::Stub(StubBackbone::new(config, dtype, device)?),
            tokenizer,
        })
    }

    /// Loads weights and `tokenizer.json` from a local directory.
    pub fn pretrained(dir: impl AsRef<Path>, n_layer: usize, dtype: DType, device: &Device) -> Result<Self> {
        let dir = dir.as_ref();
        let backbone = Gpt2Backbone::load(dir, n_layer, dtype, device)?;
        let tokenizer = TextTokenizer::from_file(dir.join("tokenizer.json"))?;
        Ok(TextEncoder {
            backbone: Backbone::Gpt2(Box::new(backbone)),
            tokenizer,
        })
    }

    pub fn kind(&self) -> BackendKind {
        match self.backbone {
            Backbone::Stub(_) => BackendKind::Stub,
            Backbone::Gpt2(_) => BackendKind::Pretrained,
        }
    }

    pub fn d_llm(&self) -> usize {
        match &self.backbone {
            Backbone::Stub(s) => s.config.d_llm,
            Backbone::Gpt2(g) => g.config.n_embd,
        }
    }

    pub fn layer_count(&self) -> usize {
        match &self.backbone {
            Backbone::Stub(_) => 1,
            Backbone::Gpt2(g) => g.config.n_layer,
        }
    }

    pub fn context_len(&self) -> usize {
        match &self.backbone {
            Backbone::Stub(s) => s.config.context_len,
            Backbone::Gpt2(g) => g.config.n_positions,
        }
    }

    pub fn vocab_size(&self) -> usize {
        match &self.backbone {
            Backbone::Stub(s) => s.config.vocab_size,
            Backbone::Gpt2(g) => g.config.vocab_size,
        }
    }

    fn embedding_table(&self) -> &Tensor {
        match &self.backbone {
            Backbone::Stub(s) => &s.table,
            Backbone::Gpt2(g) => g.word_embeddings(),
        }
    }

    pub fn frozen_tensors(&self) -> Vec<(String, Tensor)> {
        match &self.backbone {
            Backbone::Stub(s) => s.frozen_tensors(),
            Backbone::Gpt2(g) => g.frozen_tensors().to_vec(),
        }
    }

    pub fn frozen_param_count(&self) -> usize {
        self.frozen_tensors().iter().map(|(_, t)| t.elem_count()).sum()
    }

    /// Empirical standard deviation of the word-embedding table.
    pub fn embedding_std(&self) -> Result<f64> {
        match &self.backbone {
            Backbone::Stub(_) => Ok(STUB_EMBEDDING_STD),
            Backbone::Gpt2(g) => {
                let v = to_f64_vec(g.word_embeddings())?;
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                Ok((v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt())
            }
        }
    }

    /// SHA-256 over the names and `f64` little-endian bytes of every frozen array.
    pub fn fingerprint(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        for (name, t) in self.frozen_tensors() {
            hasher.update(name.as_bytes());
            for d in t.dims() {
                hasher.update((*d as u64).to_le_bytes());
            }
            for v in to_f64_vec(&t)? {
                hasher.update(v.to_le_bytes());
            }
        }
        Ok(hex::encode(hasher.finalize()))
    }

    pub fn handle(&self) -> Result<TextEncoderHandle> {
        Ok(TextEncoderHandle {
            backend: self.kind(),
            layer_count: self.layer_count(),
            d_llm: self.d_llm(),
            fingerprint: self.fingerprint()?,
        })
    }

    /// Frozen word-embedding lookup, `(n_tokens, d_LLM)`.
    pub fn embed_words(&self, token_ids: &[u32]) -> Result<Tensor> {
        let vocab = self.vocab_size();
        if let Some(bad) = token_ids.iter().find(|&&id| id as usize >= vocab) {
            return Err(Error::Encoding(format!("token id {bad} outside vocabulary of {vocab}")));
        }
        let table = self.embedding_table();
        let idx = Tensor::from_slice(token_ids, token_ids.len(), table.device())?;
        Ok(table.index_select(&idx, 0)?.detach())
    }

    /// Last hidden states of the frozen causal encoder for `(T, d)` or
    /// `(K, T, d)` input embeddings.
    pub fn encode(&self, v: &Tensor) -> Result<Tensor> {
        let single = v.rank() == 2;
        let v3 = if single { v.unsqueeze(0)? } else { v.clone() };
        let (_, t, d) = v3.dims3()?;
        if d != self.d_llm() {
            return shape_err(format!("input width {d}, backbone width {}", self.d_llm()));
        }
        if t > self.context_len() {
            return Err(Error::PromptOverflow {
                tokens: t,
                capacity: self.context_len(),
            });
        }
        let out = match &self.backbone {
            Backbone::Stub(s) => s.forward(&v3)?,
            Backbone::Gpt2(g) => g.forward(&v3)?,
        };
        Ok(if single { out.squeeze(0)? } else { out })
    }
}

/// Learnable rows prepended to every statistical prompt. One table is
/// shared by all channels and instances.
#[derive(Debug, Clone)]
pub struct LearnablePromptTable {
    pub values: Var,
}

impl LearnablePromptTable {
    pub fn new(store: &mut ParamStore, n_learn: usize, d_llm: usize, init_std: f64) -> Result<Self> {
        Ok(LearnablePromptTable {
            values: store.normal("prompt.learnable", &[n_learn, d_llm], init_std)?,
        })
    }

    pub fn len(&self) -> usize {
        self.values.dims()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-wise `[learnable; statistical]`. Accepts `(T, d)` or `(K, T, d)`
/// statistical embeddings; the learnable rows are broadcast over `K`.
pub fn compose_prompt(learnable: Option<&Tensor>, stat: &Tensor) -> Result<Tensor> {
    let Some(learn) = learnable.filter(|l| l.dims()[0] > 0) else {
        return Ok(stat.clone());
    };
    let (n_learn, d) = learn.dims2()?;
    let stat_d = *stat.dims().last().unwrap_or(&0);
    if stat_d != d {
        return shape_err(format!("learnable width {d}, statistical width {stat_d}"));
    }
    match stat.rank() {
        2 => Ok(Tensor::cat(&[learn, stat], 0)?),
        3 => {
            let k = stat.dims()[0];
            let learn = learn.unsqueeze(0)?.broadcast_as((k, n_learn, d))?;
            Ok(Tensor::cat(&[&learn, stat], 1)?)
        }
        r => shape_err(format!("statistical embedding of rank {r}")),
    }
}

/// Encoded prompt of one instance, `(N_T, d_LLM)`.
#[derive(Debug, Clone)]
pub struct TextEmbedding {
    pub values: Tensor,
}

impl TextEmbedding {
    pub fn n_tokens(&self) -> usize {
        self.values.dims()[0]
    }
}

/// Token ids of `K` prompts, right-padded to a common length. Causal
/// encoding keeps every real position independent of the padding after it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBatch {
    pub ids: Vec<u32>,
    pub lengths: Vec<usize>,
    pub max_len: usize,
}

impl PromptBatch {
    pub fn new(prompts: &[Vec<u32>]) -> Self {
        let max_len = prompts.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(prompts.len() * max_len);
        for p in prompts {
            ids.extend_from_slice(p);
            ids.extend(std::iter::repeat(0).take(max_len - p.len()));
        }
        PromptBatch {
            ids,
            lengths: prompts.iter().map(Vec::len).collect(),
            max_len,
        }
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// `(K, max_len, d_LLM)` frozen word embeddings.
    pub fn embed(&self, encoder: &TextEncoder) -> Result<Tensor> {
        let rows = encoder.embed_words(&self.ids)?;
        Ok(rows.reshape((self.len(), self.max_len, encoder.d_llm()))?)
    }
}
