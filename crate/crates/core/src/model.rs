//! The end-to-end forecaster: both branches, balanced alignment, the
//! linear forecasting head and the combined objective.

use std::path::PathBuf;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::{
    alignment_loss, pool_and_normalize, scaling_factors, truncate_batch, truncation_length, AlignmentState, StdMode,
};
use crate::data::WindowBatch;
use crate::error::{config_err, shape_err, Error, Result};
use crate::params::{to_f64_vec, Linear, ParamStore};
use crate::text::{
    compose_prompt, render_prompt, summarize, BackendKind, Gpt2Config, LearnablePromptTable,
    PromptBatch, PromptMeta, PromptTemplate, StubBackbone, StubConfig, TextEncoder,
};
use crate::ts_branch::{compute_patch_count, instance_normalize, PatchEncoder, RevIn, DEFAULT_NORM_EPS};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

/// Forecasting head over the flattened `[text; time]` token matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HeadKind {
    /// `flatten((N_E + N_P) x d_LLM) -> H`.
    Full,
    /// Per-token `d_LLM -> rank` projection, then `flatten -> H`.
    LowRank { rank: usize },
}

/// Which window the prompt statistics describe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsSource {
    /// The model input before instance normalization.
    #[default]
    Raw,
    /// The instance-normalized window.
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub llm_layers: usize,
    pub llm_weights_dir: Option<PathBuf>,
    pub stub: StubConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Stub,
            llm_layers: 6,
            llm_weights_dir: None,
            stub: StubConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dataset: String,
    pub lookback: usize,
    pub horizon: usize,
    pub n_channels: usize,
    pub patch_len: usize,
    pub stride: usize,
    pub d_model: usize,
    pub n_learn: usize,
    pub head: HeadKind,
    pub revin_affine: bool,
    pub positional_encoding: bool,
    pub use_scale: bool,
    pub std_mode: StdMode,
    pub stats_source: StatsSource,
    /// Forces the number of kept text tokens (clamped to `[1, N_P]`).
    pub text_len_override: Option<usize>,
    pub precision: Precision,
    pub backend: BackendConfig,
    pub prompt_template: Option<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dataset: "dataset".into(),
            lookback: 512,
            horizon: 96,
            n_channels: 7,
            patch_len: 16,
            stride: 8,
            d_model: 16,
            n_learn: 8,
            head: HeadKind::Full,
            revin_affine: true,
            positional_encoding: false,
            use_scale: true,
            std_mode: StdMode::Scalar,
            stats_source: StatsSource::Raw,
            text_len_override: None,
            precision: Precision::F64,
            backend: BackendConfig::default(),
            prompt_template: None,
        }
    }
}

impl ModelConfig {
    pub fn n_patches(&self) -> Result<usize> {
        compute_patch_count(self.lookback, self.patch_len, self.stride)
    }

    /// Kept text tokens: the truncation rule, or the override clamped to `[1, N_P]`.
    pub fn n_text_tokens(&self) -> Result<usize> {
        let n_p = self.n_patches()?;
        Ok(match self.text_len_override {
            Some(n) if n > n_p || n == 0 => {
                let clamped = n.clamp(1, n_p);
                log::warn!("text length override {n} clamped to {clamped} (N_P = {n_p})");
                clamped
            }
            Some(n) => n,
            None => truncation_length(n_p, self.horizon, self.lookback),
        })
    }

    pub fn d_llm(&self) -> Result<usize> {
        match self.backend.kind {
            BackendKind::Stub => Ok(self.backend.stub.d_llm),
            BackendKind::Pretrained => Ok(self.pretrained_shape()?.n_embd),
        }
    }

    /// Backbone shape: from `config.json` when a weights directory is set,
    /// otherwise the 768-wide default.
    pub fn pretrained_shape(&self) -> Result<Gpt2Config> {
        let mut cfg = match &self.backend.llm_weights_dir {
            Some(dir) if dir.join("config.json").exists() => Gpt2Config::from_file(dir.join("config.json"))?,
            _ => Gpt2Config::base(self.backend.llm_layers),
        };
        cfg.n_layer = self.backend.llm_layers;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookback < 6 {
            return config_err("look-back must be at least 6 for prompt statistics");
        }
        if self.horizon == 0 || self.n_channels == 0 {
            return config_err("horizon and channel count must be positive");
        }
        if self.d_model == 0 {
            return config_err("d_model must be positive");
        }
        if let HeadKind::LowRank { rank: 0 } = self.head {
            return config_err("low-rank head needs a positive rank");
        }
        if self.backend.kind == BackendKind::Pretrained && self.backend.llm_weights_dir.is_none() {
            return config_err("pretrained backend needs llm_weights_dir");
        }
        self.n_patches()?;
        if let Some(t) = &self.prompt_template {
            PromptTemplate::new(t.clone())?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// How the text scaling factor is obtained in a forward pass.
#[derive(Debug, Clone)]
pub enum AlphaMode {
    /// Detached std ratio (or 1 when scaling is disabled).
    Computed,
    /// Externally supplied factors, shape `(K, 1, 1)` or `(K, 1, d)`.
    Fixed(Tensor),
}

/// Everything a forward pass produces.
#[derive(Debug, Clone)]
pub struct ForecastOutput {
    /// `(B, H, N)` in standardized dataset units.
    pub predictions: Tensor,
    /// `(K, N_P, d)`, `K = B * N` in batch-major, channel-minor order.
    pub time_embedding: Tensor,
    /// `(K, T_max, d)` right-padded encoder output and real prompt lengths.
    pub text_embedding: Tensor,
    pub prompt_lengths: Vec<usize>,
    /// `(K, N_E, d)` truncated and scaled text rows. Instance `k` holds
    /// `text_rows[k]` real rows at the end, preceded by zero rows.
    pub scaled_text: Tensor,
    pub text_rows: Vec<usize>,
    /// `(K, d)` unit-norm mean of the real scaled text rows.
    pub pooled_text: Tensor,
    pub alpha: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub task: f64,
    pub align: f64,
    pub lambda: f64,
    pub total: f64,
}

/// `total = task + lambda * align`.
pub fn total_loss(task: f64, align: f64, lambda: f64) -> Result<LossBreakdown> {
    if !task.is_finite() || !align.is_finite() {
        return Err(Error::Divergence {
            epoch: 0,
            step: 0,
            message: format!("non-finite loss (task {task}, align {align})"),
        });
    }
    if !(lambda >= 0.0) {
        return config_err(format!("lambda must be non-negative, got {lambda}"));
    }
    Ok(LossBreakdown {
        task,
        align,
        lambda,
        total: task + lambda * align,
    })
}

/// Mean squared error over every entry.
pub fn task_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if pred.dims() != target.dims() {
        return shape_err(format!("prediction {:?} vs target {:?}", pred.dims(), target.dims()));
    }
    Ok((pred - target)?.sqr()?.mean_all()?)
}

#[derive(Debug, Clone)]
enum Head {
    Full(Linear),
    LowRank { reduce: Linear, out: Linear },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub total: usize,
    pub trainable: usize,
}

impl ParamCount {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.trainable as f64 / self.total as f64
        }
    }
}

pub struct Forecaster {
    config: ModelConfig,
    store: ParamStore,
    revin: RevIn,
    patch: PatchEncoder,
    prompt: Option<LearnablePromptTable>,
    align: AlignmentState,
    head: Head,
    encoder: TextEncoder,
    template: PromptTemplate,
    meta: PromptMeta,
    n_patches: usize,
    n_text: usize,
}

impl std::fmt::Debug for Forecaster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Forecaster")
            .field("config", &self.config)
            .field("n_patches", &self.n_patches)
            .field("n_text", &self.n_text)
            .finish()
    }
}

fn build_trainable(
    config: &ModelConfig,
    store: &mut ParamStore,
    d_llm: usize,
    prompt_std: f64,
) -> Result<(RevIn, PatchEncoder, Option<LearnablePromptTable>, AlignmentState, Head, usize, usize)> {
    let n_patches = config.n_patches()?;
    let n_text = config.n_text_tokens()?;
    let revin = RevIn::new(store, config.n_channels, config.revin_affine, DEFAULT_NORM_EPS)?;
    let patch = PatchEncoder::new(
        store,
        config.lookback,
        config.patch_len,
        config.stride,
        config.d_model,
        d_llm,
        config.positional_encoding,
    )?;
    let prompt = if config.n_learn > 0 {
        Some(LearnablePromptTable::new(store, config.n_learn, d_llm, prompt_std)?)
    } else {
        None
    };
    let align = AlignmentState::new(store)?;
    let rows = n_text + n_patches;
    let head = match config.head {
        HeadKind::Full => Head::Full(store.linear("head.out", rows * d_llm, config.horizon)?),
        HeadKind::LowRank { rank } => Head::LowRank {
            reduce: store.linear("head.reduce", d_llm, rank)?,
            out: store.linear("head.out", rows * rank, config.horizon)?,
        },
    };
    Ok((revin, patch, prompt, align, head, n_patches, n_text))
}

/// Parameter counts derived from shapes alone (no weights needed).
pub fn count_params_for_config(config: &ModelConfig) -> Result<ParamCount> {
    config.n_patches()?;
    let d_llm = config.d_llm()?;
    let mut store = ParamStore::new(0, DType::F32, Device::Cpu);
    build_trainable(config, &mut store, d_llm, 0.02)?;
    let frozen: usize = match config.backend.kind {
        BackendKind::Stub => StubBackbone::param_shapes(&config.backend.stub),
        BackendKind::Pretrained => config.pretrained_shape()?.param_shapes(),
    }
    .iter()
    .map(|(_, s)| s.iter().product::<usize>())
    .sum();
    let trainable = store.trainable_count();
    Ok(ParamCount {
        total: trainable + frozen,
        trainable,
    })
}

/// Window passed to the prompt statistics for one channel.
fn stats_window(values: &[f64], source: StatsSource) -> Result<Vec<f64>> {
    match source {
        StatsSource::Raw => Ok(values.to_vec()),
        StatsSource::Normalized => Ok(instance_normalize(values, 1, DEFAULT_NORM_EPS)?.0),
    }
}

impl Forecaster {
    /// Builds the model, loading or generating the frozen backbone.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let dtype = config.precision.dtype();
        let device = Device::Cpu;
        let encoder = match config.backend.kind {
            BackendKind::Stub => TextEncoder::stub(config.backend.stub.clone(), dtype, &device)?,
            BackendKind::Pretrained => {
                let dir = config.backend.llm_weights_dir.as_ref().expect("validated");
                TextEncoder::pretrained(dir, config.backend.llm_layers, dtype, &device)?
            }
        };
        Self::with_encoder(config, seed, encoder)
    }

    /// Builds the model around an existing frozen encoder.
    pub fn with_encoder(config: ModelConfig, seed: u64, encoder: TextEncoder) -> Result<Self> {
        config.validate()?;
        let dtype = config.precision.dtype();
        let mut store = ParamStore::new(seed, dtype, Device::Cpu);
        let d_llm = encoder.d_llm();
        let prompt_std = encoder.embedding_std()?;
        let (revin, patch, prompt, align, head, n_patches, n_text) =
            build_trainable(&config, &mut store, d_llm, prompt_std)?;
        let template = match &config.prompt_template {
            Some(t) => PromptTemplate::new(t.clone())?,
            None => PromptTemplate::default(),
        };
        let meta = PromptMeta::new(&config.dataset, config.lookback, config.horizon);
        Ok(Forecaster {
            config,
            store,
            revin,
            patch,
            prompt,
            align,
            head,
            encoder,
            template,
            meta,
            n_patches,
            n_text,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encoder(&self) -> &TextEncoder {
        &self.encoder
    }

    pub fn alignment_state(&self) -> &AlignmentState {
        &self.align
    }

    pub fn n_patches(&self) -> usize {
        self.n_patches
    }

    /// Kept text tokens `N_E`.
    pub fn n_text_tokens(&self) -> usize {
        self.n_text
    }

    /// Rows of the head input matrix, `N_E + N_P`.
    pub fn head_rows(&self) -> usize {
        self.n_text + self.n_patches
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn count_params(&self) -> ParamCount {
        let trainable = self.store.trainable_count();
        ParamCount {
            total: self.store.element_count() + self.encoder.frozen_param_count(),
            trainable,
        }
    }

    fn capacity(&self) -> usize {
        self.encoder.context_len().saturating_sub(self.config.n_learn)
    }

    /// Token ids of one channel window's statistical prompt.
    pub fn prompt_tokens(&self, window: &[f64]) -> Result<Vec<u32>> {
        let stats = summarize(&stats_window(window, self.config.stats_source)?)?;
        Ok(render_prompt(&stats, &self.meta, &self.template, &self.encoder.tokenizer, self.capacity())?.token_ids)
    }

    /// Rendered prompt text of one channel window.
    pub fn prompt_text(&self, window: &[f64]) -> Result<String> {
        let stats = summarize(&stats_window(window, self.config.stats_source)?)?;
        Ok(self.template.render(&stats, &self.meta))
    }

    /// Per-instance prompt token ids in `(b, c)` batch-major order.
    pub fn prompt_ids(&self, batch: &WindowBatch) -> Result<Vec<Vec<u32>>> {
        let mut out = Vec::with_capacity(batch.len() * batch.n_channels);
        for b in 0..batch.len() {
            for c in 0..batch.n_channels {
                let k = b * batch.n_channels + c;
                out.push(self.prompt_tokens(&batch.input_channel(b, c)).map_err(|e| e.at_instance(k))?);
            }
        }
        Ok(out)
    }

    pub fn prompts(&self, batch: &WindowBatch) -> Result<PromptBatch> {
        Ok(PromptBatch::new(&self.prompt_ids(batch)?))
    }

    fn check_batch(&self, batch: &WindowBatch) -> Result<()> {
        if batch.lookback != self.config.lookback
            || batch.horizon != self.config.horizon
            || batch.n_channels != self.config.n_channels
        {
            return shape_err(format!(
                "batch (L={}, H={}, N={}) does not match model (L={}, H={}, N={})",
                batch.lookback,
                batch.horizon,
                batch.n_channels,
                self.config.lookback,
                self.config.horizon,
                self.config.n_channels
            ));
        }
        if batch.is_empty() {
            return shape_err("empty batch");
        }
        Ok(())
    }

    pub fn inputs_tensor(&self, batch: &WindowBatch) -> Result<Tensor> {
        Ok(Tensor::from_slice(&batch.inputs, (batch.len(), batch.lookback, batch.n_channels), &Device::Cpu)?
            .to_dtype(self.dtype())?)
    }

    pub fn targets_tensor(&self, batch: &WindowBatch) -> Result<Tensor> {
        Ok(Tensor::from_slice(&batch.targets, (batch.len(), batch.horizon, batch.n_channels), &Device::Cpu)?
            .to_dtype(self.dtype())?)
    }

    pub fn forward(&self, batch: &WindowBatch) -> Result<ForecastOutput> {
        let prompts = self.prompts(batch)?;
        self.forward_with(batch, &prompts, &AlphaMode::Computed)
    }

    /// Forward pass with precomputed prompts.
    pub fn forward_with(&self, batch: &WindowBatch, prompts: &PromptBatch, alpha: &AlphaMode) -> Result<ForecastOutput> {
        self.check_batch(batch)?;
        let (b, n) = (batch.len(), batch.n_channels);
        let k = b * n;
        if prompts.len() != k {
            return shape_err(format!("{} prompts for {k} instances", prompts.len()));
        }
        let d = self.encoder.d_llm();

        // time-series branch
        let x = self.inputs_tensor(batch)?;
        let (x_norm, stats) = self.revin.normalize(&x)?;
        let series = x_norm.transpose(1, 2)?.contiguous()?.reshape((k, self.config.lookback))?;
        let time_embedding = self.patch.forward(&series)?;

        // text branch
        let stat_emb = prompts.embed(&self.encoder)?;
        let learn = self.prompt.as_ref().map(|p| p.values.as_tensor());
        let v = compose_prompt(learn, &stat_emb)?;
        let text_embedding = self.encoder.encode(&v)?;
        let n_learn = self.prompt.as_ref().map_or(0, |p| p.len());
        let prompt_lengths: Vec<usize> = prompts.lengths.iter().map(|l| l + n_learn).collect();
        let text_rows: Vec<usize> = prompt_lengths.iter().map(|&l| l.min(self.n_text)).collect();

        // instances are truncated in groups of equal kept length so that the
        // result never depends on which windows share a batch
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, &n) in text_rows.iter().enumerate() {
            groups.entry(n).or_default().push(i);
        }
        let single = groups.len() == 1;
        let (mut padded, mut alphas, mut pooled, mut order) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (&n, members) in &groups {
            let idx = Tensor::from_vec(members.iter().map(|&i| i as u32).collect::<Vec<_>>(), members.len(), &Device::Cpu)?;
            let pick = |t: &Tensor| -> Result<Tensor> { Ok(if single { t.clone() } else { t.index_select(&idx, 0)? }) };
            let lengths: Vec<usize> = members.iter().map(|&i| prompt_lengths[i]).collect();
            let (trunc, _) = truncate_batch(&pick(&text_embedding)?, &lengths, n)?;
            let a = match alpha {
                AlphaMode::Fixed(a) => pick(a)?,
                AlphaMode::Computed if self.config.use_scale => {
                    scaling_factors(&trunc, &pick(&time_embedding)?, self.config.std_mode)?
                }
                AlphaMode::Computed => Tensor::ones((members.len(), 1, 1), self.dtype(), &Device::Cpu)?,
            };
            let scaled = trunc.broadcast_mul(&a)?;
            pooled.push(pool_and_normalize(&scaled)?);
            // short prompts leave leading head rows empty
            padded.push(if n < self.n_text {
                let pad = Tensor::zeros((members.len(), self.n_text - n, d), self.dtype(), &Device::Cpu)?;
                Tensor::cat(&[&pad, &scaled], 1)?
            } else {
                scaled
            });
            alphas.push(a);
            order.extend_from_slice(members);
        }
        let restore = |parts: Vec<Tensor>| -> Result<Tensor> {
            let joined = Tensor::cat(&parts, 0)?;
            if single {
                return Ok(joined);
            }
            let mut inverse = vec![0u32; k];
            for (pos, &i) in order.iter().enumerate() {
                inverse[i] = pos as u32;
            }
            Ok(joined.index_select(&Tensor::from_vec(inverse, k, &Device::Cpu)?, 0)?)
        };
        let text_rows_tensor = restore(padded)?;
        let alpha = restore(alphas)?;
        let pooled_text = restore(pooled)?;
        let scaled_text = text_rows_tensor.clone();
        let text_rows_out = text_rows;
        let joint = Tensor::cat(&[&text_rows_tensor, &time_embedding], 1)?;
        let rows = self.head_rows();
        let out = match &self.head {
            Head::Full(lin) => lin.forward(&joint.reshape((k, rows * d))?)?,
            Head::LowRank { reduce, out } => {
                let r = reduce.forward(&joint)?;
                let rank = r.dims()[2];
                out.forward(&r.reshape((k, rows * rank))?)?
            }
        };
        let y = out
            .reshape((b, n, self.config.horizon))?
            .transpose(1, 2)?
            .contiguous()?;
        let predictions = self.revin.denormalize(&y, &stats)?;
        Ok(ForecastOutput {
            predictions,
            time_embedding,
            text_embedding,
            prompt_lengths,
            scaled_text,
            text_rows: text_rows_out,
            pooled_text,
            alpha,
        })
    }

    /// InfoNCE between pooled time (query) and pooled scaled text (key)
    /// embeddings over all `B * N` instances.
    pub fn alignment_loss(&self, out: &ForecastOutput) -> Result<Tensor> {
        let queries = pool_and_normalize(&out.time_embedding)?;
        alignment_loss(&queries, &out.pooled_text, &self.align.tau()?)
    }

    /// Differentiable total loss and its breakdown. With `lambda == 0` the
    /// alignment term is reported but kept out of the graph.
    pub fn loss(&self, batch: &WindowBatch, out: &ForecastOutput, lambda: f64) -> Result<(Tensor, LossBreakdown)> {
        let task = task_loss(&out.predictions, &self.targets_tensor(batch)?)?;
        let align = self.alignment_loss(out)?;
        let task_v = task.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        let align_v = align.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        let breakdown = total_loss(task_v, align_v, lambda)?;
        let total = if lambda == 0.0 {
            task
        } else {
            (task + (align * lambda)?)?
        };
        Ok((total, breakdown))
    }

    /// Mean predictions as `f64`, row-major `(B, H, N)`.
    pub fn predict(&self, batch: &WindowBatch) -> Result<Vec<f64>> {
        to_f64_vec(&self.forward(batch)?.predictions)
    }
}

/// Prompt token ids per window start. Prompts depend only on the data, so a
/// cache is valid for one table and one model configuration.
#[derive(Debug, Default, Clone)]
pub struct PromptCache {
    entries: std::collections::HashMap<usize, Vec<Vec<u32>>>,
}

impl PromptCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prompts(&mut self, model: &Forecaster, batch: &WindowBatch) -> Result<PromptBatch> {
        let n = batch.n_channels;
        let mut all = Vec::with_capacity(batch.len() * n);
        for (b, start) in batch.window_start_indices.iter().enumerate() {
            if !self.entries.contains_key(start) {
                let mut ids = Vec::with_capacity(n);
                for c in 0..n {
                    ids.push(
                        model
                            .prompt_tokens(&batch.input_channel(b, c))
                            .map_err(|e| e.at_instance(b * n + c))?,
                    );
                }
                self.entries.insert(*start, ids);
            }
            all.extend(self.entries[start].iter().cloned());
        }
        Ok(PromptBatch::new(&all))
    }
}
