use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::StdMode;
use crate::data::SplitConvention;
use crate::error::{config_err, Error, Result};
use crate::model::{BackendConfig, HeadKind, ModelConfig, Precision, StatsSource};
use crate::text::{BackendKind, StubConfig};
use crate::train::TrainConfig;

/// The four component ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ablation {
    /// No std-ratio scaling (alpha = 1).
    #[serde(rename = "scale")]
    Scale,
    /// No contrastive term (lambda = 0).
    #[serde(rename = "align")]
    Align,
    /// No learnable prompt rows.
    #[serde(rename = "learnable-prompt")]
    LearnablePrompt,
    /// Neither scaling nor the contrastive term.
    #[serde(rename = "scale+align")]
    ScaleAlign,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::ScaleAlign,
        Ablation::Align,
        Ablation::Scale,
        Ablation::LearnablePrompt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Scale => "scale",
            Ablation::Align => "align",
            Ablation::LearnablePrompt => "learnable-prompt",
            Ablation::ScaleAlign => "scale+align",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scale" => Ok(Ablation::Scale),
            "align" => Ok(Ablation::Align),
            "learnable-prompt" => Ok(Ablation::LearnablePrompt),
            "scale+align" => Ok(Ablation::ScaleAlign),
            other => config_err(format!("unknown ablation {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    /// Defaults to the dataset file stem.
    pub dataset_name: Option<String>,
    /// Defaults to the benchmark convention for the dataset name.
    pub split: Option<SplitConvention>,
    pub lookback: usize,
    pub horizon: usize,
    pub patch_len: usize,
    pub stride: usize,
    pub d_model: usize,
    pub n_learn: usize,
    pub lambda: f64,
    pub text_len_override: Option<usize>,
    pub backend: BackendKind,
    pub llm_layers: usize,
    pub llm_weights_dir: Option<PathBuf>,
    pub stub: StubConfig,
    pub head: HeadKind,
    pub precision: Precision,
    pub std_mode: StdMode,
    pub stats_source: StatsSource,
    pub positional_encoding: bool,
    pub prompt_template: Option<String>,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub few_shot_ratio: Option<f64>,
    pub ablation: Option<Ablation>,
    /// Step between consecutive training windows.
    pub train_window_stride: usize,
    /// Evenly thins the training / evaluation windows to at most this many.
    pub max_train_windows: Option<usize>,
    pub max_eval_windows: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            dataset: None,
            dataset_name: None,
            split: None,
            lookback: 512,
            horizon: 96,
            patch_len: 16,
            stride: 8,
            d_model: 16,
            n_learn: 8,
            lambda: 1.0,
            text_len_override: None,
            backend: BackendKind::Pretrained,
            llm_layers: 6,
            llm_weights_dir: None,
            stub: StubConfig::default(),
            head: HeadKind::Full,
            precision: Precision::F64,
            std_mode: StdMode::Scalar,
            stats_source: StatsSource::Raw,
            positional_encoding: false,
            prompt_template: None,
            lr: train.lr,
            epochs: train.epochs,
            patience: train.patience,
            batch_size: train.batch_size,
            seeds: vec![2021, 2022, 2023],
            few_shot_ratio: None,
            ablation: None,
            train_window_stride: 1,
            max_train_windows: None,
            max_eval_windows: None,
            out_dir: PathBuf::from("results"),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn dataset_label(&self) -> String {
        if let Some(name) = &self.dataset_name {
            return name.clone();
        }
        self.dataset
            .as_ref()
            .and_then(|p| p.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    }

    /// SHA-256 over the canonical JSON form; the output directory is excluded.
    pub fn fingerprint(&self) -> String {
        let mut canon = self.clone();
        canon.out_dir = PathBuf::new();
        hex::encode(Sha256::digest(serde_json::to_vec(&canon).expect("config serializes")))
    }

    /// Checks every field before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return config_err("at least one seed is required");
        }
        if let Some(r) = self.few_shot_ratio {
            if !(r > 0.0 && r <= 1.0) {
                return config_err(format!("few-shot ratio must lie in (0, 1], got {r}"));
            }
        }
        if self.train_window_stride == 0 {
            return config_err("training window stride must be positive");
        }
        if matches!(self.max_train_windows, Some(0)) || matches!(self.max_eval_windows, Some(0)) {
            return config_err("window caps must be positive");
        }
        if self.backend == BackendKind::Pretrained && self.llm_weights_dir.is_none() {
            return config_err("the pretrained backend needs --llm-weights-dir (or use --backend stub)");
        }
        self.train_config(0).validate()?;
        let mut model = self.model_config(1)?;
        // pretrained shapes are read lazily from the weights directory
        model.backend.kind = BackendKind::Stub;
        model.validate()
    }

    /// Lambda after applying the ablation.
    pub fn effective_lambda(&self) -> f64 {
        match self.ablation {
            Some(Ablation::Align | Ablation::ScaleAlign) => 0.0,
            _ => self.lambda,
        }
    }

    pub fn model_config(&self, n_channels: usize) -> Result<ModelConfig> {
        let ablation = self.ablation;
        Ok(ModelConfig {
            dataset: self.dataset_label(),
            lookback: self.lookback,
            horizon: self.horizon,
            n_channels,
            patch_len: self.patch_len,
            stride: self.stride,
            d_model: self.d_model,
            n_learn: if ablation == Some(Ablation::LearnablePrompt) {
                0
            } else {
                self.n_learn
            },
            head: self.head,
            revin_affine: true,
            positional_encoding: self.positional_encoding,
            use_scale: !matches!(ablation, Some(Ablation::Scale | Ablation::ScaleAlign)),
            std_mode: self.std_mode,
            stats_source: self.stats_source,
            text_len_override: self.text_len_override,
            precision: self.precision,
            backend: BackendConfig {
                kind: self.backend,
                llm_layers: self.llm_layers,
                llm_weights_dir: self.llm_weights_dir.clone(),
                stub: self.stub.clone(),
            },
            prompt_template: self.prompt_template.clone(),
        })
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            lambda: self.effective_lambda(),
            seed,
            max_steps: None,
        }
    }
}

/// Axis of a one-dimensional sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Lookback,
    TextLen,
    Lambda,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lookback" => Ok(SweepAxis::Lookback),
            "text_len" | "text-len" => Ok(SweepAxis::TextLen),
            "lambda" => Ok(SweepAxis::Lambda),
            other => config_err(format!("unknown sweep axis {other:?}")),
        }
    }
}

impl SweepAxis {
    /// `base` with the swept field set to `value`.
    pub fn apply(self, base: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut cfg = base.clone();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v.is_finite() {
                Ok(v as usize)
            } else {
                config_err(format!("{self:?} sweep value must be a positive integer, got {v}"))
            }
        };
        match self {
            SweepAxis::Lookback => cfg.lookback = as_count(value)?,
            SweepAxis::TextLen => cfg.text_len_override = Some(as_count(value)?),
            SweepAxis::Lambda => {
                if !(value >= 0.0 && value.is_finite()) {
                    return config_err(format!("lambda sweep value must be finite and non-negative, got {value}"));
                }
                cfg.lambda = value;
            }
        }
        Ok(cfg)
    }
}
