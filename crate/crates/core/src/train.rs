//! Adam training with early stopping, and test-set evaluation.

use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use serde::{Deserialize, Serialize};

use crate::data::{BatchOrder, WindowSet};
use crate::error::{config_err, Error, Result};
use crate::model::{AlphaMode, Forecaster, PromptCache};
use crate::params::to_f64_vec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lambda: f64,
    /// Shuffling seed.
    pub seed: u64,
    /// Stops after this many optimizer steps in total.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 10,
            patience: 10,
            batch_size: 32,
            lambda: 1.0,
            seed: 2021,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return config_err(format!("learning rate must be finite and non-negative, got {}", self.lr));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return config_err(format!("lambda must be finite and non-negative, got {}", self.lambda));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return config_err("epochs and batch size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_total: f64,
    pub train_task: f64,
    pub train_align: f64,
    pub val_mse: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Total loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn steps(&self) -> usize {
        self.step_losses.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub count: usize,
}

/// MSE and MAE in standardized units over every predicted value.
pub fn evaluate(model: &Forecaster, set: &WindowSet<'_>, batch_size: usize) -> Result<Metrics> {
    evaluate_cached(model, set, batch_size, &mut PromptCache::new())
}

pub fn evaluate_cached(
    model: &Forecaster,
    set: &WindowSet<'_>,
    batch_size: usize,
    cache: &mut PromptCache,
) -> Result<Metrics> {
    if set.is_empty() {
        return config_err("evaluation needs at least one window");
    }
    let (mut se, mut ae, mut count) = (0.0, 0.0, 0usize);
    for batch in set.batches(batch_size, BatchOrder::Sequential) {
        let prompts = cache.prompts(model, &batch)?;
        let out = model.forward_with(&batch, &prompts, &AlphaMode::Computed)?;
        let pred = to_f64_vec(&out.predictions)?;
        for (p, t) in pred.iter().zip(&batch.targets) {
            se += (p - t) * (p - t);
            ae += (p - t).abs();
        }
        count += pred.len();
    }
    Ok(Metrics {
        mse: se / count as f64,
        mae: ae / count as f64,
        count,
    })
}

/// Trains the trainable parameters with Adam. Validation MSE (or the mean
/// training loss without a validation set) drives early stopping, and the
/// best epoch's parameters are restored at the end.
pub fn train(
    model: &mut Forecaster,
    train_set: &WindowSet<'_>,
    val_set: Option<&WindowSet<'_>>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if train_set.is_empty() {
        return config_err("no training windows");
    }
    if val_set.is_some_and(|v| v.is_empty()) {
        return config_err("no validation windows");
    }
    let vars = model.params().trainable_vars();
    let mut opt = AdamW::new(
        vars,
        ParamsAdamW {
            lr: config.lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        },
    )?;
    let mut train_cache = PromptCache::new();
    let mut val_cache = PromptCache::new();
    let mut history = TrainHistory::default();
    let mut best = (f64::INFINITY, model.params().snapshot()?);
    let mut since_best = 0;

    'epochs: for epoch in 0..config.epochs {
        let order = BatchOrder::Shuffled {
            seed: config.seed,
            epoch: epoch as u64,
        };
        let (mut total, mut task, mut align, mut n) = (0.0, 0.0, 0.0, 0usize);
        for batch in train_set.batches(config.batch_size, order) {
            if config.max_steps.is_some_and(|m| history.steps() >= m) {
                break;
            }
            let prompts = train_cache.prompts(model, &batch)?;
            let out = model.forward_with(&batch, &prompts, &AlphaMode::Computed)?;
            let (loss, parts) = model.loss(&batch, &out, config.lambda).map_err(|e| match e {
                Error::Divergence { message, .. } => Error::Divergence {
                    epoch,
                    step: history.steps(),
                    message,
                },
                other => other,
            })?;
            opt.backward_step(&loss)?;
            history.step_losses.push(parts.total);
            total += parts.total;
            task += parts.task;
            align += parts.align;
            n += 1;
        }
        if n == 0 {
            break;
        }
        let val_mse = match val_set {
            Some(v) => Some(evaluate_cached(model, v, config.batch_size, &mut val_cache)?.mse),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            train_total: total / n as f64,
            train_task: task / n as f64,
            train_align: align / n as f64,
            val_mse,
        };
        log::info!(
            "epoch {epoch}: loss {:.6} (task {:.6}, align {:.6}) val {:?}",
            record.train_total,
            record.train_task,
            record.train_align,
            record.val_mse
        );
        let score = val_mse.unwrap_or(record.train_total);
        history.epochs.push(record);
        if score < best.0 {
            best = (score, model.params().snapshot()?);
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                history.stopped_early = true;
                break 'epochs;
            }
        }
    }
    if best.0.is_finite() {
        model.params().restore(&best.1)?;
    }
    Ok(history)
}
