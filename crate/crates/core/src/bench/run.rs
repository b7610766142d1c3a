use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Ablation, RunConfig, SweepAxis};
use crate::data::{fit_apply_scaler, few_shot_subset, load_dataset, make_splits, windowize, DatasetTable, SplitConvention, WindowMode, WindowSet};
use crate::error::{config_err, Error, Result};
use crate::model::{Forecaster, ParamCount};
use crate::train::{evaluate, train, TrainHistory};

/// A standardized table and the window starts of each split.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub table: DatasetTable,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// At most `max` evenly spaced elements, always keeping the first.
pub fn thin_windows(starts: &[usize], max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if starts.len() > m => (0..m).map(|i| starts[i * starts.len() / m]).collect(),
        _ => starts.to_vec(),
    }
}

impl PreparedData {
    pub fn load(config: &RunConfig) -> Result<Self> {
        let Some(path) = &config.dataset else {
            return config_err("no dataset given");
        };
        Self::from_table(load_dataset(path, None)?, config)
    }

    /// Splits, standardizes with train statistics and windows a raw table.
    /// Validation and test ranges reach back `L` rows into the preceding split.
    pub fn from_table(raw: DatasetTable, config: &RunConfig) -> Result<Self> {
        let convention = config
            .split
            .unwrap_or_else(|| SplitConvention::for_dataset(&config.dataset_label()));
        let split = make_splits(raw.len(), convention)?;
        let (table, _) = fit_apply_scaler(&raw, &split)?;
        let (l, h) = (config.lookback, config.horizon);
        let mut train = windowize(split.train, l, h, config.train_window_stride, WindowMode::Train)?;
        if let Some(ratio) = config.few_shot_ratio {
            let all = train.len();
            train = few_shot_subset(&train, ratio)?;
            log::info!("few-shot: {} of {all} training windows", train.len());
        }
        let train = thin_windows(&train, config.max_train_windows);
        let val = windowize(split.val.extend_back(l), l, h, 1, WindowMode::Eval)?;
        let test = windowize(split.test.extend_back(l), l, h, 1, WindowMode::Eval)?;
        Ok(PreparedData {
            table,
            train,
            val: thin_windows(&val, config.max_eval_windows),
            test: thin_windows(&test, config.max_eval_windows),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SeedStatus {
    Ok,
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub status: SeedStatus,
    pub mse: f64,
    pub mae: f64,
    pub history: TrainHistory,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub fingerprint: String,
    pub config: RunConfig,
    pub params: ParamCount,
    pub seeds: Vec<SeedResult>,
    /// Means over the successful seeds (NaN when every seed failed).
    pub mean_mse: f64,
    pub mean_mae: f64,
}

impl RunResult {
    pub fn succeeded(&self) -> bool {
        self.seeds.iter().any(|s| s.status == SeedStatus::Ok)
    }
}

fn run_seed(config: &RunConfig, data: &PreparedData, seed: u64) -> Result<(f64, f64, TrainHistory)> {
    let n = data.table.n_channels();
    let mut model = Forecaster::new(config.model_config(n)?, seed)?;
    let train_set = WindowSet::new(&data.table, data.train.clone(), config.lookback, config.horizon);
    let val_set = WindowSet::new(&data.table, data.val.clone(), config.lookback, config.horizon);
    let test_set = WindowSet::new(&data.table, data.test.clone(), config.lookback, config.horizon);
    let val = (!val_set.is_empty()).then_some(&val_set);
    let history = train(&mut model, &train_set, val, &config.train_config(seed))?;
    let metrics = evaluate(&model, &test_set, config.batch_size)?;
    Ok((metrics.mse, metrics.mae, history))
}

/// Trains and evaluates one configuration per seed on prepared data.
/// Training failures are recorded and the remaining seeds still run;
/// configuration errors abort.
pub fn run_on_data(config: &RunConfig, data: &PreparedData) -> Result<RunResult> {
    config.validate()?;
    if data.test.is_empty() {
        return config_err("no test windows");
    }
    let model_cfg = config.model_config(data.table.n_channels())?;
    let params = crate::model::count_params_for_config(&model_cfg)?;
    let mut seeds = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let started = Instant::now();
        let outcome = run_seed(config, data, seed);
        let wall_clock_s = started.elapsed().as_secs_f64();
        let result = match outcome {
            Ok((mse, mae, history)) => {
                log::info!("seed {seed}: mse {mse:.6} mae {mae:.6}");
                SeedResult {
                    seed,
                    status: SeedStatus::Ok,
                    mse,
                    mae,
                    history,
                    wall_clock_s,
                }
            }
            Err(e @ (Error::Config(_) | Error::Checkpoint(_) | Error::File { .. })) => return Err(e),
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                SeedResult {
                    seed,
                    status: SeedStatus::Failed { message: e.to_string() },
                    mse: f64::NAN,
                    mae: f64::NAN,
                    history: TrainHistory::default(),
                    wall_clock_s,
                }
            }
        };
        seeds.push(result);
    }
    let ok: Vec<&SeedResult> = seeds.iter().filter(|s| s.status == SeedStatus::Ok).collect();
    let mean = |f: fn(&SeedResult) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|s| f(s)).sum::<f64>() / ok.len() as f64
        }
    };
    Ok(RunResult {
        fingerprint: config.fingerprint(),
        config: config.clone(),
        params,
        mean_mse: mean(|s| s.mse),
        mean_mae: mean(|s| s.mae),
        seeds,
    })
}

pub fn run_experiment(config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    let data = PreparedData::load(config)?;
    run_on_data(config, &data)
}

/// One run per value of `axis`. Every value is validated before the first run.
pub fn sweep(base: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<RunResult>> {
    if values.is_empty() {
        return config_err("sweep needs at least one value");
    }
    let configs = values
        .iter()
        .map(|&v| {
            let cfg = axis.apply(base, v)?;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let raw = match &base.dataset {
        Some(path) => load_dataset(path, None)?,
        None => return config_err("no dataset given"),
    };
    configs
        .iter()
        .map(|cfg| run_on_data(cfg, &PreparedData::from_table(raw.clone(), cfg)?))
        .collect()
}

/// The full model followed by each requested ablation (all four when empty).
pub fn ablate(base: &RunConfig, variants: &[Ablation]) -> Result<Vec<RunResult>> {
    let variants = if variants.is_empty() { &Ablation::ALL[..] } else { variants };
    let mut configs = vec![RunConfig { ablation: None, ..base.clone() }];
    configs.extend(variants.iter().map(|&a| RunConfig {
        ablation: Some(a),
        ..base.clone()
    }));
    for cfg in &configs {
        cfg.validate()?;
    }
    let data = PreparedData::load(base)?;
    configs.iter().map(|cfg| run_on_data(cfg, &data)).collect()
}
