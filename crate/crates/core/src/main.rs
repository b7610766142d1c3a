use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualcast::bench::{self, Ablation, PreparedData, RunConfig, RunResult, SweepAxis};
use dualcast::data::{SplitConvention, WindowBatch};
use dualcast::text::BackendKind;
use dualcast::{checkpoint, Error, Forecaster, Result};

#[derive(Parser)]
#[command(name = "dualcast", version, about = "Dual-branch LLM-assisted time-series forecasting benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one configuration over every seed.
    Run(Common),
    /// Vary one field of the configuration.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_axis)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run the full model and its ablations (all four unless --ablate is given).
    Ablate(Common),
    /// Write pooled raw-text, scaled-text and time-series embeddings of test windows.
    ExportEmbeddings {
        #[command(flatten)]
        common: Common,
        /// Trained parameters to load before exporting.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        instances: usize,
        #[arg(long, default_value = "embeddings.csv")]
        output: PathBuf,
    },
    /// Two-component PCA scatter plot (SVG) of an embedding export.
    PlotPca {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "pca.svg")]
        output: PathBuf,
    },
}

/// Flags override values from `--config`.
#[derive(Args, Clone)]
struct Common {
    /// TOML file mirroring the run configuration fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    dataset_name: Option<String>,
    #[arg(long, value_parser = parse_split)]
    split: Option<SplitConvention>,
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    patch_len: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long = "lambda")]
    lambda: Option<f64>,
    #[arg(long)]
    text_len: Option<usize>,
    #[arg(long, value_parser = parse_backend)]
    backend: Option<BackendKind>,
    #[arg(long)]
    llm_layers: Option<usize>,
    #[arg(long)]
    llm_weights_dir: Option<PathBuf>,
    #[arg(long)]
    few_shot_ratio: Option<f64>,
    #[arg(long, value_parser = parse_ablation)]
    ablate: Vec<Ablation>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_train_windows: Option<usize>,
    #[arg(long)]
    max_eval_windows: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_axis(s: &str) -> Result<SweepAxis> {
    s.parse()
}
fn parse_split(s: &str) -> Result<SplitConvention> {
    s.parse()
}
fn parse_backend(s: &str) -> Result<BackendKind> {
    s.parse()
}
fn parse_ablation(s: &str) -> Result<Ablation> {
    s.parse()
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$flag { c.$field = v.clone(); })*
            };
        }
        set!(lookback => lookback, horizon => horizon, patch_len => patch_len, stride => stride,
             lambda => lambda, backend => backend, llm_layers => llm_layers, seeds => seeds,
             lr => lr, epochs => epochs, batch_size => batch_size, out => out_dir);
        macro_rules! set_opt {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if self.$flag.is_some() { c.$field = self.$flag.clone(); })*
            };
        }
        set_opt!(dataset => dataset, dataset_name => dataset_name, split => split,
                 text_len => text_len_override, llm_weights_dir => llm_weights_dir,
                 few_shot_ratio => few_shot_ratio, max_train_windows => max_train_windows,
                 max_eval_windows => max_eval_windows);
        if let [single] = self.ablate.as_slice() {
            c.ablation = Some(*single);
        }
        c.validate()?;
        Ok(c)
    }
}

fn print_results(results: &[RunResult]) {
    println!("{:<10} {:>4} {:>4} {:<17} {:>8} {:>10} {:>10}", "dataset", "L", "H", "ablation", "lambda", "mse", "mae");
    for r in results {
        let c = &r.config;
        println!(
            "{:<10} {:>4} {:>4} {:<17} {:>8} {:>10.6} {:>10.6}",
            c.dataset_label(),
            c.lookback,
            c.horizon,
            c.ablation.map_or("none", |a| a.as_str()),
            c.effective_lambda(),
            r.mean_mse,
            r.mean_mae
        );
    }
}

fn finish(results: Vec<RunResult>, out: &std::path::Path) -> Result<()> {
    bench::report(&results, out)?;
    print_results(&results);
    if let Some(failed) = results.iter().find(|r| !r.succeeded()) {
        return Err(Error::Divergence {
            epoch: 0,
            step: 0,
            message: format!("every seed of run {} failed", failed.fingerprint),
        });
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.resolve()?;
            let result = bench::run_experiment(&cfg)?;
            finish(vec![result], &cfg.out_dir)
        }
        Command::Sweep { common, axis, values } => {
            let cfg = common.resolve()?;
            finish(bench::sweep(&cfg, axis, &values)?, &cfg.out_dir)
        }
        Command::Ablate(common) => {
            let mut cfg = common.resolve()?;
            cfg.ablation = None;
            finish(bench::ablate(&cfg, &common.ablate)?, &cfg.out_dir)
        }
        Command::ExportEmbeddings { common, checkpoint: ckpt, instances, output } => {
            let cfg = common.resolve()?;
            let data = PreparedData::load(&cfg)?;
            let seed = cfg.seeds[0];
            let model = Forecaster::new(cfg.model_config(data.table.n_channels())?, seed)?;
            if let Some(path) = ckpt {
                checkpoint::load(&model, path)?;
            }
            let starts: Vec<usize> = data.test.iter().copied().take(instances.max(1)).collect();
            if starts.is_empty() {
                return Err(Error::Config("no test windows to export".into()));
            }
            let batch = WindowBatch::from_table(&data.table, &starts, cfg.lookback, cfg.horizon);
            let rows = bench::export_embeddings(&model, &batch, &output)?;
            println!("wrote {} rows to {}", rows.len(), output.display());
            Ok(())
        }
        Command::PlotPca { input, output } => {
            bench::plot_pca(&input, &output)?;
            println!("wrote {}", output.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
