//! One benchmark run (three seeds) from a TOML config, written as
//! `results.csv` / `results.json`. Without arguments it runs a small
//! synthetic setup on the stub backbone.
//!
//!     cargo run --release --example benchmark -- configs/etth1.toml

use dualcast::bench::{report, run_experiment, RunConfig};
use dualcast::data::sinusoid_table;
use dualcast::text::BackendKind;

fn main() -> dualcast::Result<()> {
    env_logger::init();
    let config = match std::env::args().nth(1) {
        Some(path) => RunConfig::from_file(path)?,
        None => demo_config()?,
    };
    let result = run_experiment(&config)?;
    for s in &result.seeds {
        println!("seed {}: MSE {:.4} MAE {:.4} ({:.1}s)", s.seed, s.mse, s.mae, s.wall_clock_s);
    }
    println!("mean over seeds: MSE {:.4} MAE {:.4}", result.mean_mse, result.mean_mae);
    report(&[result], &config.out_dir)?;
    println!("reports in {}", config.out_dir.display());
    Ok(())
}

fn demo_config() -> dualcast::Result<RunConfig> {
    let dir = std::env::temp_dir().join("dualcast-benchmark");
    std::fs::create_dir_all(&dir).map_err(|e| dualcast::Error::file(&dir, e))?;
    let csv = dir.join("synthetic.csv");
    sinusoid_table(800, &[24, 12], 0.2, 0)?.write_csv(&csv)?;
    let mut config = RunConfig::from_toml_str(
        r#"
        backend = "stub"
        lookback = 96
        horizon = 24
        d_model = 8
        n_learn = 4
        epochs = 2
        batch_size = 16
        max_train_windows = 128
        max_eval_windows = 64
        [stub]
        d_llm = 16
        "#,
    )?;
    config.backend = BackendKind::Stub;
    config.dataset = Some(csv);
    config.out_dir = dir.join("results");
    Ok(config)
}
