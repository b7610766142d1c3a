//! Sensitivity sweeps over the alignment weight and the number of kept
//! text tokens. Each point is an independent run with its own fingerprint.

use dualcast::bench::{sweep, RunConfig, SweepAxis};
use dualcast::data::sinusoid_table;

fn main() -> dualcast::Result<()> {
    let csv = std::env::temp_dir().join("dualcast-sweep.csv");
    sinusoid_table(600, &[24, 12], 0.2, 0)?.write_csv(&csv)?;
    let base = RunConfig::from_toml_str(
        r#"
        backend = "stub"
        lookback = 96
        horizon = 24
        d_model = 8
        n_learn = 4
        epochs = 1
        seeds = [1]
        max_train_windows = 64
        max_eval_windows = 32
        [stub]
        d_llm = 16
        "#,
    )?;
    let base = RunConfig { dataset: Some(csv), ..base };

    for r in sweep(&base, SweepAxis::Lambda, &[0.2, 1.0, 5.0, 100.0])? {
        println!("lambda {:<6} MSE {:.4}  [{}]", r.config.lambda, r.mean_mse, &r.fingerprint[..12]);
    }
    // 11 patches here, so 72 is clamped
    for r in sweep(&base, SweepAxis::TextLen, &[1.0, 4.0, 72.0])? {
        println!("text len {:<3?} MSE {:.4}", r.config.text_len_override.unwrap_or(0), r.mean_mse);
    }
    Ok(())
}
