//! Turns off the scaling step, the alignment loss and the learnable prompt
//! one at a time and reports each variant next to the full model.

use dualcast::bench::{ablate, Ablation, RunConfig};
use dualcast::data::sinusoid_table;

fn main() -> dualcast::Result<()> {
    let csv = std::env::temp_dir().join("dualcast-ablation.csv");
    sinusoid_table(600, &[24, 12], 0.2, 0)?.write_csv(&csv)?;
    let base = RunConfig::from_toml_str(
        r#"
        backend = "stub"
        lookback = 96
        horizon = 24
        d_model = 8
        n_learn = 4
        epochs = 5
        seeds = [1, 2]
        max_train_windows = 96
        max_eval_windows = 48
        [stub]
        d_llm = 16
        "#,
    )?;
    let base = RunConfig { dataset: Some(csv), ..base };
    for r in ablate(&base, &Ablation::ALL)? {
        let label = r.config.ablation.map_or("full model", |a| a.as_str());
        println!("{label:<18} MSE {:.4}  MAE {:.4}  trainable {}", r.mean_mse, r.mean_mae, r.params.trainable);
    }
    Ok(())
}
