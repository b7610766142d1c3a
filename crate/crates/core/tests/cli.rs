mod common;

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dualcast"));
    c.env("RUST_LOG", "warn");
    c
}

fn write_synthetic(dir: &Path) -> std::path::PathBuf {
    let table = common::sinusoid_table(300, &[8, 12], 0.1, 2);
    let mut text = String::from("date,a,b\n");
    for t in 0..table.len() {
        text += &format!(
            "{},{},{}\n",
            table.timestamps[t].format("%Y-%m-%d %H:%M:%S"),
            table.value(t, 0),
            table.value(t, 1)
        );
    }
    let path = dir.join("synthetic.csv");
    std::fs::write(&path, text).unwrap();
    path
}

const TINY: &str = r#"
backend = "stub"
lookback = 32
horizon = 8
patch_len = 8
stride = 4
d_model = 4
n_learn = 2
epochs = 1
batch_size = 16
seeds = [1, 2]
max_train_windows = 32
max_eval_windows = 16

[stub]
vocab_size = 512
d_llm = 8
seed = 0
decay = 0.8
context_len = 512
"#;

#[test]
fn run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_synthetic(dir.path());
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--dataset")
        .arg(&data)
        .args(["--seeds", "5", "--lambda", "0.5", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "flag overrides the two config seeds");
    assert!(csv.lines().nth(1).unwrap().starts_with("synthetic,32,8,5,ok,"));
    assert!(out.join("results.json").is_file());
}

#[test]
fn ablate_export_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_synthetic(dir.path());
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["ablate", "--ablate", "align", "--ablate", "scale", "--seeds", "1", "--config"])
        .arg(&cfg)
        .arg("--dataset")
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let ablations: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(10).unwrap()).collect();
    assert_eq!(ablations.len(), 3);
    for a in ["none", "align", "scale"] {
        assert!(ablations.contains(&a));
    }

    let emb = dir.path().join("emb.csv");
    let status = bin()
        .args(["export-embeddings", "--instances", "4", "--config"])
        .arg(&cfg)
        .arg("--dataset")
        .arg(&data)
        .arg("--output")
        .arg(&emb)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read_to_string(&emb).unwrap().lines().count(), 1 + 3 * 4 * 2);
    let svg = dir.path().join("pca.svg");
    assert!(bin().args(["plot-pca", "--input"]).arg(&emb).arg("--output").arg(&svg).status().unwrap().success());
    assert!(svg.is_file());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_synthetic(dir.path());
    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code();

    // configuration errors
    assert_eq!(code(&["run", "--backend", "stub"]), Some(1));
    assert_eq!(code(&["run", "--dataset", data.to_str().unwrap()]), Some(1), "pretrained without weights");
    assert_eq!(code(&["run", "--backend", "bogus"]), Some(1));
    assert_eq!(code(&["sweep", "--backend", "stub", "--axis", "lambda", "--values", "-1", "--dataset", data.to_str().unwrap()]), Some(1));

    // data errors
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "date,a\n2021-01-01 00:00:00,1.0\n2021-01-01 01:00:00,oops\n").unwrap();
    assert_eq!(code(&["run", "--backend", "stub", "--dataset", bad.to_str().unwrap()]), Some(2));
    assert_eq!(code(&["run", "--backend", "stub", "--dataset", "/nonexistent/x.csv"]), Some(2));
    assert_eq!(code(&["plot-pca", "--input", "/nonexistent/emb.csv"]), Some(2));

    assert_eq!(code(&["--help"]), Some(0));
}
