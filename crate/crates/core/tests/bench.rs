mod common;

use candle_core::{Device, Tensor};
use chrono::{Duration, NaiveDate};

use dualcast::bench::{self, Ablation, PreparedData, RunConfig, SweepAxis};
use dualcast::data::{DatasetTable, WindowBatch, WindowSet};
use dualcast::model::Forecaster;
use dualcast::text::BackendKind;
use dualcast::train::evaluate;
use dualcast::Error;

fn tiny_run() -> RunConfig {
    RunConfig {
        dataset_name: Some("synthetic".into()),
        lookback: 32,
        horizon: 8,
        patch_len: 8,
        stride: 4,
        d_model: 4,
        n_learn: 2,
        backend: BackendKind::Stub,
        stub: common::tiny_stub(8),
        epochs: 1,
        batch_size: 16,
        seeds: vec![1, 2, 3],
        max_train_windows: Some(32),
        max_eval_windows: Some(16),
        ..RunConfig::default()
    }
}

fn write_csv(table: &DatasetTable, path: &std::path::Path) {
    let mut text = String::from("date");
    for c in &table.channel_names {
        text += &format!(",{c}");
    }
    text.push('\n');
    for t in 0..table.len() {
        text += &table.timestamps[t].format("%Y-%m-%d %H:%M:%S").to_string();
        for c in 0..table.n_channels() {
            text += &format!(",{}", table.value(t, c));
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn run_config_round_trips_through_toml() {
    let mut cfg = tiny_run();
    cfg.few_shot_ratio = Some(0.1);
    cfg.ablation = Some(Ablation::ScaleAlign);
    cfg.text_len_override = Some(7);
    let text = cfg.to_toml_string().unwrap();
    let back = RunConfig::from_toml_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.fingerprint(), cfg.fingerprint());
    let partial = RunConfig::from_toml_str("lookback = 96\nseeds = [7]\n").unwrap();
    assert_eq!((partial.lookback, partial.horizon, partial.seeds.clone()), (96, 96, vec![7]));
    assert!(RunConfig::from_toml_str("lookback = \"long\"").is_err());
}

#[test]
fn defaults_follow_the_protocol() {
    let d = RunConfig::default();
    assert_eq!((d.lookback, d.patch_len, d.stride, d.lambda, d.llm_layers), (512, 16, 8, 1.0, 6));
    assert_eq!(d.seeds, vec![2021, 2022, 2023]);
    assert_eq!((d.lr, d.epochs, d.patience), (1e-3, 10, 10));
}

#[test]
fn invalid_fields_are_rejected_up_front() {
    let bad = [
        RunConfig { seeds: vec![], ..tiny_run() },
        RunConfig { few_shot_ratio: Some(0.0), ..tiny_run() },
        RunConfig { few_shot_ratio: Some(1.5), ..tiny_run() },
        RunConfig { lambda: -1.0, ..tiny_run() },
        RunConfig { lr: f64::NAN, ..tiny_run() },
        RunConfig { lookback: 4, ..tiny_run() },
        RunConfig { backend: BackendKind::Pretrained, ..tiny_run() },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
    }
}

#[test]
fn seed_average_and_report_files() {
    let table = common::sinusoid_table(400, &[8, 12], 0.1, 1);
    let runs: Vec<_> = [0.5, 2.0]
        .iter()
        .map(|&lambda| {
            let cfg = RunConfig { lambda, ..tiny_run() };
            let data = PreparedData::from_table(table.clone(), &cfg).unwrap();
            bench::run_on_data(&cfg, &data).unwrap()
        })
        .collect();
    for r in &runs {
        let mean = r.seeds.iter().map(|s| s.mse).sum::<f64>() / 3.0;
        assert!((r.mean_mse - mean).abs() < 1e-15);
        assert_eq!(r.fingerprint, r.config.fingerprint());
    }
    let dir = tempfile::tempdir().unwrap();
    bench::report(&runs, dir.path()).unwrap();
    let csv = std::fs::read(dir.path().join("results.csv")).unwrap();
    let json = std::fs::read(dir.path().join("results.json")).unwrap();
    bench::report(&runs, dir.path()).unwrap();
    assert_eq!(std::fs::read(dir.path().join("results.csv")).unwrap(), csv);
    assert_eq!(std::fs::read(dir.path().join("results.json")).unwrap(), json);

    let mut reader = csv::Reader::from_reader(csv.as_slice());
    let headers = reader.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        ["dataset", "lookback", "horizon", "seed", "status", "mse", "mae", "params_trainable", "params_total", "wall_clock_s", "ablation", "fingerprint"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    let entries: Vec<serde_json::Value> = serde_json::from_slice(&json).unwrap();
    assert_eq!(entries.len(), 2);
    for e in &entries {
        let fp = e["fingerprint"].as_str().unwrap();
        let mses: Vec<f64> = rows.iter().filter(|r| &r[11] == fp).map(|r| r[5].parse().unwrap()).collect();
        assert_eq!(mses.len(), 3);
        let csv_mean = mses.iter().sum::<f64>() / 3.0;
        assert!((csv_mean - e["mean_mse"].as_f64().unwrap()).abs() < 1e-6);
    }
    let dir_file = dir.path().join("results.csv");
    assert!(matches!(bench::report(&runs, &dir_file), Err(Error::File { .. })));
}

#[test]
fn few_shot_uses_the_first_windows() {
    let table = common::sinusoid_table(400, &[8, 12], 0.1, 1);
    let full = PreparedData::from_table(table.clone(), &RunConfig { max_train_windows: None, ..tiny_run() }).unwrap();
    let few = PreparedData::from_table(
        table,
        &RunConfig { few_shot_ratio: Some(0.1), max_train_windows: None, ..tiny_run() },
    )
    .unwrap();
    let keep = (full.train.len() as f64 * 0.1).ceil() as usize;
    assert_eq!(few.train, full.train[..keep].to_vec());
    assert_eq!(few.test, full.test);
}

#[test]
fn evaluation_reaches_back_into_the_previous_split() {
    let table = common::sinusoid_table(400, &[8, 12], 0.1, 1);
    let data = PreparedData::from_table(table, &RunConfig { max_eval_windows: None, ..tiny_run() }).unwrap();
    // ratio split of 400 rows: train [0, 280), val [280, 320), test [320, 400)
    assert_eq!(data.test.first(), Some(&(320 - 32)));
    assert_eq!(data.test.last(), Some(&(400 - 32 - 8)));
    assert_eq!(data.val.first(), Some(&(280 - 32)));
}

#[test]
fn sweeps_validate_before_running_and_vary_one_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synthetic.csv");
    write_csv(&common::sinusoid_table(400, &[8, 12], 0.1, 1), &path);
    let base = RunConfig { dataset: Some(path), seeds: vec![1], ..tiny_run() };

    assert!(matches!(bench::sweep(&base, SweepAxis::Lookback, &[32.0, 2.5]), Err(Error::Config(_))));
    assert!(matches!(bench::sweep(&base, SweepAxis::Lambda, &[1.0, -1.0]), Err(Error::Config(_))));
    assert!(matches!(bench::sweep(&base, SweepAxis::Lambda, &[]), Err(Error::Config(_))));
    assert!("depth".parse::<SweepAxis>().is_err());

    let lambdas = [0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0];
    let results = bench::sweep(&base, SweepAxis::Lambda, &lambdas).unwrap();
    assert_eq!(results.len(), 7);
    for (r, &l) in results.iter().zip(&lambdas) {
        assert_eq!(RunConfig { lambda: base.lambda, ..r.config.clone() }, base);
        assert_eq!(r.config.lambda, l);
    }
    let fps: std::collections::BTreeSet<_> = results.iter().map(|r| r.fingerprint.clone()).collect();
    assert_eq!(fps.len(), 7);

    let lookbacks = [16.0, 24.0, 32.0, 40.0, 48.0];
    assert_eq!(bench::sweep(&base, SweepAxis::Lookback, &lookbacks).unwrap().len(), 5);

    // N_P = 8 here, so 72 is clamped
    let texts = bench::sweep(&base, SweepAxis::TextLen, &[2.0, 72.0]).unwrap();
    let n = texts[1].config.model_config(2).unwrap().n_text_tokens().unwrap();
    assert_eq!(n, 8);
}

#[test]
fn ablation_flags_map_to_variants() {
    let base = tiny_run();
    let m = |a| RunConfig { ablation: Some(a), ..base.clone() };
    let cfg = m(Ablation::Scale).model_config(2).unwrap();
    assert!(!cfg.use_scale && m(Ablation::Scale).effective_lambda() == 1.0);
    assert_eq!(m(Ablation::Align).effective_lambda(), 0.0);
    assert!(m(Ablation::Align).model_config(2).unwrap().use_scale);
    assert_eq!(m(Ablation::LearnablePrompt).model_config(2).unwrap().n_learn, 0);
    let both = m(Ablation::ScaleAlign);
    assert!(!both.model_config(2).unwrap().use_scale && both.effective_lambda() == 0.0);
    for s in ["scale", "align", "learnable-prompt", "scale+align"] {
        assert_eq!(s.parse::<Ablation>().unwrap().as_str(), s);
    }
}

fn constant_table(rows: usize) -> DatasetTable {
    let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let ts = (0..rows).map(|i| start + Duration::hours(i as i64)).collect();
    let values = (0..rows).flat_map(|_| [0.5, -1.25]).collect();
    DatasetTable::new("flat", ts, values, vec!["a".into(), "b".into()]).unwrap()
}

#[test]
fn metrics_closed_forms() {
    let table = constant_table(80);
    let set = WindowSet::new(&table, (0..20).collect(), 32, 8);
    let model = Forecaster::new(common::tiny_config(32, 8, 2, 8), 1).unwrap();
    let zero = |name: &str| {
        let v = model.params().get(name).unwrap();
        v.set(&v.zeros_like().unwrap()).unwrap();
    };
    zero("head.out.weight");
    zero("head.out.bias");
    let perfect = evaluate(&model, &set, 7).unwrap();
    assert!(perfect.mse < 1e-24 && perfect.mae < 1e-12, "{perfect:?}");

    // a constant head output b denormalizes to mean + b * sqrt(eps) / (1 + eps^2)
    let c = 0.3;
    let b = c * (1.0 + 1e-10) / 1e-5f64.sqrt();
    let bias = model.params().get("head.out.bias").unwrap();
    bias.set(&Tensor::full(b, 8, &Device::Cpu).unwrap()).unwrap();
    let offset = evaluate(&model, &set, 7).unwrap();
    assert!((offset.mse - c * c).abs() < 1e-12, "{offset:?}");
    assert!((offset.mae - c).abs() < 1e-12);
    assert_eq!(offset.count, 20 * 8 * 2);

    let empty = WindowSet::new(&table, vec![], 32, 8);
    assert!(matches!(evaluate(&model, &empty, 4), Err(Error::Config(_))));
}

#[test]
fn batched_evaluation_matches_window_loop() {
    let table = common::sinusoid_table(200, &[8, 12], 0.2, 3);
    let set = WindowSet::new(&table, (0..50).collect(), 32, 8);
    let model = Forecaster::new(common::tiny_config(32, 8, 2, 8), 4).unwrap();
    let batched = evaluate(&model, &set, 16).unwrap();
    let (mut se, mut ae, mut count) = (0.0, 0.0, 0);
    for s in 0..50 {
        let batch = WindowBatch::from_table(&table, &[s], 32, 8);
        let pred = model.predict(&batch).unwrap();
        for (p, t) in pred.iter().zip(&batch.targets) {
            se += (p - t) * (p - t);
            ae += (p - t).abs();
            count += 1;
        }
    }
    assert!((batched.mse - se / count as f64).abs() < 1e-6);
    assert!((batched.mae - ae / count as f64).abs() < 1e-6);
}

#[test]
fn embedding_export_and_pca() {
    let model = Forecaster::new(common::tiny_config(32, 8, 2, 8), 4).unwrap();
    let batch = common::random_batch(3, 32, 8, 2, 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.csv");
    let rows = bench::export_embeddings(&model, &batch, &path).unwrap();
    assert_eq!(rows.len(), 3 * 6);
    assert_eq!(bench::read_embeddings(&path).unwrap().len(), 18);
    let svg = dir.path().join("pca.svg");
    bench::plot_pca(&path, &svg).unwrap();
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.matches("<circle").count() == 18 + 3);
    assert!(matches!(
        bench::export_embeddings(&model, &batch, dir.path().join("missing/emb.csv")),
        Err(Error::Data(_) | Error::File { .. })
    ));
}

#[test]
fn pca_of_duplicated_points_overlaps() {
    let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64 * 0.1, 1.0 - i as f64]).collect();
    let doubled: Vec<Vec<f64>> = pts.iter().chain(&pts).cloned().collect();
    let proj = bench::pca_2d(&doubled).unwrap();
    for i in 0..6 {
        assert!((proj[i][0] - proj[i + 6][0]).abs() < 1e-12 && (proj[i][1] - proj[i + 6][1]).abs() < 1e-12);
    }
    // the leading component of collinear points carries all the spread
    let line: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
    let p = bench::pca_2d(&line).unwrap();
    assert!(p.iter().all(|q| q[1].abs() < 1e-9));
    assert!(bench::pca_2d(&[]).is_err());
}

#[test]
fn synthetic_tables_round_trip_through_csv() {
    let table = dualcast::data::sinusoid_table(50, &[5, 7, 11], 0.3, 9).unwrap();
    assert_eq!(table, dualcast::data::sinusoid_table(50, &[5, 7, 11], 0.3, 9).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synthetic.csv");
    table.write_csv(&path).unwrap();
    let back = dualcast::data::load_dataset(&path, Some(3)).unwrap();
    assert_eq!((back.timestamps.clone(), back.values.clone(), back.channel_names.clone()),
        (table.timestamps, table.values, table.channel_names));
    assert!(dualcast::data::sinusoid_table(10, &[0], 0.0, 0).is_err());
    assert!(dualcast::data::sinusoid_table(10, &[4], -1.0, 0).is_err());
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap();
        n += 1;
    }
    assert!(n >= 3);
}
