//! The GPT-2 code path against hidden states computed by `transformers` on
//! a tiny deterministic checkpoint (see tests/fixtures/make_tiny_gpt2.py).

mod common;

use candle_core::{DType, Device, Tensor};
use dualcast::model::{BackendConfig, Forecaster, ModelConfig};
use dualcast::params::to_f64_vec;
use dualcast::text::{BackendKind, TextEncoder};
use dualcast::train::{train, TrainConfig};
use dualcast::data::WindowSet;

fn reference() -> serde_json::Value {
    let text = std::fs::read_to_string(common::fixture_dir().join("reference.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn fixture_encoder(dtype: DType) -> TextEncoder {
    TextEncoder::pretrained(common::fixture_dir(), 2, dtype, &Device::Cpu).unwrap()
}

#[test]
fn tokenizer_matches_reference_ids() {
    let r = reference();
    let enc = fixture_encoder(DType::F64);
    let ids = enc.tokenizer.encode(r["text"].as_str().unwrap()).unwrap();
    let expected: Vec<u32> = r["ids"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as u32).collect();
    assert_eq!(ids, expected);
}

#[test]
fn hidden_states_match_reference() {
    let r = reference();
    let shape: Vec<usize> = r["input_shape"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).collect();
    let n: usize = shape.iter().product();
    let input: Vec<f64> = (0..n).map(|i| 0.8 * (0.731 * i as f64 + 0.5).sin()).collect();
    let expected: Vec<f64> = r["hidden"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for dtype in [DType::F32, DType::F64] {
        let enc = fixture_encoder(dtype);
        let v = Tensor::from_vec(input.clone(), shape.as_slice(), &Device::Cpu).unwrap().to_dtype(dtype).unwrap();
        let got = to_f64_vec(&enc.encode(&v).unwrap()).unwrap();
        assert_eq!(got.len(), expected.len());
        let worst = got.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-4, "{dtype:?}: max abs diff {worst}");
    }
}

#[test]
fn encoder_is_causal() {
    let enc = fixture_encoder(DType::F64);
    let a = Tensor::randn(0.0, 1.0, (1, 6, 16), &Device::Cpu).unwrap().to_dtype(DType::F64).unwrap();
    let tail = Tensor::randn(0.0, 1.0, (1, 2, 16), &Device::Cpu).unwrap().to_dtype(DType::F64).unwrap();
    let b = Tensor::cat(&[&a.narrow(1, 0, 4).unwrap(), &tail], 1).unwrap();
    let ha = to_f64_vec(&enc.encode(&a).unwrap().narrow(1, 0, 4).unwrap()).unwrap();
    let hb = to_f64_vec(&enc.encode(&b).unwrap().narrow(1, 0, 4).unwrap()).unwrap();
    assert_eq!(ha, hb);
}

#[test]
fn layer_truncation_and_width() {
    let enc = TextEncoder::pretrained(common::fixture_dir(), 1, DType::F64, &Device::Cpu).unwrap();
    assert_eq!(enc.layer_count(), 1);
    assert_eq!(enc.d_llm(), 16);
    assert!(TextEncoder::pretrained(common::fixture_dir(), 3, DType::F64, &Device::Cpu).is_err());
}

#[test]
fn frozen_fixture_weights_survive_training() {
    let mut cfg: ModelConfig = common::tiny_config(32, 8, 2, 16);
    cfg.backend = BackendConfig {
        kind: BackendKind::Pretrained,
        llm_layers: 2,
        llm_weights_dir: Some(common::fixture_dir()),
        stub: Default::default(),
    };
    let table = common::sinusoid_table(200, &[8, 12], 0.1, 3);
    let mut model = Forecaster::new(cfg, 5).unwrap();
    let before = model.encoder().fingerprint().unwrap();
    let set = WindowSet::new(&table, (0..24).collect(), 32, 8);
    let tc = TrainConfig { epochs: 2, batch_size: 8, ..TrainConfig::default() };
    let history = train(&mut model, &set, None, &tc).unwrap();
    assert!(history.steps() > 0);
    assert_eq!(model.encoder().fingerprint().unwrap(), before);
}

#[test]
fn mixed_prompt_lengths_do_not_couple_instances() {
    // byte-level tokens make prompt length depend on the rendered digits
    let mut cfg: ModelConfig = common::tiny_config(32, 8, 3, 16);
    cfg.backend = BackendConfig {
        kind: BackendKind::Pretrained,
        llm_layers: 2,
        llm_weights_dir: Some(common::fixture_dir()),
        stub: Default::default(),
    };
    cfg.prompt_template = Some("{min}".into());
    cfg.n_learn = 0;
    cfg.text_len_override = Some(8);
    let model = Forecaster::new(cfg, 2).unwrap();
    let batch = common::random_batch(3, 32, 8, 3, 21);
    let out = model.forward(&batch).unwrap();
    let distinct: std::collections::BTreeSet<_> = out.text_rows.iter().collect();
    assert!(distinct.len() > 1, "rows {:?}", out.text_rows);
    let joint = to_f64_vec(&out.predictions).unwrap();
    let per = 8 * 3;
    for b in 0..3 {
        let alone = model.predict(&batch.select(&[b])).unwrap();
        let worst = alone.iter().zip(&joint[b * per..(b + 1) * per]).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "instance {b}: {worst}");
    }
}
