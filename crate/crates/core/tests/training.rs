//! End-to-end training properties on a small data budget with a randomly
//! initialised (not pretrained) decoder.

use wee::decoder::Decoder;
use wee::encoders::EncoderPool;
use wee::harness::{
    load_model, report_csv, report_records, run_ablation, save_model, train, train_log_csv, BenchData, RunConfig,
    Variant, WeeModel,
};

fn small() -> RunConfig {
    let mut cfg = RunConfig {
        seeds: vec![4],
        steps: 100,
        ..RunConfig::default()
    };
    cfg.data.train_per_task = 16;
    cfg.data.dev_per_task = 4;
    cfg.data.test_per_task = 16;
    cfg
}

fn setup(cfg: &RunConfig) -> (Decoder, EncoderPool, BenchData) {
    let decoder = Decoder::init(cfg.decoder.clone(), 9).unwrap();
    let pool = EncoderPool::new(&cfg.pool).unwrap();
    let data = BenchData::prepare(cfg, &pool).unwrap();
    (decoder, pool, data)
}

#[test]
fn frozen_arrays_survive_training_for_every_variant() {
    let cfg = small();
    let (decoder, pool, data) = setup(&cfg);
    for variant in Variant::ALL {
        let cell = RunConfig { variant, ..cfg.clone() };
        let out = train(&cell, &decoder, &pool, &data, 4, |_, _| {}).unwrap();
        assert!(out.audit.drifted().is_empty(), "{variant}: {:?}", out.audit.drifted());
        assert!(out.audit.before.keys().any(|k| k.starts_with("decoder.")));
        assert!(out.audit.before.contains_key("encoder.base.projection"));
        assert_eq!(out.log.len(), 100);
        assert!(out.final_loss < out.initial_loss, "{variant}: {} → {}", out.initial_loss, out.final_loss);
    }
}

#[test]
fn zero_steps_leave_the_initialisation_and_checkpoints_round_trip() {
    let cfg = RunConfig { steps: 0, ..small() };
    let (decoder, pool, data) = setup(&cfg);
    let out = train(&cfg, &decoder, &pool, &data, 4, |_, _| {}).unwrap();
    let init = WeeModel::init(&cfg, &decoder, 4).unwrap();
    assert_eq!(out.model.params, init.params);
    assert!(out.log.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&out.model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back.params, init.params);
    assert_eq!(back.spec, init.spec);
}

#[test]
fn identical_config_and_seed_give_identical_outputs() {
    let cfg = RunConfig { steps: 30, ..small() };
    let (decoder, pool, data) = setup(&cfg);
    let report = || {
        let runs = run_ablation(&cfg, &decoder, &pool, &data, &[Variant::FullWee, Variant::DepOnly], None, |_| {});
        report_csv(&report_records(&runs))
    };
    assert_eq!(report(), report());
    let log = || train_log_csv(&train(&cfg, &decoder, &pool, &data, 4, |_, _| {}).unwrap().log);
    let (a, b) = (log(), log());
    assert_eq!(a, b);
    assert!(a.starts_with("step,next_token,indep_ent,dep_ent,dep_div,wee,total,lambda,usage_entropy\n"));
}

#[test]
fn shipped_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 1);
}
