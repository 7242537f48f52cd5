//! Trains one variant for one seed and prints test metrics and routing.
//!
//! `cargo run --release --example train_one -- [variant] [seed] [steps] [decoder.json]`

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use wee::encoders::EncoderPool;
use wee::harness::{obtain_decoder, train_and_evaluate, BenchData, RunConfig, Variant};

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = RunConfig::default();
    cfg.variant = args.first().map_or(Ok(Variant::FullWee), |s| s.parse())?;
    let seed: u64 = args.get(1).map_or(Ok(1), |s| s.parse())?;
    if let Some(steps) = args.get(2) {
        cfg.steps = steps.parse()?;
    }
    cfg.log_every = 100;
    let ckpt = PathBuf::from(args.get(3).map_or("/tmp/wee_decoder.json", String::as_str));
    if ckpt.exists() {
        cfg.decoder_checkpoint = Some(ckpt);
    }

    let decoder = obtain_decoder(&cfg)?;
    let pool = EncoderPool::new(&cfg.pool)?;
    let data = BenchData::prepare(&cfg, &pool)?;
    let start = Instant::now();
    let run = train_and_evaluate(&cfg, &decoder, &pool, &data, seed, |row, _| {
        println!(
            "step {:5}  total {:.4}  next_token {:.4}  wee {:+.4}  usage_entropy {:.3}",
            row.step, row.loss.total, row.loss.next_token, row.loss.wee, row.usage_entropy
        );
    })?;
    println!("trained {} for seed {seed} in {:.1?}", cfg.variant, start.elapsed());
    println!(
        "probe loss {:.4} -> {:.4}",
        run.outcome.initial_loss, run.outcome.final_loss
    );
    for (task, metric, v) in run.test.metrics.rows() {
        println!("{task:>4} {metric:<15} {v:.4}");
    }
    let u = &run.test.usage;
    if let Some(k) = u.indep_choice {
        println!("data-independent router picks expert {k}");
    }
    for (t, fr) in u.dep_fractions.iter().enumerate() {
        println!("task {t} dep usage {fr:.3?}");
    }
    println!("usage entropy {:.4}", u.usage_entropy);
    Ok(())
}
