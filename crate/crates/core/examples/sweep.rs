//! Trains the full model with the diversity term off and on and compares
//! the usage entropy of the data-dependent router.
//!
//! `cargo run --release --example sweep -- [config.toml]`

use std::path::{Path, PathBuf};

use anyhow::Result;
use wee::encoders::EncoderPool;
use wee::harness::{obtain_decoder, run_sweep, BenchData, RunConfig};

fn main() -> Result<()> {
    let mut cfg = match std::env::args().nth(1) {
        Some(p) => RunConfig::load(Path::new(&p))?,
        None => RunConfig::default(),
    };
    let fallback = PathBuf::from("/tmp/wee_decoder.json");
    if cfg.decoder_checkpoint.is_none() && fallback.exists() {
        cfg.decoder_checkpoint = Some(fallback);
    }
    let decoder = obtain_decoder(&cfg)?;
    let pool = EncoderPool::new(&cfg.pool)?;
    let data = BenchData::prepare(&cfg, &pool)?;
    let ceiling = (pool.num_experts() as f64).ln();
    run_sweep(&cfg, &decoder, &pool, &data, |r| {
        println!(
            "λ {:<5} diversity {:<4} seed {}  usage entropy {:.3} (max {ceiling:.3})  agg {:.4}",
            r.lambda,
            r.diversity,
            r.seed,
            r.summary.usage.usage_entropy,
            r.summary.metrics.aggregate()
        );
    })?;
    Ok(())
}
