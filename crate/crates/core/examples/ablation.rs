//! Runs the five-variant ablation grid and prints the markdown table.
//!
//! `cargo run --release --example ablation -- [config.toml] [out_dir]`

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use wee::encoders::EncoderPool;
use wee::harness::{
    obtain_decoder, report_csv, report_markdown, report_records, run_ablation, BenchData, RunConfig, Variant,
};

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = match args.first() {
        Some(p) => RunConfig::load(Path::new(p))?,
        None => RunConfig::default(),
    };
    let fallback = PathBuf::from("/tmp/wee_decoder.json");
    if cfg.decoder_checkpoint.is_none() && fallback.exists() {
        cfg.decoder_checkpoint = Some(fallback);
    }
    let out = args.get(1).map(PathBuf::from);

    let decoder = obtain_decoder(&cfg)?;
    let pool = EncoderPool::new(&cfg.pool)?;
    let data = BenchData::prepare(&cfg, &pool)?;
    let start = Instant::now();
    let runs = run_ablation(&cfg, &decoder, &pool, &data, &Variant::ALL, out.as_deref(), |run| {
        match &run.result {
            Ok(s) => {
                let m = &s.metrics;
                println!(
                    "{:<10} seed {}  agg {:.4}  ER {:.3} CTC {:.3} CMD {:.3} DS {:.3}  usage {:.3}  dep {:.2?}  ({:.0?})",
                    run.variant.name(),
                    run.seed,
                    m.aggregate(),
                    m.er_f1,
                    m.ctc_acc,
                    m.cmd_p5,
                    m.ds_rouge_l,
                    s.usage.usage_entropy,
                    s.usage.dep_fractions,
                    start.elapsed()
                )
            }
            Err(e) => println!("{} seed {} failed: {e}", run.variant, run.seed),
        }
    });
    let records = report_records(&runs);
    println!("\n{}", report_markdown(&records));
    if let Some(out) = out {
        std::fs::create_dir_all(&out)?;
        std::fs::write(out.join("report.csv"), report_csv(&records))?;
        std::fs::write(out.join("report.md"), report_markdown(&records))?;
    }
    Ok(())
}
