//! Pretrains the stand-in decoder on the copy task, shows a greedy copy,
//! and saves the frozen checkpoint.
//!
//!     cargo run --release --example pretrain_decoder -- [out.json]

use std::path::PathBuf;
use std::time::Instant;

use wee::decoder::{pretrain_decoder, DecoderConfig, PretrainConfig};
use wee::vocab::{token_name, SEP, SYMBOL_TOKENS};

fn main() -> wee::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("wee_decoder.json"));
    let start = Instant::now();
    let (decoder, report) = pretrain_decoder(&DecoderConfig::default(), &PretrainConfig::default())?;
    for (step, acc) in &report.curve {
        println!("step {step:>5}  held-out accuracy {acc:.4}");
    }
    println!(
        "reached {:.4} after {} steps in {:.1?}",
        report.heldout_accuracy,
        report.steps,
        start.elapsed()
    );

    let prompt = [SYMBOL_TOKENS[1], SYMBOL_TOKENS[3], SEP];
    let copy = decoder.generate(None, &prompt, 8)?;
    let show = |ids: &[usize]| ids.iter().map(|&i| token_name(i)).collect::<Vec<_>>().join(" ");
    println!("{}  →  {}", show(&prompt), show(&copy));

    decoder.save(&out)?;
    println!("saved {}", out.display());
    Ok(())
}
