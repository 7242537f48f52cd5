//! Audits what each frozen encoder exposes: a class-balanced linear probe
//! on time-pooled features, per classification task.
//!
//!     cargo run --release --example probe_scan -- [seed]

use wee::encoders::{EncoderPool, PoolConfig};
use wee::probe::{probe_balanced_accuracy, ProbeConfig};
use wee::taskbench::{gen_split, GenerationParams, Split, Task};

fn main() -> wee::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(1);
    let pool = EncoderPool::new(&PoolConfig::default())?;
    let params = GenerationParams::default();
    println!("balanced probe accuracy (seed {seed})");
    for task in [Task::Er, Task::Ctc, Task::Cmd] {
        let train = gen_split(task, Split::Train, 400, seed, &params)?;
        let test = gen_split(task, Split::Test, 400, seed, &params)?;
        let mut line = format!("{task:>4}:");
        for enc in std::iter::once(pool.base()).chain(pool.experts()) {
            let acc = probe_balanced_accuracy(enc, &train, &test, &ProbeConfig::default())?;
            line += &format!("  {}={acc:.3}", enc.kind().name());
        }
        println!("{line}");
    }
    Ok(())
}
