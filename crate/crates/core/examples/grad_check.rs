//! Finite-difference check of every trainable parameter of a micro model.
//!
//! `cargo run --release --example grad_check -- [seed]`

use anyhow::Result;
use wee::harness::{grad_check_model, micro_config};

fn main() -> Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let reports = grad_check_model(&micro_config(), seed)?;
    println!("{:<28} {:>12} {:>12} {:>8}", "parameter", "max_rel", "max_abs", "entries");
    for r in &reports {
        println!(
            "{:<28} {:>12.3e} {:>12.3e} {:>8}",
            r.parameter_name, r.max_rel_error, r.max_abs_error, r.num_entries_checked
        );
    }
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    println!("worst relative error {worst:.3e}");
    anyhow::ensure!(worst < 1e-4, "gradient check failed");
    Ok(())
}
