//! Generates a few clips per task, prints their labels and answer tokens,
//! and writes one dataset file per task.
//!
//! `cargo run --release --example gen_data -- [out_dir]`

use std::path::PathBuf;

use anyhow::Result;
use wee::taskbench::{gen_task, save_dataset, Task};
use wee::vocab::token_name;

fn main() -> Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&out)?;
    for task in Task::ALL {
        let ds = gen_task(task, 40, 7)?;
        for ex in ds.examples.iter().take(3) {
            let target: Vec<String> = ex.target_ids.iter().map(|&t| token_name(t)).collect();
            let peak = ex.audio.samples().iter().fold(0.0f64, |a, s| a.max(s.abs()));
            println!(
                "{task:<4} {} samples, peak {peak:.2}, label {:?} → {}",
                ex.audio.len(),
                ex.label,
                target.join(" ")
            );
        }
        let path = out.join(format!("{task}_example.jsonl"));
        save_dataset(&ds, &path)?;
        println!("wrote {} ({} examples)", path.display(), ds.len());
    }
    Ok(())
}
