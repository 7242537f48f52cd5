//! Command-line entry point: data generation, decoder pretraining,
//! training, evaluation, the ablation grid, the routing sweep, gradient
//! checking and report rendering.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wee::decoder::pretrain_decoder;
use wee::encoders::EncoderPool;
use wee::harness::{
    evaluate, grad_check_model, load_model, micro_config, obtain_decoder, parse_report_csv, report_csv,
    report_markdown, report_records, routing_csv, run_ablation, run_sweep, sweep_csv, sweep_usage_csv,
    BenchData, RunConfig, RunSummary, Variant, VariantRun,
};
use wee::taskbench::save_dataset;

#[derive(Parser)]
#[command(name = "wee", about = "Weak-encoder ensemble with dual routing on a synthetic audio benchmark")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Model variant (base_only, weak_only, indep_only, dep_only, full_wee).
    #[arg(long, global = true)]
    variant: Option<Variant>,
    /// Frozen decoder checkpoint; overrides the config's.
    #[arg(long, global = true)]
    decoder: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train/dev/test splits of every task as JSON lines.
    GenData,
    /// Pretrain the stand-in decoder on the copy task.
    PretrainDecoder,
    /// Train one variant and evaluate it on the test split.
    Train,
    /// Evaluate a saved model checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate every variant for every seed.
    Ablate,
    /// Train the full model over the λ × diversity-weight grid.
    SweepRouting,
    /// Finite-difference check of the full loss on a micro model.
    GradCheck,
    /// Render report.md from the report.csv in the output directory.
    Report,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(d) = &self.decoder {
            cfg.decoder_checkpoint = Some(d.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn expert_names(pool: &EncoderPool) -> Vec<&'static str> {
    pool.experts().iter().map(|e| e.kind().name()).collect()
}

fn print_run(run: &VariantRun, names: &[&str], start: Instant) {
    match &run.result {
        Ok(s) => {
            let m = &s.metrics;
            println!(
                "{:<10} seed {}  agg {:.4}  ER {:.3}  CTC {:.3}  CMD {:.3}  DS {:.3}  usage {:.3}  loss {:.3}→{:.3}  ({:.0?})",
                run.variant.name(),
                run.seed,
                m.aggregate(),
                m.er_f1,
                m.ctc_acc,
                m.cmd_p5,
                m.ds_rouge_l,
                s.usage.usage_entropy,
                s.initial_loss,
                s.final_loss,
                start.elapsed()
            );
            print_routing(s, names);
        }
        Err(e) => println!("{:<10} seed {}  FAILED: {e}", run.variant.name(), run.seed),
    }
}

fn print_routing(s: &RunSummary, names: &[&str]) {
    if let Some(k) = s.usage.indep_choice {
        println!("    independent router → {}", names[k]);
    }
    for (task, fr) in wee::taskbench::Task::ALL.iter().zip(&s.usage.dep_fractions) {
        let parts: Vec<String> = names.iter().zip(fr).map(|(n, f)| format!("{n} {f:.2}")).collect();
        println!("    {task:<4} → {}", parts.join(", "));
    }
}

/// Runs the grid for `variants` and writes the reports; fails if any run failed.
fn grid(cfg: &RunConfig, variants: &[Variant], out: &Path) -> Result<()> {
    let decoder = obtain_decoder(cfg)?;
    let pool = EncoderPool::new(&cfg.pool)?;
    let data = BenchData::prepare(cfg, &pool)?;
    let names = expert_names(&pool);
    let start = Instant::now();
    let runs = run_ablation(cfg, &decoder, &pool, &data, variants, Some(out), |r| print_run(r, &names, start));
    let records = report_records(&runs);
    write(&out.join("report.csv"), report_csv(&records))?;
    write(&out.join("report.md"), report_markdown(&records))?;
    write(&out.join("routing.csv"), routing_csv(&runs, &names))?;
    write(&out.join("config.toml"), cfg.to_toml_string()?)?;
    let failed = runs.iter().filter(|r| r.result.is_err()).count();
    if failed > 0 {
        bail!("{failed} of {} runs failed", runs.len());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let out = &cli.common.out;
    match &cli.command {
        Command::GenData => {
            let cfg = cli.common.run_config()?;
            for (split, sets) in wee::harness::data::generate_splits(&cfg)? {
                for ds in sets {
                    let path = out.join(format!("{}_{split}.jsonl", ds.task));
                    std::fs::create_dir_all(out)?;
                    save_dataset(&ds, &path)?;
                    println!("wrote {} ({} examples)", path.display(), ds.len());
                }
            }
        }
        Command::PretrainDecoder => {
            let cfg = cli.common.run_config()?;
            let start = Instant::now();
            let (decoder, report) = pretrain_decoder(&cfg.decoder, &cfg.pretrain)?;
            let mut curve = String::from("step,heldout_accuracy\n");
            for (step, acc) in &report.curve {
                println!("step {step:>5}  held-out accuracy {acc:.4}");
                curve.push_str(&format!("{step},{acc}\n"));
            }
            println!(
                "held-out accuracy {:.4} after {} steps ({:.1?})",
                report.heldout_accuracy,
                report.steps,
                start.elapsed()
            );
            std::fs::create_dir_all(out)?;
            decoder.save(&out.join("decoder.json"))?;
            println!("wrote {}", out.join("decoder.json").display());
            write(&out.join("pretrain_curve.csv"), curve)?;
        }
        Command::Train => {
            let cfg = cli.common.run_config()?;
            grid(&cfg, &[cfg.variant], out)?;
        }
        Command::Eval { checkpoint } => {
            let cfg = cli.common.run_config()?;
            let model = load_model(checkpoint)?;
            let pool = EncoderPool::new(&cfg.pool)?;
            let data = BenchData::prepare(&cfg, &pool)?;
            let report = evaluate(&model, &data.test, cfg.cmd_k)?;
            let run = VariantRun {
                variant: model.spec.variant,
                seed: cfg.seeds[0],
                result: Ok(RunSummary {
                    metrics: report.metrics,
                    usage: report.usage,
                    initial_loss: f64::NAN,
                    final_loss: f64::NAN,
                }),
            };
            let names = expert_names(&pool);
            print_run(&run, &names, Instant::now());
            let records = report_records(std::slice::from_ref(&run));
            write(&out.join("report.csv"), report_csv(&records))?;
            write(&out.join("report.md"), report_markdown(&records))?;
        }
        Command::Ablate => {
            let cfg = cli.common.run_config()?;
            let variants = match cli.common.variant {
                Some(v) => vec![v],
                None => Variant::ALL.to_vec(),
            };
            grid(&cfg, &variants, out)?;
            println!("\n{}", std::fs::read_to_string(out.join("report.md"))?);
        }
        Command::SweepRouting => {
            let cfg = cli.common.run_config()?;
            let decoder = obtain_decoder(&cfg)?;
            let pool = EncoderPool::new(&cfg.pool)?;
            let data = BenchData::prepare(&cfg, &pool)?;
            let names = expert_names(&pool);
            let start = Instant::now();
            let rows = run_sweep(&cfg, &decoder, &pool, &data, |r| {
                println!(
                    "λ {:<5} diversity {:<4} seed {}  usage entropy {:.3}  agg {:.4}  ({:.0?})",
                    r.lambda,
                    r.diversity,
                    r.seed,
                    r.summary.usage.usage_entropy,
                    r.summary.metrics.aggregate(),
                    start.elapsed()
                );
                print_routing(&r.summary, &names);
            })?;
            write(&out.join("sweep.csv"), sweep_csv(&rows))?;
            write(&out.join("sweep_usage.csv"), sweep_usage_csv(&rows, &names))?;
        }
        Command::GradCheck => {
            let seed = cli.common.seed.unwrap_or(1);
            let start = Instant::now();
            let reports = grad_check_model(&micro_config(), seed)?;
            println!("{:<24} {:>12} {:>12} {:>8}", "parameter", "max_rel", "max_abs", "entries");
            for r in &reports {
                println!(
                    "{:<24} {:>12.3e} {:>12.3e} {:>8}",
                    r.parameter_name, r.max_rel_error, r.max_abs_error, r.num_entries_checked
                );
            }
            let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
            println!("worst relative error {worst:.3e} ({:.1?})", start.elapsed());
            if !(worst < 1e-4) {
                bail!("gradient check failed: worst relative error {worst:.3e}");
            }
        }
        Command::Report => {
            let path = out.join("report.csv");
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let md = report_markdown(&parse_report_csv(&text)?);
            write(&out.join("report.md"), &md)?;
            println!("\n{md}");
        }
    }
    Ok(())
}
