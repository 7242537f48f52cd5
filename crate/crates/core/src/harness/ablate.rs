//! Ablation grid, routing sweep and their CSV / markdown reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::decoder::Decoder;
use crate::encoders::EncoderPool;
use crate::error::{Result, WeeError};
use crate::harness::config::{RunConfig, Variant};
use crate::harness::data::BenchData;
use crate::harness::eval::{RoutingUsage, TaskMetrics};
use crate::harness::train::{save_model, train_and_evaluate, train_log_csv};
use crate::taskbench::Task;

/// Test results of one trained run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub metrics: TaskMetrics,
    pub usage: RoutingUsage,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantRun {
    pub variant: Variant,
    pub seed: u64,
    /// The failure message when the run did not complete.
    pub result: std::result::Result<RunSummary, String>,
}

/// Trains and evaluates one `(variant, seed)` cell. With `out`, the
/// training log and checkpoint go to `out/<variant>/seed<seed>/`.
pub fn run_cell(
    cfg: &RunConfig,
    decoder: &Decoder,
    pool: &EncoderPool,
    data: &BenchData,
    seed: u64,
    out: Option<&Path>,
) -> Result<RunSummary> {
    let run = train_and_evaluate(cfg, decoder, pool, data, seed, |_, _| {})?;
    if let Some(out) = out {
        let dir = out.join(cfg.variant.name()).join(format!("seed{seed}"));
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("train_log.csv"), train_log_csv(&run.outcome.log))?;
        save_model(&run.outcome.model, &dir.join("model.json"))?;
    }
    Ok(RunSummary {
        metrics: run.test.metrics,
        usage: run.test.usage,
        initial_loss: run.outcome.initial_loss,
        final_loss: run.outcome.final_loss,
    })
}

/// All requested variants × seeds on shared data and a shared decoder.
/// A failing cell is recorded and the grid continues.
pub fn run_ablation(
    cfg: &RunConfig,
    decoder: &Decoder,
    pool: &EncoderPool,
    data: &BenchData,
    variants: &[Variant],
    out: Option<&Path>,
    mut progress: impl FnMut(&VariantRun),
) -> Vec<VariantRun> {
    let mut runs = Vec::new();
    for &variant in variants {
        let cell_cfg = RunConfig { variant, ..cfg.clone() };
        for &seed in &cfg.seeds {
            let result = run_cell(&cell_cfg, decoder, pool, data, seed, out).map_err(|e| e.to_string());
            let run = VariantRun { variant, seed, result };
            progress(&run);
            runs.push(run);
        }
    }
    runs
}

/// One line of `report.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRecord {
    pub variant: String,
    pub task: String,
    pub metric: String,
    pub seed: u64,
    pub value: f64,
}

pub const REPORT_HEADER: &str = "variant,task,metric,seed,value";

/// Long-format records, sorted by variant name and seed; failed runs
/// contribute a `status/failed` row.
pub fn report_records(runs: &[VariantRun]) -> Vec<ReportRecord> {
    let mut sorted: Vec<&VariantRun> = runs.iter().collect();
    sorted.sort_by(|a, b| (a.variant.name(), a.seed).cmp(&(b.variant.name(), b.seed)));
    let mut out = Vec::new();
    for run in sorted {
        let rec = |task: &str, metric: &str, value: f64| ReportRecord {
            variant: run.variant.name().into(),
            task: task.into(),
            metric: metric.into(),
            seed: run.seed,
            value,
        };
        match &run.result {
            Ok(s) => {
                out.extend(s.metrics.rows().iter().map(|(t, m, v)| rec(t, m, *v)));
                out.push(rec("ALL", "usage_entropy", s.usage.usage_entropy));
            }
            Err(_) => out.push(rec("ALL", "failed", 1.0)),
        }
    }
    out
}

pub fn report_csv(records: &[ReportRecord]) -> String {
    let mut s = format!("{REPORT_HEADER}\n");
    for r in records {
        writeln!(s, "{},{},{},{},{}", r.variant, r.task, r.metric, r.seed, r.value).expect("string write");
    }
    s
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(WeeError::InvalidInput(format!("report must start with `{REPORT_HEADER}`")));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || WeeError::InvalidInput(format!("malformed report line `{l}`"));
            if f.len() != 5 {
                return Err(bad());
            }
            Ok(ReportRecord {
                variant: f[0].into(),
                task: f[1].into(),
                metric: f[2].into(),
                seed: f[3].parse().map_err(|_| bad())?,
                value: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Table columns: `(task, metric, header)`.
const TABLE_COLUMNS: [(&str, &str, &str); 5] = [
    ("ER", "macro_f1", "ER (F1)"),
    ("CTC", "accuracy", "CTC (Acc)"),
    ("CMD", "precision_at_5", "CMD (P@5)"),
    ("DS", "rouge_l", "DS (ROUGE-L)"),
    ("ALL", "aggregate", "Avg"),
];

fn variant_label(v: Variant) -> &'static str {
    match v {
        Variant::BaseOnly => "Base only",
        Variant::WeakOnly => "Weak only",
        Variant::IndepOnly => "Data-indep. only",
        Variant::DepOnly => "Data-dep. only",
        Variant::FullWee => "Full WEE",
    }
}

/// Seed-mean of one metric per variant name.
pub fn variant_means(records: &[ReportRecord], task: &str, metric: &str) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.task == task && r.metric == metric) {
        let e = acc.entry(r.variant.clone()).or_default();
        e.0 += r.value;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Table-shaped markdown: seed means ×100, best per column in bold, and
/// a Δ row (full minus base).
pub fn report_markdown(records: &[ReportRecord]) -> String {
    let means: Vec<BTreeMap<String, f64>> =
        TABLE_COLUMNS.iter().map(|(t, m, _)| variant_means(records, t, m)).collect();
    let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();

    let mut s = String::from("# Ablation results\n\n");
    writeln!(
        s,
        "Test-set scores ×100, mean over seeds {:?}. Best per column in **bold**; Δ is full minus base.\n",
        seeds
    )
    .expect("string write");
    s.push_str("| Variant |");
    for (_, _, h) in TABLE_COLUMNS {
        write!(s, " {h} |").expect("string write");
    }
    s.push_str("\n|---|");
    s.push_str(&"---:|".repeat(TABLE_COLUMNS.len()));
    s.push('\n');
    for v in Variant::ALL {
        let failed = records.iter().any(|r| r.variant == v.name() && r.metric == "failed");
        write!(s, "| {} |", variant_label(v)).expect("string write");
        for col in &means {
            let best = col.values().copied().fold(f64::NEG_INFINITY, f64::max);
            match col.get(v.name()) {
                Some(&x) if x == best => write!(s, " **{:.1}** |", 100.0 * x),
                Some(&x) => write!(s, " {:.1} |", 100.0 * x),
                None => write!(s, " – |"),
            }
            .expect("string write");
        }
        if failed {
            s.push_str(" (failed runs)");
        }
        s.push('\n');
    }
    s.push_str("| Δ |");
    for col in &means {
        match (col.get(Variant::FullWee.name()), col.get(Variant::BaseOnly.name())) {
            (Some(f), Some(b)) => write!(s, " {:+.1} |", 100.0 * (f - b)),
            _ => write!(s, " – |"),
        }
        .expect("string write");
    }
    s.push('\n');

    let failures: Vec<&ReportRecord> = records.iter().filter(|r| r.metric == "failed").collect();
    if !failures.is_empty() {
        s.push_str("\nFailed runs:\n\n");
        for f in failures {
            writeln!(s, "- {} seed {}", f.variant, f.seed).expect("string write");
        }
    }

    s.push_str("\n## Aggregate per seed\n\n| Variant |");
    for seed in &seeds {
        write!(s, " seed {seed} |").expect("string write");
    }
    s.push_str("\n|---|");
    s.push_str(&"---:|".repeat(seeds.len()));
    s.push('\n');
    for v in Variant::ALL {
        if !records.iter().any(|r| r.variant == v.name()) {
            continue;
        }
        write!(s, "| {} |", v.name()).expect("string write");
        for seed in &seeds {
            let cell = records
                .iter()
                .find(|r| r.variant == v.name() && r.seed == *seed && r.metric == "aggregate");
            match cell {
                Some(r) => write!(s, " {:.4} |", r.value),
                None => write!(s, " – |"),
            }
            .expect("string write");
        }
        s.push('\n');
    }
    s
}

/// Per-task expert selection rates of the data-dependent router, long format.
pub fn routing_csv(runs: &[VariantRun], expert_names: &[&str]) -> String {
    let mut s = String::from("variant,seed,task,expert,fraction\n");
    for run in runs {
        let Ok(summary) = &run.result else { continue };
        for (t, fr) in summary.usage.dep_fractions.iter().enumerate() {
            for (k, f) in fr.iter().enumerate() {
                writeln!(
                    s,
                    "{},{},{},{},{f}",
                    run.variant,
                    run.seed,
                    Task::ALL[t],
                    expert_names.get(k).copied().unwrap_or("expert")
                )
                .expect("string write");
            }
        }
    }
    s
}

// ----- routing sweep ------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub diversity: f64,
    pub seed: u64,
    pub summary: RunSummary,
}

/// Trains `full_wee` for every `(λ, diversity weight, seed)` in the config.
pub fn run_sweep(
    cfg: &RunConfig,
    decoder: &Decoder,
    pool: &EncoderPool,
    data: &BenchData,
    mut progress: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &lambda in &cfg.sweep.lambdas {
        for &diversity in &cfg.sweep.diversity_weights {
            let cell = RunConfig {
                variant: Variant::FullWee,
                lambda,
                diversity_weight: diversity,
                ..cfg.clone()
            };
            for &seed in &cfg.seeds {
                let summary = run_cell(&cell, decoder, pool, data, seed, None)?;
                let row = SweepRow {
                    lambda,
                    diversity,
                    seed,
                    summary,
                };
                progress(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "lambda,diversity,seed,usage_entropy,er_f1,ctc_acc,cmd_p5,ds_rougeL";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let m = &r.summary.metrics;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.lambda, r.diversity, r.seed, r.summary.usage.usage_entropy, m.er_f1, m.ctc_acc, m.cmd_p5, m.ds_rouge_l
        )
        .expect("string write");
    }
    s
}

/// Per-task expert selection rates for every sweep cell.
pub fn sweep_usage_csv(rows: &[SweepRow], expert_names: &[&str]) -> String {
    let mut s = String::from("lambda,diversity,seed,task,expert,fraction\n");
    for r in rows {
        for (t, fr) in r.summary.usage.dep_fractions.iter().enumerate() {
            for (k, f) in fr.iter().enumerate() {
                writeln!(
                    s,
                    "{},{},{},{},{},{f}",
                    r.lambda,
                    r.diversity,
                    r.seed,
                    Task::ALL[t],
                    expert_names.get(k).copied().unwrap_or("expert")
                )
                .expect("string write");
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(agg: f64) -> RunSummary {
        RunSummary {
            metrics: TaskMetrics {
                er_f1: agg,
                ctc_acc: agg,
                ctc_f1: agg,
                cmd_p5: agg,
                ds_rouge_l: agg,
            },
            usage: RoutingUsage::default(),
            initial_loss: 1.0,
            final_loss: 0.5,
        }
    }

    fn grid() -> Vec<VariantRun> {
        let mut runs = Vec::new();
        for (i, v) in Variant::ALL.into_iter().enumerate().rev() {
            for seed in [2, 1] {
                runs.push(VariantRun {
                    variant: v,
                    seed,
                    result: Ok(summary(0.1 * (i + 1) as f64 + 0.01 * seed as f64)),
                });
            }
        }
        runs
    }

    #[test]
    fn csv_round_trips_and_is_sorted() {
        let recs = report_records(&grid());
        let text = report_csv(&recs);
        assert!(text.starts_with("variant,task,metric,seed,value\nbase_only,ER,macro_f1,1,"));
        assert_eq!(parse_report_csv(&text).unwrap(), recs);
        let names: Vec<&str> = recs.iter().map(|r| r.variant.as_str()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
    }

    #[test]
    fn markdown_has_every_variant_and_delta() {
        let md = report_markdown(&report_records(&grid()));
        for v in Variant::ALL {
            assert!(md.contains(&format!("| {} |", variant_label(v))), "{v}");
        }
        // full = 0.515 mean, base = 0.115 mean → Δ = +40.0
        assert!(md.contains("| Δ | +40.0 | +40.0 | +40.0 | +40.0 | +40.0 |"), "{md}");
        assert!(md.contains("| Full WEE | **51.5** |"));
    }

    #[test]
    fn failures_are_annotated() {
        let mut runs = grid();
        runs[0].result = Err("boom".into());
        let recs = report_records(&runs);
        assert!(recs.iter().any(|r| r.metric == "failed" && r.variant == "full_wee"));
        let md = report_markdown(&recs);
        assert!(md.contains("Failed runs"));
        assert!(md.contains("(failed runs)"));
    }

    #[test]
    fn sweep_schema() {
        let rows = vec![SweepRow {
            lambda: 0.1,
            diversity: 0.0,
            seed: 1,
            summary: summary(0.5),
        }];
        let text = sweep_csv(&rows);
        assert_eq!(text.lines().next().unwrap(), SWEEP_HEADER);
        assert_eq!(text.lines().nth(1).unwrap(), "0.1,0,1,0,0.5,0.5,0.5,0.5");
    }
}
