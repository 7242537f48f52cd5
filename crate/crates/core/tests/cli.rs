//! Smoke tests of the command-line entry point.

use std::process::Command;

fn wee(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wee")).args(args).output().unwrap()
}

#[test]
fn grad_check_succeeds() {
    let out = wee(&["grad-check", "--seed", "2"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("router.w_dep") && text.contains("worst relative error"));
}

#[test]
fn report_renders_markdown_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("variant,task,metric,seed,value\n");
    for (v, x) in [("base_only", 0.5), ("full_wee", 0.75)] {
        for (t, m) in [("ER", "macro_f1"), ("CTC", "accuracy"), ("CMD", "precision_at_5"), ("DS", "rouge_l"), ("ALL", "aggregate")] {
            csv.push_str(&format!("{v},{t},{m},1,{x}\n"));
        }
    }
    std::fs::write(dir.path().join("report.csv"), csv).unwrap();
    let out = wee(&["report", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("| Full WEE | **75.0** |"), "{md}");
    assert!(md.contains("+25.0"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "steps = 10\nstep_size = 0.1\n").unwrap();
    let out = wee(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("step_size"));
}

#[test]
fn gen_data_writes_every_split() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, "[data]\ntrain_per_task = 3\ndev_per_task = 2\ntest_per_task = 2\n").unwrap();
    let out = wee(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for task in ["ER", "CTC", "CMD", "DS"] {
        for split in ["train", "dev", "test"] {
            assert!(dir.path().join(format!("{task}_{split}.jsonl")).exists(), "{task} {split}");
        }
    }
}
