//! End-to-end tests of the `lengthgen` binary: artifact layout, config echo
//! precedence, eval reproducibility from a checkpoint, sweep counting, and
//! the analysis outputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lengthgen"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lengthgen-cli-{}-{name}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const TINY: &[&str] = &[
    "--steps", "40", "--batch-size", "8", "--n", "8", "--m", "16",
    "--d-model", "16", "--heads", "4", "--eval-batch", "16", "--max-position", "64",
];

#[test]
fn train_writes_all_artifacts_and_eval_reproduces() {
    let out_dir = tmp("train");
    let mut args = vec!["--out", out_dir.to_str().unwrap(), "train", "--task", "reverse_string", "--scheme", "relative+rand"];
    args.extend_from_slice(TINY);
    assert_ok(&run(&args));

    let run_dir = out_dir.join("reverse_string/relative+rand/seed0_lr0.0003");
    for artifact in ["config.txt", "trace.csv", "results.csv", "summary.json", "checkpoint/manifest.txt", "checkpoint/params.bin"] {
        assert!(run_dir.join(artifact).exists(), "{artifact} missing");
    }
    let before = std::fs::read(run_dir.join("results.csv")).unwrap();

    // Re-running eval from the checkpoint + config echo is bit-identical.
    let eval = run(&["eval", run_dir.to_str().unwrap()]);
    assert_ok(&eval);
    let after = std::fs::read(run_dir.join("results.csv")).unwrap();
    assert_eq!(before, after, "results.csv changed across eval re-runs");
    assert_eq!(String::from_utf8_lossy(&eval.stdout).as_bytes(), before.as_slice());
}

#[test]
fn config_file_and_flag_precedence() {
    let out_dir = tmp("config");
    let cfg_path = out_dir.join("experiment.cfg");
    std::fs::write(&cfg_path, "task=even_pairs\nscheme=sincos+rand\nsteps=30\nn=6\nm=10\nd-model=16\nheads=4\nbatch-size=8\neval-batch=8\nmax-position=64\nseed=3\n").unwrap();
    // The --steps flag must beat the file's steps=30.
    let out = run(&[
        "--out", out_dir.to_str().unwrap(),
        "train", "--config", cfg_path.to_str().unwrap(), "--steps", "35",
    ]);
    assert_ok(&out);
    let echo = std::fs::read_to_string(out_dir.join("even_pairs/sincos+rand/seed3_lr0.0003/config.txt")).unwrap();
    assert!(echo.contains("steps=35"), "{echo}");
    assert!(echo.contains("task=even_pairs"), "{echo}");
}

#[test]
fn invalid_flags_and_schemes_are_rejected() {
    let out = bin().args(["train", "--bogus-flag"]).output().unwrap();
    assert!(!out.status.success());
    let out = run(&["train", "--task", "reverse_string", "--scheme", "sincos+unsorted"]);
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("sincos+unsorted"), "{msg}");
    let out = run(&["train", "--task", "no_such_task"]);
    assert!(!out.status.success());
}

#[test]
fn sweep_creates_run_dirs_and_aggregate_summary() {
    let out_dir = tmp("sweep");
    let mut args = vec![
        "--out", out_dir.to_str().unwrap(),
        "sweep", "--task", "even_pairs", "--scheme", "sincos+rand",
        "--seeds", "0,1", "--lrs", "0.0003,0.0005", "--jobs", "2",
    ];
    args.extend_from_slice(TINY);
    assert_ok(&run(&args));
    let scheme_dir = out_dir.join("even_pairs/sincos+rand");
    let run_dirs: Vec<_> = std::fs::read_dir(&scheme_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .collect();
    assert_eq!(run_dirs.len(), 4, "expected exactly 4 run directories");
    assert!(scheme_dir.join("summary.json").exists(), "aggregate summary missing");
    for seed in ["0", "1"] {
        for lr in ["0.0003", "0.0005"] {
            assert!(scheme_dir.join(format!("seed{seed}_lr{lr}")).join("results.csv").exists());
        }
    }
}

#[test]
fn dump_corpus_emits_valid_json_lines() {
    let out = run(&["dump-corpus", "--task", "binary_addition", "--n", "8", "--seed", "1"]);
    assert_ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    // lengths 3..=8, 10 instances each.
    assert_eq!(lines.len(), 60);
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["task"], "binary_addition");
        assert!(v["input"].as_array().unwrap().len() >= 3);
        assert!(!v["target"].as_array().unwrap().is_empty());
    }
}

#[test]
fn analysis_commands_emit_csv() {
    let out_dir = tmp("analysis");
    let mut args = vec!["--out", out_dir.to_str().unwrap(), "train", "--task", "reverse_string", "--scheme", "relative+rand"];
    args.extend_from_slice(TINY);
    assert_ok(&run(&args));
    let run_dir = out_dir.join("reverse_string/relative+rand/seed0_lr0.0003");

    assert_ok(&run(&["analyze-pca", run_dir.to_str().unwrap(), "--count", "8"]));
    let pca = std::fs::read_to_string(run_dir.join("pca.csv")).unwrap();
    assert!(pca.starts_with("layer,regime,length,seq,slot,pc1,pc2"));
    assert!(run_dir.join("pca_summary.json").exists());

    assert_ok(&run(&["analyze-attention", run_dir.to_str().unwrap(), "--length", "10"]));
    let att = std::fs::read_to_string(run_dir.join("attention.csv")).unwrap();
    assert!(att.starts_with("layer,row,col,value"));
    // 2 blocks x (10 input + 10 answer slots)^2 entries plus the header.
    assert_eq!(att.lines().count(), 1 + 2 * 400);
}

#[test]
fn capture_writes_activation_dump() {
    let out_dir = tmp("capture");
    let mut args = vec![
        "--out", out_dir.to_str().unwrap(),
        "train", "--task", "even_pairs", "--scheme", "sincos+rand", "--capture",
    ];
    args.extend_from_slice(TINY);
    assert_ok(&run(&args));
    let capture = out_dir.join("even_pairs/sincos+rand/seed0_lr0.0003/capture");
    let manifest = std::fs::read_to_string(capture.join("manifest.txt")).unwrap();
    assert!(manifest.contains("activations layer=0"));
    assert!(manifest.contains("attention block=0"));
    // Payload is the flat f32 stream in manifest order.
    let mut floats = 0usize;
    for line in manifest.lines() {
        let field = |key: &str| -> usize {
            line.split_whitespace()
                .find_map(|f| f.strip_prefix(&format!("{key}=")))
                .and_then(|v| v.parse().ok())
                .unwrap_or(0)
        };
        if line.starts_with("activations") {
            floats += field("rows") * field("width") * field("d_model");
        } else {
            floats += field("heads") * field("width") * field("width");
        }
    }
    let payload = std::fs::read(capture.join("payload.bin")).unwrap();
    assert_eq!(payload.len(), floats * 4);
}

#[test]
fn selfcheck_passes_on_fresh_build() {
    let out = run(&["selfcheck"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.matches("[PASS]").count() >= 8, "{stdout}");
    assert!(!stdout.contains("[FAIL]"), "{stdout}");
}

#[test]
fn throughput_reports_ratio() {
    let out_dir = tmp("throughput");
    let out = run(&[
        "--out", out_dir.to_str().unwrap(),
        "throughput", "--task", "missing_duplicate",
        "--short-n", "8", "--long-n", "24", "--warmup", "2", "--timed", "6",
        "--d-model", "16", "--heads", "4", "--batch-size", "8", "--max-position", "64",
    ]);
    assert_ok(&out);
    let payload: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("throughput.json")).unwrap()).unwrap();
    assert!(payload["ratio"].as_f64().unwrap() > 0.0);
    assert!(payload["short_steps_per_sec"].as_f64().unwrap() > 0.0);
}
