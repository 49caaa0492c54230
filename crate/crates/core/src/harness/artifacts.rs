//! Run artifacts: results CSV, summary JSON, and the flat key=value config
//! echo. Formatting is deterministic so identical runs produce identical
//! bytes.

use super::{EvalReport, HarnessError, TrainConfig};
use crate::tasks::TaskId;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Per-run summary. For a single run the aggregate fields degenerate:
/// max = mean = score, std = 0.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunSummary {
    pub score: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub steps_per_sec: f64,
}

impl RunSummary {
    pub fn single(report: &EvalReport, steps_per_sec: f64) -> Self {
        Self { score: report.score, max: report.score, mean: report.score, std: 0.0, steps_per_sec }
    }
}

/// One row per evaluated length:
/// `task,scheme,seed,lr,steps,length,accuracy`.
pub fn results_csv(report: &EvalReport) -> String {
    let mut out = String::from("task,scheme,seed,lr,steps,length,accuracy\n");
    for &(length, accuracy) in &report.per_length {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            report.task, report.scheme, report.seed, report.lr, report.steps, length, accuracy
        )
        .expect("string write");
    }
    out
}

pub fn write_results_csv(path: &Path, report: &EvalReport) -> Result<(), HarnessError> {
    fs::write(path, results_csv(report))?;
    Ok(())
}

pub fn write_summary_json(path: &Path, summary: &RunSummary) -> Result<(), HarnessError> {
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn read_summary_json(path: &Path) -> Result<RunSummary, HarnessError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("bad summary json: {e}")))
}

/// Flat key=value config echo; keys match the CLI flags.
pub fn config_to_kv(config: &TrainConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| writeln!(out, "{k}={v}").expect("string write");
    kv("task", config.task.to_string());
    kv("scheme", config.scheme.clone());
    kv("n", config.max_train_len.to_string());
    kv("m", config.eval_max_len.to_string());
    kv("max-position", config.max_position.to_string());
    kv("steps", config.steps.to_string());
    kv("batch-size", config.batch_size.to_string());
    kv("eval-batch", config.eval_batch.to_string());
    kv("lr", config.lr.to_string());
    kv("seed", config.seed.to_string());
    kv("d-model", config.d_model.to_string());
    kv("blocks", config.blocks.to_string());
    kv("heads", config.heads.to_string());
    out
}

/// Parse a config echo (or hand-written config file) back. Unknown keys are
/// rejected; missing keys keep the provided defaults.
pub fn config_from_kv(text: &str, mut defaults: TrainConfig) -> Result<TrainConfig, HarnessError> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            HarnessError::Config(format!("config line {}: expected key=value, got {raw:?}", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |e: String| HarnessError::Config(format!("config line {}: {e}", lineno + 1));
        match key {
            "task" => defaults.task = TaskId::parse(value).map_err(|e| bad(e.to_string()))?,
            "scheme" => defaults.scheme = value.to_string(),
            "n" => defaults.max_train_len = value.parse().map_err(|_| bad(format!("bad n {value:?}")))?,
            "m" => defaults.eval_max_len = value.parse().map_err(|_| bad(format!("bad m {value:?}")))?,
            "max-position" => {
                defaults.max_position = value.parse().map_err(|_| bad(format!("bad max-position {value:?}")))?
            }
            "steps" => defaults.steps = value.parse().map_err(|_| bad(format!("bad steps {value:?}")))?,
            "batch-size" => {
                defaults.batch_size = value.parse().map_err(|_| bad(format!("bad batch-size {value:?}")))?
            }
            "eval-batch" => {
                defaults.eval_batch = value.parse().map_err(|_| bad(format!("bad eval-batch {value:?}")))?
            }
            "lr" => defaults.lr = value.parse().map_err(|_| bad(format!("bad lr {value:?}")))?,
            "seed" => defaults.seed = value.parse().map_err(|_| bad(format!("bad seed {value:?}")))?,
            "d-model" => defaults.d_model = value.parse().map_err(|_| bad(format!("bad d-model {value:?}")))?,
            "blocks" => defaults.blocks = value.parse().map_err(|_| bad(format!("bad blocks {value:?}")))?,
            "heads" => defaults.heads = value.parse().map_err(|_| bad(format!("bad heads {value:?}")))?,
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    Ok(defaults)
}
