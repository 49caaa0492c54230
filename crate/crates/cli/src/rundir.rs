//! Run-directory layout: `<out>/<task>/<scheme>/seed<k>_lr<lr>/` holding
//! config.txt, trace.csv, checkpoint/, results.csv, summary.json.

use anyhow::{Context, Result};
use lengthgen::harness::TrainConfig;
use std::path::{Path, PathBuf};

pub fn out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("LENGTHGEN_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn run_dir(root: &Path, config: &TrainConfig) -> PathBuf {
    root.join(config.task.name())
        .join(&config.scheme)
        .join(format!("seed{}_lr{}", config.seed, config.lr))
}

pub fn scheme_dir(root: &Path, config: &TrainConfig) -> PathBuf {
    root.join(config.task.name()).join(&config.scheme)
}

pub fn create(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
