//! Flag and config-file resolution. Precedence: flags > config file >
//! defaults (desk scale unless --paper-scale).

use anyhow::{Context, Result};
use clap::Args;
use lengthgen::harness::artifacts::config_from_kv;
use lengthgen::harness::TrainConfig;
use lengthgen::tasks::TaskId;
use std::path::PathBuf;

#[derive(Args, Clone, Debug, Default)]
pub struct ExperimentFlags {
    /// Task name, e.g. reverse_string (see dump-corpus --help for the list).
    #[arg(long)]
    pub task: Option<String>,
    /// Scheme string: <base>[+rand][+unsorted], base in
    /// none|sincos|learned|relative|alibi|rope.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Maximum training length N.
    #[arg(long)]
    pub n: Option<usize>,
    /// Maximum evaluation length M.
    #[arg(long)]
    pub m: Option<usize>,
    /// Position bound L for randomized schemes.
    #[arg(long)]
    pub max_position: Option<u32>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Instances per evaluation length.
    #[arg(long)]
    pub eval_batch: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    /// Flat key=value config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Switch the defaults to the full-scale setup
    /// (N=40, M=500, L=2048, batch 128, 2,000,000 steps, d_model 64, 5 blocks).
    #[arg(long)]
    pub paper_scale: bool,
    /// Capture activations and attention during evaluation and dump them
    /// into the run directory.
    #[arg(long)]
    pub capture: bool,
}

impl ExperimentFlags {
    /// Resolve to a full TrainConfig.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let task = TaskId::parse(self.task.as_deref().unwrap_or("reverse_string"))
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let scheme = self.scheme.as_deref().unwrap_or("relative+rand");
        let mut cfg = if self.paper_scale {
            TrainConfig::paper(task, scheme)
        } else {
            TrainConfig::desk(task, scheme)
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            cfg = config_from_kv(&text, cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        // Flags override the file; task/scheme flags were already applied as
        // defaults above, so reapply them only when explicitly given.
        if let Some(t) = &self.task {
            cfg.task = TaskId::parse(t).map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        if let Some(s) = &self.scheme {
            cfg.scheme = s.clone();
        }
        if let Some(v) = self.n {
            cfg.max_train_len = v;
        }
        if let Some(v) = self.m {
            cfg.eval_max_len = v;
        }
        if let Some(v) = self.max_position {
            cfg.max_position = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.eval_batch {
            cfg.eval_batch = v;
        }
        if let Some(v) = self.d_model {
            cfg.d_model = v;
        }
        if let Some(v) = self.blocks {
            cfg.blocks = v;
        }
        if let Some(v) = self.heads {
            cfg.heads = v;
        }
        cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(cfg)
    }
}
