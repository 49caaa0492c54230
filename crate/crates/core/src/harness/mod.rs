//! Training and evaluation harness: the length curriculum, per-length
//! evaluation with score aggregation, throughput measurement, and the
//! ablation drivers.

mod ablate;
mod aggregate;
pub mod artifacts;
mod eval;
mod throughput;
mod train;

pub use ablate::{ablation_l_sweep, ablation_sorting, SortingAblation};
pub use aggregate::{aggregate, Aggregate};
pub use eval::evaluate;
pub use throughput::{measure_steps_per_sec, throughput_compare, ThroughputReport};
pub use train::{train, TraceRecord, Trainer, TrainOutput};

use crate::encodings::{EncodingError, EncodingScheme};
use crate::model::{ModelConfig, ModelError};
use crate::nn::NnError;
use crate::tasks::{TaskError, TaskId};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("training diverged at step {step} (loss {loss}); config: {config}")]
    Diverged { step: usize, loss: f64, config: String },
    #[error("eval length {length}: padded width {padded} exceeds the position bound L={max_position}")]
    EvalBeyondSupport { length: usize, padded: usize, max_position: u32 },
    #[error("aggregate: {0}")]
    Aggregate(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One run's configuration. Desk-scale defaults train in minutes on a CPU
/// while preserving the qualitative contrasts; `paper` selects the
/// full-scale setup.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub task: TaskId,
    /// Scheme string, e.g. `relative+rand` or `sincos+rand+unsorted`.
    pub scheme: String,
    /// Maximum training length N; lengths are drawn uniformly up to it.
    pub max_train_len: usize,
    /// Maximum evaluation length M; scores average lengths N+1..=M.
    pub eval_max_len: usize,
    /// Position bound L for randomized schemes.
    pub max_position: u32,
    pub steps: usize,
    pub batch_size: usize,
    /// Instances per evaluation length.
    pub eval_batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub d_model: usize,
    pub blocks: usize,
    pub heads: usize,
}

impl TrainConfig {
    pub fn desk(task: TaskId, scheme: &str) -> Self {
        Self {
            task,
            scheme: scheme.to_string(),
            max_train_len: 20,
            eval_max_len: 100,
            max_position: 512,
            steps: 20_000,
            batch_size: 64,
            eval_batch: 100,
            lr: 3e-4,
            seed: 0,
            d_model: 32,
            blocks: 2,
            heads: 8,
        }
    }

    pub fn paper(task: TaskId, scheme: &str) -> Self {
        Self {
            task,
            scheme: scheme.to_string(),
            max_train_len: 40,
            eval_max_len: 500,
            max_position: 2048,
            steps: 2_000_000,
            batch_size: 128,
            eval_batch: 500,
            lr: 3e-4,
            seed: 0,
            d_model: 64,
            blocks: 5,
            heads: 8,
        }
    }

    pub fn encoding_scheme(&self) -> Result<EncodingScheme, HarnessError> {
        Ok(EncodingScheme::parse(&self.scheme, self.d_model, self.max_position)?)
    }

    /// Widest model input seen in training: N plus its answer padding.
    pub fn max_train_padded(&self) -> usize {
        self.task.spec().padded_length(self.max_train_len)
    }

    pub fn model_config(&self) -> Result<ModelConfig, HarnessError> {
        let cfg = ModelConfig::new(
            &self.task.spec(),
            self.encoding_scheme()?,
            self.blocks,
            self.heads,
            self.max_train_padded(),
        );
        cfg.validate()?;
        Ok(cfg)
    }

    /// The unseen lengths N+1..=M.
    pub fn eval_lengths(&self) -> Vec<usize> {
        (self.max_train_len + 1..=self.eval_max_len).collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let spec = self.task.spec();
        if self.max_train_len < spec.min_length {
            return Err(HarnessError::Config(format!(
                "N={} below {} minimum length {}",
                self.max_train_len,
                self.task,
                spec.min_length
            )));
        }
        if self.steps == 0 || self.batch_size == 0 || self.eval_batch == 0 {
            return Err(HarnessError::Config("steps, batch_size, eval_batch must be positive".into()));
        }
        let scheme = self.encoding_scheme()?;
        if scheme.randomized && (self.max_position as usize) < self.max_train_padded() {
            return Err(HarnessError::Config(format!(
                "L={} below the widest training input {}",
                self.max_position,
                self.max_train_padded()
            )));
        }
        self.model_config()?;
        Ok(())
    }
}

/// Per-length accuracies and their aggregates for one evaluated model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: TaskId,
    pub scheme: String,
    pub seed: u64,
    pub lr: f64,
    pub steps: usize,
    pub per_length: Vec<(usize, f64)>,
    /// Mean accuracy over the evaluated lengths.
    pub score: f64,
    /// Learned-table lookups beyond the table (standard learned OOD events).
    pub ood_positions: u64,
    /// Largest position index any batch consumed.
    pub max_position_used: u32,
    pub wall_secs: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_config_is_valid_for_every_task_and_scheme() {
        for task in TaskId::ALL {
            for scheme in ["none", "sincos", "learned", "relative", "alibi", "rope"] {
                let std = TrainConfig::desk(task, scheme);
                std.validate().unwrap();
                let rand = TrainConfig::desk(task, &format!("{scheme}+rand"));
                if scheme != "none" {
                    rand.validate().unwrap();
                }
            }
        }
    }

    #[test]
    fn randomized_l_bound_is_enforced() {
        let mut cfg = TrainConfig::desk(TaskId::DuplicateString, "sincos+rand");
        cfg.max_position = 50; // duplicate at N=20 pads to 60
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
    }
}
