//! Encoder-only transformer with per-scheme positional-encoding injection
//! points and padded-output decoding: answers are read from PAD slots
//! appended to the input, no autoregression.

mod forward;
mod init;

pub use forward::{accuracy, accuracy_counts, forward, loss_and_accuracy, masked_loss, Capture, CaptureOptions, ForwardOutput, LayerActivations, LayerAttention};
pub use init::init_params;

use crate::encodings::{EncodingError, EncodingScheme, PositionAssignment};
use crate::nn::NnError;
use crate::tasks::{TaskError, TaskInstance, TaskSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model config: {0}")]
    Config(String),
    #[error("batch: {0}")]
    Batch(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// Architecture hyperparameters. `input_vocab` already includes the PAD
/// token; `max_train_padded` sizes the learned position table of standard
/// learned encodings (the randomized variant uses `scheme.max_position`).
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub d_model: usize,
    pub blocks: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub input_vocab: usize,
    pub output_vocab: usize,
    pub scheme: EncodingScheme,
    pub max_train_padded: usize,
}

impl ModelConfig {
    pub fn new(spec: &TaskSpec, scheme: EncodingScheme, blocks: usize, heads: usize, max_train_padded: usize) -> Self {
        let d_model = scheme.d_model;
        Self {
            d_model,
            blocks,
            heads,
            mlp_hidden: 4 * d_model,
            input_vocab: spec.input_vocab + 1,
            output_vocab: spec.output_vocab,
            scheme,
            max_train_padded,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    /// Rows of the learned position table, when the scheme needs one.
    pub fn learned_table_rows(&self) -> usize {
        if self.scheme.randomized {
            self.scheme.max_position as usize
        } else {
            self.max_train_padded
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.blocks == 0 || self.heads == 0 {
            return Err(ModelError::Config("blocks and heads must be >= 1".into()));
        }
        if self.d_model % self.heads != 0 {
            return Err(ModelError::Config(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.scheme.d_model != self.d_model {
            return Err(ModelError::Config(format!(
                "scheme d_model {} != model d_model {}",
                self.scheme.d_model, self.d_model
            )));
        }
        if self.d_model % 2 != 0 {
            return Err(ModelError::Config(format!("d_model {} must be even", self.d_model)));
        }
        Ok(())
    }
}

/// One training/evaluation batch: PAD-filled token rows, the output mask
/// (true exactly at answer slots), aligned targets, and the single
/// position assignment shared by every sequence in the batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub tokens: Vec<u32>,
    pub mask: Vec<bool>,
    pub targets: Vec<u32>,
    pub rows: usize,
    pub width: usize,
    pub positions: PositionAssignment,
}

impl Batch {
    /// All instances must share one padded width (the harness trains on a
    /// single length per step); `positions` must have that width.
    pub fn from_instances(
        spec: &TaskSpec,
        instances: &[TaskInstance],
        positions: PositionAssignment,
    ) -> Result<Self, ModelError> {
        if instances.is_empty() {
            return Err(ModelError::Batch("no instances".into()));
        }
        let width = instances[0].padded_length();
        if positions.len() != width {
            return Err(ModelError::Batch(format!(
                "position assignment of size {} for padded width {}",
                positions.len(),
                width
            )));
        }
        let rows = instances.len();
        let pad = spec.pad_token();
        let mut tokens = Vec::with_capacity(rows * width);
        let mut mask = Vec::with_capacity(rows * width);
        let mut targets = Vec::with_capacity(rows * width);
        for inst in instances {
            if inst.padded_length() != width {
                return Err(ModelError::Batch(format!(
                    "mixed padded widths {} and {} in one batch",
                    inst.padded_length(),
                    width
                )));
            }
            tokens.extend_from_slice(&inst.input);
            tokens.extend(std::iter::repeat_n(pad, inst.target.len()));
            mask.extend(std::iter::repeat_n(false, inst.input.len()));
            mask.extend(std::iter::repeat_n(true, inst.target.len()));
            targets.extend(std::iter::repeat_n(0, inst.input.len()));
            targets.extend_from_slice(&inst.target);
        }
        Ok(Self { tokens, mask, targets, rows, width, positions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encodings::BaseEncoding;
    use crate::tasks::{sample_instance, TaskId};

    #[test]
    fn batch_layout_masks_answer_tail() {
        let spec = TaskId::ReverseString.spec();
        let mut rng = crate::rng::stream(3, "batch-unit");
        let instances: Vec<_> = (0..4).map(|_| sample_instance(&spec, 5, &mut rng).unwrap()).collect();
        let batch = Batch::from_instances(&spec, &instances, PositionAssignment::identity(10)).unwrap();
        assert_eq!((batch.rows, batch.width), (4, 10));
        for r in 0..4 {
            let row = &batch.mask[r * 10..(r + 1) * 10];
            assert!(row[..5].iter().all(|&m| !m) && row[5..].iter().all(|&m| m));
            assert!(batch.tokens[r * 10 + 5..r * 10 + 10].iter().all(|&t| t == spec.pad_token()));
        }
    }

    #[test]
    fn mismatched_positions_rejected() {
        let spec = TaskId::ReverseString.spec();
        let mut rng = crate::rng::stream(4, "batch-unit2");
        let instances = vec![sample_instance(&spec, 5, &mut rng).unwrap()];
        assert!(Batch::from_instances(&spec, &instances, PositionAssignment::identity(9)).is_err());
    }

    #[test]
    fn config_validation() {
        let spec = TaskId::ReverseString.spec();
        let scheme = EncodingScheme::new(BaseEncoding::SinCos, false, 30, 64);
        let cfg = ModelConfig::new(&spec, scheme, 2, 8, 40);
        assert!(cfg.validate().is_err()); // 30 not divisible by 8

        let scheme = EncodingScheme::new(BaseEncoding::SinCos, false, 32, 64);
        let cfg = ModelConfig::new(&spec, scheme, 2, 8, 40);
        cfg.validate().unwrap();
        assert_eq!(cfg.head_dim(), 4);
        assert_eq!(cfg.input_vocab, 3);
    }
}
