use super::{artifacts, HarnessError, TrainConfig};
use crate::encodings::EncodingScheme;
use crate::model::{forward, masked_loss, Batch, CaptureOptions, ModelConfig};
use crate::nn::{adam_step, clip_global_norm, AdamState, ParameterStore, Tape};
use crate::rng::stream;
use crate::tasks::{sample_instance, TaskSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Gradient-clipping bound; exposed on [`Trainer`] for experiments.
pub const DEFAULT_CLIP_NORM: f64 = 1.0;

const TRACE_EVERY: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub loss: f64,
}

pub struct TrainOutput {
    pub params: ParameterStore<f32>,
    pub trace: Vec<TraceRecord>,
    pub steps_per_sec: f64,
    pub final_loss: f64,
    pub wall_secs: f64,
}

/// Incremental training driver: one optimizer step per [`Trainer::step`].
/// Per step: draw a length from U(min..=N), build a single-length batch,
/// draw one position assignment for the whole batch, then
/// forward / masked loss / backward / clip / Adam.
pub struct Trainer {
    spec: TaskSpec,
    model_cfg: ModelConfig,
    scheme: EncodingScheme,
    pub params: ParameterStore<f32>,
    adam: AdamState<f32>,
    curriculum_rng: ChaCha8Rng,
    content_rng: ChaCha8Rng,
    position_rng: ChaCha8Rng,
    pub clip_norm: f64,
    config: TrainConfig,
    step: usize,
}

impl Trainer {
    pub fn new(config: &TrainConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let spec = config.task.spec();
        let model_cfg = config.model_config()?;
        let scheme = config.encoding_scheme()?;
        let params = crate::model::init_params::<f32>(&model_cfg, &mut stream(config.seed, "init"))?;
        let adam = AdamState::new(&params, config.lr);
        Ok(Self {
            spec,
            model_cfg,
            scheme,
            params,
            adam,
            curriculum_rng: stream(config.seed, "curriculum"),
            content_rng: stream(config.seed, "content"),
            position_rng: stream(config.seed, "positions"),
            clip_norm: DEFAULT_CLIP_NORM,
            config: config.clone(),
            step: 0,
        })
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.model_cfg
    }

    /// The curriculum draw, separated out so its coverage is testable.
    pub fn sample_curriculum_length(&mut self) -> usize {
        self.curriculum_rng.random_range(self.spec.min_length..=self.config.max_train_len)
    }

    /// One optimizer step; returns the batch loss.
    pub fn step(&mut self) -> Result<f64, HarnessError> {
        let len = self.sample_curriculum_length();
        let instances: Vec<_> = (0..self.config.batch_size)
            .map(|_| sample_instance(&self.spec, len, &mut self.content_rng))
            .collect::<Result<_, _>>()?;
        let width = instances[0].padded_length();
        let positions = self.scheme.assign_positions(width, &mut self.position_rng)?;
        let batch = Batch::from_instances(&self.spec, instances.as_slice(), positions)?;

        let mut tape: Tape<f32> = Tape::new();
        let bound = self.params.bind(&mut tape);
        let out = forward(&mut tape, &bound, &self.model_cfg, &batch, &CaptureOptions::default())?;
        let loss = masked_loss(&mut tape, out.logits, &batch)?;
        let loss_val = tape.data(loss)[0] as f64;
        if !loss_val.is_finite() {
            return Err(HarnessError::Diverged {
                step: self.step,
                loss: loss_val,
                config: artifacts::config_to_kv(&self.config),
            });
        }
        tape.backward(loss)?;
        self.params.collect_grads(&tape, &bound);
        clip_global_norm(&mut self.params, self.clip_norm);
        adam_step(&mut self.params, &mut self.adam)?;
        self.step += 1;
        Ok(loss_val)
    }
}

/// Train to completion per the config; the trace records the loss every 100
/// steps plus the final step.
pub fn train(config: &TrainConfig) -> Result<TrainOutput, HarnessError> {
    let mut trainer = Trainer::new(config)?;
    let mut trace = Vec::new();
    let started = Instant::now();
    let mut final_loss = f64::NAN;
    for step in 0..config.steps {
        let loss = trainer.step()?;
        final_loss = loss;
        if step % TRACE_EVERY == 0 || step + 1 == config.steps {
            trace.push(TraceRecord { step, loss });
        }
    }
    let wall_secs = started.elapsed().as_secs_f64();
    Ok(TrainOutput {
        params: trainer.params,
        trace,
        steps_per_sec: config.steps as f64 / wall_secs,
        final_loss,
        wall_secs,
    })
}
