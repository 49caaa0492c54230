use super::{EvalReport, HarnessError, TrainConfig};
use crate::model::{accuracy_counts, forward, Batch, CaptureOptions};
use crate::nn::{ParameterStore, Tape};
use crate::rng::stream_indexed;
use crate::tasks::sample_instance;
use std::time::Instant;

/// Cap on the per-chunk attention tensor so long-sequence evaluation stays
/// inside memory; chunking never changes results because instances and the
/// batch's position assignment are drawn before splitting.
const CHUNK_FLOAT_BUDGET: usize = 8_000_000;

/// Evaluate a model at each length with `eval_batch` fresh instances per
/// length. Each length uses its own rng streams (decoupled from training)
/// and randomized schemes draw one position assignment per length batch.
pub fn evaluate(
    params: &ParameterStore<f32>,
    config: &TrainConfig,
    lengths: &[usize],
) -> Result<EvalReport, HarnessError> {
    evaluate_chunked(params, config, lengths, None)
}

fn evaluate_chunked(
    params: &ParameterStore<f32>,
    config: &TrainConfig,
    lengths: &[usize],
    chunk_rows_override: Option<usize>,
) -> Result<EvalReport, HarnessError> {
    if lengths.is_empty() {
        return Err(HarnessError::Config("no evaluation lengths".into()));
    }
    let spec = config.task.spec();
    let model_cfg = config.model_config()?;
    let scheme = config.encoding_scheme()?;
    let started = Instant::now();
    let mut per_length = Vec::with_capacity(lengths.len());
    let mut ood_positions = 0u64;
    let mut max_position_used = 0u32;
    for &length in lengths {
        let padded = spec.padded_length(length);
        if scheme.randomized && padded > config.max_position as usize {
            return Err(HarnessError::EvalBeyondSupport {
                length,
                padded,
                max_position: config.max_position,
            });
        }
        let mut content_rng = stream_indexed(config.seed, "eval-content", length as u64);
        let mut position_rng = stream_indexed(config.seed, "eval-positions", length as u64);
        let instances: Vec<_> = (0..config.eval_batch)
            .map(|_| sample_instance(&spec, length, &mut content_rng))
            .collect::<Result<_, _>>()?;
        let positions = scheme.assign_positions(padded, &mut position_rng)?;
        max_position_used = max_position_used.max(positions.max_index());

        let chunk_rows = chunk_rows_override
            .unwrap_or((CHUNK_FLOAT_BUDGET / (model_cfg.heads * padded * padded)).max(1));
        let mut correct = 0u64;
        let mut total = 0u64;
        for chunk in instances.chunks(chunk_rows) {
            let batch = Batch::from_instances(&spec, chunk, positions.clone())?;
            let mut tape: Tape<f32> = Tape::new();
            let bound = params.bind(&mut tape);
            let out = forward(&mut tape, &bound, &model_cfg, &batch, &CaptureOptions::default())?;
            ood_positions += out.ood_positions as u64;
            let (c, t) = accuracy_counts(tape.data(out.logits), model_cfg.output_vocab, &batch);
            correct += c;
            total += t;
        }
        per_length.push((length, correct as f64 / total as f64));
    }
    let score = per_length.iter().map(|(_, a)| a).sum::<f64>() / per_length.len() as f64;
    Ok(EvalReport {
        task: config.task,
        scheme: config.scheme.clone(),
        seed: config.seed,
        lr: config.lr,
        steps: config.steps,
        per_length,
        score,
        ood_positions,
        max_position_used,
        wall_secs: started.elapsed().as_secs_f64(),
    })
}
