use super::train::Trainer;
use super::{HarnessError, TrainConfig};
use std::time::Instant;

pub const DEFAULT_WARMUP_STEPS: usize = 50;
pub const DEFAULT_TIMED_STEPS: usize = 200;

#[derive(Debug, Clone)]
pub struct ThroughputReport {
    pub short_steps_per_sec: f64,
    pub long_steps_per_sec: f64,
    /// short / long; the efficiency argument for training on short sequences.
    pub ratio: f64,
}

/// Steady-state optimizer steps per wall-clock second: `warmup` steps are
/// excluded, then `timed` steps are measured.
pub fn measure_steps_per_sec(
    config: &TrainConfig,
    warmup: usize,
    timed: usize,
) -> Result<f64, HarnessError> {
    if timed == 0 {
        return Err(HarnessError::Config("timed step count must be positive".into()));
    }
    let mut trainer = Trainer::new(config)?;
    for _ in 0..warmup {
        trainer.step()?;
    }
    let started = Instant::now();
    for _ in 0..timed {
        trainer.step()?;
    }
    Ok(timed as f64 / started.elapsed().as_secs_f64())
}

/// Train-length throughput comparison: the same model trained on short
/// vs long curricula. Only the ratio is meaningful across machines.
pub fn throughput_compare(
    short: &TrainConfig,
    long: &TrainConfig,
    warmup: usize,
    timed: usize,
) -> Result<ThroughputReport, HarnessError> {
    if short.d_model != long.d_model || short.blocks != long.blocks || short.heads != long.heads
        || short.batch_size != long.batch_size
    {
        return Err(HarnessError::Config(
            "throughput comparison requires identical model config and batch size".into(),
        ));
    }
    let short_sps = measure_steps_per_sec(short, warmup, timed)?;
    let long_sps = measure_steps_per_sec(long, warmup, timed)?;
    Ok(ThroughputReport {
        short_steps_per_sec: short_sps,
        long_steps_per_sec: long_sps,
        ratio: short_sps / long_sps,
    })
}
