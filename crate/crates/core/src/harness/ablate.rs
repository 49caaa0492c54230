use super::eval::evaluate;
use super::train::train;
use super::{EvalReport, HarnessError, TrainConfig};

/// One full train+evaluate per position bound L; the stability sweep.
/// Every L must cover the widest evaluation input.
pub fn ablation_l_sweep(
    base: &TrainConfig,
    l_values: &[u32],
) -> Result<Vec<(u32, EvalReport)>, HarnessError> {
    if !base.encoding_scheme()?.randomized {
        return Err(HarnessError::Config("the L sweep needs a randomized scheme".into()));
    }
    let widest = base.task.spec().padded_length(base.eval_max_len);
    let mut out = Vec::with_capacity(l_values.len());
    for &l in l_values {
        if (l as usize) < widest {
            return Err(HarnessError::Config(format!(
                "L={l} below the widest evaluation input {widest}"
            )));
        }
        let mut config = base.clone();
        config.max_position = l;
        let trained = train(&config)?;
        let report = evaluate(&trained.params, &config, &config.eval_lengths())?;
        out.push((l, report));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SortingAblation {
    pub sorted: EvalReport,
    pub unsorted: EvalReport,
}

/// Two runs differing only in whether the sampled positions are sorted.
pub fn ablation_sorting(base: &TrainConfig) -> Result<SortingAblation, HarnessError> {
    let scheme = base.encoding_scheme()?;
    if !scheme.randomized {
        return Err(HarnessError::Config("the sorting ablation needs a randomized scheme".into()));
    }
    let mut sorted_cfg = base.clone();
    let mut sorted_scheme = scheme.clone();
    sorted_scheme.sort_sampled = true;
    sorted_cfg.scheme = sorted_scheme.label();
    let mut unsorted_cfg = base.clone();
    let mut unsorted_scheme = scheme;
    unsorted_scheme.sort_sampled = false;
    unsorted_cfg.scheme = unsorted_scheme.label();

    let sorted_params = train(&sorted_cfg)?;
    let sorted = evaluate(&sorted_params.params, &sorted_cfg, &sorted_cfg.eval_lengths())?;
    let unsorted_params = train(&unsorted_cfg)?;
    let unsorted = evaluate(&unsorted_params.params, &unsorted_cfg, &unsorted_cfg.eval_lengths())?;
    Ok(SortingAblation { sorted, unsorted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::TaskId;

    #[test]
    fn sweep_rejects_small_l() {
        let base = TrainConfig::desk(TaskId::ReverseString, "relative+rand");
        // reverse_string at M=100 pads to 200.
        let err = ablation_l_sweep(&base, &[128]).unwrap_err();
        assert!(matches!(err, HarnessError::Config(_)));
    }

    #[test]
    fn ablations_reject_standard_schemes() {
        let base = TrainConfig::desk(TaskId::ReverseString, "relative");
        assert!(ablation_l_sweep(&base, &[512]).is_err());
        assert!(ablation_sorting(&base).is_err());
    }
}
