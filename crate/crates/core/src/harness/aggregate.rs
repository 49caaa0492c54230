use super::{EvalReport, HarnessError};

/// Table-style aggregation over one task x scheme group:
/// max over every (seed, lr) run, and mean +/- sample std over seeds at the
/// learning rate whose mean is highest.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub max_score: f64,
    pub best_lr: f64,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

pub fn aggregate(reports: &[EvalReport]) -> Result<Aggregate, HarnessError> {
    let first = reports
        .first()
        .ok_or_else(|| HarnessError::Aggregate("empty report group".into()))?;
    if reports
        .iter()
        .any(|r| r.task != first.task || r.scheme != first.scheme)
    {
        return Err(HarnessError::Aggregate(
            "reports mix tasks or schemes; aggregate one group at a time".into(),
        ));
    }
    let max_score = reports.iter().map(|r| r.score).fold(f64::NEG_INFINITY, f64::max);

    // Group by learning rate (exact bit patterns; lrs come from config).
    let mut lrs: Vec<u64> = reports.iter().map(|r| r.lr.to_bits()).collect();
    lrs.sort_unstable();
    lrs.dedup();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for bits in lrs {
        let scores: Vec<f64> = reports
            .iter()
            .filter(|r| r.lr.to_bits() == bits)
            .map(|r| r.score)
            .collect();
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let better = match &best {
            Some((best_mean, _)) => mean > *best_mean,
            None => true,
        };
        if better {
            best = Some((mean, scores.into_iter().chain([f64::from_bits(bits)]).collect()));
        }
    }
    let (mean, mut scores_and_lr) = best.expect("non-empty");
    let best_lr = scores_and_lr.pop().expect("lr appended");
    let scores = scores_and_lr;
    // Sample standard deviation; a single run reports 0 by convention.
    let std = if scores.len() < 2 {
        0.0
    } else {
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (scores.len() - 1) as f64;
        var.sqrt()
    };
    Ok(Aggregate { max_score, best_lr, mean, std, runs: reports.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::TaskId;

    fn report(seed: u64, lr: f64, score: f64) -> EvalReport {
        EvalReport {
            task: TaskId::EvenPairs,
            scheme: "sincos+rand".into(),
            seed,
            lr,
            steps: 100,
            per_length: vec![(21, score)],
            score,
            ood_positions: 0,
            max_position_used: 0,
            wall_secs: 0.0,
        }
    }

    #[test]
    fn max_over_all_runs() {
        let reports = vec![report(0, 1e-4, 0.5), report(1, 1e-4, 0.9), report(2, 3e-4, 0.7)];
        let agg = aggregate(&reports).unwrap();
        assert_eq!(agg.max_score, 0.9);
        assert!(agg.max_score >= agg.mean);
    }

    #[test]
    fn single_report_degenerates_to_score_and_zero_std() {
        let agg = aggregate(&[report(0, 3e-4, 0.62)]).unwrap();
        assert_eq!((agg.mean, agg.std, agg.max_score), (0.62, 0.0, 0.62));
    }

    #[test]
    fn best_lr_group_selected_by_mean() {
        // lr 1e-4 mean 0.6, lr 3e-4 mean 0.8 -> report the 0.8 group.
        let reports = vec![
            report(0, 1e-4, 0.55),
            report(1, 1e-4, 0.65),
            report(0, 3e-4, 0.75),
            report(1, 3e-4, 0.85),
        ];
        let agg = aggregate(&reports).unwrap();
        assert_eq!(agg.best_lr, 3e-4);
        assert!((agg.mean - 0.8).abs() < 1e-12);
        let expected_std = (2.0 * 0.05f64 * 0.05 / 1.0).sqrt();
        assert!((agg.std - expected_std).abs() < 1e-12);
    }

    #[test]
    fn empty_group_rejected() {
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn mixed_groups_rejected() {
        let mut other = report(0, 1e-4, 0.5);
        other.scheme = "rope".into();
        assert!(aggregate(&[report(0, 1e-4, 0.5), other]).is_err());
    }
}
