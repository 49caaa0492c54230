//! Finite-difference gradient checking. This is the independent oracle for
//! the backward pass: it only ever evaluates forward computations, in f64.

use super::tape::{Tape, TensorRef};
use super::NnError;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Central finite differences of a scalar function at `x`.
pub fn numerical_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut point = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = point[i];
        point[i] = orig + h;
        let fp = f(&point);
        point[i] = orig - h;
        let fm = f(&point);
        point[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Relative error per the gradient-check contract: `|a - n| / (|a| + 1e-8)`.
pub fn relative_error(analytic: f64, numerical: f64) -> f64 {
    (analytic - numerical).abs() / (analytic.abs() + 1e-8)
}

/// Result of one gradient check: worst relative error and where it occurred.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_input: usize,
    pub worst_coord: usize,
    pub coords_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compare tape gradients of `build` (a scalar-valued graph over the given
/// differentiable inputs) against central finite differences.
pub fn check_gradients(
    build: impl Fn(&mut Tape<f64>, &[TensorRef]) -> Result<TensorRef, NnError>,
    inputs: &[(Vec<f64>, Vec<usize>)],
    h: f64,
) -> Result<GradCheckReport, NnError> {
    let eval = |values: &[Vec<f64>]| -> Result<f64, NnError> {
        let mut tape = Tape::new();
        let refs: Vec<TensorRef> = values
            .iter()
            .zip(inputs.iter())
            .map(|(v, (_, shape))| tape.leaf(v.clone(), shape))
            .collect::<Result<_, _>>()?;
        let loss = build(&mut tape, &refs)?;
        Ok(tape.data(loss)[0])
    };

    // Analytic gradients from one backward pass.
    let mut tape = Tape::new();
    let refs: Vec<TensorRef> = inputs
        .iter()
        .map(|(v, shape)| tape.leaf(v.clone(), shape))
        .collect::<Result<_, _>>()?;
    let loss = build(&mut tape, &refs)?;
    if tape.shape(loss).iter().product::<usize>() != 1 {
        return Err(NnError::InvalidArgument {
            op: "check_gradients",
            message: "build must produce a scalar".into(),
        });
    }
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = refs
        .iter()
        .zip(inputs.iter())
        .map(|(&r, (v, _))| tape.grad(r).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; v.len()]))
        .collect();

    let mut values: Vec<Vec<f64>> = inputs.iter().map(|(v, _)| v.clone()).collect();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst_input: 0, worst_coord: 0, coords_checked: 0 };
    for input_idx in 0..inputs.len() {
        for coord in 0..values[input_idx].len() {
            let orig = values[input_idx][coord];
            values[input_idx][coord] = orig + h;
            let fp = eval(&values)?;
            values[input_idx][coord] = orig - h;
            let fm = eval(&values)?;
            values[input_idx][coord] = orig;
            let numerical = (fp - fm) / (2.0 * h);
            let rel = relative_error(analytic[input_idx][coord], numerical);
            report.coords_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_input = input_idx;
                report.worst_coord = coord;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, "gradcheck-unit");
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn two_layer_mlp_gradients_match_finite_differences() {
        // x[2,3] -> relu(x·W1 + b1)·W2, summed; checked per coordinate at 1e-4.
        let inputs = vec![
            (random_vec(6, 1), vec![2, 3]),
            (random_vec(12, 2), vec![3, 4]),
            (random_vec(4, 3), vec![4]),
            (random_vec(4, 4), vec![4, 1]),
        ];
        let report = check_gradients(
            |tape, refs| {
                let h = tape.matmul(refs[0], refs[1], false)?;
                let h = tape.add(h, refs[2])?;
                let h = tape.relu(h);
                let out = tape.matmul(h, refs[3], false)?;
                Ok(tape.sum_all(out))
            },
            &inputs,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(report.passes(DEFAULT_TOLERANCE), "max rel err {}", report.max_rel_error);
    }

    #[test]
    fn softmax_cross_entropy_gradients() {
        let inputs = vec![(random_vec(12, 7), vec![4, 3])];
        let report = check_gradients(
            |tape, refs| tape.masked_cross_entropy(refs[0], &[0, 2, 1, 0], &[true, false, true, true]),
            &inputs,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(report.passes(DEFAULT_TOLERANCE), "max rel err {}", report.max_rel_error);
    }
}
