//! Oracle validation: independent second implementations, exhaustive
//! enumeration for small alphabets, and big-integer spot checks for the
//! arithmetic tasks. Nothing here is used by the production oracle path.

use super::cs::operand_split;
use super::{oracle, sample_instance, TaskError, TaskId, TaskSpec};
use num_bigint::BigUint;
use rand::Rng;

/// Outcome of an exhaustive dual-implementation run.
#[derive(Debug, Clone)]
pub struct ExhaustiveReport {
    pub task: TaskId,
    pub instances_checked: u64,
    pub disagreements: u64,
}

impl ExhaustiveReport {
    pub fn passed(&self) -> bool {
        self.disagreements == 0
    }
}

/// Compare the oracle with the alternative implementation on every input up
/// to `max_length`. Refuses when the enumeration would exceed 2^20 instances.
pub fn exhaustive_check(spec: &TaskSpec, max_length: usize) -> Result<ExhaustiveReport, TaskError> {
    let v = spec.input_vocab as u64;
    let mut total: u64 = 0;
    for len in spec.min_length..=max_length {
        total = total.saturating_add(v.saturating_pow(len as u32));
        if total > 1 << 20 {
            return Err(TaskError::BudgetExceeded { instances: total });
        }
    }
    let mut checked = 0u64;
    let mut disagreements = 0u64;
    for len in spec.min_length..=max_length {
        let mut input = vec![0u32; len];
        loop {
            // Tasks with structured inputs only check well-formed ones.
            if let Ok(expected) = oracle(spec, &input) {
                if let Some(alt) = alternative_oracle(spec.id, &input) {
                    checked += 1;
                    if alt != expected {
                        disagreements += 1;
                    }
                }
            }
            // Odometer over the input alphabet.
            let mut d = len;
            loop {
                if d == 0 {
                    break;
                }
                d -= 1;
                input[d] += 1;
                if (input[d] as usize) < spec.input_vocab {
                    break;
                }
                input[d] = 0;
            }
            if input.iter().all(|&t| t == 0) {
                break;
            }
        }
    }
    Ok(ExhaustiveReport { task: spec.id, instances_checked: checked, disagreements })
}

/// Second implementation per task, structurally different from the oracle.
/// Returns None for inputs the alternative route cannot judge.
fn alternative_oracle(task: TaskId, input: &[u32]) -> Option<Vec<u32>> {
    match task {
        // Oracle counts ab/ba pairs; here: first token equals last token.
        TaskId::EvenPairs => Some(vec![u32::from(input.first() == input.last())]),
        // Oracle folds an xor; here: popcount of the packed bits.
        TaskId::ParityCheck => {
            let ones: u32 = input.iter().map(|&t| t & 1).sum();
            Some(vec![ones % 2])
        }
        // Oracle reverses an iterator; here: explicit back-to-front indexing.
        TaskId::ReverseString => {
            let mut out = Vec::with_capacity(input.len());
            for i in (0..input.len()).rev() {
                out.push(input[i]);
            }
            Some(out)
        }
        // Oracle is x ++ x; here: indexing modulo the length.
        TaskId::DuplicateString => {
            Some((0..2 * input.len()).map(|i| input[i % input.len()]).collect())
        }
        // Oracle uses step_by; here: two explicit queues.
        TaskId::OddsFirst => {
            let mut odds = Vec::new();
            let mut evens = Vec::new();
            for (i, &t) in input.iter().enumerate() {
                if i % 2 == 0 {
                    odds.push(t);
                } else {
                    evens.push(t);
                }
            }
            odds.extend(evens);
            Some(odds)
        }
        // Oracle sorts; here: counting buckets.
        TaskId::BucketSort => {
            let mut counts = [0usize; 5];
            for &t in input {
                counts[t as usize] += 1;
            }
            let mut out = Vec::with_capacity(input.len());
            for (v, &c) in counts.iter().enumerate() {
                out.extend(std::iter::repeat_n(v as u32, c));
            }
            Some(out)
        }
        _ => None,
    }
}

fn bits_to_biguint(bits: &[u32]) -> BigUint {
    let bytes: Vec<u8> = bits.iter().map(|&b| b as u8).collect();
    BigUint::from_radix_be(&bytes, 2).expect("bits are 0/1")
}

fn biguint_to_bits(v: &BigUint, width: usize) -> Vec<u32> {
    let digits = v.to_radix_be(2);
    let mut out = vec![0u32; width];
    let off = width - digits.len();
    for (i, d) in digits.iter().enumerate() {
        out[off + i] = *d as u32;
    }
    out
}

/// Big-integer reference for one arithmetic instance.
fn bigint_reference(task: TaskId, input: &[u32]) -> Vec<u32> {
    match task {
        TaskId::BinaryAddition | TaskId::BinaryMultiplication => {
            let (a_len, _) = operand_split(input.len());
            let a = bits_to_biguint(&input[..a_len]);
            let b = bits_to_biguint(&input[a_len + 1..]);
            if task == TaskId::BinaryAddition {
                biguint_to_bits(&(a + b), a_len + 1)
            } else {
                biguint_to_bits(&(a * b), input.len() - 1)
            }
        }
        TaskId::ComputeSqrt => {
            let n = bits_to_biguint(input);
            biguint_to_bits(&n.sqrt(), input.len().div_ceil(2))
        }
        _ => unreachable!("not an arithmetic task"),
    }
}

/// Spot-check the bit-vector arithmetic oracles against big-integer
/// arithmetic on random instances across a length range.
pub fn arithmetic_spot_check(
    task: TaskId,
    instances: usize,
    max_length: usize,
    rng: &mut impl Rng,
) -> Result<ExhaustiveReport, TaskError> {
    assert!(matches!(
        task,
        TaskId::BinaryAddition | TaskId::BinaryMultiplication | TaskId::ComputeSqrt
    ));
    let spec = task.spec();
    let mut disagreements = 0u64;
    for _ in 0..instances {
        let len = rng.random_range(spec.min_length..=max_length);
        let inst = sample_instance(&spec, len, rng)?;
        if bigint_reference(task, &inst.input) != inst.target {
            disagreements += 1;
        }
    }
    Ok(ExhaustiveReport { task, instances_checked: instances as u64, disagreements })
}

/// Per-token accuracy of a uniform random guesser over `instances` samples:
/// the sanity check that declared baselines equal 1/output_vocab.
pub fn uniform_guess_accuracy(
    spec: &TaskSpec,
    instances: usize,
    length_range: (usize, usize),
    rng: &mut impl Rng,
) -> Result<f64, TaskError> {
    let mut correct = 0u64;
    let mut total = 0u64;
    for _ in 0..instances {
        let len = rng.random_range(length_range.0.max(spec.min_length)..=length_range.1);
        let inst = sample_instance(&spec, len, rng)?;
        for &t in &inst.target {
            let guess = rng.random_range(0..spec.output_vocab as u32);
            correct += u64::from(guess == t);
            total += 1;
        }
    }
    Ok(correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn dual_implementations_agree_to_length_eight() {
        for task in [
            TaskId::ParityCheck,
            TaskId::EvenPairs,
            TaskId::DuplicateString,
            TaskId::OddsFirst,
            TaskId::ReverseString,
        ] {
            let report = exhaustive_check(&task.spec(), 8).unwrap();
            assert!(report.passed(), "{task}: {report:?}");
            assert!(report.instances_checked >= 510, "{task}");
        }
    }

    #[test]
    fn budget_guard_refuses_large_enumerations() {
        let err = exhaustive_check(&TaskId::BucketSort.spec(), 12).unwrap_err();
        assert!(matches!(err, TaskError::BudgetExceeded { .. }));
    }

    #[test]
    fn arithmetic_matches_bigint_on_random_instances() {
        let mut rng = stream(5, "task-check");
        for task in [TaskId::BinaryAddition, TaskId::BinaryMultiplication, TaskId::ComputeSqrt] {
            let report = arithmetic_spot_check(task, 500, 64, &mut rng).unwrap();
            assert!(report.passed(), "{task}: {report:?}");
        }
    }

    #[test]
    fn uniform_guesser_matches_declared_baseline() {
        let mut rng = stream(6, "task-baseline");
        for task in [TaskId::ReverseString, TaskId::BucketSort, TaskId::SolveEquation] {
            let spec = task.spec();
            let acc = uniform_guess_accuracy(&spec, 4000, (spec.min_length, 20), &mut rng).unwrap();
            assert!(
                (acc - spec.random_baseline).abs() < 0.02,
                "{task}: guesser {acc} vs declared {}",
                spec.random_baseline
            );
        }
    }
}
