//! The 15 algorithmic reasoning tasks, grouped by the automaton class that
//! solves them: regular (R), deterministic context-free (DCF), and
//! context-sensitive (CS). Each task has a generator (uniform over valid
//! inputs of a length) and a pure brute-force oracle; targets always come
//! from the oracle.
//!
//! Token-id convention: each task's input vocabulary maps to contiguous ids
//! from 0, and one reserved PAD token (id = `input_vocab`) marks the padded
//! answer slots fed to the model.

mod bits;
mod cs;
mod dcf;
mod regular;

pub mod check;



use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("{task}: length {requested} below task minimum {minimum}")]
    InvalidLength { task: &'static str, requested: usize, minimum: usize },
    #[error("{task}: malformed input: {reason}")]
    MalformedInput { task: &'static str, reason: String },
    #[error("exhaustive check over {instances} instances exceeds the 2^20 budget")]
    BudgetExceeded { instances: u64 },
    #[error("unknown task {0:?}")]
    UnknownTask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChomskyLevel {
    Regular,
    DeterministicContextFree,
    ContextSensitive,
}

impl ChomskyLevel {
    pub fn tag(self) -> &'static str {
        match self {
            ChomskyLevel::Regular => "R",
            ChomskyLevel::DeterministicContextFree => "DCF",
            ChomskyLevel::ContextSensitive => "CS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskId {
    EvenPairs,
    ModularArithmeticSimple,
    ParityCheck,
    CycleNavigation,
    StackManipulation,
    ReverseString,
    ModularArithmetic,
    SolveEquation,
    DuplicateString,
    MissingDuplicate,
    OddsFirst,
    BinaryAddition,
    BinaryMultiplication,
    ComputeSqrt,
    BucketSort,
}

impl TaskId {
    pub const ALL: [TaskId; 15] = [
        TaskId::EvenPairs,
        TaskId::ModularArithmeticSimple,
        TaskId::ParityCheck,
        TaskId::CycleNavigation,
        TaskId::StackManipulation,
        TaskId::ReverseString,
        TaskId::ModularArithmetic,
        TaskId::SolveEquation,
        TaskId::DuplicateString,
        TaskId::MissingDuplicate,
        TaskId::OddsFirst,
        TaskId::BinaryAddition,
        TaskId::BinaryMultiplication,
        TaskId::ComputeSqrt,
        TaskId::BucketSort,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::EvenPairs => "even_pairs",
            TaskId::ModularArithmeticSimple => "modular_arithmetic_simple",
            TaskId::ParityCheck => "parity_check",
            TaskId::CycleNavigation => "cycle_navigation",
            TaskId::StackManipulation => "stack_manipulation",
            TaskId::ReverseString => "reverse_string",
            TaskId::ModularArithmetic => "modular_arithmetic",
            TaskId::SolveEquation => "solve_equation",
            TaskId::DuplicateString => "duplicate_string",
            TaskId::MissingDuplicate => "missing_duplicate",
            TaskId::OddsFirst => "odds_first",
            TaskId::BinaryAddition => "binary_addition",
            TaskId::BinaryMultiplication => "binary_multiplication",
            TaskId::ComputeSqrt => "compute_sqrt",
            TaskId::BucketSort => "bucket_sort",
        }
    }

    pub fn parse(s: &str) -> Result<Self, TaskError> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| TaskError::UnknownTask(s.to_string()))
    }

    pub fn spec(self) -> TaskSpec {
        TaskSpec::of(self)
    }
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Static task metadata plus the output-length function `f`.
#[derive(Debug, Clone, Copy)]
pub struct TaskSpec {
    pub id: TaskId,
    pub level: ChomskyLevel,
    pub input_vocab: usize,
    pub output_vocab: usize,
    /// Accuracy of a uniform random guesser (1 / output_vocab).
    pub random_baseline: f64,
    pub min_length: usize,
}

impl TaskSpec {
    pub fn of(id: TaskId) -> Self {
        use ChomskyLevel::*;
        use TaskId::*;
        let (level, input_vocab, output_vocab, min_length) = match id {
            EvenPairs => (Regular, 2, 2, 1),
            ModularArithmeticSimple => (Regular, 8, 5, 1),
            ParityCheck => (Regular, 2, 2, 1),
            CycleNavigation => (Regular, 3, 5, 1),
            StackManipulation => (DeterministicContextFree, 5, 3, 1),
            ReverseString => (DeterministicContextFree, 2, 2, 1),
            ModularArithmetic => (DeterministicContextFree, 10, 5, 1),
            SolveEquation => (DeterministicContextFree, 12, 5, 3),
            DuplicateString => (ContextSensitive, 2, 2, 1),
            MissingDuplicate => (ContextSensitive, 3, 2, 2),
            OddsFirst => (ContextSensitive, 2, 2, 1),
            BinaryAddition => (ContextSensitive, 3, 2, 3),
            BinaryMultiplication => (ContextSensitive, 3, 2, 3),
            ComputeSqrt => (ContextSensitive, 2, 2, 1),
            BucketSort => (ContextSensitive, 5, 5, 1),
        };
        TaskSpec {
            id,
            level,
            input_vocab,
            output_vocab,
            random_baseline: 1.0 / output_vocab as f64,
            min_length,
        }
    }

    /// PAD token id for padded answer slots (appended after the input vocab).
    pub fn pad_token(&self) -> u32 {
        self.input_vocab as u32
    }

    /// Some tasks only admit certain lengths; the nearest valid length at or
    /// below the request (Missing Duplicate needs an even input).
    pub fn effective_length(&self, length: usize) -> usize {
        match self.id {
            TaskId::MissingDuplicate => (length / 2).max(1) * 2,
            _ => length,
        }
    }

    /// Output length `f(len)` for a valid input length.
    pub fn output_length(&self, length: usize) -> usize {
        match self.id {
            TaskId::EvenPairs
            | TaskId::ModularArithmeticSimple
            | TaskId::ParityCheck
            | TaskId::CycleNavigation
            | TaskId::SolveEquation
            | TaskId::ModularArithmetic
            | TaskId::MissingDuplicate => 1,
            TaskId::StackManipulation | TaskId::ReverseString | TaskId::OddsFirst | TaskId::BucketSort => length,
            TaskId::DuplicateString => 2 * length,
            TaskId::BinaryAddition => length / 2 + 1,
            TaskId::BinaryMultiplication => length - 1,
            TaskId::ComputeSqrt => length.div_ceil(2),
        }
    }

    /// Model input width for this length: input plus padded answer slots.
    pub fn padded_length(&self, length: usize) -> usize {
        let l = self.effective_length(length);
        l + self.output_length(l)
    }
}

/// One generated instance; `oracle(task, input) == target` always holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskInstance {
    pub task: TaskId,
    pub input: Vec<u32>,
    pub target: Vec<u32>,
}

impl TaskInstance {
    pub fn padded_length(&self) -> usize {
        self.input.len() + self.target.len()
    }
}

/// Sample a uniform instance of the requested length (adjusted to the task's
/// length granularity) and label it with the oracle.
pub fn sample_instance(
    spec: &TaskSpec,
    length: usize,
    rng: &mut impl Rng,
) -> Result<TaskInstance, TaskError> {
    if length < spec.min_length {
        return Err(TaskError::InvalidLength {
            task: spec.id.name(),
            requested: length,
            minimum: spec.min_length,
        });
    }
    let len = spec.effective_length(length);
    let input = match spec.id {
        TaskId::EvenPairs | TaskId::ParityCheck | TaskId::ReverseString | TaskId::DuplicateString | TaskId::OddsFirst | TaskId::ComputeSqrt => {
            (0..len).map(|_| rng.random_range(0..2u32)).collect()
        }
        TaskId::BucketSort => (0..len).map(|_| rng.random_range(0..5u32)).collect(),
        TaskId::CycleNavigation => (0..len).map(|_| rng.random_range(0..3u32)).collect(),
        TaskId::ModularArithmeticSimple => regular::gen_modular_simple(len, rng),
        TaskId::StackManipulation => dcf::gen_stack(len, rng),
        TaskId::ModularArithmetic => dcf::gen_modular_tree(len, rng),
        TaskId::SolveEquation => dcf::gen_solve_equation(len, rng),
        TaskId::MissingDuplicate => cs::gen_missing_duplicate(len, rng),
        TaskId::BinaryAddition | TaskId::BinaryMultiplication => cs::gen_binary_pair(spec.id, len, rng),
    };
    let target = oracle(spec, &input)?;
    debug_assert_eq!(target.len(), spec.output_length(len));
    Ok(TaskInstance { task: spec.id, input, target })
}

/// Ground-truth output for a valid input; deterministic and pure.
pub fn oracle(spec: &TaskSpec, input: &[u32]) -> Result<Vec<u32>, TaskError> {
    if input.len() < spec.min_length {
        return Err(TaskError::InvalidLength {
            task: spec.id.name(),
            requested: input.len(),
            minimum: spec.min_length,
        });
    }
    if let Some(&bad) = input.iter().find(|&&t| t as usize >= spec.input_vocab) {
        return Err(TaskError::MalformedInput {
            task: spec.id.name(),
            reason: format!("token id {bad} outside vocabulary of {}", spec.input_vocab),
        });
    }
    match spec.id {
        TaskId::EvenPairs => Ok(vec![regular::even_pairs_label(input)]),
        TaskId::ModularArithmeticSimple => regular::eval_modular_simple(input).map(|v| vec![v]),
        TaskId::ParityCheck => Ok(vec![regular::parity_label(input)]),
        TaskId::CycleNavigation => Ok(vec![regular::cycle_position(input)]),
        TaskId::StackManipulation => dcf::run_stack(input),
        TaskId::ReverseString => Ok(input.iter().rev().copied().collect()),
        TaskId::ModularArithmetic => dcf::eval_modular_tree(input).map(|v| vec![v]),
        TaskId::SolveEquation => dcf::solve_equation(input).map(|v| vec![v]),
        TaskId::DuplicateString => {
            let mut out = input.to_vec();
            out.extend_from_slice(input);
            Ok(out)
        }
        TaskId::MissingDuplicate => cs::missing_duplicate_label(input).map(|v| vec![v]),
        TaskId::OddsFirst => Ok(cs::odds_first(input)),
        TaskId::BinaryAddition => cs::binary_addition(input),
        TaskId::BinaryMultiplication => cs::binary_multiplication(input),
        TaskId::ComputeSqrt => Ok(cs::compute_sqrt(input)),
        TaskId::BucketSort => {
            let mut out = input.to_vec();
            out.sort_unstable();
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn reverse_example() {
        // a b b a b reversed is b a b b a.
        let spec = TaskId::ReverseString.spec();
        let y = oracle(&spec, &[0, 1, 1, 0, 1]).unwrap();
        assert_eq!(y, vec![1, 0, 1, 1, 0]);
    }

    #[test]
    fn parity_example_two_bs_is_even() {
        let spec = TaskId::ParityCheck.spec();
        let y = oracle(&spec, &[0, 1, 1, 0, 0]).unwrap();
        assert_eq!(y, vec![0]); // even class
    }

    #[test]
    fn bucket_sort_example() {
        let spec = TaskId::BucketSort.spec();
        let y = oracle(&spec, &[3, 1, 4, 1, 0]).unwrap();
        assert_eq!(y, vec![0, 1, 1, 3, 4]);
    }

    #[test]
    fn even_pairs_equal_endpoints_is_even() {
        // a a b b a: first == last, so the ab/ba pair count (2) is even.
        let spec = TaskId::EvenPairs.spec();
        let y = oracle(&spec, &[0, 0, 1, 1, 0]).unwrap();
        assert_eq!(y, vec![1]);
    }

    #[test]
    fn binary_addition_example() {
        // 101 + 011 = 1000; split for length 7 is 3+3 digits.
        let spec = TaskId::BinaryAddition.spec();
        let y = oracle(&spec, &[1, 0, 1, 2, 0, 1, 1]).unwrap();
        assert_eq!(y, vec![1, 0, 0, 0]);
    }

    #[test]
    fn compute_sqrt_example() {
        // 1001 (=9) -> 11 (=3).
        let spec = TaskId::ComputeSqrt.spec();
        let y = oracle(&spec, &[1, 0, 0, 1]).unwrap();
        assert_eq!(y, vec![1, 1]);
    }

    #[test]
    fn duplicate_string_example() {
        let spec = TaskId::DuplicateString.spec();
        let y = oracle(&spec, &[1, 0, 0]).unwrap();
        assert_eq!(y, vec![1, 0, 0, 1, 0, 0]);
    }

    #[test]
    fn sampling_is_deterministic_and_oracle_consistent() {
        for id in TaskId::ALL {
            let spec = id.spec();
            let len = spec.min_length.max(6);
            let a = sample_instance(&spec, len, &mut stream(11, "task-unit")).unwrap();
            let b = sample_instance(&spec, len, &mut stream(11, "task-unit")).unwrap();
            assert_eq!(a, b, "{id}");
            assert_eq!(oracle(&spec, &a.input).unwrap(), a.target, "{id}");
            assert_eq!(a.target.len(), spec.output_length(spec.effective_length(len)), "{id}");
            assert!(a.input.iter().all(|&t| (t as usize) < spec.input_vocab), "{id}");
            assert!(a.target.iter().all(|&t| (t as usize) < spec.output_vocab), "{id}");
        }
    }

    #[test]
    fn length_below_minimum_rejected() {
        let spec = TaskId::BinaryAddition.spec();
        let err = sample_instance(&spec, 2, &mut stream(0, "t")).unwrap_err();
        assert!(matches!(err, TaskError::InvalidLength { .. }));
    }

    #[test]
    fn output_lengths_match_f_for_a_range() {
        for id in TaskId::ALL {
            let spec = id.spec();
            for len in spec.min_length..spec.min_length + 12 {
                let inst = sample_instance(&spec, len, &mut stream(len as u64, "task-f")).unwrap();
                let eff = spec.effective_length(len);
                assert_eq!(inst.input.len(), eff, "{id} len {len}");
                assert_eq!(inst.target.len(), spec.output_length(eff), "{id} len {len}");
                assert_eq!(inst.padded_length(), spec.padded_length(len), "{id} len {len}");
            }
        }
    }

    #[test]
    fn baselines_match_table_values() {
        use TaskId::*;
        for id in TaskId::ALL {
            let spec = id.spec();
            let expected = match id {
                ModularArithmeticSimple | CycleNavigation | BucketSort | ModularArithmetic | SolveEquation => 0.2,
                StackManipulation => 1.0 / 3.0,
                _ => 0.5,
            };
            assert!((spec.random_baseline - expected).abs() < 1e-12, "{id}");
        }
    }
}
