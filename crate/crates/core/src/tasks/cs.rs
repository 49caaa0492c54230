//! Context-sensitive tasks: a finite-state automaton plus a bounded tape.

use super::bits::{add_bits, isqrt_bits, mul_bits};
use super::{TaskError, TaskId};
use rand::Rng;

/// Placeholder token in Missing Duplicate inputs.
const HOLE: u32 = 2;
/// Operand separator ('+' or '·' depending on the task).
const SEPARATOR: u32 = 2;

/// Input is `x · x` with exactly one slot replaced by the placeholder; the
/// label is the replaced token, recovered from the mirror slot.
pub fn missing_duplicate_label(input: &[u32]) -> Result<u32, TaskError> {
    let malformed = |reason: String| TaskError::MalformedInput { task: "missing_duplicate", reason };
    if input.len() % 2 != 0 {
        return Err(malformed(format!("odd input length {}", input.len())));
    }
    let half = input.len() / 2;
    let holes: Vec<usize> = input.iter().enumerate().filter(|(_, &t)| t == HOLE).map(|(i, _)| i).collect();
    if holes.len() != 1 {
        return Err(malformed(format!("expected exactly one placeholder, found {}", holes.len())));
    }
    let pos = holes[0];
    let mirror = if pos < half { pos + half } else { pos - half };
    for i in 0..half {
        if i != pos % half && input[i] != input[i + half] {
            return Err(malformed(format!("halves disagree at {i}")));
        }
    }
    Ok(input[mirror])
}

pub fn gen_missing_duplicate(len: usize, rng: &mut impl Rng) -> Vec<u32> {
    debug_assert!(len >= 2 && len % 2 == 0);
    let half = len / 2;
    let x: Vec<u32> = (0..half).map(|_| rng.random_range(0..2u32)).collect();
    let mut input = x.clone();
    input.extend_from_slice(&x);
    input[rng.random_range(0..len)] = HOLE;
    input
}

/// Tokens at odd positions (1-based: 1, 3, 5, ...) first, then the rest.
pub fn odds_first(input: &[u32]) -> Vec<u32> {
    let mut out: Vec<u32> = input.iter().step_by(2).copied().collect();
    out.extend(input.iter().skip(1).step_by(2));
    out
}

/// Fixed operand split for the binary arithmetic tasks: the first operand
/// gets `len / 2` digits, the separator one slot, the second the rest.
pub fn operand_split(len: usize) -> (usize, usize) {
    let a = len / 2;
    (a, len - 1 - a)
}

fn split_operands<'a>(task: &'static str, input: &'a [u32]) -> Result<(&'a [u32], &'a [u32]), TaskError> {
    let malformed = |reason: String| TaskError::MalformedInput { task, reason };
    let (a_len, _) = operand_split(input.len());
    if input.len() < 3 {
        return Err(malformed(format!("length {} below 3", input.len())));
    }
    if input[a_len] != SEPARATOR {
        return Err(malformed(format!("expected separator at {a_len}")));
    }
    let (a, rest) = input.split_at(a_len);
    let b = &rest[1..];
    if a.iter().chain(b.iter()).any(|&t| t > 1) {
        return Err(malformed("operand digits must be binary".into()));
    }
    Ok((a, b))
}

/// MSB-first sum, zero-padded to `len/2 + 1` digits.
pub fn binary_addition(input: &[u32]) -> Result<Vec<u32>, TaskError> {
    let (a, b) = split_operands("binary_addition", input)?;
    Ok(add_bits(a, b, a.len() + 1))
}

/// MSB-first product, zero-padded to the sum of the operand lengths.
pub fn binary_multiplication(input: &[u32]) -> Result<Vec<u32>, TaskError> {
    let (a, b) = split_operands("binary_multiplication", input)?;
    Ok(mul_bits(a, b, a.len() + b.len()))
}

/// floor(sqrt(n)) of the MSB-first input, in ceil(len/2) digits.
pub fn compute_sqrt(input: &[u32]) -> Vec<u32> {
    isqrt_bits(input)
}

pub fn gen_binary_pair(task: TaskId, len: usize, rng: &mut impl Rng) -> Vec<u32> {
    debug_assert!(len >= 3);
    debug_assert!(matches!(task, TaskId::BinaryAddition | TaskId::BinaryMultiplication));
    let (a_len, b_len) = operand_split(len);
    let mut out: Vec<u32> = (0..a_len).map(|_| rng.random_range(0..2u32)).collect();
    out.push(SEPARATOR);
    out.extend((0..b_len).map(|_| rng.random_range(0..2u32)));
    out
}
