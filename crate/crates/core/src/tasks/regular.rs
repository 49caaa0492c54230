//! Regular-level tasks: solvable by a finite-state automaton.

use super::TaskError;
use rand::Rng;

// Token ids for the modular-arithmetic vocabularies: digits 0..=4 are
// themselves, then the operators.
pub(super) const OP_ADD: u32 = 5;
pub(super) const OP_SUB: u32 = 6;
pub(super) const OP_MUL: u32 = 7;

/// Label 1 when the number of "ab"/"ba" adjacent pairs is even (equivalently
/// the first and last tokens match), else 0. Counting route; the
/// endpoint-equality route lives in the check suite.
pub fn even_pairs_label(input: &[u32]) -> u32 {
    let flips = input.windows(2).filter(|w| w[0] != w[1]).count();
    u32::from(flips % 2 == 0)
}

/// Label 0 for an even number of `b` tokens, 1 for odd (fold route).
pub fn parity_label(input: &[u32]) -> u32 {
    input.iter().fold(0u32, |acc, &t| acc ^ (t & 1))
}

/// Final position on the 5-cycle after actions {0: stay, 1: +1, 2: -1}.
pub fn cycle_position(input: &[u32]) -> u32 {
    let mut pos = 0i64;
    for &a in input {
        pos += match a {
            1 => 1,
            2 => -1,
            _ => 0,
        };
    }
    pos.rem_euclid(5) as u32
}

/// Bracket-free expression over Z5 evaluated left to right (no operator
/// precedence). Odd lengths are `d (op d)*`; even lengths carry a leading
/// unary minus, evaluated as starting from 0: `-3+2` is `(0-3)+2`.
pub fn eval_modular_simple(input: &[u32]) -> Result<u32, TaskError> {
    let malformed = |reason: &str| TaskError::MalformedInput {
        task: "modular_arithmetic_simple",
        reason: reason.to_string(),
    };
    let mut toks = input.iter().copied().peekable();
    let mut value: i64;
    if input.len() % 2 == 0 {
        if toks.next() != Some(OP_SUB) {
            return Err(malformed("even-length expression must start with unary minus"));
        }
        let d = toks.next().filter(|&d| d < 5).ok_or_else(|| malformed("expected digit"))?;
        value = -(d as i64);
    } else {
        let d = toks.next().filter(|&d| d < 5).ok_or_else(|| malformed("expected digit"))?;
        value = d as i64;
    }
    while let Some(op) = toks.next() {
        let d = toks.next().filter(|&d| d < 5).ok_or_else(|| malformed("expected digit after operator"))? as i64;
        value = match op {
            OP_ADD => value + d,
            OP_SUB => value - d,
            OP_MUL => value * d,
            _ => return Err(malformed("expected operator")),
        };
        value = value.rem_euclid(5);
    }
    Ok(value.rem_euclid(5) as u32)
}

pub fn gen_modular_simple(len: usize, rng: &mut impl Rng) -> Vec<u32> {
    let mut out = Vec::with_capacity(len);
    let mut remaining = len;
    if len % 2 == 0 {
        out.push(OP_SUB);
        remaining -= 1;
    }
    out.push(rng.random_range(0..5u32));
    remaining -= 1;
    while remaining > 0 {
        out.push(rng.random_range(5..8u32));
        out.push(rng.random_range(0..5u32));
        remaining -= 2;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_arithmetic_left_to_right() {
        // 1 + 2 * 3 = (1+2)*3 = 9 = 4 mod 5.
        assert_eq!(eval_modular_simple(&[1, OP_ADD, 2, OP_MUL, 3]).unwrap(), 4);
        assert_eq!(eval_modular_simple(&[3]).unwrap(), 3);
        // -3 + 2 = 4 mod 5.
        assert_eq!(eval_modular_simple(&[OP_SUB, 3, OP_ADD, 2]).unwrap(), 4);
        assert!(eval_modular_simple(&[OP_ADD, 1]).is_err());
        assert!(eval_modular_simple(&[1, OP_ADD]).is_err());
    }

    #[test]
    fn cycle_wraps_both_ways() {
        assert_eq!(cycle_position(&[1, 1, 1, 1, 1, 1]), 1);
        assert_eq!(cycle_position(&[2]), 4);
        assert_eq!(cycle_position(&[0, 0]), 0);
    }
}
