//! Deterministic context-free tasks: a finite-state automaton plus a stack.

use super::regular::{OP_ADD, OP_MUL, OP_SUB};
use super::TaskError;
use rand::Rng;

// Stack Manipulation vocabulary: stack symbols then single-token actions.
const SYM_A: u32 = 0;
const SYM_B: u32 = 1;
const PUSH_A: u32 = 2;
const PUSH_B: u32 = 3;
const POP: u32 = 4;
/// Output-side filler class for slots past the final stack size.
pub const STACK_EMPTY_OUT: u32 = 2;

// Bracketed modular arithmetic adds brackets to the simple vocabulary;
// Solve Equation adds the unknown and the equals sign.
const LPAREN: u32 = 8;
const RPAREN: u32 = 9;
const UNKNOWN: u32 = 10;
const EQUALS: u32 = 11;

/// Input is a binary string (the initial stack, bottom to top) followed by
/// actions {PUSH a, PUSH b, POP}; POP on an empty stack is a no-op. Output is
/// the final stack bottom to top, filled to the input length with the empty
/// class.
pub fn run_stack(input: &[u32]) -> Result<Vec<u32>, TaskError> {
    let boundary = input.iter().position(|&t| t > SYM_B).unwrap_or(input.len());
    let (stack_part, actions) = input.split_at(boundary);
    let mut stack: Vec<u32> = stack_part.to_vec();
    for &a in actions {
        match a {
            PUSH_A => stack.push(SYM_A),
            PUSH_B => stack.push(SYM_B),
            POP => {
                stack.pop();
            }
            _ => {
                return Err(TaskError::MalformedInput {
                    task: "stack_manipulation",
                    reason: format!("stack symbol {a} after the first action"),
                })
            }
        }
    }
    let mut out = stack;
    out.resize(input.len(), STACK_EMPTY_OUT);
    Ok(out)
}

pub fn gen_stack(len: usize, rng: &mut impl Rng) -> Vec<u32> {
    let stack_len = rng.random_range(1..=len);
    let mut out: Vec<u32> = (0..stack_len).map(|_| rng.random_range(0..2u32)).collect();
    out.extend((stack_len..len).map(|_| rng.random_range(2..5u32)));
    out
}

/// Expression grammar over Z5 with balanced brackets:
/// `E -> digit | - E | ( E op E )`, every token length >= 1 is reachable.
/// Recursive-descent evaluation; this parser is independent of the
/// tree-building generator.
pub fn eval_modular_tree(input: &[u32]) -> Result<u32, TaskError> {
    let (value, rest) = parse_expr(input, 0)?;
    if rest != input.len() {
        return Err(malformed_tree(format!("trailing tokens at {rest}")));
    }
    Ok(value)
}

fn malformed_tree(reason: String) -> TaskError {
    TaskError::MalformedInput { task: "modular_arithmetic", reason }
}

fn parse_expr(toks: &[u32], at: usize) -> Result<(u32, usize), TaskError> {
    match toks.get(at) {
        Some(&d) if d < 5 => Ok((d, at + 1)),
        Some(&OP_SUB) => {
            let (v, rest) = parse_expr(toks, at + 1)?;
            Ok(((5 - v) % 5, rest))
        }
        Some(&LPAREN) => {
            let (lhs, after_lhs) = parse_expr(toks, at + 1)?;
            let op = *toks.get(after_lhs).ok_or_else(|| malformed_tree("expression ends at operator".into()))?;
            if !(OP_ADD..=OP_MUL).contains(&op) {
                return Err(malformed_tree(format!("expected operator at {after_lhs}")));
            }
            let (rhs, after_rhs) = parse_expr(toks, after_lhs + 1)?;
            if toks.get(after_rhs) != Some(&RPAREN) {
                return Err(malformed_tree(format!("unbalanced bracket at {after_rhs}")));
            }
            let v = match op {
                OP_ADD => (lhs + rhs) % 5,
                OP_SUB => (5 + lhs - rhs) % 5,
                _ => (lhs * rhs) % 5,
            };
            Ok((v, after_rhs + 1))
        }
        Some(&t) => Err(malformed_tree(format!("unexpected token {t} at {at}"))),
        None => Err(malformed_tree("empty expression".into())),
    }
}

/// Random expression tree with an exact token count.
pub fn gen_modular_tree(len: usize, rng: &mut impl Rng) -> Vec<u32> {
    let mut out = Vec::with_capacity(len);
    emit_tree(len, rng, &mut out);
    out
}

fn emit_tree(len: usize, rng: &mut impl Rng, out: &mut Vec<u32>) {
    if len == 1 {
        out.push(rng.random_range(0..5u32));
        return;
    }
    // Binary nodes need len >= 5: brackets + operator + two subtrees.
    let can_binary = len >= 5;
    if can_binary && rng.random_range(0..100) < 65 {
        let left = rng.random_range(1..=len - 4);
        out.push(LPAREN);
        emit_tree(left, rng, out);
        out.push(rng.random_range(5..8u32));
        emit_tree(len - 3 - left, rng, out);
        out.push(RPAREN);
    } else {
        out.push(OP_SUB);
        emit_tree(len - 1, rng, out);
    }
}

/// Equation `E' = v` where `E'` is a bracketed expression with one digit
/// replaced by the unknown. Output: the smallest z in Z5 satisfying it.
pub fn solve_equation(input: &[u32]) -> Result<u32, TaskError> {
    let malformed = |reason: String| TaskError::MalformedInput { task: "solve_equation", reason };
    if input.len() < 3 || input[input.len() - 2] != EQUALS {
        return Err(malformed("expected '= digit' suffix".into()));
    }
    let rhs = input[input.len() - 1];
    if rhs >= 5 {
        return Err(malformed(format!("right-hand side {rhs} is not a digit")));
    }
    let expr = &input[..input.len() - 2];
    let slots: Vec<usize> = expr.iter().enumerate().filter(|(_, &t)| t == UNKNOWN).map(|(i, _)| i).collect();
    if slots.len() != 1 {
        return Err(malformed(format!("expected exactly one unknown, found {}", slots.len())));
    }
    let mut candidate = expr.to_vec();
    for z in 0..5u32 {
        candidate[slots[0]] = z;
        if eval_modular_tree(&candidate)? == rhs {
            return Ok(z);
        }
    }
    Err(malformed("no value of the unknown satisfies the equation".into()))
}

pub fn gen_solve_equation(len: usize, rng: &mut impl Rng) -> Vec<u32> {
    let mut expr = gen_modular_tree(len - 2, rng);
    let value = eval_modular_tree(&expr).expect("generated trees are well formed");
    let digit_slots: Vec<usize> =
        expr.iter().enumerate().filter(|(_, &t)| t < 5).map(|(i, _)| i).collect();
    let slot = digit_slots[rng.random_range(0..digit_slots.len())];
    expr[slot] = UNKNOWN;
    expr.push(EQUALS);
    expr.push(value);
    expr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn stack_runs_actions() {
        // stack [a, b], then PUSH a, POP, POP -> [a], filled with empty.
        let out = run_stack(&[SYM_A, SYM_B, PUSH_A, POP, POP]).unwrap();
        assert_eq!(out, vec![SYM_A, STACK_EMPTY_OUT, STACK_EMPTY_OUT, STACK_EMPTY_OUT, STACK_EMPTY_OUT]);
        // POP on empty is a no-op.
        let out = run_stack(&[SYM_B, POP, POP, PUSH_B]).unwrap();
        assert_eq!(out, vec![SYM_B, STACK_EMPTY_OUT, STACK_EMPTY_OUT, STACK_EMPTY_OUT]);
        assert!(run_stack(&[PUSH_A, SYM_A]).is_err());
    }

    #[test]
    fn tree_evaluation_and_bracket_errors() {
        // (2 * (3 + 4)) = 14 = 4 mod 5.
        let e = [LPAREN, 2, OP_MUL, LPAREN, 3, OP_ADD, 4, RPAREN, RPAREN];
        assert_eq!(eval_modular_tree(&e).unwrap(), 4);
        // - ( 1 - 3 ) = -(−2) = 2 mod 5.
        let e = [OP_SUB, LPAREN, 1, OP_SUB, 3, RPAREN];
        assert_eq!(eval_modular_tree(&e).unwrap(), 2);
        assert!(eval_modular_tree(&[LPAREN, 1, OP_ADD, 2]).is_err());
        assert!(eval_modular_tree(&[1, 2]).is_err());
    }

    #[test]
    fn generated_trees_hit_every_length() {
        let mut rng = stream(1, "dcf-tree");
        for len in 1..=40 {
            for _ in 0..5 {
                let e = gen_modular_tree(len, &mut rng);
                assert_eq!(e.len(), len);
                eval_modular_tree(&e).unwrap();
            }
        }
    }

    #[test]
    fn equation_solution_is_smallest_satisfying() {
        // z = 3 directly.
        assert_eq!(solve_equation(&[UNKNOWN, EQUALS, 3]).unwrap(), 3);
        // (z * 0) = 0: every z works, smallest is 0.
        let e = [LPAREN, UNKNOWN, OP_MUL, 0, RPAREN, EQUALS, 0];
        assert_eq!(solve_equation(&e).unwrap(), 0);
        // (z + 1) = 0 -> z = 4.
        let e = [LPAREN, UNKNOWN, OP_ADD, 1, RPAREN, EQUALS, 0];
        assert_eq!(solve_equation(&e).unwrap(), 4);
    }

    #[test]
    fn generated_equations_are_solvable() {
        let mut rng = stream(2, "dcf-eq");
        for len in 3..=30 {
            let e = gen_solve_equation(len, &mut rng);
            assert_eq!(e.len(), len);
            solve_equation(&e).unwrap();
        }
    }
}
