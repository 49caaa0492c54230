//! Low-level compute kernels shared by the forward and backward passes.
//!
//! The matrix kernels accumulate 4-row x 16-column output tiles in registers
//! across the whole inner dimension and write each output element once, so
//! output traffic is O(m*n) rather than O(m*n*k).
//!
//! Everything here is deterministic under parallelism: work splits into a
//! fixed small number of consecutive-row blocks, each output element is
//! written by exactly one task, and the accumulation order for any element
//! is independent of the split, so results are bit-identical regardless of
//! thread scheduling.

use super::Real;
use rayon::prelude::*;

/// Below this many multiply-accumulates a kernel stays single-threaded;
/// fork-join overhead beats the win on small matrices.
const PAR_THRESHOLD: usize = 1 << 19;

const COL_TILE: usize = 16;

/// Split `out` into at most 2 consecutive-unit blocks per thread and run
/// `f(first_unit_index, block)` on each. `out.len()` must equal
/// `unit * count` for some count.
fn par_blocks<E: Real>(out: &mut [E], unit: usize, parallel: bool, f: impl Fn(usize, &mut [E]) + Sync) {
    let count = out.len() / unit.max(1);
    if !parallel || count < 2 {
        f(0, out);
        return;
    }
    let block = count.div_ceil(2 * rayon::current_num_threads()).max(1);
    out.par_chunks_mut(block * unit)
        .enumerate()
        .for_each(|(bi, slab)| f(bi * block, slab));
}

/// C = A·B (or C += A·B with `acc`), A: m×k, B: k×n, row-major.
pub fn mm_nn<E: Real>(a: &[E], b: &[E], m: usize, k: usize, n: usize, out: &mut [E], acc: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    par_blocks(out, n, m * k * n >= PAR_THRESHOLD, |first_row, rows| {
        nn_rows(a, b, k, n, rows, first_row, acc);
    });
}

/// C = A·Bᵀ, A: m×k, B: n×k (contiguous-row dot products).
pub fn mm_nt<E: Real>(a: &[E], b: &[E], m: usize, k: usize, n: usize, out: &mut [E], acc: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    par_blocks(out, n, m * k * n >= PAR_THRESHOLD, |first_row, rows| {
        nt_rows(a, b, k, n, rows, first_row, acc);
    });
}

/// C = Aᵀ·B, A: k×m, B: k×n.
pub fn mm_tn<E: Real>(a: &[E], b: &[E], m: usize, k: usize, n: usize, out: &mut [E], acc: bool) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    par_blocks(out, n, m * k * n >= PAR_THRESHOLD, |first_row, rows| {
        tn_rows(a, b, m, k, n, rows, first_row, acc);
    });
}

/// Batched C[g] = A[g]·B[g] with optional transposed B, `batch` independent
/// row-major matrices laid out back to back.
#[allow(clippy::too_many_arguments)]
pub fn bmm<E: Real>(
    a: &[E],
    b: &[E],
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    trans_b: bool,
    out: &mut [E],
    acc: bool,
) {
    if batch == 1 {
        // The plain 2D case parallelizes over output rows instead.
        if trans_b {
            mm_nt(a, b, m, k, n, out, acc);
        } else {
            mm_nn(a, b, m, k, n, out, acc);
        }
        return;
    }
    let (asz, bsz, csz) = (m * k, k * n, m * n);
    let parallel = batch * m * k * n >= PAR_THRESHOLD;
    par_blocks(out, csz, parallel, |first, slabs| {
        for (g_local, cslab) in slabs.chunks_mut(csz).enumerate() {
            let g = first + g_local;
            let asl = &a[g * asz..(g + 1) * asz];
            let bsl = &b[g * bsz..(g + 1) * bsz];
            if trans_b {
                nt_rows(asl, bsl, k, n, cslab, 0, acc);
            } else {
                nn_rows(asl, bsl, k, n, cslab, 0, acc);
            }
        }
    });
}

/// Batched Aᵀ·B over matching leading batch dims, used in backward passes.
pub fn bmm_tn<E: Real>(
    a: &[E],
    b: &[E],
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    out: &mut [E],
    acc: bool,
) {
    if batch == 1 {
        mm_tn(a, b, m, k, n, out, acc);
        return;
    }
    let (asz, bsz, csz) = (k * m, k * n, m * n);
    let parallel = batch * m * k * n >= PAR_THRESHOLD;
    par_blocks(out, csz, parallel, |first, slabs| {
        for (g_local, cslab) in slabs.chunks_mut(csz).enumerate() {
            let g = first + g_local;
            tn_rows(&a[g * asz..(g + 1) * asz], &b[g * bsz..(g + 1) * bsz], m, k, n, cslab, 0, acc);
        }
    });
}

/// Compute rows `[first_row, first_row + rows)` of C = A·B into `c`
/// (`rows * n` elements), 4 rows at a time with 16-wide register tiles.
fn nn_rows<E: Real>(a: &[E], b: &[E], k: usize, n: usize, c: &mut [E], first_row: usize, acc: bool) {
    let rows = c.len() / n;
    let mut r = 0;
    while r + 4 <= rows {
        let i = first_row + r;
        let (c0, rest) = c[r * n..(r + 4) * n].split_at_mut(n);
        let (c1, rest) = rest.split_at_mut(n);
        let (c2, c3) = rest.split_at_mut(n);
        let a0 = &a[i * k..(i + 1) * k];
        let a1 = &a[(i + 1) * k..(i + 2) * k];
        let a2 = &a[(i + 2) * k..(i + 3) * k];
        let a3 = &a[(i + 3) * k..(i + 4) * k];
        let mut j0 = 0;
        while j0 + COL_TILE <= n {
            let mut t0 = [E::ZERO; COL_TILE];
            let mut t1 = [E::ZERO; COL_TILE];
            let mut t2 = [E::ZERO; COL_TILE];
            let mut t3 = [E::ZERO; COL_TILE];
            if acc {
                t0.copy_from_slice(&c0[j0..j0 + COL_TILE]);
                t1.copy_from_slice(&c1[j0..j0 + COL_TILE]);
                t2.copy_from_slice(&c2[j0..j0 + COL_TILE]);
                t3.copy_from_slice(&c3[j0..j0 + COL_TILE]);
            }
            for p in 0..k {
                let brow = &b[p * n + j0..p * n + j0 + COL_TILE];
                let (v0, v1, v2, v3) = (a0[p], a1[p], a2[p], a3[p]);
                for (t, &bv) in brow.iter().enumerate() {
                    t0[t] += v0 * bv;
                    t1[t] += v1 * bv;
                    t2[t] += v2 * bv;
                    t3[t] += v3 * bv;
                }
            }
            c0[j0..j0 + COL_TILE].copy_from_slice(&t0);
            c1[j0..j0 + COL_TILE].copy_from_slice(&t1);
            c2[j0..j0 + COL_TILE].copy_from_slice(&t2);
            c3[j0..j0 + COL_TILE].copy_from_slice(&t3);
            j0 += COL_TILE;
        }
        for j in j0..n {
            let mut s0 = if acc { c0[j] } else { E::ZERO };
            let mut s1 = if acc { c1[j] } else { E::ZERO };
            let mut s2 = if acc { c2[j] } else { E::ZERO };
            let mut s3 = if acc { c3[j] } else { E::ZERO };
            for p in 0..k {
                let bv = b[p * n + j];
                s0 += a0[p] * bv;
                s1 += a1[p] * bv;
                s2 += a2[p] * bv;
                s3 += a3[p] * bv;
            }
            c0[j] = s0;
            c1[j] = s1;
            c2[j] = s2;
            c3[j] = s3;
        }
        r += 4;
    }
    while r < rows {
        nn_row(&a[(first_row + r) * k..(first_row + r + 1) * k], b, k, n, &mut c[r * n..(r + 1) * n], acc);
        r += 1;
    }
}

fn nn_row<E: Real>(arow: &[E], b: &[E], k: usize, n: usize, crow: &mut [E], acc: bool) {
    let mut j0 = 0;
    while j0 + COL_TILE <= n {
        let mut tile = [E::ZERO; COL_TILE];
        if acc {
            tile.copy_from_slice(&crow[j0..j0 + COL_TILE]);
        }
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n + j0..p * n + j0 + COL_TILE];
            for (t, &bv) in brow.iter().enumerate() {
                tile[t] += av * bv;
            }
        }
        crow[j0..j0 + COL_TILE].copy_from_slice(&tile);
        j0 += COL_TILE;
    }
    for j in j0..n {
        let mut s = if acc { crow[j] } else { E::ZERO };
        for (p, &av) in arow.iter().enumerate() {
            s += av * b[p * n + j];
        }
        crow[j] = s;
    }
}

/// Rows of C = A·Bᵀ: dot products over the contiguous last axis.
fn nt_rows<E: Real>(a: &[E], b: &[E], k: usize, n: usize, c: &mut [E], first_row: usize, acc: bool) {
    for (r, crow) in c.chunks_mut(n).enumerate() {
        let arow = &a[(first_row + r) * k..(first_row + r + 1) * k];
        for (j, slot) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = E::ZERO;
            for (&av, &bv) in arow.iter().zip(brow.iter()) {
                s += av * bv;
            }
            if acc {
                *slot += s;
            } else {
                *slot = s;
            }
        }
    }
}

/// Rows of C = Aᵀ·B (A stored k×m): per-row 16-wide tiles accumulated over
/// the strided A column.
fn tn_rows<E: Real>(a: &[E], b: &[E], m: usize, k: usize, n: usize, c: &mut [E], first_row: usize, acc: bool) {
    for (r, crow) in c.chunks_mut(n).enumerate() {
        let i = first_row + r;
        let mut j0 = 0;
        while j0 + COL_TILE <= n {
            let mut tile = [E::ZERO; COL_TILE];
            if acc {
                tile.copy_from_slice(&crow[j0..j0 + COL_TILE]);
            }
            for p in 0..k {
                let av = a[p * m + i];
                let brow = &b[p * n + j0..p * n + j0 + COL_TILE];
                for (t, &bv) in brow.iter().enumerate() {
                    tile[t] += av * bv;
                }
            }
            crow[j0..j0 + COL_TILE].copy_from_slice(&tile);
            j0 += COL_TILE;
        }
        for j in j0..n {
            let mut s = if acc { crow[j] } else { E::ZERO };
            for p in 0..k {
                s += a[p * m + i] * b[p * n + j];
            }
            crow[j] = s;
        }
    }
}

/// Numpy-style broadcast of `small` onto `big`: shapes are right-aligned and
/// every `small` extent must be 1 or equal to the `big` extent.
pub fn broadcast_compatible(big: &[usize], small: &[usize]) -> bool {
    if small.len() > big.len() {
        return false;
    }
    let off = big.len() - small.len();
    small.iter().enumerate().all(|(i, &s)| s == 1 || s == big[off + i])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn ramp(len: usize, scale: f64) -> Vec<f64> {
        (0..len).map(|v| ((v * 2654435761usize % 1000) as f64 - 500.0) * scale).collect()
    }

    #[test]
    fn mm_variants_agree_with_naive() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3x2
        let mut c = vec![0.0; 4];
        mm_nn(&a, &b, 2, 3, 2, &mut c, false);
        assert_eq!(c, vec![58.0, 64.0, 139.0, 154.0]);

        // A·Bᵀ with B stored transposed must match.
        let bt = [7.0f64, 9.0, 11.0, 8.0, 10.0, 12.0]; // 2x3
        let mut c2 = vec![0.0; 4];
        mm_nt(&a, &bt, 2, 3, 2, &mut c2, false);
        assert_eq!(c2, c);

        // Aᵀ·B with A stored transposed must match.
        let at = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0]; // 3x2
        let mut c3 = vec![0.0; 4];
        mm_tn(&at, &b, 2, 3, 2, &mut c3, false);
        assert_eq!(c3, c);
    }

    #[test]
    fn tiled_paths_match_naive_at_odd_sizes() {
        // Sizes straddling the 4-row and 16-column tile boundaries.
        for &(m, k, n) in &[(1usize, 1usize, 1usize), (5, 7, 17), (9, 3, 33), (4, 16, 16), (13, 5, 19)] {
            let a = ramp(m * k, 0.01);
            let b = ramp(k * n, 0.02);
            let want = naive_nn(&a, &b, m, k, n);
            let mut got = vec![0.0; m * n];
            mm_nn(&a, &b, m, k, n, &mut got, false);
            for (x, y) in got.iter().zip(want.iter()) {
                assert!((x - y).abs() < 1e-9, "nn {m}x{k}x{n}");
            }
            // acc accumulates onto the existing buffer.
            let mut acc = want.clone();
            mm_nn(&a, &b, m, k, n, &mut acc, true);
            for (x, y) in acc.iter().zip(want.iter()) {
                assert!((x - 2.0 * y).abs() < 1e-9, "nn acc {m}x{k}x{n}");
            }

            // tn with A stored transposed must match.
            let mut at = vec![0.0; m * k];
            for i in 0..m {
                for p in 0..k {
                    at[p * m + i] = a[i * k + p];
                }
            }
            let mut got = vec![0.0; m * n];
            mm_tn(&at, &b, m, k, n, &mut got, false);
            for (x, y) in got.iter().zip(want.iter()) {
                assert!((x - y).abs() < 1e-9, "tn {m}x{k}x{n}");
            }
        }
    }

    #[test]
    fn identity_matmul_preserves() {
        let id = [1.0f32, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let a = [3.0f32, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0];
        let mut c = vec![0.0f32; 9];
        mm_nn(&id, &a, 3, 3, 3, &mut c, false);
        assert_eq!(c.as_slice(), a.as_slice());
    }

    #[test]
    fn batched_bmm_matches_per_matrix() {
        let a: Vec<f64> = (0..12).map(|v| v as f64).collect(); // 2 batches of 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5).collect(); // 2 batches of 3x2
        let mut whole = vec![0.0; 8];
        bmm(&a, &b, 2, 2, 3, 2, false, &mut whole, false);
        for g in 0..2 {
            let mut single = vec![0.0; 4];
            mm_nn(&a[g * 6..(g + 1) * 6], &b[g * 6..(g + 1) * 6], 2, 3, 2, &mut single, false);
            assert_eq!(&whole[g * 4..(g + 1) * 4], single.as_slice());
        }
    }

    #[test]
    fn parallel_split_is_bit_identical_to_serial() {
        // Large enough to cross the threshold; f32 would expose reordering.
        let (m, k, n) = (256usize, 64usize, 64usize);
        let a: Vec<f32> = (0..m * k).map(|v| ((v * 2654435761usize) as f32).sin()).collect();
        let b: Vec<f32> = (0..k * n).map(|v| ((v * 40503usize) as f32).cos()).collect();
        let mut par = vec![0.0f32; m * n];
        mm_nn(&a, &b, m, k, n, &mut par, false);
        let mut serial = vec![0.0f32; m * n];
        nn_rows(&a, &b, k, n, &mut serial, 0, false);
        for (x, y) in par.iter().zip(serial.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
