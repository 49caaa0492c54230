//! Positional-encoding schemes and their randomized variants.
//!
//! A standard scheme encodes token slots `1..=n` directly. A randomized
//! scheme instead draws, once per batch, a uniformly random sorted subset
//! `i_1 < ... < i_n` of `{1..=L}` (with `L` much larger than any evaluation
//! length) and encodes slot `j` as position `i_j`. Only order information
//! survives, so positions seen at test time are never out-of-distribution.
//!
//! All six bases share one code path over a [`PositionAssignment`]; standard
//! schemes use the identity assignment `1..=n`, which also makes the
//! randomized variant with `L = n` collapse exactly onto the standard one.

use crate::nn::Real;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("invalid scheme string {0:?} (expected <base>[+rand][+unsorted])")]
    BadSchemeString(String),
    #[error("{op}: {message}")]
    InvalidArgument { op: &'static str, message: String },
}

/// The six base schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseEncoding {
    None,
    SinCos,
    Learned,
    Relative,
    Alibi,
    Rope,
}

impl BaseEncoding {
    pub const ALL: [BaseEncoding; 6] = [
        BaseEncoding::None,
        BaseEncoding::SinCos,
        BaseEncoding::Learned,
        BaseEncoding::Relative,
        BaseEncoding::Alibi,
        BaseEncoding::Rope,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaseEncoding::None => "none",
            BaseEncoding::SinCos => "sincos",
            BaseEncoding::Learned => "learned",
            BaseEncoding::Relative => "relative",
            BaseEncoding::Alibi => "alibi",
            BaseEncoding::Rope => "rope",
        }
    }

    /// Additive schemes touch the embeddings once before the first block;
    /// the others act inside every attention layer.
    pub fn is_additive(self) -> bool {
        matches!(self, BaseEncoding::None | BaseEncoding::SinCos | BaseEncoding::Learned)
    }
}

/// Scheme configuration: base x {standard, randomized}, the position budget
/// `L`, and the sorting toggle for the ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingScheme {
    pub base: BaseEncoding,
    pub randomized: bool,
    /// Ablation toggle; keeping the sampled subset but skipping the sort.
    pub sort_sampled: bool,
    pub d_model: usize,
    /// Maximum position `L`; the sampling support is `{1..=L}`.
    pub max_position: u32,
    /// Wavelength base of the sinusoidal family (and the RoPE frequencies).
    pub wave_base: f64,
}

impl EncodingScheme {
    pub fn new(base: BaseEncoding, randomized: bool, d_model: usize, max_position: u32) -> Self {
        Self { base, randomized, sort_sampled: true, d_model, max_position, wave_base: 10_000.0 }
    }

    /// Parse `<base>[+rand][+unsorted]`, e.g. `relative+rand` or
    /// `sincos+rand+unsorted`. `+unsorted` requires `+rand`.
    pub fn parse(s: &str, d_model: usize, max_position: u32) -> Result<Self, EncodingError> {
        let mut parts = s.split('+');
        let base = match parts.next().unwrap_or("") {
            "none" => BaseEncoding::None,
            "sincos" => BaseEncoding::SinCos,
            "learned" => BaseEncoding::Learned,
            "relative" => BaseEncoding::Relative,
            "alibi" => BaseEncoding::Alibi,
            "rope" => BaseEncoding::Rope,
            _ => return Err(EncodingError::BadSchemeString(s.to_string())),
        };
        let mut scheme = Self::new(base, false, d_model, max_position);
        for part in parts {
            match part {
                "rand" if !scheme.randomized => scheme.randomized = true,
                "unsorted" if scheme.sort_sampled => scheme.sort_sampled = false,
                _ => return Err(EncodingError::BadSchemeString(s.to_string())),
            }
        }
        if !scheme.sort_sampled && !scheme.randomized {
            return Err(EncodingError::BadSchemeString(s.to_string()));
        }
        Ok(scheme)
    }

    /// The scheme string this parses back from.
    pub fn label(&self) -> String {
        let mut s = self.base.name().to_string();
        if self.randomized {
            s.push_str("+rand");
        }
        if !self.sort_sampled {
            s.push_str("+unsorted");
        }
        s
    }

    /// Draw the batch's position assignment: sampled for randomized schemes,
    /// the identity `1..=n` otherwise.
    pub fn assign_positions(&self, n: usize, rng: &mut impl Rng) -> Result<PositionAssignment, EncodingError> {
        if self.randomized {
            sample_positions(n, self.max_position, self.sort_sampled, rng)
        } else {
            Ok(PositionAssignment::identity(n))
        }
    }
}

impl std::fmt::Display for EncodingScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// The index set `I = {i_1, ..., i_n}` shared by one batch; 1-based,
/// strictly increasing when sorting is on, never containing duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionAssignment {
    indices: Vec<u32>,
}

impl PositionAssignment {
    pub fn identity(n: usize) -> Self {
        Self { indices: (1..=n as u32).collect() }
    }

    pub fn from_indices(indices: Vec<u32>) -> Self {
        Self { indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn max_index(&self) -> u32 {
        self.indices.iter().copied().max().unwrap_or(0)
    }

    pub fn is_sorted_strict(&self) -> bool {
        self.indices.windows(2).all(|w| w[0] < w[1])
    }
}

/// Uniformly random `n`-subset of `{1..=max_position}` via partial
/// Fisher-Yates, sorted ascending unless `sort` is off (the ablation keeps
/// the subset but leaves it in draw order).
pub fn sample_positions(
    n: usize,
    max_position: u32,
    sort: bool,
    rng: &mut impl Rng,
) -> Result<PositionAssignment, EncodingError> {
    let l = max_position as usize;
    if n > l {
        return Err(EncodingError::InvalidArgument {
            op: "sample_positions",
            message: format!("cannot draw {n} positions from 1..={l}"),
        });
    }
    let mut pool: Vec<u32> = (1..=max_position).collect();
    for j in 0..n {
        let pick = j + rng.random_range(0..l - j);
        pool.swap(j, pick);
    }
    let mut indices = pool[..n].to_vec();
    if sort {
        indices.sort_unstable();
    }
    Ok(PositionAssignment { indices })
}

/// Sinusoidal vector for one position: component `2i` is
/// `sin(pos / base^(2i/d))`, component `2i+1` the matching cosine, with the
/// pair index `i` starting at 0 so the first pair has frequency 1.
pub fn sincos_vector<E: Real>(pos: u32, d_model: usize, base: f64) -> Result<Vec<E>, EncodingError> {
    sincos_signed(pos as i64, d_model, base)
}

fn sincos_signed<E: Real>(pos: i64, d_model: usize, base: f64) -> Result<Vec<E>, EncodingError> {
    if d_model % 2 != 0 {
        return Err(EncodingError::InvalidArgument {
            op: "sincos",
            message: format!("d_model {d_model} must be even"),
        });
    }
    let mut out = vec![E::ZERO; d_model];
    let p = pos as f64;
    for i in 0..d_model / 2 {
        let freq = base.powf(-(2.0 * i as f64) / d_model as f64);
        let angle = p * freq;
        out[2 * i] = E::from_f64(angle.sin());
        out[2 * i + 1] = E::from_f64(angle.cos());
    }
    Ok(out)
}

/// Row `j` is the sinusoidal vector of `i_j`; the additive encoding matrix.
pub fn sincos_matrix<E: Real>(
    positions: &PositionAssignment,
    d_model: usize,
    base: f64,
) -> Result<Vec<E>, EncodingError> {
    let mut out = Vec::with_capacity(positions.len() * d_model);
    for &p in positions.indices() {
        out.extend(sincos_vector::<E>(p, d_model, base)?);
    }
    Ok(out)
}

/// Table lookup rows for the learned encoding, 0-based. Positions beyond the
/// table are the out-of-distribution failure of standard learned encodings at
/// evaluation: they are clamped to the last row and counted, not crashed on.
#[derive(Debug, Clone)]
pub struct LearnedLookup {
    pub row_ids: Vec<u32>,
    pub ood_count: usize,
}

pub fn learned_lookup(positions: &PositionAssignment, table_rows: usize) -> LearnedLookup {
    let mut ood = 0usize;
    let row_ids = positions
        .indices()
        .iter()
        .map(|&p| {
            let row = p as usize - 1;
            if row >= table_rows {
                ood += 1;
                (table_rows - 1) as u32
            } else {
                row as u32
            }
        })
        .collect();
    LearnedLookup { row_ids, ood_count: ood }
}

/// Signed pairwise distances `i_q - i_k`, row-major `n x n`.
pub fn relative_distances(positions: &PositionAssignment) -> Vec<i64> {
    let idx = positions.indices();
    let n = idx.len();
    let mut out = vec![0i64; n * n];
    for (q, &iq) in idx.iter().enumerate() {
        for (k, &ik) in idx.iter().enumerate() {
            out[q * n + k] = iq as i64 - ik as i64;
        }
    }
    out
}

/// Distance table for relative attention: one sinusoidal row per signed
/// distance the assignment actually produces (a subset of
/// `[-(span-1), span-1]`; `span` is `L` when randomized, `n` otherwise),
/// plus the per-pair row index matrix. Keeping only present distances makes
/// the per-step projection of this table proportional to the batch, not to
/// `L`, and changes no value any pair consumes.
pub struct DistanceTable<E: Real> {
    /// `num_rows x d_model`; row order follows ascending distance.
    pub rows: Vec<E>,
    pub num_rows: usize,
    /// `n x n` row ids: entry `(q, k)` indexes the row for `i_q - i_k`.
    pub index: Vec<u32>,
}

pub fn distance_table<E: Real>(
    positions: &PositionAssignment,
    span: u32,
    d_model: usize,
    base: f64,
) -> Result<DistanceTable<E>, EncodingError> {
    let span = span as i64;
    let offset = (span - 1) as usize;
    let diffs = relative_distances(positions);
    // Map each present distance to a compact ascending row id.
    let mut present = vec![u32::MAX; 2 * offset + 1];
    for &d in &diffs {
        debug_assert!(d.abs() < span, "distance {d} outside span {span}");
        present[(d + span - 1) as usize] = 0;
    }
    let mut rows = Vec::new();
    let mut num_rows = 0usize;
    for (slot, row_id) in present.iter_mut().enumerate() {
        if *row_id == 0 {
            *row_id = num_rows as u32;
            num_rows += 1;
            rows.extend(sincos_signed::<E>(slot as i64 - (span - 1), d_model, base)?);
        }
    }
    let index = diffs.into_iter().map(|d| present[(d + span - 1) as usize]).collect();
    Ok(DistanceTable { rows, num_rows, index })
}

/// Geometric head slopes `m_h = 2^(-8h/H)` for `h` in `1..=H`.
pub fn alibi_slopes(heads: usize) -> Vec<f64> {
    (1..=heads).map(|h| 2f64.powf(-8.0 * h as f64 / heads as f64)).collect()
}

/// Symmetric linear attention bias `[heads, n, n]`:
/// `bias(h, q, k) = -m_h * |i_q - i_k|` (non-causal; bidirectional encoder).
pub fn alibi_bias<E: Real>(positions: &PositionAssignment, heads: usize) -> Vec<E> {
    let n = positions.len();
    let slopes = alibi_slopes(heads);
    let dist = relative_distances(positions);
    let mut out = vec![E::ZERO; heads * n * n];
    for (h, &m) in slopes.iter().enumerate() {
        let slab = &mut out[h * n * n..(h + 1) * n * n];
        for (o, &d) in slab.iter_mut().zip(dist.iter()) {
            *o = E::from_f64(-m * d.abs() as f64);
        }
    }
    out
}

/// Rotation angles `[n, head_dim/2]` for the rotary scheme:
/// `angle(j, p) = i_j * base^(-2p/head_dim)`.
pub fn rope_angles<E: Real>(
    positions: &PositionAssignment,
    head_dim: usize,
    base: f64,
) -> Result<Vec<E>, EncodingError> {
    if head_dim % 2 != 0 {
        return Err(EncodingError::InvalidArgument {
            op: "rope_angles",
            message: format!("head dimension {head_dim} must be even"),
        });
    }
    let half = head_dim / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|p| base.powf(-(2.0 * p as f64) / head_dim as f64))
        .collect();
    let mut out = Vec::with_capacity(positions.len() * half);
    for &pos in positions.indices() {
        for &f in &freqs {
            out.push(E::from_f64(pos as f64 * f));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn scheme_grammar_roundtrip() {
        for s in ["none", "sincos", "learned+rand", "relative+rand", "sincos+rand+unsorted", "rope", "alibi+rand"] {
            let scheme = EncodingScheme::parse(s, 32, 512).unwrap();
            assert_eq!(scheme.label(), s);
        }
        for bad in ["", "sinecos", "sincos+unsorted", "sincos+rand+rand", "relative+", "rand"] {
            assert!(EncodingScheme::parse(bad, 32, 512).is_err(), "{bad:?} accepted");
        }
    }

    #[test]
    fn sincos_reference_values() {
        // pos=0: sin components 0, cos components 1.
        let v: Vec<f64> = sincos_vector(0, 8, 10_000.0).unwrap();
        for pair in v.chunks(2) {
            assert_eq!(pair[0], 0.0);
            assert_eq!(pair[1], 1.0);
        }
        // pos=1, d=4: [sin 1, cos 1, sin 1e-2, cos 1e-2].
        let v: Vec<f64> = sincos_vector(1, 4, 10_000.0).unwrap();
        let expect = [0.8415, 0.5403, 0.0100, 0.99995];
        for (a, e) in v.iter().zip(expect.iter()) {
            assert!((a - e).abs() < 5e-4, "{v:?}");
        }
        assert!(sincos_vector::<f64>(3, 5, 10_000.0).is_err());
    }

    #[test]
    fn full_draw_is_identity() {
        let mut rng = stream(0, "enc-full");
        let p = sample_positions(10, 10, true, &mut rng).unwrap();
        assert_eq!(p.indices(), PositionAssignment::identity(10).indices());
    }

    #[test]
    fn draws_are_strictly_increasing_and_in_range() {
        let mut rng = stream(1, "enc-sorted");
        for _ in 0..2000 {
            let p = sample_positions(3, 10, true, &mut rng).unwrap();
            assert!(p.is_sorted_strict(), "{:?}", p.indices());
            assert!(p.indices().iter().all(|&i| (1..=10).contains(&i)));
        }
    }

    #[test]
    fn unsorted_keeps_subset_but_not_order() {
        let mut rng = stream(2, "enc-unsorted");
        let mut saw_out_of_order = false;
        for _ in 0..200 {
            let p = sample_positions(5, 100, false, &mut rng).unwrap();
            let mut sorted = p.indices().to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 5, "duplicates in {:?}", p.indices());
            saw_out_of_order |= !p.is_sorted_strict();
        }
        assert!(saw_out_of_order);
    }

    #[test]
    fn oversized_draw_rejected() {
        let mut rng = stream(3, "enc-oversize");
        assert!(sample_positions(11, 10, true, &mut rng).is_err());
    }

    #[test]
    fn single_index_marginal_is_uniform() {
        // n=1, L=10: each value within 3 sigma of 0.1 over 1e5 draws.
        let mut rng = stream(4, "enc-marginal");
        let draws = 100_000usize;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            let p = sample_positions(1, 10, true, &mut rng).unwrap();
            counts[(p.indices()[0] - 1) as usize] += 1;
        }
        let expected = draws as f64 * 0.1;
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        for (v, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() <= 3.0 * sigma,
                "value {} count {} expected {}",
                v + 1,
                c,
                expected
            );
        }
    }

    #[test]
    fn consecutive_draws_differ() {
        // Independent resampling at n=40, L=2048: collisions are negligible.
        let mut rng = stream(5, "enc-resample");
        let mut prev: Option<Vec<u32>> = None;
        for _ in 0..100 {
            let p = sample_positions(40, 2048, true, &mut rng).unwrap();
            if let Some(prev) = &prev {
                assert_ne!(prev, p.indices());
            }
            prev = Some(p.indices().to_vec());
        }
    }

    #[test]
    fn relative_distance_entries() {
        let p = PositionAssignment::from_indices(vec![2, 5, 9]);
        let d = relative_distances(&p);
        assert_eq!(d[2 * 3], 7); // slot 3 vs slot 1: 9 - 2
        assert_eq!(d[0], 0);
        assert_eq!(d[4], 0);
        assert_eq!(d[8], 0);
        let id = PositionAssignment::identity(4);
        let d = relative_distances(&id);
        for q in 0..4 {
            for k in 0..4 {
                assert_eq!(d[q * 4 + k], q as i64 - k as i64);
            }
        }
    }

    #[test]
    fn alibi_reference_values() {
        // First of 4 heads has slope 2^(-8/4) = 0.25.
        let slopes = alibi_slopes(4);
        assert!((slopes[0] - 0.25).abs() < 1e-12);
        let p = PositionAssignment::from_indices(vec![2, 5]);
        let bias: Vec<f64> = alibi_bias(&p, 4);
        // Head 0, q = slot 1, k = slot 0: -0.25 * |5 - 2| = -0.75.
        assert!((bias[2] - (-0.75)).abs() < 1e-12);
        // Diagonal zero for every head.
        for h in 0..4 {
            assert_eq!(bias[h * 4 + 0], 0.0);
            assert_eq!(bias[h * 4 + 3], 0.0);
        }
    }

    #[test]
    fn learned_lookup_clamps_and_counts() {
        let p = PositionAssignment::from_indices(vec![1, 4, 5, 6]);
        let l = learned_lookup(&p, 4);
        assert_eq!(l.row_ids, vec![0, 3, 3, 3]);
        assert_eq!(l.ood_count, 2);
        let ok = learned_lookup(&PositionAssignment::identity(4), 4);
        assert_eq!(ok.ood_count, 0);
    }

    proptest! {
        #[test]
        fn sincos_pairs_on_unit_circle(pos in 0u32..5000, pair in 0usize..16) {
            let v: Vec<f64> = sincos_vector(pos, 32, 10_000.0).unwrap();
            let (s, c) = (v[2 * pair], v[2 * pair + 1]);
            prop_assert!((s * s + c * c - 1.0).abs() < 1e-6);
        }

        #[test]
        fn sampled_positions_always_valid(seed in 0u64..500, n in 1usize..32) {
            let mut rng = stream(seed, "enc-prop");
            let p = sample_positions(n, 64, true, &mut rng).unwrap();
            prop_assert!(p.is_sorted_strict());
            prop_assert!(p.indices().iter().all(|&i| (1..=64).contains(&i)));
            prop_assert_eq!(p.len(), n);
        }
    }
}
