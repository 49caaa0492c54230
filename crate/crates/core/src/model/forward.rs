use super::{Batch, ModelConfig, ModelError};
use crate::encodings::{alibi_bias, distance_table, learned_lookup, rope_angles, sincos_matrix, BaseEncoding};
use crate::nn::{BoundParams, Real, Tape, TensorRef};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, Default)]
pub struct CaptureOptions {
    pub activations: bool,
    pub attention: bool,
    /// Track the smallest |pre-activation| entering a ReLU; the gradient
    /// checks use it to confirm the probe point is kink-free.
    pub relu_margins: bool,
}

/// Activations of one layer for every sequence in the batch
/// (layer 0 is the embeddings after any additive encoding).
#[derive(Debug, Clone)]
pub struct LayerActivations<E: Real> {
    pub layer: usize,
    pub rows: usize,
    pub width: usize,
    pub d_model: usize,
    pub data: Vec<E>,
}

/// Post-softmax attention of one block for the batch's first sequence,
/// `[heads, width, width]` row-major.
#[derive(Debug, Clone)]
pub struct LayerAttention<E: Real> {
    pub block: usize,
    pub heads: usize,
    pub width: usize,
    pub data: Vec<E>,
}

#[derive(Debug, Clone)]
pub struct Capture<E: Real> {
    pub activations: Vec<LayerActivations<E>>,
    pub attention: Vec<LayerAttention<E>>,
}

impl<E: Real> Default for Capture<E> {
    fn default() -> Self {
        Self { activations: Vec::new(), attention: Vec::new() }
    }
}

pub struct ForwardOutput<E: Real> {
    pub logits: TensorRef,
    /// Learned-encoding lookups that fell beyond the table (the standard
    /// learned scheme's out-of-distribution condition, clamped not crashed).
    pub ood_positions: usize,
    /// Largest position index consumed by this batch.
    pub max_position_used: u32,
    /// Smallest |pre-activation| seen at any ReLU, when requested.
    pub relu_margin: Option<f64>,
    pub capture: Capture<E>,
}

/// Run the encoder on a batch. Additive schemes touch the embeddings once;
/// attention-level schemes (relative / alibi / rope) modify every block.
/// No causal mask: the model is bidirectional.
pub fn forward<E: Real>(
    tape: &mut Tape<E>,
    params: &BoundParams,
    config: &ModelConfig,
    batch: &Batch,
    opts: &CaptureOptions,
) -> Result<ForwardOutput<E>, ModelError> {
    config.validate()?;
    let (rows, n) = (batch.rows, batch.width);
    if batch.positions.len() != n {
        return Err(ModelError::Batch(format!(
            "position assignment has {} indices for width {}",
            batch.positions.len(),
            n
        )));
    }
    let (d, h, hd) = (config.d_model, config.heads, config.head_dim());
    let scale = E::from_f64(1.0 / (hd as f64).sqrt());
    let eps = E::from_f64(LN_EPS);
    let mut capture = Capture::default();
    let mut ood_positions = 0usize;
    let mut relu_margin = f64::INFINITY;

    let x = tape.embedding(params.get("embed.tok"), &batch.tokens, &[rows, n])?;
    // Standard sqrt(d) embedding scaling keeps token content comparable to
    // the unit-magnitude additive encodings.
    let mut x = tape.scale(x, E::from_f64((d as f64).sqrt()));
    match config.scheme.base {
        BaseEncoding::SinCos => {
            let pe = sincos_matrix::<E>(&batch.positions, d, config.scheme.wave_base)?;
            let pe = tape.constant(pe, &[n, d])?;
            x = tape.add(x, pe)?;
        }
        BaseEncoding::Learned => {
            let lookup = learned_lookup(&batch.positions, config.learned_table_rows());
            if lookup.ood_count > 0 {
                ood_positions = lookup.ood_count;
                log::warn!(
                    "learned encoding: {} positions beyond the {}-row table were clamped",
                    lookup.ood_count,
                    config.learned_table_rows()
                );
            }
            let pos = tape.embedding(params.get("embed.pos"), &lookup.row_ids, &[n])?;
            x = tape.add(x, pos)?;
        }
        _ => {}
    }
    if opts.activations {
        capture.activations.push(snapshot(tape, x, 0, rows, n, d));
    }

    // Scheme constants shared across blocks.
    let relative = if config.scheme.base == BaseEncoding::Relative {
        let span = if config.scheme.randomized { config.scheme.max_position } else { n as u32 };
        let table = distance_table::<E>(&batch.positions, span, d, config.scheme.wave_base)?;
        let rows_ref = tape.constant(table.rows, &[table.num_rows, d])?;
        Some((rows_ref, table.index, table.num_rows))
    } else {
        None
    };
    let alibi = if config.scheme.base == BaseEncoding::Alibi {
        Some(tape.constant(alibi_bias::<E>(&batch.positions, h), &[h, n, n])?)
    } else {
        None
    };
    let angles = if config.scheme.base == BaseEncoding::Rope {
        Some(rope_angles::<E>(&batch.positions, hd, config.scheme.wave_base)?)
    } else {
        None
    };

    for b in 0..config.blocks {
        let p = format!("block.{b:02}");

        // Attention sublayer (pre-norm).
        let normed = tape.layer_norm(x, params.get(&format!("{p}.ln1.gain")), params.get(&format!("{p}.ln1.bias")), eps)?;
        let flat = tape.reshape(normed, &[rows * n, d])?;
        let q = heads_projection(tape, params, &p, "wq", Some("bq"), flat, rows, n, h, hd)?;
        let k = heads_projection(tape, params, &p, "wk", None, flat, rows, n, h, hd)?;
        let v = heads_projection(tape, params, &p, "wv", Some("bv"), flat, rows, n, h, hd)?;
        let (q, k) = match &angles {
            Some(a) => (tape.rope(q, a, n, hd)?, tape.rope(k, a, n, hd)?),
            None => (q, k),
        };

        let scores = match &relative {
            Some((table_ref, idx, table_rows)) => {
                // Content and position terms with learned global biases:
                // (q+u)·kᵀ + (q+v)·(W_r R)ᵀ gathered at the pair's distance.
                let u = tape.reshape(params.get(&format!("{p}.attn.rel.u")), &[1, h, 1, hd])?;
                let vb = tape.reshape(params.get(&format!("{p}.attn.rel.v")), &[1, h, 1, hd])?;
                let qu = tape.add(q, u)?;
                let qu = tape.scale(qu, scale);
                let content = tape.matmul(qu, k, true)?;
                let wrr = tape.matmul(*table_ref, params.get(&format!("{p}.attn.rel.wr")), false)?;
                let wrr = tape.reshape(wrr, &[*table_rows, h, hd])?;
                let qv = tape.add(q, vb)?;
                let qv = tape.scale(qv, scale);
                let position = tape.rel_logits(qv, wrr, idx, n)?;
                tape.add(content, position)?
            }
            None => {
                let qs = tape.scale(q, scale);
                let mut scores = tape.matmul(qs, k, true)?;
                if let Some(bias) = alibi {
                    scores = tape.add(scores, bias)?;
                }
                scores
            }
        };
        let attn = tape.softmax(scores)?;
        if opts.attention {
            capture.attention.push(LayerAttention {
                block: b,
                heads: h,
                width: n,
                data: tape.data(attn)[..h * n * n].to_vec(),
            });
        }
        let ctx = tape.matmul(attn, v, false)?;
        let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = tape.reshape(ctx, &[rows * n, d])?;
        let out = tape.matmul(ctx, params.get(&format!("{p}.attn.wo")), false)?;
        let out = tape.add(out, params.get(&format!("{p}.attn.bo")))?;
        let out = tape.reshape(out, &[rows, n, d])?;
        x = tape.add(x, out)?;

        // MLP sublayer (pre-norm).
        let normed = tape.layer_norm(x, params.get(&format!("{p}.ln2.gain")), params.get(&format!("{p}.ln2.bias")), eps)?;
        let flat = tape.reshape(normed, &[rows * n, d])?;
        let mid = tape.matmul(flat, params.get(&format!("{p}.mlp.w1")), false)?;
        let mid = tape.add(mid, params.get(&format!("{p}.mlp.b1")))?;
        if opts.relu_margins {
            for &v in tape.data(mid) {
                relu_margin = relu_margin.min(v.to_f64().abs());
            }
        }
        let mid = tape.relu(mid);
        let out = tape.matmul(mid, params.get(&format!("{p}.mlp.w2")), false)?;
        let out = tape.add(out, params.get(&format!("{p}.mlp.b2")))?;
        let out = tape.reshape(out, &[rows, n, d])?;
        x = tape.add(x, out)?;

        if opts.activations {
            capture.activations.push(snapshot(tape, x, b + 1, rows, n, d));
        }
    }

    let normed = tape.layer_norm(x, params.get("final_ln.gain"), params.get("final_ln.bias"), eps)?;
    let flat = tape.reshape(normed, &[rows * n, d])?;
    let logits = tape.matmul(flat, params.get("head.w"), false)?;
    let logits = tape.add(logits, params.get("head.b"))?;
    let logits = tape.reshape(logits, &[rows, n, config.output_vocab])?;

    Ok(ForwardOutput {
        logits,
        ood_positions,
        max_position_used: batch.positions.max_index(),
        relu_margin: opts.relu_margins.then_some(relu_margin),
        capture,
    })
}

fn heads_projection<E: Real>(
    tape: &mut Tape<E>,
    params: &BoundParams,
    prefix: &str,
    w: &str,
    b: Option<&str>,
    flat: TensorRef,
    rows: usize,
    n: usize,
    h: usize,
    hd: usize,
) -> Result<TensorRef, ModelError> {
    let mut proj = tape.matmul(flat, params.get(&format!("{prefix}.attn.{w}")), false)?;
    if let Some(b) = b {
        proj = tape.add(proj, params.get(&format!("{prefix}.attn.{b}")))?;
    }
    let proj = tape.reshape(proj, &[rows, n, h, hd])?;
    Ok(tape.permute(proj, &[0, 2, 1, 3])?)
}

fn snapshot<E: Real>(tape: &Tape<E>, x: TensorRef, layer: usize, rows: usize, width: usize, d: usize) -> LayerActivations<E> {
    LayerActivations { layer, rows, width, d_model: d, data: tape.data(x).to_vec() }
}

/// Mean cross-entropy over the batch's masked answer slots.
pub fn masked_loss<E: Real>(tape: &mut Tape<E>, logits: TensorRef, batch: &Batch) -> Result<TensorRef, ModelError> {
    Ok(tape.masked_cross_entropy(logits, &batch.targets, &batch.mask)?)
}

/// (correct, total) over masked slots; argmax ties break to the lowest
/// class id.
pub fn accuracy_counts<E: Real>(logits: &[E], classes: usize, batch: &Batch) -> (u64, u64) {
    let mut correct = 0u64;
    let mut total = 0u64;
    for (slot, row) in logits.chunks(classes).enumerate() {
        if !batch.mask[slot] {
            continue;
        }
        let mut best = 0usize;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        correct += u64::from(best as u32 == batch.targets[slot]);
        total += 1;
    }
    (correct, total)
}

/// Fraction of masked slots whose argmax matches the target.
pub fn accuracy<E: Real>(logits: &[E], classes: usize, batch: &Batch) -> f64 {
    let (correct, total) = accuracy_counts(logits, classes, batch);
    correct as f64 / total as f64
}

/// Loss node plus the per-token accuracy of the same logits.
pub fn loss_and_accuracy<E: Real>(
    tape: &mut Tape<E>,
    logits: TensorRef,
    batch: &Batch,
    classes: usize,
) -> Result<(TensorRef, f64), ModelError> {
    let loss = masked_loss(tape, logits, batch)?;
    let acc = accuracy(tape.data(logits), classes, batch);
    Ok((loss, acc))
}
