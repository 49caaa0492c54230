use super::kernels::{bmm, bmm_tn, broadcast_compatible};
use super::{NnError, Real, Tensor};
use rayon::prelude::*;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorRef(usize);

/// Reverse-mode differentiation tape. Operations append nodes; `backward`
/// walks them in reverse. A tape lives for one forward/backward pass and is
/// dropped afterwards.
pub struct Tape<E: Real> {
    nodes: Vec<Node<E>>,
}

struct Node<E: Real> {
    t: Tensor<E>,
    op: Op<E>,
    needs_grad: bool,
}

enum Op<E: Real> {
    Leaf,
    /// Elementwise a + b with numpy-style broadcasting.
    Add { a: TensorRef, b: TensorRef },
    /// Elementwise a * b with numpy-style broadcasting.
    Mul { a: TensorRef, b: TensorRef },
    /// c * a for a compile-time-known scalar c.
    Scale { a: TensorRef, c: E },
    /// Batched matmul over identical leading dims; `trans_b` multiplies by Bᵀ.
    Matmul { a: TensorRef, b: TensorRef, trans_b: bool, batch: usize, m: usize, k: usize, n: usize },
    Reshape { a: TensorRef },
    Permute { a: TensorRef, axes: Vec<usize> },
    Relu { a: TensorRef },
    /// Softmax over the last axis; the node's own output is the cache.
    Softmax { a: TensorRef },
    /// Layer normalization over the last axis with learned gain and bias.
    LayerNorm { x: TensorRef, gain: TensorRef, bias: TensorRef, mean: Vec<E>, rstd: Vec<E> },
    /// Row gather: out[i, :] = table[ids[i], :].
    Embedding { table: TensorRef, ids: Vec<u32> },
    /// In-plane rotation of adjacent feature pairs by per-(slot, pair) angles.
    /// `cos_sin` is [n][hd/2] pairs of (cos, sin); x is [batch, heads, n, hd].
    Rope { x: TensorRef, cos_sin: Vec<E>, n: usize, hd: usize },
    /// Position-logit gather-product: out[b,h,i,j] = q[b,h,i,:] · wrr[idx[i,j],h,:].
    RelLogits { q: TensorRef, wrr: TensorRef, idx: Vec<u32>, n: usize },
    /// Mean cross-entropy over masked slots; `probs` caches the softmax rows.
    MaskedCrossEntropy { logits: TensorRef, targets: Vec<u32>, mask: Vec<bool>, probs: Vec<E>, count: usize },
    SumAll { a: TensorRef },
}

impl<E: Real> Tape<E> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn data(&self, r: TensorRef) -> &[E] {
        self.nodes[r.0].t.values()
    }

    pub fn shape(&self, r: TensorRef) -> &[usize] {
        self.nodes[r.0].t.shape()
    }

    pub fn grad(&self, r: TensorRef) -> Option<&[E]> {
        self.nodes[r.0].t.grad.as_deref()
    }

    /// Leaf participating in differentiation.
    pub fn leaf(&mut self, values: Vec<E>, shape: &[usize]) -> Result<TensorRef, NnError> {
        let t = Tensor::new(values, shape, true)?;
        Ok(self.push(t, Op::Leaf, true))
    }

    /// Leaf excluded from differentiation (inputs, encodings, biases-by-value).
    pub fn constant(&mut self, values: Vec<E>, shape: &[usize]) -> Result<TensorRef, NnError> {
        let t = Tensor::new(values, shape, false)?;
        Ok(self.push(t, Op::Leaf, false))
    }

    fn push(&mut self, t: Tensor<E>, op: Op<E>, needs_grad: bool) -> TensorRef {
        self.nodes.push(Node { t, op, needs_grad });
        TensorRef(self.nodes.len() - 1)
    }

    fn needs(&self, r: TensorRef) -> bool {
        self.nodes[r.0].needs_grad
    }

    pub fn add(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef, NnError> {
        let out = self.broadcast_apply("add", a, b, |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add { a, b }, needs))
    }

    pub fn mul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef, NnError> {
        let out = self.broadcast_apply("mul", a, b, |x, y| x * y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul { a, b }, needs))
    }

    pub fn scale(&mut self, a: TensorRef, c: E) -> TensorRef {
        let src = &self.nodes[a.0].t;
        let values: Vec<E> = src.values().iter().map(|&v| v * c).collect();
        let t = Tensor::new(values, &src.shape().to_vec(), false).expect("same shape");
        let needs = self.needs(a);
        self.push(t, Op::Scale { a, c }, needs)
    }

    /// `a` is `[.., m, k]`; `b` is `[.., k, n]`, or `[.., n, k]` with `trans_b`.
    /// Leading dims must match exactly.
    pub fn matmul(&mut self, a: TensorRef, b: TensorRef, trans_b: bool) -> Result<TensorRef, NnError> {
        let (ashape, bshape) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if ashape.len() < 2 || bshape.len() != ashape.len() || ashape[..ashape.len() - 2] != bshape[..bshape.len() - 2] {
            return Err(NnError::ShapeMismatch { op: "matmul", lhs: ashape, rhs: bshape });
        }
        let nd = ashape.len();
        let (m, k) = (ashape[nd - 2], ashape[nd - 1]);
        let (bk, bn) = if trans_b { (bshape[nd - 1], bshape[nd - 2]) } else { (bshape[nd - 2], bshape[nd - 1]) };
        if k != bk {
            return Err(NnError::ShapeMismatch { op: "matmul", lhs: ashape, rhs: bshape });
        }
        let batch: usize = ashape[..nd - 2].iter().product();
        let mut out_shape = ashape[..nd - 2].to_vec();
        out_shape.extend_from_slice(&[m, bn]);
        let mut out = vec![E::ZERO; batch * m * bn];
        bmm(self.data(a), self.data(b), batch, m, k, bn, trans_b, &mut out, true);
        let t = Tensor::new(out, &out_shape, false)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Matmul { a, b, trans_b, batch, m, k, n: bn }, needs))
    }

    pub fn reshape(&mut self, a: TensorRef, shape: &[usize]) -> Result<TensorRef, NnError> {
        let src = &self.nodes[a.0].t;
        let numel: usize = shape.iter().product();
        if numel != src.numel() {
            return Err(NnError::ShapeMismatch {
                op: "reshape",
                lhs: src.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let t = Tensor::new(src.values().to_vec(), shape, false)?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::Reshape { a }, needs))
    }

    pub fn permute(&mut self, a: TensorRef, axes: &[usize]) -> Result<TensorRef, NnError> {
        let src_shape = self.shape(a).to_vec();
        if axes.len() != src_shape.len() || {
            let mut seen = vec![false; axes.len()];
            axes.iter().any(|&ax| ax >= seen.len() || std::mem::replace(&mut seen[ax], true))
        } {
            return Err(NnError::InvalidArgument {
                op: "permute",
                message: format!("axes {:?} invalid for shape {:?}", axes, src_shape),
            });
        }
        let out_shape: Vec<usize> = axes.iter().map(|&ax| src_shape[ax]).collect();
        let out = permute_copy(self.data(a), &src_shape, axes);
        let t = Tensor::new(out, &out_shape, false)?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::Permute { a, axes: axes.to_vec() }, needs))
    }

    pub fn relu(&mut self, a: TensorRef) -> TensorRef {
        let src = &self.nodes[a.0].t;
        let values: Vec<E> = src.values().iter().map(|&v| v.maximum(E::ZERO)).collect();
        let t = Tensor::new(values, &src.shape().to_vec(), false).expect("same shape");
        let needs = self.needs(a);
        self.push(t, Op::Relu { a }, needs)
    }

    /// Softmax over the last axis, max-subtracted for stability.
    pub fn softmax(&mut self, a: TensorRef) -> Result<TensorRef, NnError> {
        let shape = self.shape(a).to_vec();
        let cols = *shape.last().ok_or(NnError::InvalidArgument {
            op: "softmax",
            message: "rank-0 input".into(),
        })?;
        let data = self.data(a);
        let mut out = vec![E::ZERO; data.len()];
        let mut finite = true;
        for (row, orow) in data.chunks(cols).zip(out.chunks_mut(cols)) {
            let mut mx = row[0];
            for &v in row {
                finite &= v.is_finite();
                mx = mx.maximum(v);
            }
            let mut sum = E::ZERO;
            for (o, &v) in orow.iter_mut().zip(row.iter()) {
                let e = (v - mx).exp();
                *o = e;
                sum += e;
            }
            let inv = E::ONE / sum;
            for o in orow.iter_mut() {
                *o *= inv;
            }
        }
        if !finite {
            return Err(NnError::NonFinite { context: "softmax input".into() });
        }
        let t = Tensor::new(out, &shape, false)?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::Softmax { a }, needs))
    }

    /// Layer normalization over the last axis: `gain * (x - mean)/sqrt(var + eps) + bias`.
    pub fn layer_norm(
        &mut self,
        x: TensorRef,
        gain: TensorRef,
        bias: TensorRef,
        eps: E,
    ) -> Result<TensorRef, NnError> {
        let shape = self.shape(x).to_vec();
        let cols = *shape.last().ok_or(NnError::InvalidArgument {
            op: "layer_norm",
            message: "rank-0 input".into(),
        })?;
        if self.shape(gain) != [cols] || self.shape(bias) != [cols] {
            return Err(NnError::ShapeMismatch {
                op: "layer_norm",
                lhs: shape,
                rhs: self.shape(gain).to_vec(),
            });
        }
        let rows = self.data(x).len() / cols;
        let mut out = vec![E::ZERO; rows * cols];
        let mut means = vec![E::ZERO; rows];
        let mut rstds = vec![E::ZERO; rows];
        let inv_cols = E::ONE / E::from_usize(cols);
        {
            let (data, g, b) = (self.data(x), self.data(gain), self.data(bias));
            for (r, (row, orow)) in data.chunks(cols).zip(out.chunks_mut(cols)).enumerate() {
                let mut mean = E::ZERO;
                for &v in row {
                    mean += v;
                }
                mean *= inv_cols;
                let mut var = E::ZERO;
                for &v in row {
                    let d = v - mean;
                    var += d * d;
                }
                var *= inv_cols;
                let rstd = E::ONE / (var + eps).sqrt();
                means[r] = mean;
                rstds[r] = rstd;
                for ((o, &v), (&gv, &bv)) in orow.iter_mut().zip(row.iter()).zip(g.iter().zip(b.iter())) {
                    *o = (v - mean) * rstd * gv + bv;
                }
            }
        }
        let t = Tensor::new(out, &shape, false)?;
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(t, Op::LayerNorm { x, gain, bias, mean: means, rstd: rstds }, needs))
    }

    /// Gather rows of `table` (shape `[v, d]`) at `ids`; output `ids_shape ++ [d]`.
    pub fn embedding(
        &mut self,
        table: TensorRef,
        ids: &[u32],
        ids_shape: &[usize],
    ) -> Result<TensorRef, NnError> {
        let tshape = self.shape(table).to_vec();
        if tshape.len() != 2 {
            return Err(NnError::InvalidArgument {
                op: "embedding",
                message: format!("table must be rank 2, got {:?}", tshape),
            });
        }
        let (v, d) = (tshape[0], tshape[1]);
        let count: usize = ids_shape.iter().product();
        if count != ids.len() {
            return Err(NnError::InvalidArgument {
                op: "embedding",
                message: format!("{} ids for shape {:?}", ids.len(), ids_shape),
            });
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= v) {
            return Err(NnError::InvalidArgument {
                op: "embedding",
                message: format!("id {} out of range for table with {} rows", bad, v),
            });
        }
        let tdata = self.data(table);
        let mut out = vec![E::ZERO; ids.len() * d];
        for (orow, &id) in out.chunks_mut(d).zip(ids.iter()) {
            orow.copy_from_slice(&tdata[id as usize * d..(id as usize + 1) * d]);
        }
        let mut out_shape = ids_shape.to_vec();
        out_shape.push(d);
        let t = Tensor::new(out, &out_shape, false)?;
        let needs = self.needs(table);
        Ok(self.push(t, Op::Embedding { table, ids: ids.to_vec() }, needs))
    }

    /// Rotate adjacent feature pairs of `x` (`[batch, heads, n, hd]`) by
    /// `angles` (`[n, hd/2]`, row-major); the rotary position injection.
    pub fn rope(&mut self, x: TensorRef, angles: &[E], n: usize, hd: usize) -> Result<TensorRef, NnError> {
        if hd % 2 != 0 {
            return Err(NnError::InvalidArgument {
                op: "rope",
                message: format!("head dimension {} must be even", hd),
            });
        }
        let shape = self.shape(x).to_vec();
        if shape.len() != 4 || shape[2] != n || shape[3] != hd {
            return Err(NnError::ShapeMismatch { op: "rope", lhs: shape, rhs: vec![0, 0, n, hd] });
        }
        let half = hd / 2;
        if angles.len() != n * half {
            return Err(NnError::InvalidArgument {
                op: "rope",
                message: format!("{} angles for n={} hd={}", angles.len(), n, hd),
            });
        }
        let mut cos_sin = vec![E::ZERO; n * hd];
        for (cs, &ang) in cos_sin.chunks_mut(2).zip(angles.iter()) {
            cs[0] = ang.cos();
            cs[1] = ang.sin();
        }
        let data = self.data(x);
        let mut out = vec![E::ZERO; data.len()];
        rope_apply(data, &cos_sin, n, hd, &mut out, false);
        let t = Tensor::new(out, &shape, false)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Rope { x, cos_sin, n, hd }, needs))
    }

    /// Relative position logits: `out[b,h,i,j] = q[b,h,i,:] · wrr[idx[i*n+j], h, :]`,
    /// with `q: [batch, heads, n, hd]` and `wrr: [rows, heads, hd]`.
    pub fn rel_logits(&mut self, q: TensorRef, wrr: TensorRef, idx: &[u32], n: usize) -> Result<TensorRef, NnError> {
        let qshape = self.shape(q).to_vec();
        let wshape = self.shape(wrr).to_vec();
        if qshape.len() != 4 || wshape.len() != 3 || qshape[1] != wshape[1] || qshape[3] != wshape[2] || qshape[2] != n {
            return Err(NnError::ShapeMismatch { op: "rel_logits", lhs: qshape, rhs: wshape });
        }
        if idx.len() != n * n {
            return Err(NnError::InvalidArgument {
                op: "rel_logits",
                message: format!("{} indices for n={}", idx.len(), n),
            });
        }
        let rows = wshape[0];
        if let Some(&bad) = idx.iter().find(|&&r| r as usize >= rows) {
            return Err(NnError::InvalidArgument {
                op: "rel_logits",
                message: format!("distance index {} out of range for {} rows", bad, rows),
            });
        }
        let (b, h, hd) = (qshape[0], qshape[1], qshape[3]);
        let mut out = vec![E::ZERO; b * h * n * n];
        {
            let (qd, wd) = (self.data(q), self.data(wrr));
            let slab = |bh: usize, oslab: &mut [E]| {
                let (bi, hi) = (bh / h, bh % h);
                for i in 0..n {
                    let qrow = &qd[((bi * h + hi) * n + i) * hd..][..hd];
                    let orow = &mut oslab[i * n..(i + 1) * n];
                    for (j, o) in orow.iter_mut().enumerate() {
                        let r = idx[i * n + j] as usize;
                        let wrow = &wd[(r * h + hi) * hd..][..hd];
                        let mut s = E::ZERO;
                        for (&qv, &wv) in qrow.iter().zip(wrow.iter()) {
                            s += qv * wv;
                        }
                        *o = s;
                    }
                }
            };
            if b * h * n * n * hd >= 1 << 19 {
                let block = (b * h).div_ceil(2 * rayon::current_num_threads()).max(1);
                out.par_chunks_mut(block * n * n).enumerate().for_each(|(blk, big)| {
                    for (j, oslab) in big.chunks_mut(n * n).enumerate() {
                        slab(blk * block + j, oslab);
                    }
                });
            } else {
                for (bh, oslab) in out.chunks_mut(n * n).enumerate() {
                    slab(bh, oslab);
                }
            }
        }
        let t = Tensor::new(out, &[b, h, n, n], false)?;
        let needs = self.needs(q) || self.needs(wrr);
        Ok(self.push(t, Op::RelLogits { q, wrr, idx: idx.to_vec(), n }, needs))
    }

    /// Mean cross-entropy over masked slots of `logits` (`[.., classes]`,
    /// flattened to `mask.len()` rows). Targets are class ids per slot.
    pub fn masked_cross_entropy(
        &mut self,
        logits: TensorRef,
        targets: &[u32],
        mask: &[bool],
    ) -> Result<TensorRef, NnError> {
        let shape = self.shape(logits).to_vec();
        let classes = *shape.last().ok_or(NnError::InvalidArgument {
            op: "masked_cross_entropy",
            message: "rank-0 logits".into(),
        })?;
        let rows = self.data(logits).len() / classes;
        if targets.len() != rows || mask.len() != rows {
            return Err(NnError::InvalidArgument {
                op: "masked_cross_entropy",
                message: format!("{} rows, {} targets, {} mask slots", rows, targets.len(), mask.len()),
            });
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(NnError::InvalidArgument {
                op: "masked_cross_entropy",
                message: "empty output mask".into(),
            });
        }
        if let Some((slot, _)) = mask.iter().enumerate().find(|&(i, &m)| m && targets[i] as usize >= classes) {
            return Err(NnError::InvalidArgument {
                op: "masked_cross_entropy",
                message: format!("target {} out of range at slot {}", targets[slot], slot),
            });
        }
        let data = self.data(logits);
        let mut probs = vec![E::ZERO; data.len()];
        let mut loss = E::ZERO;
        let mut finite = true;
        for (r, (row, prow)) in data.chunks(classes).zip(probs.chunks_mut(classes)).enumerate() {
            if !mask[r] {
                continue;
            }
            let mut mx = row[0];
            for &v in row {
                finite &= v.is_finite();
                mx = mx.maximum(v);
            }
            let mut sum = E::ZERO;
            for (p, &v) in prow.iter_mut().zip(row.iter()) {
                let e = (v - mx).exp();
                *p = e;
                sum += e;
            }
            let inv = E::ONE / sum;
            for p in prow.iter_mut() {
                *p *= inv;
            }
            loss += sum.ln() + mx - row[targets[r] as usize];
        }
        if !finite {
            return Err(NnError::NonFinite { context: "cross-entropy logits".into() });
        }
        loss = loss / E::from_usize(count);
        let t = Tensor::new(vec![loss], &[], false)?;
        let needs = self.needs(logits);
        Ok(self.push(
            t,
            Op::MaskedCrossEntropy { logits, targets: targets.to_vec(), mask: mask.to_vec(), probs, count },
            needs,
        ))
    }

    pub fn sum_all(&mut self, a: TensorRef) -> TensorRef {
        let mut s = E::ZERO;
        for &v in self.data(a) {
            s += v;
        }
        let t = Tensor::new(vec![s], &[], false).expect("scalar");
        let needs = self.needs(a);
        self.push(t, Op::SumAll { a }, needs)
    }

    /// Populate gradients of every node reachable from `loss`, which must be
    /// a scalar. Leaves created with [`Tape::leaf`] end up with `grad` set.
    pub fn backward(&mut self, loss: TensorRef) -> Result<(), NnError> {
        if self.nodes[loss.0].t.numel() != 1 {
            return Err(NnError::InvalidArgument {
                op: "backward",
                message: format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            });
        }
        self.nodes[loss.0].t.grad = Some(vec![E::ONE]);
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad || self.nodes[id].t.grad.is_none() {
                continue;
            }
            self.step_backward(id);
        }
        Ok(())
    }

    fn grad_buf(&mut self, r: TensorRef) -> &mut Vec<E> {
        let numel = self.nodes[r.0].t.numel();
        self.nodes[r.0].t.grad.get_or_insert_with(|| vec![E::ZERO; numel])
    }

    fn step_backward(&mut self, id: usize) {
        // Take the op out to appease the borrow checker; restored at the end.
        let op = std::mem::replace(&mut self.nodes[id].op, Op::Leaf);
        let g = self.nodes[id].t.grad.take().expect("grad present");
        match &op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                let out_shape = self.nodes[id].t.shape().to_vec();
                for &inp in &[*a, *b] {
                    if self.needs(inp) {
                        let in_shape = self.shape(inp).to_vec();
                        reduce_into(&g, &out_shape, self.grad_buf(inp), &in_shape);
                    }
                }
            }
            Op::Mul { a, b } => {
                let out_shape = self.nodes[id].t.shape().to_vec();
                let (a, b) = (*a, *b);
                if self.needs(a) {
                    let prod = broadcast_eval(&out_shape, &g, &out_shape, self.data(b), self.shape(b), |gv, bv| gv * bv);
                    let in_shape = self.shape(a).to_vec();
                    reduce_into(&prod, &out_shape, self.grad_buf(a), &in_shape);
                }
                if self.needs(b) {
                    let prod = broadcast_eval(&out_shape, &g, &out_shape, self.data(a), self.shape(a), |gv, av| gv * av);
                    let in_shape = self.shape(b).to_vec();
                    reduce_into(&prod, &out_shape, self.grad_buf(b), &in_shape);
                }
            }
            Op::Scale { a, c } => {
                if self.needs(*a) {
                    let c = *c;
                    let ga = self.grad_buf(*a);
                    for (o, &gv) in ga.iter_mut().zip(g.iter()) {
                        *o += c * gv;
                    }
                }
            }
            Op::Matmul { a, b, trans_b, batch, m, k, n } => {
                let (a, b, trans_b, batch, m, k, n) = (*a, *b, *trans_b, *batch, *m, *k, *n);
                if self.needs(a) {
                    let mut da = vec![E::ZERO; batch * m * k];
                    // dA = dC·Bᵀ, or dC·B when C = A·Bᵀ.
                    bmm(&g, self.data(b), batch, m, n, k, !trans_b, &mut da, true);
                    add_assign(self.grad_buf(a), &da);
                }
                if self.needs(b) {
                    let mut db = vec![E::ZERO; batch * k * n];
                    if trans_b {
                        // dB = dCᵀ·A  (B stored as [n, k])
                        bmm_tn(&g, self.data(a), batch, n, m, k, &mut db, true);
                    } else {
                        // dB = Aᵀ·dC
                        bmm_tn(self.data(a), &g, batch, k, m, n, &mut db, true);
                    }
                    add_assign(self.grad_buf(b), &db);
                }
            }
            Op::Reshape { a } => {
                if self.needs(*a) {
                    add_assign(self.grad_buf(*a), &g);
                }
            }
            Op::Permute { a, axes } => {
                if self.needs(*a) {
                    let out_shape = self.nodes[id].t.shape().to_vec();
                    let inverse = invert_axes(axes);
                    let back = permute_copy(&g, &out_shape, &inverse);
                    add_assign(self.grad_buf(*a), &back);
                }
            }
            Op::Relu { a } => {
                if self.needs(*a) {
                    let active: Vec<bool> = self.data(*a).iter().map(|&v| v > E::ZERO).collect();
                    let ga = self.grad_buf(*a);
                    for ((o, &gv), on) in ga.iter_mut().zip(g.iter()).zip(active) {
                        if on {
                            *o += gv;
                        }
                    }
                }
            }
            Op::Softmax { a } => {
                if self.needs(*a) {
                    let cols = *self.nodes[id].t.shape().last().expect("rank >= 1");
                    let s = self.nodes[id].t.values().to_vec();
                    let ga = self.grad_buf(*a);
                    for ((grow, srow), orow) in g.chunks(cols).zip(s.chunks(cols)).zip(ga.chunks_mut(cols)) {
                        let mut dot = E::ZERO;
                        for (&gv, &sv) in grow.iter().zip(srow.iter()) {
                            dot += gv * sv;
                        }
                        for ((o, &gv), &sv) in orow.iter_mut().zip(grow.iter()).zip(srow.iter()) {
                            *o += sv * (gv - dot);
                        }
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, mean, rstd } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let cols = *self.nodes[id].t.shape().last().expect("rank >= 1");
                let inv_cols = E::ONE / E::from_usize(cols);
                let xdata = self.data(x).to_vec();
                let gdata = self.data(gain).to_vec();
                if self.needs(bias) {
                    let gb = self.grad_buf(bias);
                    for grow in g.chunks(cols) {
                        for (o, &gv) in gb.iter_mut().zip(grow.iter()) {
                            *o += gv;
                        }
                    }
                }
                if self.needs(gain) {
                    let gg = self.grad_buf(gain);
                    for (r, (grow, xrow)) in g.chunks(cols).zip(xdata.chunks(cols)).enumerate() {
                        let (m, rs) = (mean[r], rstd[r]);
                        for ((o, &gv), &xv) in gg.iter_mut().zip(grow.iter()).zip(xrow.iter()) {
                            *o += gv * (xv - m) * rs;
                        }
                    }
                }
                if self.needs(x) {
                    let gx = self.grad_buf(x);
                    for (r, ((grow, xrow), orow)) in
                        g.chunks(cols).zip(xdata.chunks(cols)).zip(gx.chunks_mut(cols)).enumerate()
                    {
                        let (m, rs) = (mean[r], rstd[r]);
                        let mut sum_dy = E::ZERO;
                        let mut sum_dy_xhat = E::ZERO;
                        for ((&gv, &xv), &gw) in grow.iter().zip(xrow.iter()).zip(gdata.iter()) {
                            let dy = gv * gw;
                            sum_dy += dy;
                            sum_dy_xhat += dy * (xv - m) * rs;
                        }
                        let mean_dy = sum_dy * inv_cols;
                        let mean_dy_xhat = sum_dy_xhat * inv_cols;
                        for ((o, (&gv, &xv)), &gw) in
                            orow.iter_mut().zip(grow.iter().zip(xrow.iter())).zip(gdata.iter())
                        {
                            let xhat = (xv - m) * rs;
                            *o += rs * (gv * gw - mean_dy - xhat * mean_dy_xhat);
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                if self.needs(*table) {
                    let d = self.shape(*table)[1];
                    let gt = self.grad_buf(*table);
                    for (grow, &id) in g.chunks(d).zip(ids.iter()) {
                        let trow = &mut gt[id as usize * d..(id as usize + 1) * d];
                        for (o, &gv) in trow.iter_mut().zip(grow.iter()) {
                            *o += gv;
                        }
                    }
                }
            }
            Op::Rope { x, cos_sin, n, hd } => {
                if self.needs(*x) {
                    let mut dx = vec![E::ZERO; g.len()];
                    // Transpose of a rotation is the inverse rotation.
                    rope_apply(&g, cos_sin, *n, *hd, &mut dx, true);
                    add_assign(self.grad_buf(*x), &dx);
                }
            }
            Op::RelLogits { q, wrr, idx, n } => {
                let (q, wrr, n) = (*q, *wrr, *n);
                let qshape = self.shape(q).to_vec();
                let (b, h, hd) = (qshape[0], qshape[1], qshape[3]);
                if self.needs(q) {
                    let wd = self.data(wrr).to_vec();
                    let gq = self.grad_buf(q);
                    let slab = |bh: usize, qslab: &mut [E]| {
                        let hi = bh % h;
                        for i in 0..n {
                            let grow = &g[bh * n * n + i * n..][..n];
                            let qrow = &mut qslab[i * hd..(i + 1) * hd];
                            for (j, &gv) in grow.iter().enumerate() {
                                let r = idx[i * n + j] as usize;
                                let wrow = &wd[(r * h + hi) * hd..][..hd];
                                for (o, &wv) in qrow.iter_mut().zip(wrow.iter()) {
                                    *o += gv * wv;
                                }
                            }
                        }
                    };
                    if b * h * n * n * hd >= 1 << 19 {
                        let block = (b * h).div_ceil(2 * rayon::current_num_threads()).max(1);
                        gq.par_chunks_mut(block * n * hd).enumerate().for_each(|(blk, big)| {
                            for (j, qslab) in big.chunks_mut(n * hd).enumerate() {
                                slab(blk * block + j, qslab);
                            }
                        });
                    } else {
                        for (bh, qslab) in gq.chunks_mut(n * hd).enumerate() {
                            slab(bh, qslab);
                        }
                    }
                }
                if self.needs(wrr) {
                    let qd = self.data(q).to_vec();
                    let gw = self.grad_buf(wrr);
                    for bi in 0..b {
                        for hi in 0..h {
                            let base = (bi * h + hi) * n;
                            for i in 0..n {
                                let qrow = &qd[(base + i) * hd..][..hd];
                                let grow = &g[(base + i) * n..][..n];
                                for (j, &gv) in grow.iter().enumerate() {
                                    let r = idx[i * n + j] as usize;
                                    let wrow = &mut gw[(r * h + hi) * hd..][..hd];
                                    for (o, &qv) in wrow.iter_mut().zip(qrow.iter()) {
                                        *o += gv * qv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::MaskedCrossEntropy { logits, targets, mask, probs, count } => {
                if self.needs(*logits) {
                    let classes = self.data(*logits).len() / mask.len();
                    let scale = g[0] / E::from_usize(*count);
                    let gl = self.grad_buf(*logits);
                    for (r, (orow, prow)) in gl.chunks_mut(classes).zip(probs.chunks(classes)).enumerate() {
                        if !mask[r] {
                            continue;
                        }
                        for (c, (o, &p)) in orow.iter_mut().zip(prow.iter()).enumerate() {
                            let indicator = if c == targets[r] as usize { E::ONE } else { E::ZERO };
                            *o += (p - indicator) * scale;
                        }
                    }
                }
            }
            Op::SumAll { a } => {
                if self.needs(*a) {
                    let gv = g[0];
                    for o in self.grad_buf(*a).iter_mut() {
                        *o += gv;
                    }
                }
            }
        }
        self.nodes[id].op = op;
        self.nodes[id].t.grad = Some(g);
    }

    fn broadcast_apply(
        &self,
        op: &'static str,
        a: TensorRef,
        b: TensorRef,
        f: impl Fn(E, E) -> E,
    ) -> Result<Tensor<E>, NnError> {
        let (ashape, bshape) = (self.shape(a), self.shape(b));
        let (adata, bdata) = (self.data(a), self.data(b));
        if ashape == bshape {
            let out: Vec<E> = adata.iter().zip(bdata.iter()).map(|(&x, &y)| f(x, y)).collect();
            return Tensor::new(out, &ashape.to_vec(), false);
        }
        if broadcast_compatible(ashape, bshape) {
            let out = broadcast_eval(&ashape.to_vec(), adata, ashape, bdata, bshape, f);
            return Tensor::new(out, &ashape.to_vec(), false);
        }
        if broadcast_compatible(bshape, ashape) {
            let out = broadcast_eval(&bshape.to_vec(), bdata, bshape, adata, ashape, |y, x| f(x, y));
            return Tensor::new(out, &bshape.to_vec(), false);
        }
        Err(NnError::ShapeMismatch { op, lhs: ashape.to_vec(), rhs: bshape.to_vec() })
    }
}

impl<E: Real> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

/// Evaluate `f(big, small)` elementwise with `small` broadcast to `big_shape`.
/// `big`'s shape must equal `big_shape`.
fn broadcast_eval<E: Real>(
    big_shape: &[usize],
    big: &[E],
    _big_shape_check: &[usize],
    small: &[E],
    small_shape: &[usize],
    f: impl Fn(E, E) -> E,
) -> Vec<E> {
    // Fast path: small is a pure suffix repetition of big.
    let period = small.len();
    if period > 0 && big.len() % period == 0 && suffix_periodic(big_shape, small_shape) {
        let mut out = vec![E::ZERO; big.len()];
        for (ochunk, bchunk) in out.chunks_mut(period).zip(big.chunks(period)) {
            for ((o, &bv), &sv) in ochunk.iter_mut().zip(bchunk.iter()).zip(small.iter()) {
                *o = f(bv, sv);
            }
        }
        return out;
    }
    // General odometer walk.
    let ndim = big_shape.len();
    let strides = broadcast_strides(big_shape, small_shape);
    let mut out = vec![E::ZERO; big.len()];
    let mut coords = vec![0usize; ndim];
    let mut sidx = 0usize;
    for (flat, o) in out.iter_mut().enumerate() {
        *o = f(big[flat], small[sidx]);
        for d in (0..ndim).rev() {
            coords[d] += 1;
            sidx += strides[d];
            if coords[d] < big_shape[d] {
                break;
            }
            sidx -= strides[d] * coords[d];
            coords[d] = 0;
        }
    }
    out
}

/// Accumulate `g` (shaped `g_shape`) into `target` (shaped `t_shape`),
/// summing over broadcast dimensions.
fn reduce_into<E: Real>(g: &[E], g_shape: &[usize], target: &mut [E], t_shape: &[usize]) {
    if g_shape == t_shape {
        add_assign(target, g);
        return;
    }
    let period = target.len();
    if period > 0 && g.len() % period == 0 && suffix_periodic(g_shape, t_shape) {
        for gchunk in g.chunks(period) {
            for (o, &gv) in target.iter_mut().zip(gchunk.iter()) {
                *o += gv;
            }
        }
        return;
    }
    let ndim = g_shape.len();
    let strides = broadcast_strides(g_shape, t_shape);
    let mut coords = vec![0usize; ndim];
    let mut tidx = 0usize;
    for &gv in g.iter() {
        target[tidx] += gv;
        for d in (0..ndim).rev() {
            coords[d] += 1;
            tidx += strides[d];
            if coords[d] < g_shape[d] {
                break;
            }
            tidx -= strides[d] * coords[d];
            coords[d] = 0;
        }
    }
}

/// Per-dimension strides of `small_shape` right-aligned under `big_shape`,
/// zero where `small` broadcasts.
fn broadcast_strides(big_shape: &[usize], small_shape: &[usize]) -> Vec<usize> {
    let ndim = big_shape.len();
    let off = ndim - small_shape.len();
    let mut strides = vec![0usize; ndim];
    let mut stride = 1usize;
    for d in (0..small_shape.len()).rev() {
        strides[off + d] = if small_shape[d] == 1 { 0 } else { stride };
        stride *= small_shape[d];
    }
    strides
}

/// True when `small_shape` right-aligned equals a suffix of `big_shape` with
/// only leading broadcast dims, i.e. the mapping is `flat % small_len`.
fn suffix_periodic(big_shape: &[usize], small_shape: &[usize]) -> bool {
    let off = big_shape.len() - small_shape.len();
    let first = small_shape.iter().position(|&s| s != 1).unwrap_or(small_shape.len());
    small_shape[first..].iter().zip(&big_shape[off + first..]).all(|(&s, &b)| s == b)
}

fn permute_copy<E: Real>(data: &[E], shape: &[usize], axes: &[usize]) -> Vec<E> {
    // Head split/merge [a,b,c,d] -> [a,c,b,d] is the hot case.
    if axes == [0, 2, 1, 3] {
        let (s0, s1, s2, s3) = (shape[0], shape[1], shape[2], shape[3]);
        let mut out = vec![E::ZERO; data.len()];
        for a in 0..s0 {
            for b in 0..s1 {
                for c in 0..s2 {
                    let src = ((a * s1 + b) * s2 + c) * s3;
                    let dst = ((a * s2 + c) * s1 + b) * s3;
                    out[dst..dst + s3].copy_from_slice(&data[src..src + s3]);
                }
            }
        }
        return out;
    }
    let ndim = shape.len();
    let mut in_strides = vec![1usize; ndim];
    for d in (0..ndim.saturating_sub(1)).rev() {
        in_strides[d] = in_strides[d + 1] * shape[d + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&ax| shape[ax]).collect();
    let out_in_strides: Vec<usize> = axes.iter().map(|&ax| in_strides[ax]).collect();
    let mut out = vec![E::ZERO; data.len()];
    let mut coords = vec![0usize; ndim];
    let mut iidx = 0usize;
    for o in out.iter_mut() {
        *o = data[iidx];
        for d in (0..ndim).rev() {
            coords[d] += 1;
            iidx += out_in_strides[d];
            if coords[d] < out_shape[d] {
                break;
            }
            iidx -= out_in_strides[d] * coords[d];
            coords[d] = 0;
        }
    }
    out
}

fn invert_axes(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; axes.len()];
    for (d, &ax) in axes.iter().enumerate() {
        inv[ax] = d;
    }
    inv
}

fn add_assign<E: Real>(target: &mut [E], src: &[E]) {
    for (o, &v) in target.iter_mut().zip(src.iter()) {
        *o += v;
    }
}

/// Rotate (or inverse-rotate) adjacent pairs of the last axis of
/// `[batch, heads, n, hd]` by the per-(slot, pair) angles in `cos_sin`.
fn rope_apply<E: Real>(data: &[E], cos_sin: &[E], n: usize, hd: usize, out: &mut [E], inverse: bool) {
    let slab = n * hd;
    for (oslab, dslab) in out.chunks_mut(slab).zip(data.chunks(slab)) {
        for j in 0..n {
            let cs = &cos_sin[j * hd..(j + 1) * hd];
            let drow = &dslab[j * hd..(j + 1) * hd];
            let orow = &mut oslab[j * hd..(j + 1) * hd];
            for p in 0..hd / 2 {
                let (c, s) = (cs[2 * p], cs[2 * p + 1]);
                let (x0, x1) = (drow[2 * p], drow[2 * p + 1]);
                if inverse {
                    orow[2 * p] = x0 * c + x1 * s;
                    orow[2 * p + 1] = -(x0 * s) + x1 * c;
                } else {
                    orow[2 * p] = x0 * c - x1 * s;
                    orow[2 * p + 1] = x0 * s + x1 * c;
                }
            }
        }
    }
}
