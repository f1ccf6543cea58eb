//! The autodiff tape: forward primitives and their reverse-mode gradients.

use crate::error::{Error, Result};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

/// How a node was produced; inputs are ids of earlier nodes.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// (batch, m, k) x (batch, k, n) -> (batch, m, n); batch = 1 for 2-d.
    MatMul {
        a: TensorId,
        b: TensorId,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    /// Elementwise sum; `b`'s shape is a suffix of `a`'s and tiles over it.
    Add { a: TensorId, b: TensorId },
    /// Elementwise product with the same suffix-broadcast rule as `Add`.
    Mul { a: TensorId, b: TensorId },
    Scale { a: TensorId, c: f64 },
    Reshape { a: TensorId },
    Permute { a: TensorId, axes: Vec<usize> },
    ConcatLast { a: TensorId, b: TensorId },
    Slice {
        a: TensorId,
        axis: usize,
        start: usize,
        end: usize,
    },
    SoftmaxLast { a: TensorId },
    LogSoftmaxLast { a: TensorId },
    LayerNorm {
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
        eps: f64,
    },
    Gelu { a: TensorId },
    Exp { a: TensorId },
    LnClamped { a: TensorId, floor: f64 },
    GatherRows {
        table: TensorId,
        indices: Vec<usize>,
    },
    MeanAll { a: TensorId },
    SumAll { a: TensorId },
    CrossEntropy {
        logits: TensorId,
        targets: Vec<usize>,
    },
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
}

/// Counters returned by [`Tape::backward`]; the reverse sweep touches each
/// node at most once, so `visited <= nodes`.
#[derive(Debug, Clone, Copy)]
pub struct BackwardStats {
    /// Nodes whose gradient was propagated to their inputs.
    pub visited: usize,
    /// Total nodes recorded on the tape when backward ran.
    pub nodes: usize,
}

/// Records a forward computation and differentiates it in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of nodes recorded so far.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Registers an input tensor.
    pub fn leaf(&mut self, data: Vec<f64>, shape: &[usize], requires_grad: bool) -> Result<TensorId> {
        if data.len() != numel(shape) {
            return Err(Error::invalid(
                "leaf",
                format!("{} values do not fill shape {:?}", data.len(), shape),
            ));
        }
        Ok(self.push(Op::Leaf, shape.to_vec(), data, requires_grad))
    }

    /// Registers an input tensor that never receives a gradient.
    pub fn constant(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<TensorId> {
        self.leaf(data, shape, false)
    }

    /// Registers a scalar constant (shape `[]`).
    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.push(Op::Leaf, vec![], vec![v], false)
    }

    pub fn shape(&self, t: TensorId) -> &[usize] {
        &self.nodes[t.0].shape
    }

    pub fn value(&self, t: TensorId) -> &[f64] {
        &self.nodes[t.0].value
    }

    /// Gradient accumulated by the last [`Tape::backward`], if any.
    pub fn grad(&self, t: TensorId) -> Option<&[f64]> {
        self.grads.get(t.0).and_then(|g| g.as_deref())
    }

    /// Extracts the value of a single-element tensor.
    pub fn to_scalar(&self, t: TensorId) -> Result<f64> {
        let node = &self.nodes[t.0];
        if numel(&node.shape) != 1 {
            return Err(Error::invalid(
                "to_scalar",
                format!("tensor has shape {:?}, expected one element", node.shape),
            ));
        }
        Ok(node.value[0])
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> TensorId {
        debug_assert_eq!(value.len(), numel(&shape));
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
        });
        self.grads.push(None);
        TensorId(self.nodes.len() - 1)
    }

    fn requires(&self, t: TensorId) -> bool {
        self.nodes[t.0].requires_grad
    }

    // ---------------------------------------------------------------- ops

    /// Matrix product. Accepts `(m,k) x (k,n)` or batched `(b,m,k) x (b,k,n)`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (batch, m, k, n) = match (sa.len(), sb.len()) {
            (2, 2) => {
                if sa[1] != sb[0] {
                    return Err(Error::ShapeMismatch { op: "matmul", lhs: sa, rhs: sb });
                }
                (1, sa[0], sa[1], sb[1])
            }
            (3, 3) => {
                if sa[0] != sb[0] || sa[2] != sb[1] {
                    return Err(Error::ShapeMismatch { op: "matmul", lhs: sa, rhs: sb });
                }
                (sa[0], sa[1], sa[2], sb[2])
            }
            _ => return Err(Error::ShapeMismatch { op: "matmul", lhs: sa, rhs: sb }),
        };
        let mut out = vec![0.0; batch * m * n];
        for bi in 0..batch {
            let av = &self.nodes[a.0].value[bi * m * k..(bi + 1) * m * k];
            let bv = &self.nodes[b.0].value[bi * k * n..(bi + 1) * k * n];
            let ov = &mut out[bi * m * n..(bi + 1) * m * n];
            matmul_acc(av, bv, m, k, n, ov);
        }
        let shape = if sa.len() == 2 { vec![m, n] } else { vec![batch, m, n] };
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::MatMul { a, b, batch, m, k, n }, shape, out, rg))
    }

    /// Elementwise sum; `b` may have a shape that is a suffix of `a`'s.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_broadcast(a, b, "add", |x, y| x + y, |a, b| Op::Add { a, b })
    }

    /// Elementwise product; `b` may have a shape that is a suffix of `a`'s.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_broadcast(a, b, "mul", |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    fn binary_broadcast(
        &mut self,
        a: TensorId,
        b: TensorId,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(TensorId, TensorId) -> Op,
    ) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !sa.ends_with(sb) {
            return Err(Error::ShapeMismatch {
                op: name,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let bn = numel(sb).max(1);
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let mut out = Vec::with_capacity(va.len());
        for chunk in va.chunks(bn) {
            out.extend(chunk.iter().zip(vb).map(|(&x, &y)| f(x, y)));
        }
        let shape = sa.to_vec();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(op(a, b), shape, out, rg))
    }

    /// Multiplies every element by a constant.
    pub fn scale(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|&x| x * c).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires(a);
        Ok(self.push(Op::Scale { a, c }, shape, out, rg))
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(&mut self, a: TensorId, shape: &[usize]) -> Result<TensorId> {
        if numel(shape) != numel(self.shape(a)) {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let out = self.nodes[a.0].value.clone();
        let rg = self.requires(a);
        Ok(self.push(Op::Reshape { a }, shape.to_vec(), out, rg))
    }

    /// Reorders axes; `axes` must be a permutation of `0..rank`.
    pub fn permute(&mut self, a: TensorId, axes: &[usize]) -> Result<TensorId> {
        let sa = self.shape(a).to_vec();
        let rank = sa.len();
        let mut seen = vec![false; rank];
        if axes.len() != rank || !axes.iter().all(|&ax| ax < rank && !std::mem::replace(&mut seen[ax], true)) {
            return Err(Error::invalid(
                "permute",
                format!("axes {:?} are not a permutation of 0..{}", axes, rank),
            ));
        }
        let out_shape: Vec<usize> = axes.iter().map(|&ax| sa[ax]).collect();
        let out = permute_data(&self.nodes[a.0].value, &sa, axes, false);
        let rg = self.requires(a);
        Ok(self.push(Op::Permute { a, axes: axes.to_vec() }, out_shape, out, rg))
    }

    /// Concatenates along the last axis; all leading dims must agree.
    pub fn concat_last(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len()
            || sa.is_empty()
            || sa[..sa.len() - 1] != sb[..sb.len() - 1]
        {
            return Err(Error::ShapeMismatch { op: "concat_last", lhs: sa, rhs: sb });
        }
        let (la, lb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let rows = numel(&sa) / la.max(1);
        let mut out = Vec::with_capacity(rows * (la + lb));
        for r in 0..rows {
            out.extend_from_slice(&self.nodes[a.0].value[r * la..(r + 1) * la]);
            out.extend_from_slice(&self.nodes[b.0].value[r * lb..(r + 1) * lb]);
        }
        let mut shape = sa.clone();
        *shape.last_mut().unwrap() = la + lb;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::ConcatLast { a, b }, shape, out, rg))
    }

    /// Takes the half-open range `start..end` along `axis`.
    pub fn slice(&mut self, a: TensorId, axis: usize, start: usize, end: usize) -> Result<TensorId> {
        let sa = self.shape(a).to_vec();
        if axis >= sa.len() || start >= end || end > sa[axis] {
            return Err(Error::invalid(
                "slice",
                format!("range {}..{} on axis {} of shape {:?}", start, end, axis, sa),
            ));
        }
        let outer: usize = sa[..axis].iter().product();
        let inner: usize = sa[axis + 1..].iter().product();
        let len = sa[axis];
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        let va = &self.nodes[a.0].value;
        for o in 0..outer {
            let base = o * len * inner;
            out.extend_from_slice(&va[base + start * inner..base + end * inner]);
        }
        let mut shape = sa;
        shape[axis] = end - start;
        let rg = self.requires(a);
        Ok(self.push(Op::Slice { a, axis, start, end }, shape, out, rg))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: TensorId) -> Result<TensorId> {
        let (shape, out) = self.rowwise(a, "softmax", |row, out| {
            softmax_row(row, out);
        })?;
        let rg = self.requires(a);
        Ok(self.push(Op::SoftmaxLast { a }, shape, out, rg))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: TensorId) -> Result<TensorId> {
        let (shape, out) = self.rowwise(a, "log_softmax", |row, out| {
            let lse = log_sum_exp(row);
            for (o, &x) in out.iter_mut().zip(row) {
                *o = x - lse;
            }
        })?;
        let rg = self.requires(a);
        Ok(self.push(Op::LogSoftmaxLast { a }, shape, out, rg))
    }

    fn rowwise(
        &self,
        a: TensorId,
        name: &'static str,
        f: impl Fn(&[f64], &mut [f64]),
    ) -> Result<(Vec<usize>, Vec<f64>)> {
        let sa = self.shape(a).to_vec();
        let d = *sa.last().ok_or_else(|| Error::invalid(name, "scalar input"))?;
        let va = &self.nodes[a.0].value;
        let mut out = vec![0.0; va.len()];
        for (row, orow) in va.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            f(row, orow);
        }
        Ok((sa, out))
    }

    /// Layer normalisation over the last axis with learnable gain and bias.
    pub fn layer_norm(&mut self, x: TensorId, gain: TensorId, bias: TensorId, eps: f64) -> Result<TensorId> {
        let sx = self.shape(x).to_vec();
        let d = *sx.last().ok_or_else(|| Error::invalid("layer_norm", "scalar input"))?;
        if self.shape(gain) != [d] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: sx,
                rhs: self.shape(gain).to_vec(),
            });
        }
        if self.shape(bias) != [d] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: sx,
                rhs: self.shape(bias).to_vec(),
            });
        }
        let vx = &self.nodes[x.0].value;
        let vg = &self.nodes[gain.0].value;
        let vb = &self.nodes[bias.0].value;
        let mut out = vec![0.0; vx.len()];
        for (row, orow) in vx.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                orow[j] = (row[j] - mean) * inv * vg[j] + vb[j];
            }
        }
        let rg = self.requires(x) || self.requires(gain) || self.requires(bias);
        Ok(self.push(Op::LayerNorm { x, gain, bias, eps }, sx, out, rg))
    }

    /// GELU activation (tanh approximation).
    pub fn gelu(&mut self, a: TensorId) -> Result<TensorId> {
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|&x| gelu_fwd(x)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires(a);
        Ok(self.push(Op::Gelu { a }, shape, out, rg))
    }

    /// Elementwise exponential.
    pub fn exp(&mut self, a: TensorId) -> Result<TensorId> {
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|&x| x.exp()).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires(a);
        Ok(self.push(Op::Exp { a }, shape, out, rg))
    }

    /// Natural log with the input clamped below at `floor` (> 0).
    pub fn ln_clamped(&mut self, a: TensorId, floor: f64) -> Result<TensorId> {
        if !(floor > 0.0) {
            return Err(Error::invalid("ln_clamped", format!("floor {} must be positive", floor)));
        }
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|&x| x.max(floor).ln()).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires(a);
        Ok(self.push(Op::LnClamped { a, floor }, shape, out, rg))
    }

    /// Selects rows of a 2-d tensor; the same row may appear many times.
    pub fn gather_rows(&mut self, table: TensorId, indices: &[usize]) -> Result<TensorId> {
        let st = self.shape(table).to_vec();
        if st.len() != 2 {
            return Err(Error::invalid(
                "gather_rows",
                format!("table must be 2-d, got {:?}", st),
            ));
        }
        let (rows, cols) = (st[0], st[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::invalid(
                "gather_rows",
                format!("row index {} out of bounds for {} rows", bad, rows),
            ));
        }
        let vt = &self.nodes[table.0].value;
        let mut out = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            out.extend_from_slice(&vt[i * cols..(i + 1) * cols]);
        }
        let rg = self.requires(table);
        Ok(self.push(
            Op::GatherRows { table, indices: indices.to_vec() },
            vec![indices.len(), cols],
            out,
            rg,
        ))
    }

    /// Mean of all elements; result is a scalar (shape `[]`).
    pub fn mean_all(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.nodes[a.0].value;
        if va.is_empty() {
            return Err(Error::invalid("mean_all", "empty tensor"));
        }
        let v = va.iter().sum::<f64>() / va.len() as f64;
        let rg = self.requires(a);
        Ok(self.push(Op::MeanAll { a }, vec![], vec![v], rg))
    }

    /// Sum of all elements; result is a scalar (shape `[]`).
    pub fn sum_all(&mut self, a: TensorId) -> Result<TensorId> {
        let v = self.nodes[a.0].value.iter().sum::<f64>();
        let rg = self.requires(a);
        Ok(self.push(Op::SumAll { a }, vec![], vec![v], rg))
    }

    /// Mean cross-entropy of row-wise logits against integer class targets.
    pub fn cross_entropy(&mut self, logits: TensorId, targets: &[usize]) -> Result<TensorId> {
        let sl = self.shape(logits).to_vec();
        if sl.len() != 2 {
            return Err(Error::invalid(
                "cross_entropy",
                format!("logits must be 2-d, got {:?}", sl),
            ));
        }
        let (rows, classes) = (sl[0], sl[1]);
        if targets.len() != rows {
            return Err(Error::invalid(
                "cross_entropy",
                format!("{} targets for {} logit rows", targets.len(), rows),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
            return Err(Error::invalid(
                "cross_entropy",
                format!("target class {} out of range {}", bad, classes),
            ));
        }
        let vl = &self.nodes[logits.0].value;
        let mut total = 0.0;
        for (r, row) in vl.chunks_exact(classes).enumerate() {
            total += log_sum_exp(row) - row[targets[r]];
        }
        let v = total / rows as f64;
        let rg = self.requires(logits);
        Ok(self.push(
            Op::CrossEntropy { logits, targets: targets.to_vec() },
            vec![],
            vec![v],
            rg,
        ))
    }

    // ----------------------------------------------------------- backward

    /// Accumulates gradients of `loss` with respect to every tensor that
    /// requires them. `loss` must be a single-element tensor.
    pub fn backward(&mut self, loss: TensorId) -> Result<BackwardStats> {
        let shape = self.shape(loss);
        if numel(shape) != 1 {
            return Err(Error::invalid(
                "backward",
                format!("loss has shape {:?}, expected a scalar", shape),
            ));
        }
        if !self.requires(loss) {
            return Err(Error::invalid(
                "backward",
                "loss does not depend on any tensor that requires gradients",
            ));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![1.0]);
        let mut visited = 0usize;
        for i in (0..=loss.0).rev() {
            if self.grads[i].is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let upstream = self.grads[i].take().unwrap();
            visited += 1;
            self.propagate(i, &upstream);
            self.grads[i] = Some(upstream);
        }
        Ok(BackwardStats {
            visited,
            nodes: self.nodes.len(),
        })
    }

    /// Adds `delta` into the gradient buffer of `t` if it requires gradients.
    fn accumulate(&mut self, t: TensorId, delta: impl FnOnce(&mut [f64])) {
        if !self.nodes[t.0].requires_grad {
            return;
        }
        let len = self.nodes[t.0].value.len();
        let g = self.grads[t.0].get_or_insert_with(|| vec![0.0; len]);
        delta(g);
    }

    fn propagate(&mut self, i: usize, up: &[f64]) {
        // Local copies of the op metadata keep the borrow checker happy while
        // we read sibling node values and write input gradients.
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::MatMul { a, b, batch, m, k, n } => {
                if self.requires(a) {
                    let mut da = vec![0.0; batch * m * k];
                    for bi in 0..batch {
                        let u = &up[bi * m * n..(bi + 1) * m * n];
                        let bv = &self.nodes[b.0].value[bi * k * n..(bi + 1) * k * n];
                        let d = &mut da[bi * m * k..(bi + 1) * m * k];
                        // dA = dC . B^T
                        for r in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for (uv, bvv) in u[r * n..(r + 1) * n].iter().zip(&bv[p * n..(p + 1) * n]) {
                                    s += uv * bvv;
                                }
                                d[r * k + p] += s;
                            }
                        }
                    }
                    self.accumulate(a, |g| axpy(g, &da));
                }
                if self.requires(b) {
                    let mut db = vec![0.0; batch * k * n];
                    for bi in 0..batch {
                        let u = &up[bi * m * n..(bi + 1) * m * n];
                        let av = &self.nodes[a.0].value[bi * m * k..(bi + 1) * m * k];
                        let d = &mut db[bi * k * n..(bi + 1) * k * n];
                        // dB = A^T . dC
                        for r in 0..m {
                            for p in 0..k {
                                let c = av[r * k + p];
                                for (dv, uv) in d[p * n..(p + 1) * n].iter_mut().zip(&u[r * n..(r + 1) * n]) {
                                    *dv += c * uv;
                                }
                            }
                        }
                    }
                    self.accumulate(b, |g| axpy(g, &db));
                }
            }
            Op::Add { a, b } => {
                self.accumulate(a, |g| axpy(g, up));
                if self.requires(b) {
                    let bn = self.nodes[b.0].value.len();
                    self.accumulate(b, |g| {
                        for chunk in up.chunks(bn) {
                            axpy(g, chunk);
                        }
                    });
                }
            }
            Op::Mul { a, b } => {
                let bn = self.nodes[b.0].value.len();
                if self.requires(a) {
                    let vb = self.nodes[b.0].value.clone();
                    self.accumulate(a, |g| {
                        for (gc, uc) in g.chunks_mut(bn).zip(up.chunks(bn)) {
                            for ((gv, &uv), &bv) in gc.iter_mut().zip(uc).zip(&vb) {
                                *gv += uv * bv;
                            }
                        }
                    });
                }
                if self.requires(b) {
                    let va = self.nodes[a.0].value.clone();
                    self.accumulate(b, |g| {
                        for (ac, uc) in va.chunks(bn).zip(up.chunks(bn)) {
                            for ((gv, &uv), &av) in g.iter_mut().zip(uc).zip(ac) {
                                *gv += uv * av;
                            }
                        }
                    });
                }
            }
            Op::Scale { a, c } => {
                self.accumulate(a, |g| {
                    for (gv, &uv) in g.iter_mut().zip(up) {
                        *gv += c * uv;
                    }
                });
            }
            Op::Reshape { a } => {
                self.accumulate(a, |g| axpy(g, up));
            }
            Op::Permute { a, axes } => {
                if self.requires(a) {
                    let da = permute_data(up, &self.nodes[i].shape, &inverse_axes(&axes), false);
                    self.accumulate(a, |g| axpy(g, &da));
                }
            }
            Op::ConcatLast { a, b } => {
                let la = *self.nodes[a.0].shape.last().unwrap();
                let lb = *self.nodes[b.0].shape.last().unwrap();
                let rows = self.nodes[a.0].value.len() / la.max(1);
                if self.requires(a) {
                    self.accumulate(a, |g| {
                        for r in 0..rows {
                            axpy(&mut g[r * la..(r + 1) * la], &up[r * (la + lb)..r * (la + lb) + la]);
                        }
                    });
                }
                if self.requires(b) {
                    self.accumulate(b, |g| {
                        for r in 0..rows {
                            axpy(
                                &mut g[r * lb..(r + 1) * lb],
                                &up[r * (la + lb) + la..(r + 1) * (la + lb)],
                            );
                        }
                    });
                }
            }
            Op::Slice { a, axis, start, end } => {
                if self.requires(a) {
                    let sa = self.nodes[a.0].shape.clone();
                    let outer: usize = sa[..axis].iter().product();
                    let inner: usize = sa[axis + 1..].iter().product();
                    let len = sa[axis];
                    let span = (end - start) * inner;
                    self.accumulate(a, |g| {
                        for o in 0..outer {
                            let base = o * len * inner + start * inner;
                            axpy(&mut g[base..base + span], &up[o * span..(o + 1) * span]);
                        }
                    });
                }
            }
            Op::SoftmaxLast { a } => {
                if self.requires(a) {
                    let d = *self.nodes[i].shape.last().unwrap();
                    let s = self.nodes[i].value.clone();
                    self.accumulate(a, |g| {
                        for ((gc, uc), sc) in g.chunks_mut(d).zip(up.chunks(d)).zip(s.chunks(d)) {
                            let dot: f64 = uc.iter().zip(sc).map(|(&u, &sv)| u * sv).sum();
                            for ((gv, &uv), &sv) in gc.iter_mut().zip(uc).zip(sc) {
                                *gv += sv * (uv - dot);
                            }
                        }
                    });
                }
            }
            Op::LogSoftmaxLast { a } => {
                if self.requires(a) {
                    let d = *self.nodes[i].shape.last().unwrap();
                    let y = self.nodes[i].value.clone();
                    self.accumulate(a, |g| {
                        for ((gc, uc), yc) in g.chunks_mut(d).zip(up.chunks(d)).zip(y.chunks(d)) {
                            let total: f64 = uc.iter().sum();
                            for ((gv, &uv), &yv) in gc.iter_mut().zip(uc).zip(yc) {
                                *gv += uv - yv.exp() * total;
                            }
                        }
                    });
                }
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let d = *self.nodes[i].shape.last().unwrap();
                let vx = self.nodes[x.0].value.clone();
                let vg = self.nodes[gain.0].value.clone();
                if self.requires(gain) {
                    let mut dg = vec![0.0; d];
                    for (row, uc) in vx.chunks_exact(d).zip(up.chunks_exact(d)) {
                        let (mean, inv) = row_stats(row, eps);
                        for j in 0..d {
                            dg[j] += uc[j] * (row[j] - mean) * inv;
                        }
                    }
                    self.accumulate(gain, |g| axpy(g, &dg));
                }
                if self.requires(bias) {
                    let mut db = vec![0.0; d];
                    for uc in up.chunks_exact(d) {
                        axpy(&mut db, uc);
                    }
                    self.accumulate(bias, |g| axpy(g, &db));
                }
                if self.requires(x) {
                    let mut dx = vec![0.0; vx.len()];
                    for ((row, uc), dc) in vx.chunks_exact(d).zip(up.chunks_exact(d)).zip(dx.chunks_exact_mut(d)) {
                        let (mean, inv) = row_stats(row, eps);
                        let mut sum_dh = 0.0;
                        let mut sum_dh_xh = 0.0;
                        for j in 0..d {
                            let xh = (row[j] - mean) * inv;
                            let dh = uc[j] * vg[j];
                            sum_dh += dh;
                            sum_dh_xh += dh * xh;
                        }
                        let dn = d as f64;
                        for j in 0..d {
                            let xh = (row[j] - mean) * inv;
                            let dh = uc[j] * vg[j];
                            dc[j] = (dh - sum_dh / dn - xh * sum_dh_xh / dn) * inv;
                        }
                    }
                    self.accumulate(x, |g| axpy(g, &dx));
                }
            }
            Op::Gelu { a } => {
                if self.requires(a) {
                    let va = self.nodes[a.0].value.clone();
                    self.accumulate(a, |g| {
                        for ((gv, &uv), &xv) in g.iter_mut().zip(up).zip(&va) {
                            *gv += uv * gelu_bwd(xv);
                        }
                    });
                }
            }
            Op::Exp { a } => {
                if self.requires(a) {
                    let y = self.nodes[i].value.clone();
                    self.accumulate(a, |g| {
                        for ((gv, &uv), &yv) in g.iter_mut().zip(up).zip(&y) {
                            *gv += uv * yv;
                        }
                    });
                }
            }
            Op::LnClamped { a, floor } => {
                if self.requires(a) {
                    let va = self.nodes[a.0].value.clone();
                    self.accumulate(a, |g| {
                        for ((gv, &uv), &xv) in g.iter_mut().zip(up).zip(&va) {
                            if xv > floor {
                                *gv += uv / xv;
                            }
                        }
                    });
                }
            }
            Op::GatherRows { table, indices } => {
                if self.requires(table) {
                    let cols = self.nodes[table.0].shape[1];
                    self.accumulate(table, |g| {
                        for (r, &idx) in indices.iter().enumerate() {
                            axpy(&mut g[idx * cols..(idx + 1) * cols], &up[r * cols..(r + 1) * cols]);
                        }
                    });
                }
            }
            Op::MeanAll { a } => {
                if self.requires(a) {
                    let n = self.nodes[a.0].value.len() as f64;
                    let u = up[0] / n;
                    self.accumulate(a, |g| {
                        for gv in g.iter_mut() {
                            *gv += u;
                        }
                    });
                }
            }
            Op::SumAll { a } => {
                let u = up[0];
                self.accumulate(a, |g| {
                    for gv in g.iter_mut() {
                        *gv += u;
                    }
                });
            }
            Op::CrossEntropy { logits, targets } => {
                if self.requires(logits) {
                    let classes = self.nodes[logits.0].shape[1];
                    let vl = self.nodes[logits.0].value.clone();
                    let rows = targets.len();
                    let u = up[0] / rows as f64;
                    self.accumulate(logits, |g| {
                        let mut sm = vec![0.0; classes];
                        for (r, row) in vl.chunks_exact(classes).enumerate() {
                            softmax_row(row, &mut sm);
                            let gc = &mut g[r * classes..(r + 1) * classes];
                            for (gv, &sv) in gc.iter_mut().zip(&sm) {
                                *gv += u * sv;
                            }
                            gc[targets[r]] -= u;
                        }
                    });
                }
            }
        }
    }
}

// ------------------------------------------------------------------ helpers

fn axpy(acc: &mut [f64], delta: &[f64]) {
    debug_assert_eq!(acc.len(), delta.len());
    for (a, &d) in acc.iter_mut().zip(delta) {
        *a += d;
    }
}

fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (ov, &bv) in orow.iter_mut().zip(brow) {
                *ov += av * bv;
            }
        }
    }
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

const GELU_SCALE: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_CUBIC: f64 = 0.044715;

fn gelu_fwd(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_SCALE * (x + GELU_CUBIC * x * x * x)).tanh())
}

fn gelu_bwd(x: f64) -> f64 {
    let u = GELU_SCALE * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_SCALE * (1.0 + 3.0 * GELU_CUBIC * x * x)
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let d = row.len() as f64;
    let mean = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d;
    (mean, 1.0 / (var + eps).sqrt())
}

fn inverse_axes(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; axes.len()];
    for (i, &ax) in axes.iter().enumerate() {
        inv[ax] = i;
    }
    inv
}

/// Rearranges `data` with shape `shape` so that axis `axes[i]` of the input
/// becomes axis `i` of the output.
fn permute_data(data: &[f64], in_shape: &[usize], axes: &[usize], _unused: bool) -> Vec<f64> {
    let rank = in_shape.len();
    if rank == 0 {
        return data.to_vec();
    }
    let out_shape: Vec<usize> = axes.iter().map(|&ax| in_shape[ax]).collect();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank - 1).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    let mut out = vec![0.0; data.len()];
    let mut idx = vec![0usize; rank];
    for ov in out.iter_mut() {
        let mut src = 0;
        for (i, &ax) in axes.iter().enumerate() {
            src += idx[i] * in_strides[ax];
        }
        *ov = data[src];
        for i in (0..rank).rev() {
            idx[i] += 1;
            if idx[i] < out_shape[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    out
}
