//! Reverse-mode differentiation over a recorded tape.
//!
//! A forward pass appends nodes to a [`Tape`]; [`Tape::backward`] replays the
//! recording in reverse and returns exact gradients for every recorded input.
//! Only the primitives the translation model needs are provided. Tensors held
//! by the tape are immutable once produced; independent tapes never interfere.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(u32);

impl ValueId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Constant,
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Scale(ValueId, f64),
    AddN(Box<[ValueId]>),
    MatMul(ValueId, ValueId),
    MatVec(ValueId, ValueId),
    Dot(ValueId, ValueId),
    Sigmoid(ValueId),
    Tanh(ValueId),
    Concat(Box<[ValueId]>),
    Slice { src: ValueId, start: usize },
    Softmax(ValueId),
    CrossEntropy { logits: ValueId, target: usize },
    Row { matrix: ValueId, row: usize },
    MaxOver(Box<[ValueId]>),
    WeightedSum { weights: ValueId, items: Box<[ValueId]> },
    Sum(ValueId),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Gradients returned by [`Tape::backward`], indexed by [`ValueId`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, id: ValueId) -> Option<&Tensor> {
        self.grads.get(id.idx()).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: ValueId) -> Option<Tensor> {
        self.grads.get_mut(id.idx()).and_then(|g| g.take())
    }
}

/// Single-writer recording of one forward pass.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.idx()].value
    }

    pub fn value_shared(&self, id: ValueId) -> Arc<Tensor> {
        Arc::clone(&self.nodes[id.idx()].value)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> ValueId {
        self.push_shared(Arc::new(value), op, needs_grad)
    }

    fn push_shared(&mut self, value: Arc<Tensor>, op: Op, needs_grad: bool) -> ValueId {
        let id = ValueId(self.nodes.len() as u32);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        id
    }

    fn any_needs_grad(&self, ids: &[ValueId]) -> bool {
        ids.iter().any(|id| self.nodes[id.idx()].needs_grad)
    }

    /// Record a differentiable leaf (a parameter or input to optimize).
    pub fn input(&mut self, value: Tensor) -> ValueId {
        self.push(value, Op::Input, true)
    }

    /// Record a differentiable leaf without copying the tensor.
    pub fn input_shared(&mut self, value: Arc<Tensor>) -> ValueId {
        self.push_shared(value, Op::Input, true)
    }

    /// Record a non-differentiable leaf (data, dropout masks).
    pub fn constant(&mut self, value: Tensor) -> ValueId {
        self.push(value, Op::Constant, false)
    }

    pub fn constant_shared(&mut self, value: Arc<Tensor>) -> ValueId {
        self.push_shared(value, Op::Constant, false)
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.elementwise_pair("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.elementwise_pair("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.elementwise_pair("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn elementwise_pair(
        &mut self,
        op_name: &'static str,
        a: ValueId,
        b: ValueId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dimension(
                op_name,
                format!("{} vs {}", ta.shape_string(), tb.shape_string()),
            ));
        }
        let data: Vec<f64> = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let value = Tensor::from_vec(ta.shape(), data)?;
        let needs = self.any_needs_grad(&[a, b]);
        Ok(self.push(value, op, needs))
    }

    pub fn scale(&mut self, a: ValueId, c: f64) -> ValueId {
        let data: Vec<f64> = self.value(a).data().iter().map(|x| c * x).collect();
        let value = Tensor::from_vec(self.value(a).shape(), data).expect("same shape");
        let needs = self.nodes[a.idx()].needs_grad;
        self.push(value, Op::Scale(a, c), needs)
    }

    /// Sum of any number of same-shape tensors.
    pub fn add_n(&mut self, ids: &[ValueId]) -> Result<ValueId> {
        if ids.is_empty() {
            return Err(Error::dimension("add_n", "empty operand list".to_string()));
        }
        let shape = self.value(ids[0]).shape().to_vec();
        let mut data = vec![0.0; self.value(ids[0]).len()];
        for &id in ids {
            let t = self.value(id);
            if t.shape() != shape.as_slice() {
                return Err(Error::dimension(
                    "add_n",
                    format!("{} vs {}", crate::error::shape_string(&shape), t.shape_string()),
                ));
            }
            for (acc, x) in data.iter_mut().zip(t.data()) {
                *acc += x;
            }
        }
        let needs = self.any_needs_grad(ids);
        Ok(self.push(Tensor::from_vec(&shape, data)?, Op::AddN(ids.into()), needs))
    }

    /// Standard matrix product `[m x k] . [k x n] -> [m x n]`.
    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (m, ka) = self.value(a).expect_matrix("matmul")?;
        let (kb, n) = self.value(b).expect_matrix("matmul")?;
        if ka != kb {
            return Err(Error::dimension(
                "matmul",
                format!(
                    "{} vs {}",
                    self.value(a).shape_string(),
                    self.value(b).shape_string()
                ),
            ));
        }
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..ka {
                let aip = va[i * ka + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &vb[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, x) in orow.iter_mut().zip(brow) {
                    *o += aip * x;
                }
            }
        }
        let needs = self.any_needs_grad(&[a, b]);
        Ok(self.push(Tensor::from_vec(&[m, n], out)?, Op::MatMul(a, b), needs))
    }

    /// Matrix-vector product `[m x k] . [k] -> [m]`.
    pub fn matvec(&mut self, w: ValueId, x: ValueId) -> Result<ValueId> {
        let (m, k) = self.value(w).expect_matrix("matvec")?;
        let xk = self.value(x).expect_vector("matvec")?;
        if k != xk {
            return Err(Error::dimension(
                "matvec",
                format!(
                    "{} vs {}",
                    self.value(w).shape_string(),
                    self.value(x).shape_string()
                ),
            ));
        }
        let vw = self.value(w).data();
        let vx = self.value(x).data();
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &vw[i * k..(i + 1) * k];
            let mut s = 0.0;
            for (a, b) in row.iter().zip(vx) {
                s += a * b;
            }
            out[i] = s;
        }
        let needs = self.any_needs_grad(&[w, x]);
        Ok(self.push(Tensor::vector(out), Op::MatVec(w, x), needs))
    }

    /// Inner product of two same-width vectors, as a width-1 tensor.
    pub fn dot(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let na = self.value(a).expect_vector("dot")?;
        let nb = self.value(b).expect_vector("dot")?;
        if na != nb {
            return Err(Error::dimension(
                "dot",
                format!(
                    "{} vs {}",
                    self.value(a).shape_string(),
                    self.value(b).shape_string()
                ),
            ));
        }
        let s: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .sum();
        let needs = self.any_needs_grad(&[a, b]);
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b), needs))
    }

    pub fn sigmoid(&mut self, a: ValueId) -> ValueId {
        let data: Vec<f64> = self.value(a).data().iter().map(|x| sigmoid(*x)).collect();
        let value = Tensor::from_vec(self.value(a).shape(), data).expect("same shape");
        let needs = self.nodes[a.idx()].needs_grad;
        self.push(value, Op::Sigmoid(a), needs)
    }

    pub fn tanh(&mut self, a: ValueId) -> ValueId {
        let data: Vec<f64> = self.value(a).data().iter().map(|x| x.tanh()).collect();
        let value = Tensor::from_vec(self.value(a).shape(), data).expect("same shape");
        let needs = self.nodes[a.idx()].needs_grad;
        self.push(value, Op::Tanh(a), needs)
    }

    /// Concatenate vectors in order.
    pub fn concat(&mut self, ids: &[ValueId]) -> Result<ValueId> {
        if ids.is_empty() {
            return Err(Error::dimension("concat", "empty operand list".to_string()));
        }
        let mut data = Vec::new();
        for &id in ids {
            self.value(id).expect_vector("concat")?;
            data.extend_from_slice(self.value(id).data());
        }
        let needs = self.any_needs_grad(ids);
        Ok(self.push(Tensor::vector(data), Op::Concat(ids.into()), needs))
    }

    /// Contiguous sub-vector `[start, start + len)`.
    pub fn slice(&mut self, src: ValueId, start: usize, len: usize) -> Result<ValueId> {
        let width = self.value(src).expect_vector("slice")?;
        if start + len > width {
            return Err(Error::dimension(
                "slice",
                format!("range {start}..{} of [{width}]", start + len),
            ));
        }
        let data = self.value(src).data()[start..start + len].to_vec();
        let needs = self.nodes[src.idx()].needs_grad;
        Ok(self.push(Tensor::vector(data), Op::Slice { src, start }, needs))
    }

    /// Probability vector over a nonempty logit vector, max-subtracted for
    /// stability.
    pub fn softmax(&mut self, a: ValueId) -> Result<ValueId> {
        let n = self.value(a).expect_vector("softmax")?;
        if n == 0 {
            return Err(Error::dimension("softmax", "empty input [0]".to_string()));
        }
        let data = softmax_slice(self.value(a).data());
        let needs = self.nodes[a.idx()].needs_grad;
        Ok(self.push(Tensor::vector(data), Op::Softmax(a), needs))
    }

    /// Negative log-likelihood of `target` under `softmax(logits)`, computed
    /// as `logsumexp(logits) - logits[target]`.
    pub fn cross_entropy(&mut self, logits: ValueId, target: usize) -> Result<ValueId> {
        let n = self.value(logits).expect_vector("cross_entropy")?;
        if target >= n {
            return Err(Error::Domain(format!(
                "cross_entropy target {target} out of range for [{n}]"
            )));
        }
        let xs = self.value(logits).data();
        let loss = log_sum_exp(xs) - xs[target];
        let needs = self.nodes[logits.idx()].needs_grad;
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, target }, needs))
    }

    /// Copy one row of a matrix (embedding lookup).
    pub fn row(&mut self, matrix: ValueId, row: usize) -> Result<ValueId> {
        let (rows, cols) = self.value(matrix).expect_matrix("row")?;
        if row >= rows {
            return Err(Error::Domain(format!("row {row} out of range for {rows} rows")));
        }
        let data = self.value(matrix).data()[row * cols..(row + 1) * cols].to_vec();
        let needs = self.nodes[matrix.idx()].needs_grad;
        Ok(self.push(Tensor::vector(data), Op::Row { matrix, row }, needs))
    }

    /// Per-dimension maximum across same-shape tensors. Gradient flows to the
    /// first operand attaining the maximum.
    pub fn max_over(&mut self, ids: &[ValueId]) -> Result<ValueId> {
        if ids.is_empty() {
            return Err(Error::dimension("max_over", "empty operand list".to_string()));
        }
        let shape = self.value(ids[0]).shape().to_vec();
        let mut data = self.value(ids[0]).data().to_vec();
        for &id in &ids[1..] {
            let t = self.value(id);
            if t.shape() != shape.as_slice() {
                return Err(Error::dimension(
                    "max_over",
                    format!("{} vs {}", crate::error::shape_string(&shape), t.shape_string()),
                ));
            }
            for (acc, x) in data.iter_mut().zip(t.data()) {
                if *x > *acc {
                    *acc = *x;
                }
            }
        }
        let needs = self.any_needs_grad(ids);
        Ok(self.push(Tensor::from_vec(&shape, data)?, Op::MaxOver(ids.into()), needs))
    }

    /// `sum_i weights[i] * items[i]` for same-shape vector items.
    pub fn weighted_sum(&mut self, weights: ValueId, items: &[ValueId]) -> Result<ValueId> {
        let n = self.value(weights).expect_vector("weighted_sum")?;
        if n != items.len() {
            return Err(Error::dimension(
                "weighted_sum",
                format!("{n} weights vs {} items", items.len()),
            ));
        }
        if items.is_empty() {
            return Err(Error::dimension("weighted_sum", "empty operand list".to_string()));
        }
        let shape = self.value(items[0]).shape().to_vec();
        let mut data = vec![0.0; self.value(items[0]).len()];
        for (i, &item) in items.iter().enumerate() {
            let t = self.value(item);
            if t.shape() != shape.as_slice() {
                return Err(Error::dimension(
                    "weighted_sum",
                    format!("{} vs {}", crate::error::shape_string(&shape), t.shape_string()),
                ));
            }
            let w = self.value(weights).data()[i];
            for (acc, x) in data.iter_mut().zip(t.data()) {
                *acc += w * x;
            }
        }
        let needs = self.any_needs_grad(items) || self.nodes[weights.idx()].needs_grad;
        Ok(self.push(
            Tensor::from_vec(&shape, data)?,
            Op::WeightedSum {
                weights,
                items: items.into(),
            },
            needs,
        ))
    }

    /// Sum of all elements, as a width-1 tensor.
    pub fn sum(&mut self, a: ValueId) -> ValueId {
        let s: f64 = self.value(a).data().iter().sum();
        let needs = self.nodes[a.idx()].needs_grad;
        self.push(Tensor::scalar(s), Op::Sum(a), needs)
    }

    /// Reverse-mode gradients of `output` seeded with all-ones, for every
    /// recorded input and intermediate.
    pub fn backward(&self, output: ValueId) -> Result<Gradients> {
        let seed = Tensor::from_vec(
            self.value_checked(output)?.shape(),
            vec![1.0; self.value(output).len()],
        )?;
        self.backward_with(output, &seed)
    }

    /// Reverse-mode gradients with an explicit output gradient.
    pub fn backward_with(&self, output: ValueId, output_grad: &Tensor) -> Result<Gradients> {
        let out_val = self.value_checked(output)?;
        if out_val.shape() != output_grad.shape() {
            return Err(Error::dimension(
                "backward",
                format!("{} vs {}", out_val.shape_string(), output_grad.shape_string()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.idx()] = Some(output_grad.clone());

        for i in (0..=output.idx()).rev() {
            if grads[i].is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            let (before, rest) = grads.split_at_mut(i);
            let g = rest[0].as_ref().expect("checked above");
            self.propagate(i, g, before);
        }
        Ok(Gradients { grads })
    }

    fn value_checked(&self, id: ValueId) -> Result<&Tensor> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward before forward: tape is empty".to_string()));
        }
        if id.idx() >= self.nodes.len() {
            return Err(Error::State(format!(
                "value id {} out of range for tape of {} nodes",
                id.idx(),
                self.nodes.len()
            )));
        }
        Ok(self.value(id))
    }

    /// Push node `i`'s gradient into its inputs. `before` holds the gradient
    /// slots of all nodes with index < i.
    fn propagate(&self, i: usize, g: &Tensor, before: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let mut accum = |id: ValueId, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[id.idx()].needs_grad {
                return;
            }
            let slot = &mut before[id.idx()];
            if slot.is_none() {
                *slot = Some(Tensor::zeros(self.value(id).shape()));
            }
            f(slot.as_mut().expect("just filled").data_mut());
        };
        match &node.op {
            Op::Input | Op::Constant => {}
            Op::Add(a, b) => {
                accum(*a, &mut |ga| add_assign(ga, g.data()));
                accum(*b, &mut |gb| add_assign(gb, g.data()));
            }
            Op::Sub(a, b) => {
                accum(*a, &mut |ga| add_assign(ga, g.data()));
                accum(*b, &mut |gb| {
                    for (o, x) in gb.iter_mut().zip(g.data()) {
                        *o -= x;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                accum(*a, &mut |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(g.data()).zip(vb) {
                        *o += x * y;
                    }
                });
                accum(*b, &mut |gb| {
                    for ((o, x), y) in gb.iter_mut().zip(g.data()).zip(va) {
                        *o += x * y;
                    }
                });
            }
            Op::Scale(a, c) => {
                let c = *c;
                accum(*a, &mut |ga| {
                    for (o, x) in ga.iter_mut().zip(g.data()) {
                        *o += c * x;
                    }
                });
            }
            Op::AddN(ids) => {
                for &id in ids.iter() {
                    accum(id, &mut |gi| add_assign(gi, g.data()));
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                let n = self.value(*b).shape()[1];
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let gd = g.data();
                // dA = G . B^T
                accum(*a, &mut |ga| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += gd[i * n + j] * vb[p * n + j];
                            }
                            ga[i * k + p] += s;
                        }
                    }
                });
                // dB = A^T . G
                accum(*b, &mut |gb| {
                    for p in 0..k {
                        for i in 0..m {
                            let aip = va[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                gb[p * n + j] += aip * gd[i * n + j];
                            }
                        }
                    }
                });
            }
            Op::MatVec(w, x) => {
                let (m, k) = (self.value(*w).shape()[0], self.value(*w).shape()[1]);
                let (vw, vx) = (self.value(*w).data(), self.value(*x).data());
                let gd = g.data();
                accum(*w, &mut |gw| {
                    for i in 0..m {
                        let gi = gd[i];
                        if gi == 0.0 {
                            continue;
                        }
                        let row = &mut gw[i * k..(i + 1) * k];
                        for (o, xv) in row.iter_mut().zip(vx) {
                            *o += gi * xv;
                        }
                    }
                });
                accum(*x, &mut |gx| {
                    for i in 0..m {
                        let gi = gd[i];
                        if gi == 0.0 {
                            continue;
                        }
                        let row = &vw[i * k..(i + 1) * k];
                        for (o, wv) in gx.iter_mut().zip(row) {
                            *o += gi * wv;
                        }
                    }
                });
            }
            Op::Dot(a, b) => {
                let gs = g.data()[0];
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                accum(*a, &mut |ga| {
                    for (o, y) in ga.iter_mut().zip(vb) {
                        *o += gs * y;
                    }
                });
                accum(*b, &mut |gb| {
                    for (o, x) in gb.iter_mut().zip(va) {
                        *o += gs * x;
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                accum(*a, &mut |ga| {
                    for ((o, x), yv) in ga.iter_mut().zip(g.data()).zip(y) {
                        *o += x * yv * (1.0 - yv);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                accum(*a, &mut |ga| {
                    for ((o, x), yv) in ga.iter_mut().zip(g.data()).zip(y) {
                        *o += x * (1.0 - yv * yv);
                    }
                });
            }
            Op::Concat(ids) => {
                let mut offset = 0;
                for &id in ids.iter() {
                    let len = self.value(id).len();
                    accum(id, &mut |gi| add_assign(gi, &g.data()[offset..offset + len]));
                    offset += len;
                }
            }
            Op::Slice { src, start } => {
                let start = *start;
                let len = node.value.len();
                accum(*src, &mut |gs| {
                    add_assign(&mut gs[start..start + len], g.data());
                });
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let dot: f64 = y.iter().zip(g.data()).map(|(p, x)| p * x).sum();
                accum(*a, &mut |ga| {
                    for ((o, p), x) in ga.iter_mut().zip(y).zip(g.data()) {
                        *o += p * (x - dot);
                    }
                });
            }
            Op::CrossEntropy { logits, target } => {
                let gs = g.data()[0];
                let probs = softmax_slice(self.value(*logits).data());
                let target = *target;
                accum(*logits, &mut |gl| {
                    for (j, (o, p)) in gl.iter_mut().zip(&probs).enumerate() {
                        let indicator = if j == target { 1.0 } else { 0.0 };
                        *o += gs * (p - indicator);
                    }
                });
            }
            Op::Row { matrix, row } => {
                let cols = node.value.len();
                let start = row * cols;
                accum(*matrix, &mut |gm| {
                    add_assign(&mut gm[start..start + cols], g.data());
                });
            }
            Op::MaxOver(ids) => {
                let out = node.value.data();
                // route each coordinate to the first operand attaining the max
                for (coord, &m) in out.iter().enumerate() {
                    for &id in ids.iter() {
                        if self.value(id).data()[coord] == m {
                            accum(id, &mut |gi| gi[coord] += g.data()[coord]);
                            break;
                        }
                    }
                }
            }
            Op::WeightedSum { weights, items } => {
                let vw = self.value(*weights).data();
                accum(*weights, &mut |gw| {
                    for (i, &item) in items.iter().enumerate() {
                        let vi = self.value(item).data();
                        gw[i] += vi.iter().zip(g.data()).map(|(x, y)| x * y).sum::<f64>();
                    }
                });
                for (i, &item) in items.iter().enumerate() {
                    let w = vw[i];
                    accum(item, &mut |gi| {
                        for (o, x) in gi.iter_mut().zip(g.data()) {
                            *o += w * x;
                        }
                    });
                }
            }
            Op::Sum(a) => {
                let gs = g.data()[0];
                accum(*a, &mut |ga| {
                    for o in ga.iter_mut() {
                        *o += gs;
                    }
                });
            }
        }
    }
}

fn add_assign(acc: &mut [f64], src: &[f64]) {
    for (o, x) in acc.iter_mut().zip(src) {
        *o += x;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Max-subtracted softmax of a nonempty slice.
pub fn softmax_slice(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `ln(sum(exp(xs)))` with max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
