use rand::Rng;

use super::{Tensor, TensorError};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Reshape(Var),
    Concat(Vec<Var>),
    /// Output element k is input element `index[k]`. Covers slicing,
    /// row gathers and both max-pool flavours.
    Select { input: Var, index: Vec<usize> },
    Conv1d {
        input: Var,
        kernels: Var,
        bias: Var,
        padding: usize,
    },
    Softmax(Var),
    Dropout { input: Var, mask: Vec<f64> },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Records a forward computation so gradients can be pulled back through it.
///
/// Nodes are appended in evaluation order, so reverse index order is a valid
/// reverse topological order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Dimension {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that does not receive a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that receives a gradient on backward.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Gradient accumulated by the last [`Graph::backward`], shaped like the value.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(dim_err("matmul", av, bv));
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let out = matmul_raw(av.data(), bv.data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(dim_err(name, av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let xv = self.value(x);
        let value = Tensor {
            shape: xv.shape().to_vec(),
            data: xv.data().iter().map(|&v| f(v)).collect(),
        };
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.unary(x, |v| v * factor, Op::Scale(x, factor))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Concatenates along the leading axis; trailing dimensions must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = match parts.first() {
            Some(&p) => self.value(p),
            None => {
                return Err(TensorError::Degenerate {
                    op: "concat",
                    reason: "no inputs".into(),
                })
            }
        };
        let tail: Vec<usize> = first.shape().iter().skip(1).copied().collect();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.shape().is_empty() || v.shape()[1..] != tail[..] {
                return Err(dim_err("concat", self.value(parts[0]), v));
            }
            rows += v.shape()[0];
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat(parts.to_vec()), rg))
    }

    /// Stacks equally shaped inputs along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let mut rows = Vec::with_capacity(parts.len());
        for &p in parts {
            let mut shape = vec![1];
            shape.extend_from_slice(self.value(p).shape());
            rows.push(self.reshape(p, &shape)?);
        }
        self.concat(&rows)
    }

    fn select(&mut self, input: Var, index: Vec<usize>, shape: Vec<usize>) -> Result<Var, TensorError> {
        let src = self.value(input).data();
        let data = index.iter().map(|&i| src[i]).collect();
        let value = Tensor::new(shape, data)?;
        let rg = self.rg(input);
        Ok(self.push(value, Op::Select { input, index }, rg))
    }

    /// Rows `start..start + len` along the leading axis.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if xv.shape().is_empty() || len == 0 || start + len > xv.shape()[0] {
            return Err(TensorError::Parameter {
                op: "slice_rows",
                reason: format!("rows {start}..{} of shape {:?}", start + len, xv.shape()),
            });
        }
        let w = xv.row_len();
        let mut shape = xv.shape().to_vec();
        shape[0] = len;
        self.select(x, (start * w..(start + len) * w).collect(), shape)
    }

    /// Single leading-axis slice with that axis dropped.
    pub fn row(&mut self, x: Var, i: usize) -> Result<Var, TensorError> {
        let s = self.slice_rows(x, i, 1)?;
        let shape = self.value(x).shape()[1..].to_vec();
        self.reshape(s, &shape)
    }

    /// Embedding-style lookup: rows of a `[vocab x dim]` table.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let tv = self.value(table);
        if tv.shape().len() != 2 {
            return Err(TensorError::Dimension {
                op: "gather_rows",
                left: tv.shape().to_vec(),
                right: vec![ids.len()],
            });
        }
        let (vocab, dim) = (tv.shape()[0], tv.shape()[1]);
        if ids.is_empty() {
            return Err(TensorError::Degenerate {
                op: "gather_rows",
                reason: "no ids".into(),
            });
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(TensorError::Parameter {
                op: "gather_rows",
                reason: format!("id {bad} outside table of {vocab} rows"),
            });
        }
        let index = ids.iter().flat_map(|&id| id * dim..(id + 1) * dim).collect();
        self.select(table, index, vec![ids.len(), dim])
    }

    /// Valid cross-correlation along the step axis, with optional symmetric
    /// zero padding of `padding` steps on each side.
    ///
    /// input `[c_in x steps]`, kernels `[c_out x c_in x width]`, bias `[c_out]`.
    pub fn conv1d(&mut self, input: Var, kernels: Var, bias: Var, padding: usize) -> Result<Var, TensorError> {
        let (xv, kv, bv) = (self.value(input), self.value(kernels), self.value(bias));
        if xv.shape().len() != 2 || kv.shape().len() != 3 || kv.shape()[1] != xv.shape()[0] {
            return Err(dim_err("conv1d", xv, kv));
        }
        let (c_in, steps) = (xv.shape()[0], xv.shape()[1]);
        let (c_out, width) = (kv.shape()[0], kv.shape()[2]);
        if bv.shape() != [c_out] {
            return Err(dim_err("conv1d", kv, bv));
        }
        if width > steps + 2 * padding {
            return Err(TensorError::Degenerate {
                op: "conv1d",
                reason: format!("kernel width {width} exceeds {steps} steps (padding {padding})"),
            });
        }
        let out_steps = steps + 2 * padding - width + 1;
        let (x, k, b) = (xv.data(), kv.data(), bv.data());
        let mut out = vec![0.0; c_out * out_steps];
        for o in 0..c_out {
            let row = &mut out[o * out_steps..(o + 1) * out_steps];
            row.fill(b[o]);
            for c in 0..c_in {
                let xrow = &x[c * steps..(c + 1) * steps];
                for j in 0..width {
                    let w = k[(o * c_in + c) * width + j];
                    let (t0, t1) = conv_range(j, padding, steps, out_steps);
                    let shift = j as isize - padding as isize;
                    for t in t0..t1 {
                        row[t] += w * xrow[(t as isize + shift) as usize];
                    }
                }
            }
        }
        let rg = self.rg(input) || self.rg(kernels) || self.rg(bias);
        let value = Tensor::new(vec![c_out, out_steps], out)?;
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                kernels,
                bias,
                padding,
            },
            rg,
        ))
    }

    /// Per-channel windowed maximum over `[channels x steps]`; trailing
    /// steps that do not fill a window are dropped. Ties go to the first
    /// position in the window.
    pub fn maxpool1d(&mut self, input: Var, window: usize) -> Result<Var, TensorError> {
        if window < 1 {
            return Err(TensorError::Parameter {
                op: "maxpool1d",
                reason: "window must be at least 1".into(),
            });
        }
        let xv = self.value(input);
        if xv.shape().len() != 2 {
            return Err(TensorError::Dimension {
                op: "maxpool1d",
                left: xv.shape().to_vec(),
                right: vec![window],
            });
        }
        let (channels, steps) = (xv.shape()[0], xv.shape()[1]);
        let out_steps = steps / window;
        if out_steps == 0 {
            return Err(TensorError::Degenerate {
                op: "maxpool1d",
                reason: format!("window {window} larger than {steps} steps"),
            });
        }
        let x = xv.data();
        let mut index = Vec::with_capacity(channels * out_steps);
        for c in 0..channels {
            for t in 0..out_steps {
                let start = c * steps + t * window;
                index.push(argmax_first(x, start, start + window));
            }
        }
        self.select(input, index, vec![channels, out_steps])
    }

    /// Per-channel maximum over all steps: `[channels x steps] -> [channels]`.
    pub fn global_maxpool(&mut self, input: Var) -> Result<Var, TensorError> {
        let xv = self.value(input);
        if xv.shape().len() != 2 {
            return Err(TensorError::Degenerate {
                op: "global_maxpool",
                reason: format!("expected [channels x steps], got {:?}", xv.shape()),
            });
        }
        let (channels, steps) = (xv.shape()[0], xv.shape()[1]);
        let x = xv.data();
        let index = (0..channels)
            .map(|c| argmax_first(x, c * steps, (c + 1) * steps))
            .collect();
        self.select(input, index, vec![channels])
    }

    /// Softmax over a vector, with max subtraction.
    pub fn softmax(&mut self, logits: Var) -> Result<Var, TensorError> {
        let lv = self.value(logits);
        if lv.shape().len() != 1 {
            return Err(TensorError::Dimension {
                op: "softmax",
                left: lv.shape().to_vec(),
                right: vec![lv.numel()],
            });
        }
        if !lv.is_finite() {
            return Err(TensorError::NonFinite { op: "softmax" });
        }
        let max = lv.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lv.data().iter().map(|&v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let value = Tensor::vector(exps.into_iter().map(|e| e / total).collect());
        let rg = self.rg(logits);
        Ok(self.push(value, Op::Softmax(logits), rg))
    }

    /// Inverted dropout. In eval mode (or at rate 0) this returns `input` unchanged.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        input: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Parameter {
                op: "dropout",
                reason: format!("rate {rate} outside [0, 1)"),
            });
        }
        if !training || rate == 0.0 {
            return Ok(input);
        }
        let keep = 1.0 / (1.0 - rate);
        let xv = self.value(input);
        let mask: Vec<f64> = (0..xv.numel())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let value = Tensor {
            shape: xv.shape().to_vec(),
            data: xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect(),
        };
        let rg = self.rg(input);
        Ok(self.push(value, Op::Dropout { input, mask }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(total), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Dot product of two equally shaped tensors, as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }

    /// Clears all gradients, then back-propagates from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.rg(loss) {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(grad) = self.nodes[i].grad.take() else {
                continue;
            };
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.propagate(i, &op, &grad);
            self.nodes[i].op = op;
            self.nodes[i].grad = Some(grad);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contribution: impl FnOnce(&Graph, &mut [f64])) {
        if !self.rg(v) {
            return;
        }
        let mut g = self.nodes[v.0]
            .grad
            .take()
            .unwrap_or_else(|| vec![0.0; self.nodes[v.0].value.numel()]);
        contribution(self, &mut g);
        self.nodes[v.0].grad = Some(g);
    }

    fn propagate(&mut self, i: usize, op: &Op, grad: &[f64]) {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(a).shape()[0], self.value(a).shape()[1]);
                let n = self.value(b).shape()[1];
                // dA = dC B^T
                self.accumulate(a, |g, ga| {
                    let bd = g.value(b).data();
                    for r in 0..m {
                        let grow = &grad[r * n..(r + 1) * n];
                        for c in 0..k {
                            let brow = &bd[c * n..(c + 1) * n];
                            ga[r * k + c] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                // dB = A^T dC
                self.accumulate(b, |g, gb| {
                    let ad = g.value(a).data();
                    for r in 0..m {
                        let grow = &grad[r * n..(r + 1) * n];
                        for c in 0..k {
                            let s = ad[r * k + c];
                            if s != 0.0 {
                                for (dst, &d) in gb[c * n..(c + 1) * n].iter_mut().zip(grow) {
                                    *dst += s * d;
                                }
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(a, |_, ga| add_into(ga, grad));
                self.accumulate(b, |_, gb| add_into(gb, grad));
            }
            Op::Sub(a, b) => {
                self.accumulate(a, |_, ga| add_into(ga, grad));
                self.accumulate(b, |_, gb| {
                    for (dst, &d) in gb.iter_mut().zip(grad) {
                        *dst -= d;
                    }
                });
            }
            Op::Mul(a, b) => {
                self.accumulate(a, |g, ga| {
                    for ((dst, &d), &y) in ga.iter_mut().zip(grad).zip(g.value(b).data()) {
                        *dst += d * y;
                    }
                });
                self.accumulate(b, |g, gb| {
                    for ((dst, &d), &x) in gb.iter_mut().zip(grad).zip(g.value(a).data()) {
                        *dst += d * x;
                    }
                });
            }
            Op::Scale(x, factor) => {
                self.accumulate(x, |_, gx| {
                    for (dst, &d) in gx.iter_mut().zip(grad) {
                        *dst += d * factor;
                    }
                });
            }
            Op::Sigmoid(x) => {
                let out = Var(i);
                self.accumulate(x, |g, gx| {
                    for ((dst, &d), &y) in gx.iter_mut().zip(grad).zip(g.value(out).data()) {
                        *dst += d * y * (1.0 - y);
                    }
                });
            }
            Op::Tanh(x) => {
                let out = Var(i);
                self.accumulate(x, |g, gx| {
                    for ((dst, &d), &y) in gx.iter_mut().zip(grad).zip(g.value(out).data()) {
                        *dst += d * (1.0 - y * y);
                    }
                });
            }
            Op::Relu(x) => {
                self.accumulate(x, |g, gx| {
                    for ((dst, &d), &v) in gx.iter_mut().zip(grad).zip(g.value(x).data()) {
                        if v > 0.0 {
                            *dst += d;
                        }
                    }
                });
            }
            Op::Reshape(x) => self.accumulate(x, |_, gx| add_into(gx, grad)),
            Op::Concat(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    let part = &grad[offset..offset + n];
                    self.accumulate(p, |_, gp| add_into(gp, part));
                    offset += n;
                }
            }
            Op::Select { input, ref index } => {
                self.accumulate(input, |_, gx| {
                    for (&src, &d) in index.iter().zip(grad) {
                        gx[src] += d;
                    }
                });
            }
            Op::Conv1d {
                input,
                kernels,
                bias,
                padding,
            } => {
                let (c_in, steps) = (self.value(input).shape()[0], self.value(input).shape()[1]);
                let (c_out, width) = (self.value(kernels).shape()[0], self.value(kernels).shape()[2]);
                let out_steps = steps + 2 * padding - width + 1;
                self.accumulate(bias, |_, gb| {
                    for o in 0..c_out {
                        gb[o] += grad[o * out_steps..(o + 1) * out_steps].iter().sum::<f64>();
                    }
                });
                self.accumulate(kernels, |g, gk| {
                    let x = g.value(input).data();
                    for o in 0..c_out {
                        let grow = &grad[o * out_steps..(o + 1) * out_steps];
                        for c in 0..c_in {
                            let xrow = &x[c * steps..(c + 1) * steps];
                            for j in 0..width {
                                let (t0, t1) = conv_range(j, padding, steps, out_steps);
                                let shift = j as isize - padding as isize;
                                let mut acc = 0.0;
                                for t in t0..t1 {
                                    acc += grow[t] * xrow[(t as isize + shift) as usize];
                                }
                                gk[(o * c_in + c) * width + j] += acc;
                            }
                        }
                    }
                });
                self.accumulate(input, |g, gx| {
                    let k = g.value(kernels).data();
                    for o in 0..c_out {
                        let grow = &grad[o * out_steps..(o + 1) * out_steps];
                        for c in 0..c_in {
                            let gxrow = &mut gx[c * steps..(c + 1) * steps];
                            for j in 0..width {
                                let w = k[(o * c_in + c) * width + j];
                                let (t0, t1) = conv_range(j, padding, steps, out_steps);
                                let shift = j as isize - padding as isize;
                                for t in t0..t1 {
                                    gxrow[(t as isize + shift) as usize] += w * grow[t];
                                }
                            }
                        }
                    }
                });
            }
            Op::Softmax(x) => {
                let out = Var(i);
                self.accumulate(x, |g, gx| {
                    let y = g.value(out).data();
                    let inner: f64 = y.iter().zip(grad).map(|(a, b)| a * b).sum();
                    for ((dst, &d), &yv) in gx.iter_mut().zip(grad).zip(y) {
                        *dst += yv * (d - inner);
                    }
                });
            }
            Op::Dropout { input, ref mask } => {
                self.accumulate(input, |_, gx| {
                    for ((dst, &d), &m) in gx.iter_mut().zip(grad).zip(mask) {
                        *dst += d * m;
                    }
                });
            }
            Op::Sum(x) => {
                let d = grad[0];
                self.accumulate(x, |_, gx| {
                    for dst in gx.iter_mut() {
                        *dst += d;
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn argmax_first(x: &[f64], start: usize, end: usize) -> usize {
    let mut best = start;
    for i in start + 1..end {
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

/// Output steps `t` for which input step `t + j - padding` is in bounds.
fn conv_range(j: usize, padding: usize, steps: usize, out_steps: usize) -> (usize, usize) {
    let t0 = padding.saturating_sub(j);
    let t1 = (steps + padding).saturating_sub(j).min(out_steps);
    (t0, t1.max(t0))
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        let orow = &mut out[r * n..(r + 1) * n];
        for c in 0..k {
            let s = a[r * k + c];
            if s != 0.0 {
                for (dst, &v) in orow.iter_mut().zip(&b[c * n..(c + 1) * n]) {
                    *dst += s * v;
                }
            }
        }
    }
    out
}
