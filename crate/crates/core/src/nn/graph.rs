//! Tape of differentiable ops over 2-D tensors with reverse-mode gradients.
//!
//! A [`Graph`] borrows the [`ParamStore`] for one forward/backward pass.
//! Nodes are appended in execution order, so the tape is topologically
//! sorted by construction and [`Graph::backward`] walks it once in reverse.

use super::tensor::{gemm_a_bt_acc, gemm_acc, gemm_at_b_acc, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    Embedding { table: Var, ids: Vec<u32> },
    Conv1d { x: Var, w: Var, batch: usize, len: usize, width: usize },
    MaxOverTime { x: Var, argmax: Vec<usize> },
    Blend { take_new: Vec<bool>, new: Var, old: Var },
    SoftmaxXent { logits: Var, labels: Vec<usize>, probs: Tensor },
    Sum(Var),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Gradients from one backward pass.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to a parameter; `None` when it did not affect
    /// the loss.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to any node (used for leaves).
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    pub fn params(&self) -> &[Option<Tensor>] {
        &self.params
    }
}

fn shape_err(op: &'static str, shapes: String) -> Error {
    Error::Shape { op, shapes }
}

fn checked(op: &'static str, t: Tensor) -> Result<Tensor> {
    if t.all_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite { op })
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

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("only parameter nodes borrow their value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Differentiable input (gradients are kept for it).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Input that never receives gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims();
        let (k2, n) = self.value(b).dims();
        if k != k2 {
            return Err(shape_err("matmul", format!("{m}x{k} * {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let t = checked("matmul", Tensor::from_parts(vec![m, n], out))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::MatMul(a, b), ng))
    }

    /// Adds a `1 x n` row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.value(x).dims();
        let (br, bc) = self.value(bias).dims();
        if br != 1 || bc != n {
            return Err(shape_err("add_bias", format!("{m}x{n} + {br}x{bc}")));
        }
        let mut out = self.value(x).data().to_vec();
        let b = self.value(bias).data();
        for row in out.chunks_mut(n) {
            for (o, bj) in row.iter_mut().zip(b) {
                *o += bj;
            }
        }
        let t = checked("add_bias", Tensor::from_parts(vec![m, n], out))?;
        let ng = self.needs(x) || self.needs(bias);
        Ok(self.push(t, Op::AddBias(x, bias), ng))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let da = self.value(a).dims();
        let db = self.value(b).dims();
        if da != db {
            return Err(shape_err(op, format!("{}x{} vs {}x{}", da.0, da.1, db.0, db.1)));
        }
        Ok(da)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.same_shape("add", a, b)?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = checked("add", Tensor::from_parts(vec![m, n], out))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add(a, b), ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.same_shape("mul", a, b)?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let t = checked("mul", Tensor::from_parts(vec![m, n], out))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Mul(a, b), ng))
    }

    /// Elementwise product with a fixed tensor (dropout masks).
    pub fn mul_const(&mut self, x: Var, c: Tensor) -> Result<Var> {
        let (m, n) = self.value(x).dims();
        if c.dims() != (m, n) {
            let (cr, cc) = c.dims();
            return Err(shape_err("mul_const", format!("{m}x{n} vs {cr}x{cc}")));
        }
        let out = self
            .value(x)
            .data()
            .iter()
            .zip(c.data())
            .map(|(a, b)| a * b)
            .collect();
        let t = checked("mul_const", Tensor::from_parts(vec![m, n], out))?;
        let ng = self.needs(x);
        Ok(self.push(t, Op::MulConst(x, c), ng))
    }

    fn unary(&mut self, op: &'static str, x: Var, f: impl Fn(f64) -> f64, make: fn(Var) -> Op) -> Result<Var> {
        let src = self.value(x);
        let out = src.data().iter().map(|&v| f(v)).collect();
        let t = checked(op, Tensor::from_parts(src.shape().to_vec(), out))?;
        let ng = self.needs(x);
        Ok(self.push(t, make(x), ng))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary("relu", x, |v| v.max(0.0), Op::Relu)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary("tanh", x, f64::tanh, Op::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, sigmoid, Op::Sigmoid)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.value(x).dims();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        let t = checked("softmax_rows", Tensor::from_parts(vec![m, n], out))?;
        let ng = self.needs(x);
        Ok(self.push(t, Op::SoftmaxRows(x), ng))
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(shape_err("concat_cols", "no inputs".into()));
        }
        let m = self.value(xs[0]).rows();
        if xs.iter().any(|&v| self.value(v).rows() != m) {
            let shapes: Vec<String> = xs
                .iter()
                .map(|&v| format!("{}x{}", self.value(v).rows(), self.value(v).cols()))
                .collect();
            return Err(shape_err("concat_cols", shapes.join(", ")));
        }
        let total: usize = xs.iter().map(|&v| self.value(v).cols()).sum();
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for &v in xs {
                out.extend_from_slice(self.value(v).row(r));
            }
        }
        let t = Tensor::from_parts(vec![m, total], out);
        let ng = xs.iter().any(|&v| self.needs(v));
        Ok(self.push(t, Op::ConcatCols(xs.to_vec()), ng))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.value(x).dims();
        if start + len > n {
            return Err(shape_err("slice_cols", format!("{m}x{n} cols {start}..{}", start + len)));
        }
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&self.value(x).row(r)[start..start + len]);
        }
        let t = Tensor::from_parts(vec![m, len], out);
        let ng = self.needs(x);
        Ok(self.push(t, Op::SliceCols { x, start }, ng))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.value(x).dims();
        if start + len > m {
            return Err(shape_err("slice_rows", format!("{m}x{n} rows {start}..{}", start + len)));
        }
        let out = self.value(x).data()[start * n..(start + len) * n].to_vec();
        let t = Tensor::from_parts(vec![len, n], out);
        let ng = self.needs(x);
        Ok(self.push(t, Op::SliceRows { x, start }, ng))
    }

    /// Row `ids[i]` of `table` becomes output row `i`.
    pub fn embedding(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let (v, d) = self.value(table).dims();
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= v) {
            return Err(shape_err("embedding", format!("id {bad} outside {v}x{d} table")));
        }
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(self.value(table).row(i as usize));
        }
        let t = Tensor::from_parts(vec![ids.len(), d], out);
        let ng = self.needs(table);
        Ok(self.push(
            t,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// Convolution over time. `x` holds `batch` sequences of `len` rows
    /// (batch-major, `(batch*len) x d`); `w` is `(width*d) x filters`.
    /// Output is `(batch*(len-width+1)) x filters`, one row per window.
    pub fn conv1d(&mut self, x: Var, w: Var, batch: usize, len: usize, width: usize) -> Result<Var> {
        let (rows, d) = self.value(x).dims();
        let (wr, f) = self.value(w).dims();
        if rows != batch * len || wr != width * d || width == 0 || width > len {
            return Err(shape_err(
                "conv1d",
                format!("input {rows}x{d} as {batch}x{len}, filter {wr}x{f}, width {width}"),
            ));
        }
        let steps = len - width + 1;
        let mut out = vec![0.0; batch * steps * f];
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let span = width * d;
        for b in 0..batch {
            for t in 0..steps {
                let start = (b * len + t) * d;
                let window = &xd[start..start + span];
                let o = (b * steps + t) * f;
                gemm_acc(window, wd, &mut out[o..o + f], 1, span, f);
            }
        }
        let t = checked("conv1d", Tensor::from_parts(vec![batch * steps, f], out))?;
        let ng = self.needs(x) || self.needs(w);
        Ok(self.push(
            t,
            Op::Conv1d {
                x,
                w,
                batch,
                len,
                width,
            },
            ng,
        ))
    }

    /// Per sequence and column, the max over the first `valid[b]` of its
    /// `steps` rows. `x` is batch-major `(batch*steps) x f`.
    pub fn max_over_time(&mut self, x: Var, steps: usize, valid: &[usize]) -> Result<Var> {
        let (rows, f) = self.value(x).dims();
        let batch = valid.len();
        if rows != batch * steps || valid.iter().any(|&v| v == 0 || v > steps) {
            return Err(shape_err(
                "max_over_time",
                format!("{rows}x{f} as {batch}x{steps}, valid {valid:?}"),
            ));
        }
        let xv = self.value(x);
        let mut out = vec![f64::NEG_INFINITY; batch * f];
        let mut argmax = vec![0usize; batch * f];
        for (b, &n) in valid.iter().enumerate() {
            for t in 0..n {
                let r = b * steps + t;
                for (j, &val) in xv.row(r).iter().enumerate() {
                    if val > out[b * f + j] {
                        out[b * f + j] = val;
                        argmax[b * f + j] = r;
                    }
                }
            }
        }
        let t = checked("max_over_time", Tensor::from_parts(vec![batch, f], out))?;
        let ng = self.needs(x);
        Ok(self.push(t, Op::MaxOverTime { x, argmax }, ng))
    }

    /// Row `r` comes from `new` where `take_new[r]`, else from `old`.
    pub fn blend(&mut self, take_new: &[bool], new: Var, old: Var) -> Result<Var> {
        let (m, n) = self.same_shape("blend", new, old)?;
        if take_new.len() != m {
            return Err(shape_err("blend", format!("{m} rows, mask of {}", take_new.len())));
        }
        let mut out = Vec::with_capacity(m * n);
        for (r, &t) in take_new.iter().enumerate() {
            let src = if t { new } else { old };
            out.extend_from_slice(self.value(src).row(r));
        }
        let t = Tensor::from_parts(vec![m, n], out);
        let ng = self.needs(new) || self.needs(old);
        Ok(self.push(
            t,
            Op::Blend {
                take_new: take_new.to_vec(),
                new,
                old,
            },
            ng,
        ))
    }

    /// Mean negative log-likelihood of `labels` under row-softmax of
    /// `logits`; with two columns this is the binary cross-entropy.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (m, n) = self.value(logits).dims();
        if labels.len() != m || labels.iter().any(|&l| l >= n) || m == 0 {
            return Err(shape_err(
                "softmax_cross_entropy",
                format!("{m}x{n} logits, {} labels", labels.len()),
            ));
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = 0.0;
        for (r, row) in probs.chunks_mut(n).enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[labels[r]];
            softmax_in_place(row);
        }
        let t = checked("softmax_cross_entropy", Tensor::scalar(loss / m as f64))?;
        let ng = self.needs(logits);
        Ok(self.push(
            t,
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                probs: Tensor::from_parts(vec![m, n], probs),
            },
            ng,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        let t = checked("sum", Tensor::scalar(s))?;
        let ng = self.needs(x);
        Ok(self.push(t, Op::Sum(x), ng))
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (r, c) = self.value(loss).dims();
        if r != 1 || c != 1 {
            return Err(shape_err("backward", format!("loss must be 1x1, got {r}x{c}")));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let mut params: Vec<Option<Tensor>> = (0..self.params.len()).map(|_| None).collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                params[id.0] = grads[i].take();
            }
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn grad_buf<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> Option<&'g mut Tensor> {
        if !self.needs(v) {
            return None;
        }
        let shape = self.value(v).shape().to_vec();
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(&shape)))
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = self.nodes[i].value.as_ref();
        match &self.nodes[i].op {
            Op::Leaf | Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims();
                let n = self.value(*b).cols();
                if let Some(ga) = self.grad_buf(grads, *a) {
                    gemm_a_bt_acc(g.data(), self.value(*b).data(), ga.data_mut(), m, n, k);
                }
                if let Some(gb) = self.grad_buf(grads, *b) {
                    gemm_at_b_acc(self.value(*a).data(), g.data(), gb.data_mut(), m, k, n);
                }
            }
            Op::AddBias(x, bias) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    gx.add_assign(g);
                }
                let n = g.cols();
                if let Some(gb) = self.grad_buf(grads, *bias) {
                    for row in g.data().chunks(n) {
                        for (o, v) in gb.data_mut().iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(gv) = self.grad_buf(grads, *v) {
                        gv.add_assign(g);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.grad_buf(grads, *a) {
                    for ((o, gi), y) in ga.data_mut().iter_mut().zip(g.data()).zip(vb) {
                        *o += gi * y;
                    }
                }
                if let Some(gb) = self.grad_buf(grads, *b) {
                    for ((o, gi), x) in gb.data_mut().iter_mut().zip(g.data()).zip(va) {
                        *o += gi * x;
                    }
                }
            }
            Op::MulConst(x, c) => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for ((o, gi), ci) in gx.data_mut().iter_mut().zip(g.data()).zip(c.data()) {
                        *o += gi * ci;
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for ((o, gi), &xi) in gx.data_mut().iter_mut().zip(g.data()).zip(xv) {
                        if xi > 0.0 {
                            *o += gi;
                        }
                    }
                }
            }
            Op::Tanh(x) => {
                let y = out.unwrap().data();
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for ((o, gi), yi) in gx.data_mut().iter_mut().zip(g.data()).zip(y) {
                        *o += gi * (1.0 - yi * yi);
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = out.unwrap().data();
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for ((o, gi), yi) in gx.data_mut().iter_mut().zip(g.data()).zip(y) {
                        *o += gi * yi * (1.0 - yi);
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                let y = out.unwrap();
                let n = y.cols();
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for ((orow, grow), yrow) in gx
                        .data_mut()
                        .chunks_mut(n)
                        .zip(g.data().chunks(n))
                        .zip(y.data().chunks(n))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for ((o, gi), yi) in orow.iter_mut().zip(grow).zip(yrow) {
                            *o += yi * (gi - dot);
                        }
                    }
                }
            }
            Op::ConcatCols(xs) => {
                let mut offset = 0;
                for &v in xs {
                    let c = self.value(v).cols();
                    if let Some(gv) = self.grad_buf(grads, v) {
                        for r in 0..g.rows() {
                            let src = &g.row(r)[offset..offset + c];
                            for (o, s) in gv.row_mut(r).iter_mut().zip(src) {
                                *o += s;
                            }
                        }
                    }
                    offset += c;
                }
            }
            Op::SliceCols { x, start } => {
                let len = g.cols();
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for r in 0..g.rows() {
                        let dst = &mut gx.row_mut(r)[*start..*start + len];
                        for (o, s) in dst.iter_mut().zip(g.row(r)) {
                            *o += s;
                        }
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let n = g.cols();
                if let Some(gx) = self.grad_buf(grads, *x) {
                    let dst = &mut gx.data_mut()[start * n..start * n + g.len()];
                    for (o, s) in dst.iter_mut().zip(g.data()) {
                        *o += s;
                    }
                }
            }
            Op::Embedding { table, ids } => {
                if let Some(gt) = self.grad_buf(grads, *table) {
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, s) in gt.row_mut(id as usize).iter_mut().zip(g.row(r)) {
                            *o += s;
                        }
                    }
                }
            }
            Op::Conv1d {
                x,
                w,
                batch,
                len,
                width,
            } => {
                let d = self.value(*x).cols();
                let f = self.value(*w).cols();
                let steps = len - width + 1;
                let span = width * d;
                let xd = self.value(*x).data();
                let wd = self.value(*w).data();
                if let Some(gw) = self.grad_buf(grads, *w) {
                    for b in 0..*batch {
                        for t in 0..steps {
                            let start = (b * len + t) * d;
                            let o = (b * steps + t) * f;
                            gemm_at_b_acc(
                                &xd[start..start + span],
                                &g.data()[o..o + f],
                                gw.data_mut(),
                                1,
                                span,
                                f,
                            );
                        }
                    }
                }
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for b in 0..*batch {
                        for t in 0..steps {
                            let start = (b * len + t) * d;
                            let o = (b * steps + t) * f;
                            gemm_a_bt_acc(
                                &g.data()[o..o + f],
                                wd,
                                &mut gx.data_mut()[start..start + span],
                                1,
                                f,
                                span,
                            );
                        }
                    }
                }
            }
            Op::MaxOverTime { x, argmax } => {
                let f = g.cols();
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for (k, &r) in argmax.iter().enumerate() {
                        let j = k % f;
                        gx.data_mut()[r * f + j] += g.data()[k];
                    }
                }
            }
            Op::Blend { take_new, new, old } => {
                for (v, want) in [(new, true), (old, false)] {
                    if let Some(gv) = self.grad_buf(grads, *v) {
                        for (r, &t) in take_new.iter().enumerate() {
                            if t == want {
                                for (o, s) in gv.row_mut(r).iter_mut().zip(g.row(r)) {
                                    *o += s;
                                }
                            }
                        }
                    }
                }
            }
            Op::SoftmaxXent {
                logits,
                labels,
                probs,
            } => {
                let scale = g.item() / labels.len() as f64;
                if let Some(gl) = self.grad_buf(grads, *logits) {
                    for (r, &l) in labels.iter().enumerate() {
                        let prow = probs.row(r);
                        for (j, o) in gl.row_mut(r).iter_mut().enumerate() {
                            let target = if j == l { 1.0 } else { 0.0 };
                            *o += scale * (prow[j] - target);
                        }
                    }
                }
            }
            Op::Sum(x) => {
                let s = g.item();
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for o in gx.data_mut() {
                        *o += s;
                    }
                }
            }
        }
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn relu_values() {
        let p = ParamStore::new();
        let mut g = Graph::new(&p);
        let x = g.leaf(m(1, 2, &[-1.0, 2.0]));
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn softmax_uniform() {
        let p = ParamStore::new();
        let mut g = Graph::new(&p);
        let x = g.leaf(m(1, 2, &[0.0, 0.0]));
        let y = g.softmax_rows(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn zero_filter_conv() {
        let p = ParamStore::new();
        let mut g = Graph::new(&p);
        let x = g.leaf(m(5, 2, &[1.0, -2.0, 3.0, 0.5, 4.0, 1.0, 2.0, 2.0, -1.0, 7.0]));
        let w = g.leaf(Tensor::zeros(&[6, 3]));
        let y = g.conv1d(x, w, 1, 5, 3).unwrap();
        assert_eq!(g.value(y).dims(), (3, 3));
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let p = ParamStore::new();
        let mut g = Graph::new(&p);
        let x = g.leaf(m(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let s = g.sum(x).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn square_gradient() {
        let p = ParamStore::new();
        let mut g = Graph::new(&p);
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(x).unwrap().item(), 6.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let p = ParamStore::new();
        let mut g = Graph::new(&p);
        let x = g.leaf(m(1, 2, &[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Shape { op: "backward", .. })));
    }

    #[test]
    fn shape_errors_name_op() {
        let p = ParamStore::new();
        let mut g = Graph::new(&p);
        let a = g.leaf(Tensor::zeros(&[2, 3]));
        let b = g.leaf(Tensor::zeros(&[2, 3]));
        match g.matmul(a, b) {
            Err(Error::Shape { op, shapes }) => {
                assert_eq!(op, "matmul");
                assert_eq!(shapes, "2x3 * 2x3");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(g.max_over_time(a, 3, &[2, 1]).is_err());
    }

    #[test]
    fn non_finite_is_error() {
        let p = ParamStore::new();
        let mut g = Graph::new(&p);
        let a = g.leaf(m(1, 1, &[f64::MAX]));
        assert!(matches!(g.add(a, a), Err(Error::NonFinite { op: "add" })));
    }

    #[test]
    fn masked_max_ignores_invalid_rows() {
        let p = ParamStore::new();
        let mut g = Graph::new(&p);
        let x = g.leaf(m(4, 1, &[1.0, 9.0, 2.0, 3.0]));
        let y = g.max_over_time(x, 2, &[1, 2]).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 3.0]);
    }

    #[test]
    fn param_gradients_are_collected() {
        let mut p = ParamStore::new();
        let w = p.add("w", m(2, 1, &[0.5, -1.0]));
        let mut g = Graph::new(&p);
        let x = g.constant(m(1, 2, &[2.0, 3.0]));
        let wv = g.param(w);
        let y = g.matmul(x, wv).unwrap();
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.param(w).unwrap().data(), &[2.0, 3.0]);
        assert!(grads.wrt(x).is_none());
    }
}
