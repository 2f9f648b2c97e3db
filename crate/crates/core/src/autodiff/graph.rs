//! Reverse-mode tape.
//!
//! A [`Graph`] records every operation of one forward pass in execution
//! order, so the node vector is already a topological order. `backward`
//! walks it once from the loss towards the leaves, accumulating gradients
//! with `+=` so values consumed by several operations compose correctly.

use super::{Tensor, TensorError};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Exp,
    Log,
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Tanh => "tanh",
            Unary::Sigmoid => "sigmoid",
            Unary::Exp => "exp",
            Unary::Log => "log",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

impl Binary {
    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Unary(Unary, Var),
    Binary(Binary, Var, Var),
    MatMul(Var, Var),
    MatVec(Var, Var),
    VecMat(Var, Var),
    AddScalar(Var, Var),
    Scale(Var, f64),
    ClampMin(Var, f64),
    Narrow { src: Var, start: usize },
    Row { src: Var, row: usize },
    Reshape(Var),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    Sum(Var),
    SoftmaxSlice { src: Var, lo: usize },
    WindowSoftmax { src: Var, half_width: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Dynamic tape for a single forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    consumed: bool,
}

/// Max-shifted softmax of a slice: `exp(x_i - max) / sum_j exp(x_j - max)`.
pub(crate) fn stable_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / total).collect()
}

/// Clamped window `[t - w, t + w] ∩ [0, len - 1]`, inclusive bounds.
pub fn window_bounds(t: usize, half_width: usize, len: usize) -> (usize, usize) {
    (t.saturating_sub(half_width), (t + half_width).min(len - 1))
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

    /// Trainable leaf: receives a gradient on `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_node(value, Op::Leaf, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_node(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the loss with respect to `v`, if one reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let data = self.grads.get(v.0)?.as_ref()?;
        Tensor::new(self.shape(v).to_vec(), data.clone()).ok()
    }

    /// Gradient of `v`, or zeros when the loss does not depend on it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor {
        self.grad(v)
            .unwrap_or_else(|| Tensor::zeros(self.shape(v)).expect("node shapes are valid"))
    }

    fn push_node(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push(
        &mut self,
        name: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        op: Op,
        inputs: &[Var],
    ) -> Result<Var, TensorError> {
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: name, index });
        }
        let value = Tensor::new(shape, data)?;
        let requires_grad = inputs.iter().any(|&v| self.nodes[v.0].requires_grad);
        Ok(self.push_node(value, op, requires_grad))
    }

    fn expect_rank(&self, op: &'static str, v: Var, rank: usize) -> Result<(), TensorError> {
        let shape = self.shape(v);
        if shape.len() == rank {
            Ok(())
        } else {
            Err(TensorError::Rank {
                op,
                expected: rank,
                shape: shape.to_vec(),
            })
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        if self.shape(a) == self.shape(b) {
            Ok(())
        } else {
            Err(TensorError::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            })
        }
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a).data();
        let data: Vec<f64> = match kind {
            Unary::Tanh => x.iter().map(|v| v.tanh()).collect(),
            Unary::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
            Unary::Exp => x.iter().map(|v| v.exp()).collect(),
            Unary::Log => {
                if let Some((index, &value)) = x.iter().enumerate().find(|(_, &v)| v <= 0.0) {
                    return Err(TensorError::Domain {
                        op: "log",
                        index,
                        value,
                    });
                }
                x.iter().map(|v| v.ln()).collect()
            }
        };
        let shape = self.shape(a).to_vec();
        self.push(kind.name(), shape, data, Op::Unary(kind, a), &[a])
    }

    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(kind.name(), a, b)?;
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let data = match kind {
            Binary::Add => x.iter().zip(y).map(|(p, q)| p + q).collect(),
            Binary::Sub => x.iter().zip(y).map(|(p, q)| p - q).collect(),
            Binary::Mul => x.iter().zip(y).map(|(p, q)| p * q).collect(),
        };
        let shape = self.shape(a).to_vec();
        self.push(kind.name(), shape, data, Op::Binary(kind, a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(Unary::Log, a)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.expect_rank("matmul", a, 2)?;
        self.expect_rank("matmul", b, 2)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        if sb[0] != k {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = x[i * k + p];
                for (o, &bpj) in row.iter_mut().zip(&y[p * n..(p + 1) * n]) {
                    *o += aip * bpj;
                }
            }
        }
        self.push("matmul", vec![m, n], out, Op::MatMul(a, b), &[a, b])
    }

    /// `[m, k] x [k] -> [m]`.
    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var, TensorError> {
        self.expect_rank("matvec", a, 2)?;
        self.expect_rank("matvec", x, 1)?;
        let (sa, sx) = (self.shape(a), self.shape(x));
        let (m, k) = (sa[0], sa[1]);
        if sx[0] != k {
            return Err(TensorError::ShapeMismatch {
                op: "matvec",
                left: sa.to_vec(),
                right: sx.to_vec(),
            });
        }
        let (w, v) = (self.value(a).data(), self.value(x).data());
        let out = w.chunks_exact(k).map(|row| dot(row, v)).collect();
        self.push("matvec", vec![m], out, Op::MatVec(a, x), &[a, x])
    }

    /// `[m] x [m, n] -> [n]`, i.e. a weighted sum of the rows of `a`.
    pub fn vecmat(&mut self, v: Var, a: Var) -> Result<Var, TensorError> {
        self.expect_rank("vecmat", v, 1)?;
        self.expect_rank("vecmat", a, 2)?;
        let (sv, sa) = (self.shape(v), self.shape(a));
        let (m, n) = (sa[0], sa[1]);
        if sv[0] != m {
            return Err(TensorError::ShapeMismatch {
                op: "vecmat",
                left: sv.to_vec(),
                right: sa.to_vec(),
            });
        }
        let (weights, mat) = (self.value(v).data(), self.value(a).data());
        let mut out = vec![0.0; n];
        for (&wi, row) in weights.iter().zip(mat.chunks_exact(n)) {
            for (o, &r) in out.iter_mut().zip(row) {
                *o += wi * r;
            }
        }
        self.push("vecmat", vec![n], out, Op::VecMat(v, a), &[v, a])
    }

    /// Adds a single-element tensor to every entry of `a`.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var, TensorError> {
        let scalar = self.value(s);
        if !scalar.is_scalar() {
            return Err(TensorError::NotScalar {
                shape: scalar.shape().to_vec(),
            });
        }
        let s0 = scalar.data()[0];
        let data = self.value(a).data().iter().map(|v| v + s0).collect();
        let shape = self.shape(a).to_vec();
        self.push("add_scalar", shape, data, Op::AddScalar(a, s), &[a, s])
    }

    /// Multiplies by a fixed constant.
    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, TensorError> {
        let data = self.value(a).data().iter().map(|v| v * factor).collect();
        let shape = self.shape(a).to_vec();
        self.push("scale", shape, data, Op::Scale(a, factor), &[a])
    }

    /// `max(a, floor)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Result<Var, TensorError> {
        let data = self.value(a).data().iter().map(|&v| v.max(floor)).collect();
        let shape = self.shape(a).to_vec();
        self.push("clamp_min", shape, data, Op::ClampMin(a, floor), &[a])
    }

    /// Contiguous sub-range `[start, start + len)` of a rank-1 tensor.
    pub fn narrow(&mut self, a: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        self.expect_rank("narrow", a, 1)?;
        let n = self.shape(a)[0];
        if len == 0 || start + len > n {
            return Err(TensorError::Bounds {
                op: "narrow",
                lo: start,
                hi: start + len,
                len: n,
            });
        }
        let data = self.value(a).data()[start..start + len].to_vec();
        self.push(
            "narrow",
            vec![len],
            data,
            Op::Narrow { src: a, start },
            &[a],
        )
    }

    /// Row `row` of a rank-2 tensor as a rank-1 tensor.
    pub fn row(&mut self, a: Var, row: usize) -> Result<Var, TensorError> {
        self.expect_rank("row", a, 2)?;
        let rows = self.shape(a)[0];
        if row >= rows {
            return Err(TensorError::Bounds {
                op: "row",
                lo: row,
                hi: row,
                len: rows,
            });
        }
        let data = self.value(a).row(row).to_vec();
        let cols = data.len();
        self.push("row", vec![cols], data, Op::Row { src: a, row }, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                left: self.shape(a).to_vec(),
                right: shape.to_vec(),
            });
        }
        let data = self.value(a).data().to_vec();
        self.push("reshape", shape.to_vec(), data, Op::Reshape(a), &[a])
    }

    /// Concatenates rank-1 tensors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Empty { op: "concat" });
        }
        for &p in parts {
            self.expect_rank("concat", p, 1)?;
        }
        let data: Vec<f64> = parts
            .iter()
            .flat_map(|&p| self.value(p).data().iter().copied())
            .collect();
        let len = data.len();
        self.push("concat", vec![len], data, Op::Concat(parts.to_vec()), parts)
    }

    /// Stacks equal-length rank-1 tensors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var, TensorError> {
        let first = *rows
            .first()
            .ok_or(TensorError::Empty { op: "stack_rows" })?;
        self.expect_rank("stack_rows", first, 1)?;
        for &r in rows {
            self.same_shape("stack_rows", first, r)?;
        }
        let cols = self.shape(first)[0];
        let data: Vec<f64> = rows
            .iter()
            .flat_map(|&r| self.value(r).data().iter().copied())
            .collect();
        self.push(
            "stack_rows",
            vec![rows.len(), cols],
            data,
            Op::StackRows(rows.to_vec()),
            rows,
        )
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let total = self.value(a).data().iter().sum();
        self.push("sum", vec![1], vec![total], Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Single entry of a rank-1 tensor, as a scalar.
    pub fn select(&mut self, a: Var, index: usize) -> Result<Var, TensorError> {
        self.narrow(a, index, 1)
    }

    /// Max-shifted softmax over the inclusive slice `[lo, hi]` of a rank-1 tensor.
    pub fn softmax_slice(&mut self, e: Var, lo: usize, hi: usize) -> Result<Var, TensorError> {
        self.expect_rank("softmax_slice", e, 1)?;
        let len = self.shape(e)[0];
        if lo > hi || hi >= len {
            return Err(TensorError::Bounds {
                op: "softmax_slice",
                lo,
                hi,
                len,
            });
        }
        let data = stable_softmax(&self.value(e).data()[lo..=hi]);
        self.push(
            "softmax_slice",
            vec![hi - lo + 1],
            data,
            Op::SoftmaxSlice { src: e, lo },
            &[e],
        )
    }

    pub fn softmax(&mut self, e: Var) -> Result<Var, TensorError> {
        self.expect_rank("softmax", e, 1)?;
        let len = self.shape(e)[0];
        self.softmax_slice(e, 0, len - 1)
    }

    /// Locally normalized weights: entry `t` is `exp(e_t) / sum_{k in win(t)} exp(e_k)`
    /// where `win(t)` is the window of half-width `half_width` clamped to the
    /// sequence. Each entry is the `t` component of a stable slice softmax.
    pub fn window_softmax(&mut self, e: Var, half_width: usize) -> Result<Var, TensorError> {
        self.expect_rank("window_softmax", e, 1)?;
        let x = self.value(e).data();
        let len = x.len();
        let data = (0..len)
            .map(|t| {
                let (lo, hi) = window_bounds(t, half_width, len);
                stable_softmax(&x[lo..=hi])[t - lo]
            })
            .collect();
        self.push(
            "window_softmax",
            vec![len],
            data,
            Op::WindowSoftmax { src: e, half_width },
            &[e],
        )
    }

    /// Populates gradients of the scalar `loss` for every node that requires one.
    ///
    /// A graph can be differentiated once; a second call fails with
    /// [`TensorError::GraphConsumed`].
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.consumed {
            return Err(TensorError::GraphConsumed);
        }
        let loss_value = &self.nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(TensorError::NotScalar {
                shape: loss_value.shape().to_vec(),
            });
        }
        self.consumed = true;
        for g in &mut self.grads {
            *g = None;
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        match nodes[i].op.clone() {
            Op::Leaf => {}
            Op::Unary(kind, a) => {
                let y = nodes[i].value.data();
                let x = nodes[a.0].value.data();
                accumulate(nodes, grads, a, |ga| {
                    for j in 0..ga.len() {
                        let d = match kind {
                            Unary::Tanh => 1.0 - y[j] * y[j],
                            Unary::Sigmoid => y[j] * (1.0 - y[j]),
                            Unary::Exp => y[j],
                            Unary::Log => 1.0 / x[j],
                        };
                        ga[j] += g[j] * d;
                    }
                });
            }
            Op::Binary(kind, a, b) => {
                let x = nodes[a.0].value.data();
                let y = nodes[b.0].value.data();
                accumulate(nodes, grads, a, |ga| {
                    for j in 0..ga.len() {
                        ga[j] += match kind {
                            Binary::Add | Binary::Sub => g[j],
                            Binary::Mul => g[j] * y[j],
                        };
                    }
                });
                accumulate(nodes, grads, b, |gb| {
                    for j in 0..gb.len() {
                        gb[j] += match kind {
                            Binary::Add => g[j],
                            Binary::Sub => -g[j],
                            Binary::Mul => g[j] * x[j],
                        };
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (m, k) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                let n = nodes[b.0].value.shape()[1];
                let x = nodes[a.0].value.data();
                let y = nodes[b.0].value.data();
                // dA = G Bᵀ
                accumulate(nodes, grads, a, |ga| {
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            ga[r * k + p] += dot(grow, &y[p * n..(p + 1) * n]);
                        }
                    }
                });
                // dB = Aᵀ G
                accumulate(nodes, grads, b, |gb| {
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let arp = x[r * k + p];
                            for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += arp * gv;
                            }
                        }
                    }
                });
            }
            Op::MatVec(a, v) => {
                let k = nodes[a.0].value.shape()[1];
                if nodes[a.0].requires_grad {
                    let x = nodes[v.0].value.data();
                    accumulate(nodes, grads, a, |ga| {
                        for (row, &gr) in ga.chunks_exact_mut(k).zip(g) {
                            for (o, &xp) in row.iter_mut().zip(x) {
                                *o += gr * xp;
                            }
                        }
                    });
                }
                if nodes[v.0].requires_grad {
                    let w = nodes[a.0].value.data();
                    accumulate(nodes, grads, v, |gv| {
                        for (row, &gr) in w.chunks_exact(k).zip(g) {
                            for (o, &wp) in gv.iter_mut().zip(row) {
                                *o += gr * wp;
                            }
                        }
                    });
                }
            }
            Op::VecMat(v, a) => {
                let n = nodes[a.0].value.shape()[1];
                if nodes[v.0].requires_grad {
                    let mat = nodes[a.0].value.data();
                    accumulate(nodes, grads, v, |gv| {
                        for (o, row) in gv.iter_mut().zip(mat.chunks_exact(n)) {
                            *o += dot(row, g);
                        }
                    });
                }
                if nodes[a.0].requires_grad {
                    let weights = nodes[v.0].value.data();
                    accumulate(nodes, grads, a, |ga| {
                        for (row, &wi) in ga.chunks_exact_mut(n).zip(weights) {
                            for (o, &gj) in row.iter_mut().zip(g) {
                                *o += wi * gj;
                            }
                        }
                    });
                }
            }
            Op::AddScalar(a, s) => {
                accumulate(nodes, grads, a, |ga| add_into(ga, g));
                let total: f64 = g.iter().sum();
                accumulate(nodes, grads, s, |gs| gs[0] += total);
            }
            Op::Scale(a, factor) => {
                accumulate(nodes, grads, a, |ga| {
                    for (o, &gj) in ga.iter_mut().zip(g) {
                        *o += factor * gj;
                    }
                });
            }
            Op::ClampMin(a, floor) => {
                let x = nodes[a.0].value.data();
                accumulate(nodes, grads, a, |ga| {
                    for j in 0..ga.len() {
                        if x[j] > floor {
                            ga[j] += g[j];
                        }
                    }
                });
            }
            Op::Narrow { src, start } => {
                accumulate(nodes, grads, src, |gs| {
                    add_into(&mut gs[start..start + g.len()], g)
                });
            }
            Op::Row { src, row } => {
                let cols = g.len();
                accumulate(nodes, grads, src, |gs| {
                    add_into(&mut gs[row * cols..(row + 1) * cols], g)
                });
            }
            Op::Reshape(a) => accumulate(nodes, grads, a, |ga| add_into(ga, g)),
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = nodes[p.0].value.numel();
                    accumulate(nodes, grads, p, |gp| add_into(gp, &g[offset..offset + n]));
                    offset += n;
                }
            }
            Op::StackRows(rows) => {
                for (r, p) in rows.into_iter().enumerate() {
                    let n = nodes[p.0].value.numel();
                    accumulate(nodes, grads, p, |gp| add_into(gp, &g[r * n..(r + 1) * n]));
                }
            }
            Op::Sum(a) => {
                let g0 = g[0];
                accumulate(nodes, grads, a, |ga| ga.iter_mut().for_each(|o| *o += g0));
            }
            Op::SoftmaxSlice { src, lo } => {
                let y = nodes[i].value.data();
                let inner = dot(y, g);
                accumulate(nodes, grads, src, |gs| {
                    for (j, (&yj, &gj)) in y.iter().zip(g).enumerate() {
                        gs[lo + j] += yj * (gj - inner);
                    }
                });
            }
            Op::WindowSoftmax { src, half_width } => {
                let e = nodes[src.0].value.data();
                let len = e.len();
                accumulate(nodes, grads, src, |gs| {
                    // d alpha_t / d e_k = alpha_t (delta_tk - p_{t,k}), p_{t,.} = window softmax
                    for t in 0..len {
                        let (lo, hi) = window_bounds(t, half_width, len);
                        let p = stable_softmax(&e[lo..=hi]);
                        let alpha = p[t - lo];
                        let scaled = g[t] * alpha;
                        for (k, pk) in (lo..=hi).zip(p) {
                            gs[k] -= scaled * pk;
                        }
                        gs[t] += scaled;
                    }
                });
            }
        }
    }
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
    if !nodes[v.0].requires_grad {
        return;
    }
    let n = nodes[v.0].value.numel();
    f(grads[v.0].get_or_insert_with(|| vec![0.0; n]));
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
