use std::sync::Arc;

use crate::array::Array;
use crate::error::{NdError, Result};
use crate::kernels;
use crate::rng::SeededRng;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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
    /// `a · bᵀ`
    MatMulNt(Var, Var),
    Transpose(Var),
    /// Second operand may be a `[1, n]` row broadcast over the first.
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Embedding { table: Var, ids: Vec<usize> },
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm { x: Var, rstd: Vec<f64> },
    Dropout { x: Var, mask: Vec<f64> },
    Sum(Var),
    Pick { x: Var, cols: Vec<usize> },
}

struct Node {
    value: Arc<Array>,
    op: Op,
    requires_grad: bool,
}

/// A recorded computation. Nodes are appended in evaluation order, which is
/// also a valid topological order for the backward sweep.
pub struct Graph {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Array>>,
    track: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn rows_cols(a: &Array, op: &'static str) -> Result<(usize, usize)> {
    a.dims2(op)
}

fn shape_err(op: &'static str, a: &Array, b: &Array) -> NdError {
    NdError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn zip_map(a: &Array, b: &Array, f: impl Fn(f64, f64) -> f64) -> Array {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Array::new(a.shape().to_vec(), data).expect("same shape")
}

/// Applies `f(x, y)` where `y` is either the same shape as `x` or a `[1, n]`
/// row broadcast over `x`'s rows.
fn broadcast_map(
    op: &'static str,
    a: &Array,
    b: &Array,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Array> {
    if a.shape() == b.shape() {
        return Ok(zip_map(a, b, f));
    }
    let (_, ac) = rows_cols(a, op)?;
    let (br, bc) = rows_cols(b, op)?;
    if br != 1 || bc != ac {
        return Err(shape_err(op, a, b));
    }
    let mut data = Vec::with_capacity(a.len());
    if ac > 0 {
        for row in a.data().chunks_exact(ac) {
            data.extend(row.iter().zip(b.data()).map(|(&x, &y)| f(x, y)));
        }
    }
    Ok(Array::new(a.shape().to_vec(), data).expect("same shape"))
}

/// Folds a gradient of `a`'s shape down to `b`'s shape (sums over rows when
/// `b` was broadcast).
fn reduce_to(grad: &Array, target: &Array) -> Array {
    if grad.shape() == target.shape() {
        return grad.clone();
    }
    let cols = target.len();
    let mut out = vec![0.0; cols];
    if cols > 0 {
        for row in grad.data().chunks_exact(cols) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
    }
    Array::new(target.shape().to_vec(), out).expect("row shape")
}

impl Graph {
    /// A graph that records gradient information for parameter leaves.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
            track: true,
        }
    }

    /// A graph for inference: parameters are treated as constants and
    /// `backward` is rejected.
    pub fn no_grad() -> Self {
        Self {
            track: false,
            ..Self::new()
        }
    }

    pub fn is_tracking(&self) -> bool {
        self.track
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array, op: Op, requires_grad: bool) -> Var {
        self.push_arc(Arc::new(value), op, requires_grad)
    }

    fn push_arc(&mut self, value: Arc<Array>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: impl Into<Arc<Array>>) -> Var {
        let track = self.track;
        self.push_arc(value.into(), Op::Leaf, track)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: impl Into<Arc<Array>>) -> Var {
        self.push_arc(value.into(), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    pub fn value_arc(&self, v: Var) -> Arc<Array> {
        Arc::clone(&self.nodes[v.0].value)
    }

    /// Accumulated gradient of a parameter leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Array> {
        self.leaf_grads[v.0].as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Array> {
        self.leaf_grads[v.0].take()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.leaf_grads {
            *g = None;
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = rows_cols(av, "matmul")?;
        let (k2, n) = rows_cols(bv, "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", av, bv));
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, 1.0, av.data(), false, bv.data(), false, 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Array::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = rows_cols(av, "matmul_nt")?;
        let (n, k2) = rows_cols(bv, "matmul_nt")?;
        if k != k2 {
            return Err(shape_err("matmul_nt", av, bv));
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, 1.0, av.data(), false, bv.data(), true, 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Array::new(vec![m, n], out)?, Op::MatMulNt(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let (r, c) = rows_cols(av, "transpose")?;
        let src = av.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Array::new(vec![c, r], out)?, Op::Transpose(a), rg))
    }

    /// Elementwise sum; `b` may be a `[1, n]` row broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = broadcast_map("add", self.value(a), self.value(b), |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Elementwise product; `b` may be a `[1, n]` row broadcast over `a`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = broadcast_map("mul", self.value(a), self.value(b), |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// Concatenates rank-2 arrays along `axis` (0 stacks rows, 1 joins columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| NdError::Invalid("concat of zero arrays".into()))?;
        let (r0, c0) = rows_cols(self.value(*first), "concat")?;
        let mut rows = 0;
        let mut cols = 0;
        for &p in parts {
            let pv = self.value(p);
            let (r, c) = rows_cols(pv, "concat")?;
            match axis {
                0 if c == c0 => rows += r,
                1 if r == r0 => cols += c,
                0 | 1 => return Err(shape_err("concat", self.value(*first), pv)),
                _ => return Err(NdError::Invalid(format!("concat: bad axis {axis}"))),
            }
        }
        let (rows, cols) = if axis == 0 { (rows, c0) } else { (r0, cols) };
        let mut out = Vec::with_capacity(rows * cols);
        if axis == 0 {
            for &p in parts {
                out.extend_from_slice(self.value(p).data());
            }
        } else {
            for i in 0..rows {
                for &p in parts {
                    out.extend_from_slice(self.value(p).row(i));
                }
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Array::new(vec![rows, cols], out)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = rows_cols(xv, "slice")?;
        let extent = match axis {
            0 => r,
            1 => c,
            _ => return Err(NdError::Invalid(format!("slice: bad axis {axis}"))),
        };
        if start + len > extent {
            return Err(NdError::Index {
                op: "slice",
                index: start + len,
                len: extent,
            });
        }
        let (out, shape) = if axis == 0 {
            (xv.data()[start * c..(start + len) * c].to_vec(), vec![len, c])
        } else {
            let mut out = Vec::with_capacity(r * len);
            for i in 0..r {
                out.extend_from_slice(&xv.row(i)[start..start + len]);
            }
            (out, vec![r, len])
        };
        let rg = self.rg(x);
        Ok(self.push(Array::new(shape, out)?, Op::Slice { x, axis, start }, rg))
    }

    /// Gathers rows of `table` (shape `[vocab, dim]`) into `[ids.len(), dim]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        let (vocab, dim) = rows_cols(tv, "embedding")?;
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(NdError::Index {
                    op: "embedding",
                    index: id,
                    len: vocab,
                });
            }
            out.extend_from_slice(tv.row(id));
        }
        let rg = self.rg(table);
        Ok(self.push(
            Array::new(vec![ids.len(), dim], out)?,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = rows_cols(xv, "softmax")?;
        let out = kernels::softmax_rows(xv.data(), c);
        let rg = self.rg(x);
        Ok(self.push(Array::new(vec![r, c], out)?, Op::Softmax(x), rg))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = rows_cols(xv, "log_softmax")?;
        let out = kernels::log_softmax_rows(xv.data(), c);
        let rg = self.rg(x);
        Ok(self.push(Array::new(vec![r, c], out)?, Op::LogSoftmax(x), rg))
    }

    /// Row-wise normalization to zero mean and unit variance, without the
    /// affine terms (compose with [`Graph::mul`] and [`Graph::add`]).
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = rows_cols(xv, "layer_norm")?;
        let (out, rstd) = kernels::layer_norm_rows(xv.data(), c, eps);
        let rg = self.rg(x);
        Ok(self.push(Array::new(vec![r, c], out)?, Op::LayerNorm { x, rstd }, rg))
    }

    /// Inverted dropout. Identity when `train` is false or `p` is zero.
    pub fn dropout(&mut self, x: Var, p: f64, train: bool, rng: &mut SeededRng) -> Result<Var> {
        if !train || p <= 0.0 {
            return Ok(x);
        }
        if p >= 1.0 {
            return Err(NdError::Invalid(format!("dropout probability {p} >= 1")));
        }
        let keep = 1.0 / (1.0 - p);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.uniform() < p { 0.0 } else { keep })
            .collect();
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let out = Array::new(xv.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Dropout { x, mask }, rg))
    }

    /// Sum of all elements as a `[1, 1]` scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Array::scalar(total), Op::Sum(x), rg)
    }

    /// Selects `x[i, cols[i]]` for every row, giving `[rows, 1]`.
    pub fn pick(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = rows_cols(xv, "pick")?;
        if cols.len() != r {
            return Err(NdError::Index {
                op: "pick",
                index: cols.len(),
                len: r,
            });
        }
        let mut out = Vec::with_capacity(r);
        for (i, &j) in cols.iter().enumerate() {
            if j >= c {
                return Err(NdError::Index {
                    op: "pick",
                    index: j,
                    len: c,
                });
            }
            out.push(xv.data()[i * c + j]);
        }
        let rg = self.rg(x);
        Ok(self.push(
            Array::new(vec![r, 1], out)?,
            Op::Pick {
                x,
                cols: cols.to_vec(),
            },
            rg,
        ))
    }

    /// Attention `softmax(q kᵀ / √d + mask) v`. Returns the attended values and
    /// the attention weights (`[q rows, k rows]`).
    pub fn scaled_dot_product(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        mask: Option<Var>,
    ) -> Result<(Var, Var)> {
        let (_, d) = rows_cols(self.value(q), "scaled_dot_product")?;
        let scores = self.matmul_nt(q, k)?;
        let mut scores = self.scale(scores, 1.0 / (d as f64).sqrt());
        if let Some(m) = mask {
            scores = self.add(scores, m)?;
        }
        let weights = self.softmax(scores)?;
        let out = self.matmul(weights, v)?;
        Ok((out, weights))
    }

    /// Back-propagates from a scalar root. Parameter gradients are added to
    /// whatever earlier calls accumulated.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.track {
            return Err(NdError::NoGrad);
        }
        let rv = self.value(root);
        if !rv.is_scalar() {
            return Err(NdError::NotScalar {
                op: "backward",
                shape: rv.shape().to_vec(),
            });
        }
        if !self.rg(root) {
            return Ok(());
        }
        let mut grads: Vec<Option<Array>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Array::ones(rv.shape()));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => match &mut self.leaf_grads[i] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                },
                op => self.propagate(op, &node.value, g, &mut grads),
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Array>], v: Var, g: Array) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    /// Gradient buffer for `v`, created as zeros on first use.
    fn buffer<'a>(&self, grads: &'a mut [Option<Array>], v: Var) -> &'a mut Array {
        let shape = self.value(v).shape();
        grads[v.0].get_or_insert_with(|| Array::zeros(shape))
    }

    fn propagate(&self, op: &Op, out: &Array, g: Array, grads: &mut [Option<Array>]) {
        match op {
            Op::Leaf => unreachable!(),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if self.rg(*a) {
                    let ga = self.buffer(grads, *a);
                    kernels::gemm(m, n, k, 1.0, g.data(), false, bv.data(), true, 1.0, ga.data_mut());
                }
                if self.rg(*b) {
                    let gb = self.buffer(grads, *b);
                    kernels::gemm(k, m, n, 1.0, av.data(), true, g.data(), false, 1.0, gb.data_mut());
                }
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[0];
                if self.rg(*a) {
                    let ga = self.buffer(grads, *a);
                    kernels::gemm(m, n, k, 1.0, g.data(), false, bv.data(), false, 1.0, ga.data_mut());
                }
                if self.rg(*b) {
                    let gb = self.buffer(grads, *b);
                    kernels::gemm(n, m, k, 1.0, g.data(), true, av.data(), false, 1.0, gb.data_mut());
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (out.shape()[0], out.shape()[1]);
                let mut t = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        t[j * r + i] = g.data()[i * c + j];
                    }
                }
                self.accumulate(grads, *a, Array::new(vec![c, r], t).expect("transpose"));
            }
            Op::Add(a, b) => {
                if self.rg(*b) {
                    self.accumulate(grads, *b, reduce_to(&g, self.value(*b)));
                }
                self.accumulate(grads, *a, g);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let ga = broadcast_map("mul", &g, bv, |x, y| x * y).expect("checked forward");
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let gb = zip_map(&g, av, |x, y| x * y);
                    self.accumulate(grads, *b, reduce_to(&gb, bv));
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.map(|x| x * s)),
            Op::Tanh(a) => self.accumulate(grads, *a, zip_map(&g, out, |d, y| d * (1.0 - y * y))),
            Op::Sigmoid(a) => {
                self.accumulate(grads, *a, zip_map(&g, out, |d, y| d * y * (1.0 - y)))
            }
            Op::Relu(a) => {
                let ga = zip_map(&g, self.value(*a), |d, x| if x > 0.0 { d } else { 0.0 });
                self.accumulate(grads, *a, ga);
            }
            Op::Concat { parts, axis } => {
                let cols = out.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = (self.value(p).shape()[0], self.value(p).shape()[1]);
                    if self.rg(p) {
                        let piece = if *axis == 0 {
                            g.data()[offset * cols..(offset + pr) * cols].to_vec()
                        } else {
                            let mut v = Vec::with_capacity(pr * pc);
                            for i in 0..pr {
                                v.extend_from_slice(&g.row(i)[offset..offset + pc]);
                            }
                            v
                        };
                        self.accumulate(grads, p, Array::new(vec![pr, pc], piece).expect("concat"));
                    }
                    offset += if *axis == 0 { pr } else { pc };
                }
            }
            Op::Slice { x, axis, start } => {
                if !self.rg(*x) {
                    return;
                }
                let (xr, xc) = (self.value(*x).shape()[0], self.value(*x).shape()[1]);
                let gx = self.buffer(grads, *x).data_mut();
                if *axis == 0 {
                    for (d, s) in gx[start * xc..].iter_mut().zip(g.data()) {
                        *d += s;
                    }
                } else {
                    let len = out.shape()[1];
                    for i in 0..xr {
                        let row = &mut gx[i * xc + start..i * xc + start + len];
                        for (d, s) in row.iter_mut().zip(g.row(i)) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let dim = self.value(*table).shape()[1];
                let gt = self.buffer(grads, *table).data_mut();
                for (i, &id) in ids.iter().enumerate() {
                    let src = &g.data()[i * dim..(i + 1) * dim];
                    for (d, s) in gt[id * dim..(id + 1) * dim].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            Op::Softmax(a) => {
                let cols = out.shape()[1];
                let mut ga = vec![0.0; out.len()];
                if cols > 0 {
                    for ((y, d), dst) in out
                        .data()
                        .chunks_exact(cols)
                        .zip(g.data().chunks_exact(cols))
                        .zip(ga.chunks_exact_mut(cols))
                    {
                        let dot: f64 = y.iter().zip(d).map(|(a, b)| a * b).sum();
                        for ((o, &yi), &di) in dst.iter_mut().zip(y).zip(d) {
                            *o = yi * (di - dot);
                        }
                    }
                }
                self.accumulate(grads, *a, Array::new(out.shape().to_vec(), ga).expect("softmax"));
            }
            Op::LogSoftmax(a) => {
                let cols = out.shape()[1];
                let mut ga = vec![0.0; out.len()];
                if cols > 0 {
                    for ((y, d), dst) in out
                        .data()
                        .chunks_exact(cols)
                        .zip(g.data().chunks_exact(cols))
                        .zip(ga.chunks_exact_mut(cols))
                    {
                        let total: f64 = d.iter().sum();
                        for ((o, &yi), &di) in dst.iter_mut().zip(y).zip(d) {
                            *o = di - yi.exp() * total;
                        }
                    }
                }
                self.accumulate(grads, *a, Array::new(out.shape().to_vec(), ga).expect("log_softmax"));
            }
            Op::LayerNorm { x, rstd } => {
                let cols = out.shape()[1];
                let n = cols as f64;
                let mut gx = vec![0.0; out.len()];
                if cols > 0 {
                    for (((xh, d), dst), &r) in out
                        .data()
                        .chunks_exact(cols)
                        .zip(g.data().chunks_exact(cols))
                        .zip(gx.chunks_exact_mut(cols))
                        .zip(rstd)
                    {
                        let mean_d = d.iter().sum::<f64>() / n;
                        let mean_dx = d.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
                        for ((o, &di), &xi) in dst.iter_mut().zip(d).zip(xh) {
                            *o = r * (di - mean_d - xi * mean_dx);
                        }
                    }
                }
                self.accumulate(grads, *x, Array::new(out.shape().to_vec(), gx).expect("layer_norm"));
            }
            Op::Dropout { x, mask } => {
                let data = g.data().iter().zip(mask).map(|(a, m)| a * m).collect();
                self.accumulate(grads, *x, Array::new(out.shape().to_vec(), data).expect("dropout"));
            }
            Op::Sum(x) => {
                let d = g.data()[0];
                self.accumulate(grads, *x, Array::filled(self.value(*x).shape(), d));
            }
            Op::Pick { x, cols } => {
                let c = self.value(*x).shape()[1];
                let gx = self.buffer(grads, *x).data_mut();
                for (i, &j) in cols.iter().enumerate() {
                    gx[i * c + j] += g.data()[i];
                }
            }
        }
    }
}

impl std::fmt::Debug for Graph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Graph")
            .field("nodes", &self.nodes.len())
            .field("track", &self.track)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Array {
        Array::row_vector(v.to_vec())
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(row(&[0.0, 0.0]));
        let y = g.softmax(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let a = Array::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let i = g.constant(Array::eye(3));
        let av = g.constant(a.clone());
        let out = g.matmul(i, av).unwrap();
        assert_eq!(g.value(out), &a);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Array::zeros(&[2, 3]));
        let b = g.constant(Array::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(row(&[4.0; 6]));
        let y = g.layer_norm(x, 1e-5).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dropout_is_identity_outside_training() {
        let mut g = Graph::new();
        let mut rng = SeededRng::new(3);
        let x = g.param(row(&[1.0, 2.0, 3.0]));
        let y = g.dropout(x, 0.5, false, &mut rng).unwrap();
        assert_eq!(x, y);
        let z = g.dropout(x, 0.5, true, &mut rng).unwrap();
        for (a, b) in g.value(z).data().iter().zip(g.value(x).data()) {
            assert!(*a == 0.0 || (*a - 2.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.param(Array::from_rows(&[vec![1.0, -2.0], vec![0.5, 7.0]]).unwrap());
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn product_of_scalars() {
        let mut g = Graph::new();
        let x = g.param(Array::scalar(3.0));
        let y = g.param(Array::scalar(-4.0));
        let p = g.mul(x, y).unwrap();
        g.backward(p).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[-4.0]);
        assert_eq!(g.grad(y).unwrap().data(), &[3.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::new();
        let x = g.param(row(&[1.0, 2.0]));
        let t = g.tanh(x);
        let s = g.sum(t);
        g.backward(s).unwrap();
        let once = g.grad(x).unwrap().clone();
        g.backward(s).unwrap();
        for (a, b) in g.grad(x).unwrap().data().iter().zip(once.data()) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
        g.zero_grad();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::new();
        let x = g.param(row(&[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(NdError::NotScalar { .. })));
    }

    #[test]
    fn no_grad_graph_rejects_backward() {
        let mut g = Graph::no_grad();
        let x = g.param(Array::scalar(1.0));
        assert!(matches!(g.backward(x), Err(NdError::NoGrad)));
    }

    #[test]
    fn row_broadcast_add_reduces_gradient() {
        let mut g = Graph::new();
        let a = g.param(Array::zeros(&[3, 2]));
        let b = g.param(row(&[1.0, 2.0]));
        let c = g.add(a, b).unwrap();
        let s = g.sum(c);
        g.backward(s).unwrap();
        assert_eq!(g.grad(b).unwrap().data(), &[3.0, 3.0]);
        assert_eq!(g.grad(b).unwrap().shape(), &[1, 2]);
    }

    #[test]
    fn single_key_attention_returns_value() {
        let mut g = Graph::new();
        let q = g.constant(row(&[0.3, -1.0]));
        let k = g.constant(row(&[2.0, 0.5]));
        let v = g.constant(row(&[7.0, 8.0, 9.0]));
        let (out, w) = g.scaled_dot_product(q, k, v, None).unwrap();
        assert_eq!(g.value(w).data(), &[1.0]);
        assert_eq!(g.value(out).data(), &[7.0, 8.0, 9.0]);
    }
}
