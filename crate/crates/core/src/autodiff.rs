//! Reverse-mode differentiation over a dynamic tape.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each operation appends one
//! node holding its output value and the ids of its inputs, so nodes are
//! always in topological order. [`Tape::backward`] walks the nodes in exact
//! reverse recording order and returns a [`Gradients`] table; the tape itself
//! is never mutated by the backward pass, so replaying it is deterministic.
//!
//! Leaves may borrow their values (model parameters) instead of copying them.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::TensorError;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value<'p> {
    Owned(Tensor),
    Borrowed(&'p Tensor),
}

impl Value<'_> {
    fn get(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatVec(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddScalar(Var, Var),
    ScaleBy(Var, Var),
    Affine { x: Var, scale: f64 },
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    Concat(Var, Var),
    Sum(Var),
    Dot(Var, Var),
    Gather { table: Var, ids: Vec<usize> },
    Row { x: Var, index: usize },
    Stack(Vec<Var>),
    Reshape(Var),
    Dropout { x: Var, mask: Vec<f64> },
    Bce { p: Var, target: f64 },
}

struct Node<'p> {
    value: Value<'p>,
    op: Op,
    requires_grad: bool,
}

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-12;

/// Recording of one forward computation.
#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape { op, left: a.shape().to_vec(), right: b.shape().to_vec() }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.nodes[v.0].value.get()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value: Value::Owned(value), op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Records an owned leaf.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value: Value::Owned(value), op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf that borrows its value, typically a model parameter.
    pub fn param(&mut self, value: &'p Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value: Value::Borrowed(value), op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta, tb));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let (da, db) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = da[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &db[p * n..(p + 1) * n];
                for (o, &y) in row.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(t, Op::MatMul(a, b), &[a, b]))
    }

    /// `[m, k] x [k] -> [m]`.
    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var, TensorError> {
        let (ta, tx) = (self.value(a), self.value(x));
        if ta.rank() != 2 || tx.rank() != 1 || ta.cols() != tx.len() {
            return Err(shape_err("matvec", ta, tx));
        }
        let k = ta.cols();
        let xs = tx.data();
        let out: Vec<f64> = ta.data().chunks_exact(k).map(|row| row.iter().zip(xs).map(|(a, b)| a * b).sum()).collect();
        Ok(self.push(Tensor::vector(out), Op::MatVec(a, x), &[a, x]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(TensorError::Contract("transpose needs a matrix"));
        }
        let (m, n) = (ta.rows(), ta.cols());
        let d = ta.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = d[i * n + j];
            }
        }
        let t = Tensor::matrix(n, m, out)?;
        Ok(self.push(t, Op::Transpose(a), &[a]))
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(t, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a length-`n` vector to every row of an `[m, n]` matrix.
    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var, TensorError> {
        let (tm, tv) = (self.value(m), self.value(v));
        if tm.rank() != 2 || tv.rank() != 1 || tm.cols() != tv.len() {
            return Err(shape_err("add_row", tm, tv));
        }
        let n = tv.len();
        let vs = tv.data();
        let data = tm.data().iter().enumerate().map(|(i, &x)| x + vs[i % n]).collect();
        let t = Tensor::new(tm.shape().to_vec(), data)?;
        Ok(self.push(t, Op::AddRow(m, v), &[m, v]))
    }

    /// Adds a scalar variable to every element.
    pub fn add_scalar(&mut self, x: Var, s: Var) -> Result<Var, TensorError> {
        let (tx, ts) = (self.value(x), self.value(s));
        if !ts.is_scalar() {
            return Err(shape_err("add_scalar", tx, ts));
        }
        let c = ts.item();
        let t = tx.map(|v| v + c);
        Ok(self.push(t, Op::AddScalar(x, s), &[x, s]))
    }

    /// Multiplies every element by a scalar variable.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var, TensorError> {
        let (tx, ts) = (self.value(x), self.value(s));
        if !ts.is_scalar() {
            return Err(shape_err("scale_by", tx, ts));
        }
        let c = ts.item();
        let t = tx.map(|v| v * c);
        Ok(self.push(t, Op::ScaleBy(x, s), &[x, s]))
    }

    /// `scale * x + shift` with constant coefficients.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let t = self.value(x).map(|v| scale * v + shift);
        self.push(t, Op::Affine { x, scale }, &[x])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.affine(x, c, 0.0)
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 1.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x).map(libm::tanh);
        self.push(t, Op::Tanh(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(sigmoid);
        self.push(t, Op::Sigmoid(x), &[x])
    }

    /// Softmax over a vector.
    pub fn softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        self.softmax_masked(x, None)
    }

    /// Softmax over the unmasked entries of a vector; masked entries
    /// (`mask[i] == false`) get weight exactly zero. The maximum logit is
    /// subtracted before exponentiation.
    pub fn softmax_masked(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var, TensorError> {
        let tx = self.value(x);
        if tx.rank() != 1 {
            return Err(TensorError::Contract("softmax needs a vector"));
        }
        if tx.is_empty() {
            return Err(TensorError::Empty { op: "softmax" });
        }
        let keep = |i: usize| mask.map_or(true, |m| m[i]);
        if let Some(m) = mask {
            if m.len() != tx.len() {
                return Err(TensorError::Shape { op: "softmax", left: tx.shape().to_vec(), right: vec![m.len()] });
            }
        }
        let kept = tx.data().iter().enumerate().filter(|&(i, _)| keep(i)).map(|(_, &v)| v);
        if kept.clone().any(f64::is_nan) {
            return Err(TensorError::NonFinite);
        }
        let max = kept.fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(TensorError::Contract("softmax: every position is masked"));
        }
        let mut out: Vec<f64> =
            tx.data().iter().enumerate().map(|(i, &v)| if keep(i) { libm::exp(v - max) } else { 0.0 }).collect();
        let total: f64 = out.iter().sum();
        for o in &mut out {
            *o /= total;
        }
        Ok(self.push(Tensor::vector(out), Op::Softmax(x), &[x]))
    }

    /// Concatenates two vectors.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 1 || tb.rank() != 1 {
            return Err(shape_err("concat", ta, tb));
        }
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        data.extend_from_slice(ta.data());
        data.extend_from_slice(tb.data());
        Ok(self.push(Tensor::vector(data), Op::Concat(a, b), &[a, b]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 1 || ta.shape() != tb.shape() {
            return Err(shape_err("dot", ta, tb));
        }
        let s = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b), &[a, b]))
    }

    /// Selects rows of a `[v, d]` table, producing `[ids.len(), d]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let tt = self.value(table);
        if tt.rank() != 2 {
            return Err(TensorError::Contract("gather needs a matrix table"));
        }
        if ids.is_empty() {
            return Err(TensorError::Empty { op: "gather" });
        }
        let (v, d) = (tt.rows(), tt.cols());
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(TensorError::Shape { op: "gather", left: tt.shape().to_vec(), right: vec![bad] });
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(tt.row(i));
        }
        let t = Tensor::matrix(ids.len(), d, data)?;
        Ok(self.push(t, Op::Gather { table, ids: ids.to_vec() }, &[table]))
    }

    /// Row `index` of a matrix, as a vector.
    pub fn row(&mut self, x: Var, index: usize) -> Result<Var, TensorError> {
        let tx = self.value(x);
        if tx.rank() != 2 || index >= tx.rows() {
            return Err(TensorError::Shape { op: "row", left: tx.shape().to_vec(), right: vec![index] });
        }
        let t = Tensor::vector(tx.row(index).to_vec());
        Ok(self.push(t, Op::Row { x, index }, &[x]))
    }

    /// Stacks equal-length vectors into the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var, TensorError> {
        let first = rows.first().ok_or(TensorError::Empty { op: "stack" })?;
        let d = self.value(*first).len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let tr = self.value(r);
            if tr.rank() != 1 || tr.len() != d {
                return Err(shape_err("stack", self.value(*first), tr));
            }
            data.extend_from_slice(tr.data());
        }
        let t = Tensor::matrix(rows.len(), d, data)?;
        Ok(self.push(t, Op::Stack(rows.to_vec()), rows))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        let t = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Multiplies by a fixed mask. Inverted dropout passes `keep / (1 - rate)`
    /// entries, so the mask already carries the rescaling.
    pub fn dropout(&mut self, x: Var, mask: Vec<f64>) -> Result<Var, TensorError> {
        let tx = self.value(x);
        if mask.len() != tx.len() {
            return Err(TensorError::Shape { op: "dropout", left: tx.shape().to_vec(), right: vec![mask.len()] });
        }
        let data = tx.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Dropout { x, mask }, &[x]))
    }

    /// Binary cross-entropy of a scalar probability against a 0/1 target.
    pub fn bce(&mut self, p: Var, target: f64) -> Result<Var, TensorError> {
        let tp = self.value(p);
        if !tp.is_scalar() {
            return Err(TensorError::Contract("bce needs a scalar probability"));
        }
        let loss = bce_value(tp.item(), target);
        Ok(self.push(Tensor::scalar(loss), Op::Bce { p, target }, &[p]))
    }

    /// Computes `d loss / d node` for every node that requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let t = self.value(loss);
        if !t.is_scalar() {
            return Err(TensorError::NonScalarLoss(t.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::filled(t.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = node.value.get();
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.requires_grad(a) {
                    let db = tb.data();
                    self.accumulate(grads, a, |ga| {
                        for r in 0..m {
                            let grow = &gd[r * n..(r + 1) * n];
                            for p in 0..k {
                                let brow = &db[p * n..(p + 1) * n];
                                ga[r * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    });
                }
                if self.requires_grad(b) {
                    let da = ta.data();
                    self.accumulate(grads, b, |gb| {
                        for r in 0..m {
                            let grow = &gd[r * n..(r + 1) * n];
                            for p in 0..k {
                                let x = da[r * k + p];
                                if x == 0.0 {
                                    continue;
                                }
                                for (o, &y) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *o += x * y;
                                }
                            }
                        }
                    });
                }
            }
            &Op::MatVec(a, x) => {
                let (ta, tx) = (self.value(a), self.value(x));
                let k = ta.cols();
                if self.requires_grad(a) {
                    let xs = tx.data();
                    self.accumulate(grads, a, |ga| {
                        for (r, &gr) in gd.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            for (o, &xv) in ga[r * k..(r + 1) * k].iter_mut().zip(xs) {
                                *o += gr * xv;
                            }
                        }
                    });
                }
                if self.requires_grad(x) {
                    let da = ta.data();
                    self.accumulate(grads, x, |gx| {
                        for (r, &gr) in gd.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            for (o, &av) in gx.iter_mut().zip(&da[r * k..(r + 1) * k]) {
                                *o += gr * av;
                            }
                        }
                    });
                }
            }
            &Op::Transpose(a) => {
                let (m, n) = (out.cols(), out.rows());
                self.accumulate(grads, a, |ga| {
                    for r in 0..m {
                        for c in 0..n {
                            ga[r * n + c] += gd[c * m + r];
                        }
                    }
                });
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, |ga| add_into(ga, gd));
                self.accumulate(grads, b, |gb| add_into(gb, gd));
            }
            &Op::Sub(a, b) => {
                self.accumulate(grads, a, |ga| add_into(ga, gd));
                self.accumulate(grads, b, |gb| {
                    for (o, &v) in gb.iter_mut().zip(gd) {
                        *o -= v;
                    }
                });
            }
            &Op::Mul(a, b) => {
                let (da, db) = (self.value(a).data(), self.value(b).data());
                self.accumulate(grads, a, |ga| {
                    for ((o, &gv), &y) in ga.iter_mut().zip(gd).zip(db) {
                        *o += gv * y;
                    }
                });
                self.accumulate(grads, b, |gb| {
                    for ((o, &gv), &x) in gb.iter_mut().zip(gd).zip(da) {
                        *o += gv * x;
                    }
                });
            }
            &Op::AddRow(m, v) => {
                self.accumulate(grads, m, |gm| add_into(gm, gd));
                let n = self.value(v).len();
                self.accumulate(grads, v, |gv| {
                    for (idx, &x) in gd.iter().enumerate() {
                        gv[idx % n] += x;
                    }
                });
            }
            &Op::AddScalar(x, s) => {
                self.accumulate(grads, x, |gx| add_into(gx, gd));
                let total: f64 = gd.iter().sum();
                self.accumulate(grads, s, |gs| gs[0] += total);
            }
            &Op::ScaleBy(x, s) => {
                let c = self.value(s).item();
                self.accumulate(grads, x, |gx| {
                    for (o, &gv) in gx.iter_mut().zip(gd) {
                        *o += gv * c;
                    }
                });
                let dx = self.value(x).data();
                let total: f64 = gd.iter().zip(dx).map(|(a, b)| a * b).sum();
                self.accumulate(grads, s, |gs| gs[0] += total);
            }
            &Op::Affine { x, scale } => {
                self.accumulate(grads, x, |gx| {
                    for (o, &gv) in gx.iter_mut().zip(gd) {
                        *o += gv * scale;
                    }
                });
            }
            &Op::Tanh(x) => {
                let y = out.data();
                self.accumulate(grads, x, |gx| {
                    for ((o, &gv), &yv) in gx.iter_mut().zip(gd).zip(y) {
                        *o += gv * (1.0 - yv * yv);
                    }
                });
            }
            &Op::Sigmoid(x) => {
                let y = out.data();
                self.accumulate(grads, x, |gx| {
                    for ((o, &gv), &yv) in gx.iter_mut().zip(gd).zip(y) {
                        *o += gv * yv * (1.0 - yv);
                    }
                });
            }
            &Op::Softmax(x) => {
                let y = out.data();
                let inner: f64 = gd.iter().zip(y).map(|(a, b)| a * b).sum();
                self.accumulate(grads, x, |gx| {
                    for ((o, &gv), &yv) in gx.iter_mut().zip(gd).zip(y) {
                        *o += yv * (gv - inner);
                    }
                });
            }
            &Op::Concat(a, b) => {
                let m = self.value(a).len();
                self.accumulate(grads, a, |ga| add_into(ga, &gd[..m]));
                self.accumulate(grads, b, |gb| add_into(gb, &gd[m..]));
            }
            &Op::Sum(x) => {
                let gv = gd[0];
                self.accumulate(grads, x, |gx| {
                    for o in gx.iter_mut() {
                        *o += gv;
                    }
                });
            }
            &Op::Dot(a, b) => {
                let gv = gd[0];
                let (da, db) = (self.value(a).data(), self.value(b).data());
                self.accumulate(grads, a, |ga| {
                    for (o, &y) in ga.iter_mut().zip(db) {
                        *o += gv * y;
                    }
                });
                self.accumulate(grads, b, |gb| {
                    for (o, &x) in gb.iter_mut().zip(da) {
                        *o += gv * x;
                    }
                });
            }
            Op::Gather { table, ids } => {
                let d = out.cols();
                self.accumulate(grads, *table, |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * d..(id + 1) * d], &gd[r * d..(r + 1) * d]);
                    }
                });
            }
            &Op::Row { x, index } => {
                let d = out.len();
                self.accumulate(grads, x, |gx| add_into(&mut gx[index * d..(index + 1) * d], gd));
            }
            Op::Stack(rows) => {
                let d = out.cols();
                for (r, &v) in rows.iter().enumerate() {
                    self.accumulate(grads, v, |gv| add_into(gv, &gd[r * d..(r + 1) * d]));
                }
            }
            &Op::Reshape(x) => {
                self.accumulate(grads, x, |gx| add_into(gx, gd));
            }
            Op::Dropout { x, mask } => {
                self.accumulate(grads, *x, |gx| {
                    for ((o, &gv), &m) in gx.iter_mut().zip(gd).zip(mask) {
                        *o += gv * m;
                    }
                });
            }
            &Op::Bce { p, target } => {
                let pc = clamp_prob(self.value(p).item());
                let d = gd[0] * (pc - target) / (pc * (1.0 - pc));
                self.accumulate(grads, p, |gp| gp[0] += d);
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = &mut grads[v.0];
        let g = slot.get_or_insert_with(|| Tensor::zeros(self.nodes[v.0].value.get().shape()));
        f(g.data_mut());
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (o, &v) in dst.iter_mut().zip(src) {
        *o += v;
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

/// `-(y ln p + (1 - y) ln(1 - p))` with `p` clamped away from 0 and 1.
pub fn bce_value(p: f64, target: f64) -> f64 {
    let pc = clamp_prob(p);
    -(target * libm::log(pc) + (1.0 - target) * libm::log(1.0 - pc))
}

/// Result of a backward pass: one optional gradient per tape node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` if nothing flowed into it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `v`, materialized as zeros when absent.
    pub fn wrt_or_zeros(&self, tape: &Tape<'_>, v: Var) -> Tensor {
        self.wrt(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
    }
}
