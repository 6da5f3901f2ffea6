//! Reverse-mode automatic differentiation over small dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass and is thrown
//! away afterwards; model structure changes from tree to tree, so nothing
//! is compiled ahead of time. Trainable arrays live in a [`ParamStore`]
//! that the tape borrows read-only: parameter nodes do not copy their data,
//! and [`Tape::backward`] writes parameter gradients into a [`Gradients`]
//! buffer laid out like the store.
//!
//! All values are column-major-agnostic row-major `f64` matrices; vectors
//! are `n x 1` columns.

mod adam;
mod check;

pub use adam::{Adam, AdamConfig};
pub use check::{grad_check, gradient_pairs, Coordinate, GradCheck};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapeError {
    #[error("{op}: shape mismatch, {left:?} vs {right:?}")]
    Mismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("{op}: {reason}")]
    Invalid { op: &'static str, reason: String },
}

fn mismatch(op: &'static str, left: (usize, usize), right: (usize, usize)) -> ShapeError {
    ShapeError::Mismatch { op, left, right }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if data.len() != rows * cols {
            return Err(ShapeError::Invalid { op: "tensor", reason: format!("{} values do not fill {rows}x{cols}", data.len()) });
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn column(data: Vec<f64>) -> Self {
        Tensor { rows: data.len(), cols: 1, data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

/// Named trainable arrays in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.params.push(Param { name: name.into(), tensor });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalars across all arrays.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients { grads: self.params.iter().map(|p| vec![0.0; p.tensor.len()]).collect() }
    }
}

/// Parameter gradients, indexed like the [`ParamStore`] they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.grads.iter().flatten().fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Row { param: ParamId, row: usize },
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    Sum(Vec<Var>),
    Dot(Var, Var),
    SoftmaxXent { logits: Var, target: usize, probs: Vec<f64> },
}

#[derive(Debug)]
struct Entry {
    rows: usize,
    cols: usize,
    /// Empty for `Op::Param`; the data stays in the store.
    value: Vec<f64>,
    op: Op,
}

/// Records one forward pass over a borrowed parameter store.
pub struct Tape<'p> {
    params: &'p ParamStore,
    entries: Vec<Entry>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape { params, entries: Vec::new() }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.entries.push(Entry { rows, cols, value, op });
        Var(self.entries.len() - 1)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let e = &self.entries[v.0];
        (e.rows, e.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let e = &self.entries[v.0];
        match e.op {
            Op::Param(id) => &self.params.get(id).data,
            _ => &e.value,
        }
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t.rows, t.cols, t.data, Op::Constant)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.constant(Tensor::zeros(rows, cols))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let t = self.params.get(id);
        self.push(t.rows, t.cols, Vec::new(), Op::Param(id))
    }

    /// Row `row` of a parameter table as a column vector.
    pub fn embedding_lookup(&mut self, table: ParamId, row: usize) -> Result<Var, ShapeError> {
        let t = self.params.get(table);
        if row >= t.rows {
            return Err(ShapeError::Invalid {
                op: "embedding_lookup",
                reason: format!("row {row} out of range for {} rows", t.rows),
            });
        }
        let value = t.row(row).to_vec();
        Ok(self.push(t.cols, 1, value, Op::Row { param: table, row }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(mismatch("matmul", (m, k), (k2, n)));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        if n == 1 {
            for (o, arow) in out.iter_mut().zip(av.chunks_exact(k)) {
                *o = arow.iter().zip(bv).map(|(x, y)| x * y).sum();
            }
            return Ok(self.push(m, n, out, Op::MatMul(a, b)));
        }
        for i in 0..m {
            let arow = &av[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &x) in arow.iter().enumerate() {
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &y) in orow.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        Ok(self.push(m, n, out, Op::MatMul(a, b)))
    }

    fn elementwise(&mut self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize), ShapeError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch(op, sa, sb));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let (r, c) = self.elementwise("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(r, c, out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let (r, c) = self.elementwise("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(r, c, out, Op::Mul(a, b)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(r, c, out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(r, c, out, Op::Tanh(a))
    }

    /// Stacks column vectors (or any matrices with equal column count)
    /// vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, ShapeError> {
        let Some(&first) = parts.first() else {
            return Err(ShapeError::Invalid { op: "concat_rows", reason: "no inputs".into() });
        };
        let cols = self.shape(first).1;
        let mut rows = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.1 != cols {
                return Err(mismatch("concat_rows", self.shape(first), s));
            }
            rows += s.0;
        }
        let mut out = Vec::with_capacity(rows * cols);
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(rows, cols, out, Op::Concat(parts.to_vec())))
    }

    /// Rows `start..start + len` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, ShapeError> {
        let (r, c) = self.shape(a);
        if start + len > r {
            return Err(ShapeError::Invalid {
                op: "slice_rows",
                reason: format!("rows {start}..{} out of range for {r}", start + len),
            });
        }
        let out = self.value(a)[start * c..(start + len) * c].to_vec();
        Ok(self.push(len, c, out, Op::Slice { src: a, start }))
    }

    /// Splits `a` into `parts` equal row blocks.
    pub fn split_rows(&mut self, a: Var, parts: usize) -> Result<Vec<Var>, ShapeError> {
        let (r, _) = self.shape(a);
        if parts == 0 || r % parts != 0 {
            return Err(ShapeError::Invalid { op: "split_rows", reason: format!("{r} rows do not split into {parts} parts") });
        }
        let len = r / parts;
        (0..parts).map(|i| self.slice_rows(a, i * len, len)).collect()
    }

    /// Elementwise sum of equally shaped values.
    pub fn sum(&mut self, terms: &[Var]) -> Result<Var, ShapeError> {
        let Some(&first) = terms.first() else {
            return Err(ShapeError::Invalid { op: "sum", reason: "no inputs".into() });
        };
        let (r, c) = self.shape(first);
        let mut out = vec![0.0; r * c];
        for &t in terms {
            if self.shape(t) != (r, c) {
                return Err(mismatch("sum", (r, c), self.shape(t)));
            }
            for (o, x) in out.iter_mut().zip(self.value(t)) {
                *o += x;
            }
        }
        Ok(self.push(r, c, out, Op::Sum(terms.to_vec())))
    }

    /// Inner product of two equally shaped values, as a `1 x 1` node.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        self.elementwise("dot", a, b)?;
        let s = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        Ok(self.push(1, 1, vec![s], Op::Dot(a, b)))
    }

    /// `-ln softmax(logits)[target]` for a column of logits.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, ShapeError> {
        let (r, c) = self.shape(logits);
        if c != 1 || target >= r {
            return Err(ShapeError::Invalid {
                op: "softmax_cross_entropy",
                reason: format!("target {target} with logits of shape {r}x{c}"),
            });
        }
        let probs = softmax(self.value(logits));
        let loss = -log_softmax_at(self.value(logits), target);
        Ok(self.push(1, 1, vec![loss], Op::SoftmaxXent { logits, target, probs }))
    }

    /// Gradients of a scalar node with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut param_grads = self.params.zero_gradients();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0; self.value(loss).len()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let entry = &self.entries[i];
            let mut sink = Sink { tape: self, grads: &mut grads, params: &mut param_grads };
            match &entry.op {
                Op::Constant => {}
                Op::Param(id) => accumulate(param_grads.get_mut(*id), &g),
                Op::Row { param, row } => {
                    let cols = self.params.get(*param).cols;
                    accumulate(&mut param_grads.get_mut(*param)[row * cols..(row + 1) * cols], &g);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.shape(*a);
                    let n = self.shape(*b).1;
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if n == 1 {
                        sink.with(*a, |ga| {
                            for (row, &gr) in ga.chunks_exact_mut(k).zip(&g) {
                                for (x, y) in row.iter_mut().zip(bv) {
                                    *x += gr * y;
                                }
                            }
                        });
                        sink.with(*b, |gb| {
                            for (arow, &gr) in av.chunks_exact(k).zip(&g) {
                                for (x, y) in gb.iter_mut().zip(arow) {
                                    *x += gr * y;
                                }
                            }
                        });
                        continue;
                    }
                    sink.with(*a, |ga| {
                        for r in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for c in 0..n {
                                    s += g[r * n + c] * bv[p * n + c];
                                }
                                ga[r * k + p] += s;
                            }
                        }
                    });
                    sink.with(*b, |gb| {
                        for r in 0..m {
                            for p in 0..k {
                                let x = av[r * k + p];
                                for c in 0..n {
                                    gb[p * n + c] += x * g[r * n + c];
                                }
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    sink.with(*a, |ga| accumulate(ga, &g));
                    sink.with(*b, |gb| accumulate(gb, &g));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    sink.with(*a, |ga| {
                        for ((x, gi), y) in ga.iter_mut().zip(&g).zip(bv) {
                            *x += gi * y;
                        }
                    });
                    sink.with(*b, |gb| {
                        for ((x, gi), y) in gb.iter_mut().zip(&g).zip(av) {
                            *x += gi * y;
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let out = &entry.value;
                    sink.with(*a, |ga| {
                        for ((x, gi), s) in ga.iter_mut().zip(&g).zip(out) {
                            *x += gi * s * (1.0 - s);
                        }
                    });
                }
                Op::Tanh(a) => {
                    let out = &entry.value;
                    sink.with(*a, |ga| {
                        for ((x, gi), t) in ga.iter_mut().zip(&g).zip(out) {
                            *x += gi * (1.0 - t * t);
                        }
                    });
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        sink.with(p, |gp| accumulate(gp, &g[offset..offset + n]));
                        offset += n;
                    }
                }
                Op::Slice { src, start } => {
                    let cols = entry.cols;
                    sink.with(*src, |gs| accumulate(&mut gs[start * cols..start * cols + g.len()], &g));
                }
                Op::Sum(terms) => {
                    for &t in terms {
                        sink.with(t, |gt| accumulate(gt, &g));
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    sink.with(*a, |ga| {
                        for (x, y) in ga.iter_mut().zip(bv) {
                            *x += g[0] * y;
                        }
                    });
                    sink.with(*b, |gb| {
                        for (x, y) in gb.iter_mut().zip(av) {
                            *x += g[0] * y;
                        }
                    });
                }
                Op::SoftmaxXent { logits, target, probs } => {
                    sink.with(*logits, |gl| {
                        for (j, (x, p)) in gl.iter_mut().zip(probs).enumerate() {
                            let onehot = if j == *target { 1.0 } else { 0.0 };
                            *x += g[0] * (p - onehot);
                        }
                    });
                }
            }
        }
        param_grads
    }
}

/// Routes a gradient contribution to either a tape node or, for parameter
/// nodes, straight into the parameter gradient buffer.
struct Sink<'a, 't, 'p> {
    tape: &'t Tape<'p>,
    grads: &'a mut Vec<Option<Vec<f64>>>,
    params: &'a mut Gradients,
}

impl Sink<'_, '_, '_> {
    fn with(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        let entry = &self.tape.entries[v.0];
        match entry.op {
            Op::Constant => {}
            Op::Param(id) => f(self.params.get_mut(id)),
            _ => f(self.grads[v.0].get_or_insert_with(|| vec![0.0; entry.rows * entry.cols])),
        }
    }
}

fn accumulate(into: &mut [f64], g: &[f64]) {
    for (x, y) in into.iter_mut().zip(g) {
        *x += y;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax_at(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    logits[target] - lse
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[(&str, Tensor)]) -> (ParamStore, Vec<ParamId>) {
        let mut s = ParamStore::new();
        let ids = values.iter().map(|(n, t)| s.add(*n, t.clone())).collect();
        (s, ids)
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let p = softmax(&[0.0, 0.0, 0.0]);
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn activations_at_zero() {
        let s = ParamStore::new();
        let mut tape = Tape::new(&s);
        let z = tape.zeros(1, 1);
        let sg = tape.sigmoid(z);
        let th = tape.tanh(z);
        assert_eq!(tape.scalar(sg), 0.5);
        assert_eq!(tape.scalar(th), 0.0);
    }

    #[test]
    fn split_then_concat_is_identity() {
        let s = ParamStore::new();
        let mut tape = Tape::new(&s);
        let d = 3;
        let x = tape.constant(Tensor::column((0..5 * d).map(|i| i as f64 * 0.5).collect()));
        let parts = tape.split_rows(x, 5).unwrap();
        assert_eq!(parts.len(), 5);
        assert!(parts.iter().all(|&p| tape.shape(p) == (d, 1)));
        let back = tape.concat_rows(&parts).unwrap();
        assert_eq!(tape.value(back), tape.value(x));
        assert!(tape.split_rows(x, 4).is_err());
    }

    #[test]
    fn matmul_shape_mismatch() {
        let s = ParamStore::new();
        let mut tape = Tape::new(&s);
        let a = tape.zeros(2, 3);
        let b = tape.zeros(2, 1);
        assert_eq!(tape.matmul(a, b), Err(ShapeError::Mismatch { op: "matmul", left: (2, 3), right: (2, 1) }));
        assert!(tape.add(a, b).is_err());
    }

    #[test]
    fn matmul_forward_and_backward() {
        let (s, ids) = store_with(&[
            ("a", Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()),
            ("x", Tensor::column(vec![5.0, 6.0])),
        ]);
        let mut tape = Tape::new(&s);
        let a = tape.param(ids[0]);
        let x = tape.param(ids[1]);
        let y = tape.matmul(a, x).unwrap();
        assert_eq!(tape.value(y), &[17.0, 39.0]);
        let ones = tape.constant(Tensor::column(vec![1.0, 1.0]));
        let loss = tape.dot(y, ones).unwrap();
        let g = tape.backward(loss);
        assert_eq!(g.get(ids[0]), &[5.0, 6.0, 5.0, 6.0]);
        assert_eq!(g.get(ids[1]), &[4.0, 6.0]);
    }

    #[test]
    fn xent_gradient_is_probs_minus_onehot() {
        let (s, ids) = store_with(&[("l", Tensor::column(vec![0.3, -1.2, 2.0, 0.0]))]);
        let mut tape = Tape::new(&s);
        let l = tape.param(ids[0]);
        let loss = tape.softmax_cross_entropy(l, 2).unwrap();
        let probs = softmax(tape.value(l));
        assert!((tape.scalar(loss) + probs[2].ln()).abs() < 1e-14);
        let g = tape.backward(loss);
        for (j, (gj, pj)) in g.get(ids[0]).iter().zip(&probs).enumerate() {
            let expect = pj - if j == 2 { 1.0 } else { 0.0 };
            assert!((gj - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn fan_out_accumulates() {
        // f(w) = w*w + w*w through two separate parameter nodes.
        let (s, ids) = store_with(&[("w", Tensor::column(vec![1.5]))]);
        let mut tape = Tape::new(&s);
        let w1 = tape.param(ids[0]);
        let w2 = tape.param(ids[0]);
        let a = tape.mul(w1, w1).unwrap();
        let b = tape.mul(w2, w1).unwrap();
        let f = tape.add(a, b).unwrap();
        let g = tape.backward(f);
        assert!((g.get(ids[0])[0] - 4.0 * 1.5).abs() < 1e-15);
    }

    #[test]
    fn embedding_gradient_hits_only_its_row() {
        let (s, ids) = store_with(&[("e", Tensor::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap())]);
        let mut tape = Tape::new(&s);
        let r = tape.embedding_lookup(ids[0], 1).unwrap();
        assert_eq!(tape.value(r), &[3.0, 4.0]);
        let w = tape.constant(Tensor::column(vec![2.0, -1.0]));
        let loss = tape.dot(r, w).unwrap();
        let g = tape.backward(loss);
        assert_eq!(g.get(ids[0]), &[0.0, 0.0, 2.0, -1.0, 0.0, 0.0]);
        assert!(tape.embedding_lookup(ids[0], 3).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let (s, ids) = store_with(&[("w", Tensor::from_vec(2, 2, vec![0.1, -0.7, 0.4, 0.9]).unwrap())]);
        let run = || {
            let mut tape = Tape::new(&s);
            let w = tape.param(ids[0]);
            let x = tape.constant(Tensor::column(vec![0.3, -0.2]));
            let y = tape.matmul(w, x).unwrap();
            let t = tape.tanh(y);
            tape.value(t).to_vec()
        };
        assert_eq!(run(), run());
    }
}
