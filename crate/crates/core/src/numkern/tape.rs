//! Reverse-mode differentiation over dense arrays.
//!
//! A [`Tape`] records every primitive applied to [`Var`] handles together
//! with its forward value. [`Tape::backward`] walks the records in reverse
//! and accumulates adjoints into every leaf created with [`Tape::param`].
//! Records are appended in evaluation order, so the tape is always
//! topologically sorted.

use std::cell::{Ref, RefCell};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::numkern::array::DenseArray;
use crate::scalar::Real;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `a[i, j] + row[0, j]`
    AddRow(usize, usize),
    /// `a[i, j] * row[0, j]`
    MulRow(usize, usize),
    /// `a[i, j] * col[i, 0]`
    MulCol(usize, usize),
    /// `s[0, 0] * a`
    ScaleBy(usize, usize),
    Scale(usize, T),
    Relu(usize),
    Softplus(usize),
    SoftmaxRows(usize),
    NormalizeRows(usize),
    StandardizeCols(usize, T),
    Sum(usize),
    GatherRows(usize, Vec<usize>),
    ConcatCols(Vec<usize>),
    Reshape(usize, Vec<usize>),
    /// `out[i] = sum_j w[i, j] * v[idx[i * k + j]]`
    NeighborSum {
        weights: usize,
        values: usize,
        indices: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    value: DenseArray<T>,
    trainable: bool,
    needs_grad: bool,
}

/// Recording context. Not `Sync`; one tape belongs to one forward pass.
#[derive(Debug)]
pub struct Tape<T> {
    id: u64,
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoints of every trainable leaf reached by a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<DenseArray<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for `v`, or `None` if `v` is not a trainable leaf of this tape.
    /// Trainable leaves the output does not depend on get an all-zero array.
    pub fn get(&self, v: Var) -> Option<&DenseArray<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_ref())
    }

    pub fn get_mut(&mut self, v: Var) -> Option<&mut DenseArray<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get_mut(v.index).and_then(|g| g.as_mut())
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable leaf.
    pub fn param(&self, value: DenseArray<T>) -> Var {
        self.push_node(Op::Leaf, value, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&self, value: DenseArray<T>) -> Var {
        self.push_node(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> Ref<'_, DenseArray<T>> {
        self.check(v).expect("var belongs to this tape");
        Ref::map(self.nodes.borrow(), |n| &n[v.index].value)
    }

    pub fn value_cloned(&self, v: Var) -> DenseArray<T> {
        self.value(v).clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.value(v).shape().to_vec()
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.index >= self.nodes.borrow().len() {
            return Err(Error::Usage(format!(
                "variable #{} is not recorded on this tape",
                v.index
            )));
        }
        Ok(())
    }

    fn push_node(&self, op: Op<T>, value: DenseArray<T>, trainable: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let needs_grad = trainable || inputs_of(&op).iter().any(|&i| nodes[i].needs_grad);
        nodes.push(Node {
            op,
            value,
            trainable,
            needs_grad,
        });
        Var {
            tape: self.id,
            index: nodes.len() - 1,
        }
    }

    fn record(&self, op: Op<T>) -> Result<Var> {
        for &i in &inputs_of(&op) {
            if i >= self.nodes.borrow().len() {
                return Err(Error::Usage(format!("input #{i} is not on this tape")));
            }
        }
        let value = {
            let nodes = self.nodes.borrow();
            evaluate(&op, |i| &nodes[i].value)?
        };
        Ok(self.push_node(op, value, false))
    }

    fn ids(&self, vars: &[Var]) -> Result<Vec<usize>> {
        vars.iter()
            .map(|&v| self.check(v).map(|_| v.index))
            .collect()
    }

    fn unary(&self, a: Var, make: impl FnOnce(usize) -> Op<T>) -> Result<Var> {
        self.check(a)?;
        self.record(make(a.index))
    }

    fn binary(&self, a: Var, b: Var, make: impl FnOnce(usize, usize) -> Op<T>) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        self.record(make(a.index, b.index))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::MatMul)
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::Transpose)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub)
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul)
    }

    /// Adds a `1×D` row to every row of an `N×D` array.
    pub fn add_row(&self, a: Var, row: Var) -> Result<Var> {
        self.binary(a, row, Op::AddRow)
    }

    /// Multiplies every row of an `N×D` array by a `1×D` row.
    pub fn mul_row(&self, a: Var, row: Var) -> Result<Var> {
        self.binary(a, row, Op::MulRow)
    }

    /// Multiplies every column of an `N×D` array by an `N×1` column.
    pub fn mul_col(&self, a: Var, col: Var) -> Result<Var> {
        self.binary(a, col, Op::MulCol)
    }

    /// Multiplies an array by a recorded `1×1` scalar.
    pub fn scale_by(&self, s: Var, a: Var) -> Result<Var> {
        self.binary(s, a, Op::ScaleBy)
    }

    pub fn scale(&self, a: Var, c: T) -> Result<Var> {
        self.unary(a, |i| Op::Scale(i, c))
    }

    pub fn relu(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::Relu)
    }

    pub fn softplus(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::Softplus)
    }

    pub fn softmax_rows(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::SoftmaxRows)
    }

    /// Divides each row by its sum. Rows must have a positive sum.
    pub fn normalize_rows(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::NormalizeRows)
    }

    /// Per-column standardization over the rows: `(x - mean) / sqrt(var + eps)`
    /// with the biased variance.
    pub fn standardize_cols(&self, a: Var, eps: T) -> Result<Var> {
        self.unary(a, |i| Op::StandardizeCols(i, eps))
    }

    /// Sum of all entries as a `1×1` array.
    pub fn sum(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sum)
    }

    pub fn gather_rows(&self, a: Var, indices: Vec<usize>) -> Result<Var> {
        self.unary(a, |i| Op::GatherRows(i, indices))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var> {
        let ids = self.ids(parts)?;
        self.record(Op::ConcatCols(ids))
    }

    pub fn reshape(&self, a: Var, shape: Vec<usize>) -> Result<Var> {
        self.unary(a, |i| Op::Reshape(i, shape))
    }

    /// Weighted neighbor aggregation: `weights` is `N×k`, `values` is `M×D`,
    /// `indices` holds `N·k` row indices into `values` in row-major order.
    pub fn neighbor_sum(&self, weights: Var, values: Var, indices: Vec<usize>) -> Result<Var> {
        self.check(weights)?;
        self.check(values)?;
        self.record(Op::NeighborSum {
            weights: weights.index,
            values: values.index,
            indices,
        })
    }

    /// Re-evaluates every recorded node from the leaves.
    pub fn replay(&self) -> Result<Vec<DenseArray<T>>> {
        let nodes = self.nodes.borrow();
        let mut values: Vec<DenseArray<T>> = Vec::with_capacity(nodes.len());
        for node in nodes.iter() {
            let v = match node.op {
                Op::Leaf => node.value.clone(),
                ref op => evaluate(op, |i| &values[i])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Reverse accumulation from a `1×1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        self.check(output)?;
        let nodes = self.nodes.borrow();
        if nodes[output.index].value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar output, got shape {:?}",
                nodes[output.index].value.shape()
            )));
        }
        let mut adj: Vec<Option<DenseArray<T>>> = vec![None; nodes.len()];
        adj[output.index] = Some(
            DenseArray::filled(1, 1, T::one())
                .reshape(nodes[output.index].value.shape().to_vec())?,
        );

        for idx in (0..=output.index).rev() {
            let node = &nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                adj[idx] = Some(g);
                continue;
            }
            for (input, contrib) in vjp(&node.op, &node.value, &g, |i| &nodes[i].value)? {
                if !nodes[input].needs_grad {
                    continue;
                }
                match &mut adj[input] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                            *a += *c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            }
        }

        let grads = nodes
            .iter()
            .zip(adj)
            .map(|(n, g)| {
                if n.trainable {
                    Some(g.unwrap_or_else(|| {
                        DenseArray::from_raw(
                            n.value.shape().to_vec(),
                            vec![T::zero(); n.value.len()],
                        )
                    }))
                } else {
                    None
                }
            })
            .collect();
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }
}

fn inputs_of<T>(op: &Op<T>) -> Vec<usize> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::AddRow(a, b)
        | Op::MulRow(a, b)
        | Op::MulCol(a, b)
        | Op::ScaleBy(a, b) => vec![*a, *b],
        Op::Transpose(a)
        | Op::Scale(a, _)
        | Op::Relu(a)
        | Op::Softplus(a)
        | Op::SoftmaxRows(a)
        | Op::NormalizeRows(a)
        | Op::StandardizeCols(a, _)
        | Op::Sum(a)
        | Op::GatherRows(a, _)
        | Op::Reshape(a, _) => vec![*a],
        Op::ConcatCols(ids) => ids.clone(),
        Op::NeighborSum {
            weights, values, ..
        } => vec![*weights, *values],
    }
}

fn shape_err<T: Real>(op: &'static str, a: &DenseArray<T>, b: &DenseArray<T>) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn evaluate<'a, T: Real>(
    op: &Op<T>,
    val: impl Fn(usize) -> &'a DenseArray<T>,
) -> Result<DenseArray<T>> {
    Ok(match op {
        Op::Leaf => unreachable!("leaves carry their own value"),
        Op::MatMul(a, b) => val(*a).matmul(val(*b))?,
        Op::Transpose(a) => val(*a).transpose(),
        Op::Add(a, b) => val(*a).add(val(*b))?,
        Op::Sub(a, b) => val(*a).sub(val(*b))?,
        Op::Mul(a, b) => val(*a).zip_map(val(*b), "mul", |x, y| x * y)?,
        Op::AddRow(a, r) => broadcast_row(val(*a), val(*r), "add_row", |x, y| x + y)?,
        Op::MulRow(a, r) => broadcast_row(val(*a), val(*r), "mul_row", |x, y| x * y)?,
        Op::MulCol(a, c) => {
            let (a, c) = (val(*a), val(*c));
            if c.cols() != 1 || c.rows() != a.rows() {
                return Err(shape_err("mul_col", a, c));
            }
            let mut out = a.clone();
            for i in 0..a.rows() {
                let s = c.get(i, 0);
                out.row_mut(i).iter_mut().for_each(|v| *v *= s);
            }
            out
        }
        Op::ScaleBy(s, a) => {
            let (s, a) = (val(*s), val(*a));
            if s.len() != 1 {
                return Err(shape_err("scale_by", s, a));
            }
            a.scale(s.item())
        }
        Op::Scale(a, c) => val(*a).scale(*c),
        Op::Relu(a) => val(*a).map(|x| if x > T::zero() { x } else { T::zero() }),
        Op::Softplus(a) => val(*a).map(softplus),
        Op::SoftmaxRows(a) => softmax_rows(val(*a)),
        Op::NormalizeRows(a) => {
            let a = val(*a);
            let mut out = a.clone();
            for i in 0..a.rows() {
                let s: T = a.row(i).iter().fold(T::zero(), |acc, &v| acc + v);
                if s.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
                    return Err(Error::Precondition(format!(
                        "normalize_rows: row {i} has non-positive sum"
                    )));
                }
                out.row_mut(i).iter_mut().for_each(|v| *v /= s);
            }
            out
        }
        Op::StandardizeCols(a, eps) => standardize_cols(val(*a), *eps).0,
        Op::Sum(a) => DenseArray::scalar(val(*a).sum()),
        Op::GatherRows(a, idx) => val(*a).gather_rows(idx)?,
        Op::ConcatCols(ids) => {
            let parts: Vec<&DenseArray<T>> = ids.iter().map(|&i| val(i)).collect();
            DenseArray::concat_cols(&parts)?
        }
        Op::Reshape(a, shape) => val(*a).reshape(shape.clone())?,
        Op::NeighborSum {
            weights,
            values,
            indices,
        } => {
            let (w, v) = (val(*weights), val(*values));
            let (n, k, d) = (w.rows(), w.cols(), v.cols());
            if indices.len() != n * k {
                return Err(shape_err("neighbor_sum", w, v));
            }
            if let Some(&bad) = indices.iter().find(|&&j| j >= v.rows()) {
                return Err(Error::Parameter(format!(
                    "neighbor index {bad} out of range for {} rows",
                    v.rows()
                )));
            }
            let mut out = vec![T::zero(); n * d];
            for i in 0..n {
                let orow = &mut out[i * d..(i + 1) * d];
                for j in 0..k {
                    let wij = w.get(i, j);
                    for (o, &x) in orow.iter_mut().zip(v.row(indices[i * k + j])) {
                        *o += wij * x;
                    }
                }
            }
            DenseArray::from_raw(vec![n, d], out)
        }
    })
}

fn broadcast_row<T: Real>(
    a: &DenseArray<T>,
    r: &DenseArray<T>,
    op: &'static str,
    f: impl Fn(T, T) -> T,
) -> Result<DenseArray<T>> {
    if r.rows() != 1 || r.cols() != a.cols() {
        return Err(shape_err(op, a, r));
    }
    let mut out = a.clone();
    for i in 0..a.rows() {
        for (x, &y) in out.row_mut(i).iter_mut().zip(r.data()) {
            *x = f(*x, y);
        }
    }
    Ok(out)
}

pub(crate) fn softplus<T: Real>(x: T) -> T {
    // log(1 + e^x) without overflow
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_rows<T: Real>(a: &DenseArray<T>) -> DenseArray<T> {
    let mut out = a.clone();
    for i in 0..a.rows() {
        let row = out.row_mut(i);
        let m = row.iter().fold(T::neg_infinity(), |acc, &v| acc.max(v));
        let mut s = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// Returns the standardized array and the per-column `1/sqrt(var + eps)`.
pub(crate) fn standardize_cols<T: Real>(a: &DenseArray<T>, eps: T) -> (DenseArray<T>, Vec<T>) {
    let (n, d) = (a.rows(), a.cols());
    let nf = T::from_usize_lossy(n);
    let mut out = a.clone();
    let mut inv_std = Vec::with_capacity(d);
    for j in 0..d {
        let mean = (0..n).fold(T::zero(), |acc, i| acc + a.get(i, j)) / nf;
        let var = (0..n).fold(T::zero(), |acc, i| {
            let c = a.get(i, j) - mean;
            acc + c * c
        }) / nf;
        let inv = T::one() / (var + eps).sqrt();
        for i in 0..n {
            out.set(i, j, (a.get(i, j) - mean) * inv);
        }
        inv_std.push(inv);
    }
    (out, inv_std)
}

/// Vector-Jacobian products: `(input, contribution)` pairs.
fn vjp<'a, T: Real>(
    op: &Op<T>,
    out: &DenseArray<T>,
    g: &DenseArray<T>,
    val: impl Fn(usize) -> &'a DenseArray<T>,
) -> Result<Vec<(usize, DenseArray<T>)>> {
    Ok(match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) => {
            let da = g.matmul(&val(*b).transpose())?;
            let db = val(*a).transpose().matmul(g)?;
            vec![(*a, da), (*b, db)]
        }
        Op::Transpose(a) => vec![(*a, g.transpose())],
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
        Op::Mul(a, b) => {
            let da = g.zip_map(val(*b), "mul", |x, y| x * y)?;
            let db = g.zip_map(val(*a), "mul", |x, y| x * y)?;
            vec![(*a, da), (*b, db)]
        }
        Op::AddRow(a, r) => vec![(*a, g.clone()), (*r, col_sums(g))],
        Op::MulRow(a, r) => {
            let (av, rv) = (val(*a), val(*r));
            let da = broadcast_row(g, rv, "mul_row", |x, y| x * y)?;
            let dr = col_sums(&g.zip_map(av, "mul_row", |x, y| x * y)?);
            vec![(*a, da), (*r, dr)]
        }
        Op::MulCol(a, c) => {
            let (av, cv) = (val(*a), val(*c));
            let mut da = g.clone();
            let mut dc = Vec::with_capacity(av.rows());
            for i in 0..av.rows() {
                let s = cv.get(i, 0);
                da.row_mut(i).iter_mut().for_each(|v| *v *= s);
                dc.push(
                    g.row(i)
                        .iter()
                        .zip(av.row(i))
                        .fold(T::zero(), |acc, (&x, &y)| acc + x * y),
                );
            }
            vec![
                (*a, da),
                (*c, DenseArray::from_raw(cv.shape().to_vec(), dc)),
            ]
        }
        Op::ScaleBy(s, a) => {
            let (sv, av) = (val(*s), val(*a));
            let ds = g
                .data()
                .iter()
                .zip(av.data())
                .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
            vec![
                (*s, DenseArray::from_raw(sv.shape().to_vec(), vec![ds])),
                (*a, g.scale(sv.item())),
            ]
        }
        Op::Scale(a, c) => vec![(*a, g.scale(*c))],
        Op::Relu(a) => {
            let da = g.zip_map(
                val(*a),
                "relu",
                |x, y| if y > T::zero() { x } else { T::zero() },
            )?;
            vec![(*a, da)]
        }
        Op::Softplus(a) => {
            let da = g.zip_map(val(*a), "softplus", |x, y| x * sigmoid(y))?;
            vec![(*a, da)]
        }
        Op::SoftmaxRows(a) => {
            let mut da = g.clone();
            for i in 0..out.rows() {
                let y = out.row(i);
                let dot = g
                    .row(i)
                    .iter()
                    .zip(y)
                    .fold(T::zero(), |acc, (&x, &p)| acc + x * p);
                for (d, &p) in da.row_mut(i).iter_mut().zip(y) {
                    *d = p * (*d - dot);
                }
            }
            vec![(*a, da)]
        }
        Op::NormalizeRows(a) => {
            let av = val(*a);
            let mut da = g.clone();
            for i in 0..out.rows() {
                let s: T = av.row(i).iter().fold(T::zero(), |acc, &v| acc + v);
                let dot = g
                    .row(i)
                    .iter()
                    .zip(out.row(i))
                    .fold(T::zero(), |acc, (&x, &p)| acc + x * p);
                da.row_mut(i).iter_mut().for_each(|d| *d = (*d - dot) / s);
            }
            vec![(*a, da)]
        }
        Op::StandardizeCols(a, eps) => {
            let av = val(*a);
            let (xhat, inv_std) = standardize_cols(av, *eps);
            let (n, d) = (av.rows(), av.cols());
            let nf = T::from_usize_lossy(n);
            let mut da = g.clone();
            for (j, &inv) in inv_std.iter().enumerate().take(d) {
                let mean_g = (0..n).fold(T::zero(), |acc, i| acc + g.get(i, j)) / nf;
                let mean_gx =
                    (0..n).fold(T::zero(), |acc, i| acc + g.get(i, j) * xhat.get(i, j)) / nf;
                for i in 0..n {
                    da.set(
                        i,
                        j,
                        inv * (g.get(i, j) - mean_g - xhat.get(i, j) * mean_gx),
                    );
                }
            }
            vec![(*a, da)]
        }
        Op::Sum(a) => {
            let av = val(*a);
            vec![(
                *a,
                DenseArray::from_raw(av.shape().to_vec(), vec![g.item(); av.len()]),
            )]
        }
        Op::GatherRows(a, idx) => {
            let av = val(*a);
            let mut da = DenseArray::from_raw(av.shape().to_vec(), vec![T::zero(); av.len()]);
            for (r, &i) in idx.iter().enumerate() {
                for (d, &x) in da.row_mut(i).iter_mut().zip(g.row(r)) {
                    *d += x;
                }
            }
            vec![(*a, da)]
        }
        Op::ConcatCols(ids) => {
            let mut offset = 0;
            let mut res = Vec::with_capacity(ids.len());
            for &id in ids {
                let p = val(id);
                let w = p.cols();
                let mut part = Vec::with_capacity(p.len());
                for r in 0..g.rows() {
                    part.extend_from_slice(&g.row(r)[offset..offset + w]);
                }
                res.push((id, DenseArray::from_raw(p.shape().to_vec(), part)));
                offset += w;
            }
            res
        }
        Op::Reshape(a, _) => vec![(*a, g.reshape(val(*a).shape().to_vec())?)],
        Op::NeighborSum {
            weights,
            values,
            indices,
        } => {
            let (w, v) = (val(*weights), val(*values));
            let (n, k) = (w.rows(), w.cols());
            let mut dw = vec![T::zero(); n * k];
            let mut dv = DenseArray::from_raw(v.shape().to_vec(), vec![T::zero(); v.len()]);
            for i in 0..n {
                let gi = g.row(i);
                for j in 0..k {
                    let src = indices[i * k + j];
                    dw[i * k + j] = gi
                        .iter()
                        .zip(v.row(src))
                        .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
                    let wij = w.get(i, j);
                    for (d, &x) in dv.row_mut(src).iter_mut().zip(gi) {
                        *d += wij * x;
                    }
                }
            }
            vec![
                (*weights, DenseArray::from_raw(w.shape().to_vec(), dw)),
                (*values, dv),
            ]
        }
    })
}

fn col_sums<T: Real>(g: &DenseArray<T>) -> DenseArray<T> {
    let mut out = vec![T::zero(); g.cols()];
    for i in 0..g.rows() {
        for (o, &x) in out.iter_mut().zip(g.row(i)) {
            *o += x;
        }
    }
    DenseArray::from_raw(vec![1, g.cols()], out)
}
