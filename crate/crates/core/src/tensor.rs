//! Dense row-major `f64` tensors with reverse-mode automatic differentiation.
//!
//! Every operation records its inputs when at least one of them requires a
//! gradient. [`Tensor::backward`] walks that graph in reverse topological
//! order and accumulates gradients into every reachable tensor that requires
//! one. Gradients add across repeated `backward` calls until
//! [`Tensor::zero_grad`] clears them; the training loop clears them after each
//! optimizer step.
//!
//! Tensors are reference counted handles: cloning a `Tensor` shares the same
//! node, which is how parameters are shared between a model and its optimizer.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::{Ref, RefCell};
use core::fmt;

use crate::error::{Error, Result};

/// Handle to a node in the computation graph.
#[derive(Clone)]
pub struct Tensor(Rc<Node>);

struct Node {
    shape: Vec<usize>,
    value: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    op: Op,
}

enum Op {
    Leaf,
    MatMul(Tensor, Tensor),
    Transpose(Tensor),
    Add(Tensor, Tensor),
    AddRow(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Scale(Tensor, f64),
    Relu(Tensor),
    Sum(Tensor),
    Reshape(Tensor),
    LogSoftmax(Tensor),
    GatherCols(Tensor, Vec<usize>),
    GatherRows(Tensor, Vec<usize>),
    CrossEntropy {
        logits: Tensor,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    KlDivergence {
        logits: Tensor,
        target: Vec<f64>,
        probs: Vec<f64>,
    },
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("values", &*self.0.value.borrow())
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn from_op(shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: Op) -> Self {
        debug_assert_eq!(numel(&shape), value.len());
        let op = if requires_grad { op } else { Op::Leaf };
        Tensor(Rc::new(Node {
            shape,
            value: RefCell::new(value),
            grad: RefCell::new(None),
            requires_grad,
            op,
        }))
    }

    fn leaf(shape: &[usize], values: Vec<f64>, requires_grad: bool) -> Result<Self> {
        if numel(shape) != values.len() {
            return Err(Error::Shape {
                op: "tensor",
                lhs: shape.to_vec(),
                rhs: vec![values.len()],
            });
        }
        Ok(Self::from_op(shape.to_vec(), values, requires_grad, Op::Leaf))
    }

    /// A constant tensor. Fails when `values.len()` disagrees with `shape`.
    pub fn new(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        Self::leaf(shape, values, false)
    }

    /// A leaf that collects gradients.
    pub fn parameter(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        Self::leaf(shape, values, true)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_op(shape.to_vec(), vec![0.0; numel(shape)], false, Op::Leaf)
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_op(Vec::new(), vec![value], false, Op::Leaf)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn len(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn values(&self) -> Ref<'_, Vec<f64>> {
        self.0.value.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.value.borrow().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.len() != 1 {
            return Err(Error::Shape {
                op: "item",
                lhs: self.0.shape.clone(),
                rhs: Vec::new(),
            });
        }
        Ok(self.0.value.borrow()[0])
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Overwrites the stored values in place. Used by optimizers and loaders.
    pub fn set_values(&self, values: &[f64]) -> Result<()> {
        let mut v = self.0.value.borrow_mut();
        if v.len() != values.len() {
            return Err(Error::Shape {
                op: "set_values",
                lhs: self.0.shape.clone(),
                rhs: vec![values.len()],
            });
        }
        v.copy_from_slice(values);
        Ok(())
    }

    pub(crate) fn with_values_and_grad<R>(&self, f: impl FnOnce(&mut [f64], Option<&[f64]>) -> R) -> R {
        let grad = self.0.grad.borrow();
        let mut v = self.0.value.borrow_mut();
        f(&mut v, grad.as_deref())
    }

    /// A constant copy that cuts the gradient graph.
    pub fn detach(&self) -> Tensor {
        Self::from_op(self.0.shape.clone(), self.to_vec(), false, Op::Leaf)
    }

    /// True when both handles point at the same node.
    pub fn same_node(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    fn id(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
        Error::Shape {
            op,
            lhs: a.0.shape.clone(),
            rhs: b.0.shape.clone(),
        }
    }

    fn rows_cols(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.0.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::Shape {
                op,
                lhs: s.to_vec(),
                rhs: vec![0, 0],
            }),
        }
    }

    /// Matrix product of `[m×k]` and `[k×n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.rows_cols("matmul")?;
        let (k2, n) = other.rows_cols("matmul")?;
        if k != k2 {
            return Err(Self::shape_err("matmul", self, other));
        }
        let mut out = vec![0.0; m * n];
        gemm_nn(&self.values(), &other.values(), &mut out, m, k, n);
        Ok(Self::from_op(
            vec![m, n],
            out,
            self.requires_grad() || other.requires_grad(),
            Op::MatMul(self.clone(), other.clone()),
        ))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.rows_cols("transpose")?;
        let out = transpose(&self.values(), r, c);
        Ok(Self::from_op(
            vec![c, r],
            out,
            self.requires_grad(),
            Op::Transpose(self.clone()),
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(Self::shape_err("add", self, other));
        }
        let out = zip_map(&self.values(), &other.values(), |a, b| a + b);
        Ok(Self::from_op(
            self.shape().to_vec(),
            out,
            self.requires_grad() || other.requires_grad(),
            Op::Add(self.clone(), other.clone()),
        ))
    }

    /// Adds a length-`n` vector to every row of an `[m×n]` matrix.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        let (m, n) = self.rows_cols("add_row")?;
        if row.len() != n || row.shape().len() != 1 {
            return Err(Self::shape_err("add_row", self, row));
        }
        let mut out = self.to_vec();
        let r = row.values();
        for i in 0..m {
            for (o, b) in out[i * n..(i + 1) * n].iter_mut().zip(r.iter()) {
                *o += b;
            }
        }
        drop(r);
        Ok(Self::from_op(
            vec![m, n],
            out,
            self.requires_grad() || row.requires_grad(),
            Op::AddRow(self.clone(), row.clone()),
        ))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(Self::shape_err("mul", self, other));
        }
        let out = zip_map(&self.values(), &other.values(), |a, b| a * b);
        Ok(Self::from_op(
            self.shape().to_vec(),
            out,
            self.requires_grad() || other.requires_grad(),
            Op::Mul(self.clone(), other.clone()),
        ))
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        let out = self.values().iter().map(|v| v * factor).collect();
        Self::from_op(
            self.shape().to_vec(),
            out,
            self.requires_grad(),
            Op::Scale(self.clone(), factor),
        )
    }

    pub fn relu(&self) -> Tensor {
        let out = self.values().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        Self::from_op(self.shape().to_vec(), out, self.requires_grad(), Op::Relu(self.clone()))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self) -> Tensor {
        let s = self.values().iter().sum();
        Self::from_op(Vec::new(), vec![s], self.requires_grad(), Op::Sum(self.clone()))
    }

    pub fn mean(&self) -> Tensor {
        let n = self.len().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.len() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Self::from_op(
            shape.to_vec(),
            self.to_vec(),
            self.requires_grad(),
            Op::Reshape(self.clone()),
        ))
    }

    /// Log-softmax over the last axis, computed with max subtraction.
    pub fn log_softmax(&self) -> Result<Tensor> {
        let k = *self.shape().last().unwrap_or(&1);
        if k == 0 {
            return Err(Error::Contract("log_softmax over an empty axis".into()));
        }
        let v = self.values();
        check_finite("log_softmax", &v)?;
        let mut out = v.clone();
        drop(v);
        for row in out.chunks_mut(k) {
            let (max, offset) = split_lse(row);
            for x in row.iter_mut() {
                *x = (*x - max) - offset;
            }
        }
        Ok(Self::from_op(
            self.shape().to_vec(),
            out,
            self.requires_grad(),
            Op::LogSoftmax(self.clone()),
        ))
    }

    /// Columns `indices` of an `[r×c]` matrix, in the given order.
    pub fn gather_cols(&self, indices: &[usize]) -> Result<Tensor> {
        let (r, c) = self.rows_cols("gather_cols")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= c) {
            return Err(Error::Index {
                what: "column",
                index: bad,
                len: c,
            });
        }
        let v = self.values();
        let q = indices.len();
        let mut out = Vec::with_capacity(r * q);
        for i in 0..r {
            out.extend(indices.iter().map(|&j| v[i * c + j]));
        }
        drop(v);
        Ok(Self::from_op(
            vec![r, q],
            out,
            self.requires_grad(),
            Op::GatherCols(self.clone(), indices.to_vec()),
        ))
    }

    /// Rows `indices` of an `[r×c]` matrix, in the given order.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let (r, c) = self.rows_cols("gather_rows")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(Error::Index {
                what: "row",
                index: bad,
                len: r,
            });
        }
        let v = self.values();
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            out.extend_from_slice(&v[i * c..(i + 1) * c]);
        }
        drop(v);
        Ok(Self::from_op(
            vec![indices.len(), c],
            out,
            self.requires_grad(),
            Op::GatherRows(self.clone(), indices.to_vec()),
        ))
    }

    /// Mean over rows of `-log_softmax(logits)[b, labels[b]]` for `[B×K]` logits.
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Tensor> {
        let (b, k) = self.rows_cols("cross_entropy")?;
        if labels.len() != b {
            return Err(Error::Shape {
                op: "cross_entropy",
                lhs: self.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::Label {
                row,
                label,
                classes: k,
            });
        }
        if b == 0 {
            return Err(Error::Contract("cross_entropy over an empty batch".into()));
        }
        let v = self.values();
        check_finite("cross_entropy", &v)?;
        let mut probs = vec![0.0; b * k];
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = &v[i * k..(i + 1) * k];
            let (max, offset) = split_lse(row);
            total += (max - row[y]) + offset;
            for (p, &x) in probs[i * k..(i + 1) * k].iter_mut().zip(row) {
                *p = libm::exp((x - max) - offset);
            }
        }
        drop(v);
        Ok(Self::from_op(
            Vec::new(),
            vec![total / b as f64],
            self.requires_grad(),
            Op::CrossEntropy {
                logits: self.clone(),
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Mean over rows of `KL(target ‖ softmax(logits))`.
    ///
    /// `target` is read as plain values: no gradient ever flows into whatever
    /// produced it.
    pub fn kl_divergence(&self, target: &Tensor) -> Result<Tensor> {
        let (b, k) = self.rows_cols("kl_divergence")?;
        if target.shape() != self.shape() {
            return Err(Self::shape_err("kl_divergence", target, self));
        }
        if b == 0 {
            return Err(Error::Contract("kl_divergence over an empty batch".into()));
        }
        let p = target.to_vec();
        for (i, row) in p.chunks(k).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || libm::fabs(s - 1.0) > 1e-9 {
                return Err(Error::Contract(format!(
                    "kl_divergence target row {i} is not a distribution (sum {s})"
                )));
            }
        }
        let v = self.values();
        check_finite("kl_divergence", &v)?;
        let mut probs = vec![0.0; b * k];
        let mut total = 0.0;
        for i in 0..b {
            let row = &v[i * k..(i + 1) * k];
            let (max, offset) = split_lse(row);
            for j in 0..k {
                let ls = (row[j] - max) - offset;
                let pj = p[i * k + j];
                if pj > 0.0 {
                    total += pj * (libm::log(pj) - ls);
                }
                probs[i * k + j] = libm::exp(ls);
            }
        }
        drop(v);
        Ok(Self::from_op(
            Vec::new(),
            vec![total / b as f64],
            self.requires_grad(),
            Op::KlDivergence {
                logits: self.clone(),
                target: p,
                probs,
            },
        ))
    }

    /// Reverse-mode sweep from a single-element loss.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: self.shape().to_vec(),
                rhs: Vec::new(),
            });
        }
        if !self.requires_grad() {
            return Err(Error::Contract(
                "backward from a loss that reaches no parameter".into(),
            ));
        }
        let order = self.topo_order();
        let mut bufs = GradBuffers {
            position: order.iter().enumerate().map(|(i, t)| (t.id(), i)).collect(),
            grads: vec![None; order.len()],
        };
        *bufs.grads.last_mut().expect("loss is in its own graph") = Some(vec![1.0]);

        for idx in (0..order.len()).rev() {
            let Some(g) = bufs.grads[idx].take() else { continue };
            let node = &order[idx];
            {
                let mut slot = node.0.grad.borrow_mut();
                match slot.as_mut() {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => *slot = Some(g.clone()),
                }
            }
            node.propagate(&g, &mut bufs);
        }
        Ok(())
    }

    /// Nodes that require a gradient, parents before children, `self` last.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut seen = BTreeMap::new();
        let mut stack = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if seen.insert(t.id(), ()).is_some() {
                continue;
            }
            stack.push((t.clone(), true));
            for p in t.parents() {
                if p.requires_grad() && !seen.contains_key(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }

    fn parents(&self) -> Vec<&Tensor> {
        match &self.0.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::Mul(a, b) => vec![a, b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Sum(a)
            | Op::Reshape(a)
            | Op::LogSoftmax(a)
            | Op::GatherCols(a, _)
            | Op::GatherRows(a, _) => vec![a],
            Op::CrossEntropy { logits, .. } | Op::KlDivergence { logits, .. } => vec![logits],
        }
    }

    /// Adds this node's contribution `g` into each parent's gradient buffer.
    fn propagate(&self, g: &[f64], bufs: &mut GradBuffers) {
        match &self.0.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (a.shape()[0], a.shape()[1]);
                let n = b.shape()[1];
                if a.requires_grad() {
                    gemm_nt(g, &b.values(), bufs.get(a), m, n, k);
                }
                if b.requires_grad() {
                    gemm_tn(&a.values(), g, bufs.get(b), m, k, n);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (a.shape()[0], a.shape()[1]);
                let t = transpose(g, c, r);
                add_into(bufs.get(a), &t);
            }
            Op::Add(a, b) => {
                for t in [a, b] {
                    if t.requires_grad() {
                        add_into(bufs.get(t), g);
                    }
                }
            }
            Op::AddRow(a, row) => {
                if a.requires_grad() {
                    add_into(bufs.get(a), g);
                }
                if row.requires_grad() {
                    let n = row.len();
                    let dst = bufs.get(row);
                    for chunk in g.chunks(n) {
                        add_into(dst, chunk);
                    }
                }
            }
            Op::Mul(a, b) => {
                if a.requires_grad() {
                    let bv = b.values();
                    let dst = bufs.get(a);
                    for ((d, gi), bi) in dst.iter_mut().zip(g).zip(bv.iter()) {
                        *d += gi * bi;
                    }
                }
                if b.requires_grad() {
                    let av = a.values();
                    let dst = bufs.get(b);
                    for ((d, gi), ai) in dst.iter_mut().zip(g).zip(av.iter()) {
                        *d += gi * ai;
                    }
                }
            }
            Op::Scale(a, f) => {
                let dst = bufs.get(a);
                for (d, gi) in dst.iter_mut().zip(g) {
                    *d += gi * f;
                }
            }
            Op::Relu(a) => {
                let av = a.values();
                let dst = bufs.get(a);
                for ((d, gi), x) in dst.iter_mut().zip(g).zip(av.iter()) {
                    if *x > 0.0 {
                        *d += gi;
                    }
                }
            }
            Op::Sum(a) => {
                let dst = bufs.get(a);
                for d in dst.iter_mut() {
                    *d += g[0];
                }
            }
            Op::Reshape(a) => add_into(bufs.get(a), g),
            Op::LogSoftmax(a) => {
                let k = *self.shape().last().unwrap_or(&1);
                let out = self.values();
                let dst = bufs.get(a);
                for ((d, gr), y) in dst.chunks_mut(k).zip(g.chunks(k)).zip(out.chunks(k)) {
                    let gs: f64 = gr.iter().sum();
                    for j in 0..k {
                        d[j] += gr[j] - libm::exp(y[j]) * gs;
                    }
                }
            }
            Op::GatherCols(a, idx) => {
                let c = a.shape()[1];
                let q = idx.len();
                let dst = bufs.get(a);
                for (i, gr) in g.chunks(q.max(1)).enumerate().take(a.shape()[0]) {
                    for (&j, gv) in idx.iter().zip(gr) {
                        dst[i * c + j] += gv;
                    }
                }
            }
            Op::GatherRows(a, idx) => {
                let c = a.shape()[1];
                let dst = bufs.get(a);
                for (&i, gr) in idx.iter().zip(g.chunks(c.max(1))) {
                    add_into(&mut dst[i * c..(i + 1) * c], gr);
                }
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let k = logits.shape()[1];
                let scale = g[0] / labels.len() as f64;
                let dst = bufs.get(logits);
                for (i, &y) in labels.iter().enumerate() {
                    for j in 0..k {
                        let onehot = if j == y { 1.0 } else { 0.0 };
                        dst[i * k + j] += scale * (probs[i * k + j] - onehot);
                    }
                }
            }
            Op::KlDivergence {
                logits,
                target,
                probs,
            } => {
                let b = logits.shape()[0];
                let scale = g[0] / b as f64;
                let dst = bufs.get(logits);
                for ((d, q), p) in dst.iter_mut().zip(probs).zip(target) {
                    *d += scale * (q - p);
                }
            }
        }
    }
}

/// Per-node gradient contributions for one backward sweep.
struct GradBuffers {
    position: BTreeMap<usize, usize>,
    grads: Vec<Option<Vec<f64>>>,
}

impl GradBuffers {
    fn get(&mut self, t: &Tensor) -> &mut Vec<f64> {
        let i = self.position[&t.id()];
        self.grads[i].get_or_insert_with(|| vec![0.0; t.len()])
    }
}

/// `log(sum(exp(row)))` with the row maximum factored out.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let (max, offset) = split_lse(row);
    max + offset
}

/// `log_sum_exp(row)` as `(max, log1p(Σ_{k≠argmax} exp(x_k − max)))`, so that
/// `x_k − lse` can be formed as `(x_k − max) − offset` without cancellation.
fn split_lse(row: &[f64]) -> (f64, f64) {
    let Some((arg, max)) = row
        .iter()
        .copied()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, x)| match best {
            Some((_, b)) if b >= x => best,
            _ => Some((i, x)),
        })
    else {
        return (f64::NEG_INFINITY, 0.0);
    };
    if !max.is_finite() {
        return (max, 0.0);
    }
    let rest: f64 = row
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, &x)| libm::exp(x - max))
        .sum();
    (max, libm::log1p(rest))
}

/// Softmax of a single row of logits.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let (max, offset) = split_lse(row);
    row.iter().map(|&x| libm::exp((x - max) - offset)).collect()
}

fn check_finite(op: &'static str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { op, index }),
        None => Ok(()),
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn transpose(v: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = v[i * c + j];
        }
    }
    out
}

// Row-major kernels. Each output row depends only on the matching input row,
// so results do not change with batch composition.

/// `c[m×n] += a[m×k] · b[k×n]`
fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c[m×k] += a[m×n] · b[k×n]ᵀ`
fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let dot: f64 = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            c[i * k + p] += dot;
        }
    }
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`
fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}
