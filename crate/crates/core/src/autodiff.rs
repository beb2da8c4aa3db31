//! Reverse-mode automatic differentiation on a linear tape.
//!
//! A [`Graph`] records every operation eagerly: the forward value is computed
//! immediately and pushed together with the parent ids it was built from. Node
//! ids are assigned in push order, so the tape is topologically sorted by
//! construction and [`Graph::backward`] is a single reverse sweep.
//!
//! The tape also counts multiply-accumulates of matrix products and
//! convolutions, which the complexity bench uses as its instrumented ground
//! truth.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernels::{self, Conv2dSpec, ConvGeom};
use crate::nn::{Param, ParamId};
use crate::scalar::{gemm, MatView, Scalar};
use crate::tensor::{split_axis, Tensor};

pub type NodeId = usize;

type ValuePair<T> = (Arc<Tensor<T>>, Arc<Tensor<T>>);

enum Op<T> {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Scale(NodeId, T),
    Shift(NodeId),
    Exp(NodeId),
    Abs(NodeId),
    Gelu(NodeId),
    Sigmoid(NodeId),
    Softmax {
        x: NodeId,
        outer: usize,
        n: usize,
        inner: usize,
    },
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        outer: usize,
        n: usize,
        inner: usize,
        stats: Vec<(T, T)>,
    },
    MatMul {
        a: NodeId,
        b: NodeId,
        m: usize,
        k: usize,
        n: usize,
        ta: bool,
        tb: bool,
    },
    Transpose {
        x: NodeId,
        rows: usize,
        cols: usize,
    },
    Reshape(NodeId),
    Narrow {
        x: NodeId,
        outer: usize,
        n: usize,
        inner: usize,
        start: usize,
        len: usize,
    },
    Concat {
        parts: Vec<(NodeId, usize)>,
        outer: usize,
        inner: usize,
        total: usize,
    },
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        geom: ConvGeom,
    },
    PixelShuffle {
        x: NodeId,
        h: usize,
        w: usize,
        c: usize,
        r: usize,
    },
    PixelUnshuffle {
        x: NodeId,
        h: usize,
        w: usize,
        c: usize,
        r: usize,
    },
    AvgPool {
        x: NodeId,
        h: usize,
        w: usize,
        c: usize,
        oh: usize,
        ow: usize,
    },
    Resize {
        x: NodeId,
        h: usize,
        w: usize,
        c: usize,
        oh: usize,
        ow: usize,
    },
    Gather {
        table: NodeId,
        ids: Vec<usize>,
        width: usize,
    },
    Sum(NodeId),
    Mean(NodeId),
    BceLogits {
        logits: NodeId,
        targets: Vec<T>,
    },
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
    name: &'static str,
}

/// Probability clamp applied inside [`Var::bce_with_logits`].
pub const BCE_CLAMP: f64 = 1e-7;

/// Operation tape. One graph per forward/backward pass; not shared across threads.
pub struct Graph<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
    params: RefCell<HashMap<ParamId, NodeId>>,
    macs: Cell<u64>,
    fault: RefCell<Option<Error>>,
    check_finite: bool,
    track_params: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    /// Training graph: parameters require gradients. Non-finite outputs are
    /// detected in debug/test builds.
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(HashMap::new()),
            macs: Cell::new(0),
            fault: RefCell::new(None),
            check_finite: cfg!(debug_assertions),
            track_params: true,
        }
    }

    /// Graph for inference: parameters are recorded as constants.
    pub fn inference() -> Self {
        Graph {
            track_params: false,
            ..Self::new()
        }
    }

    pub fn with_finite_checks(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multiply-accumulates performed by matrix products and convolutions so far.
    pub fn macs(&self) -> u64 {
        self.macs.get()
    }

    pub fn reset_macs(&self) {
        self.macs.set(0);
    }

    /// Fails if any recorded op produced a non-finite value (when checks are on).
    pub fn check(&self) -> Result<()> {
        match &*self.fault.borrow() {
            Some(Error::NonFinite { op }) => Err(Error::NonFinite { op }),
            _ => Ok(()),
        }
    }

    pub fn constant(&self, t: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(Arc::new(t), false, "constant")
    }

    /// Leaf that receives a gradient.
    pub fn input(&self, t: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(Arc::new(t), true, "input")
    }

    /// Records a parameter once per graph; repeated calls return the same node.
    pub fn param(&self, p: &Param<T>) -> Var<'_, T> {
        if let Some(&id) = self.params.borrow().get(&p.id()) {
            return Var { g: self, id };
        }
        let v = self.push_leaf(p.shared(), self.track_params, "param");
        self.params.borrow_mut().insert(p.id(), v.id);
        v
    }

    fn push_leaf(&self, value: Arc<Tensor<T>>, requires_grad: bool, name: &'static str) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            name,
        });
        Var {
            g: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: NodeId) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn push(&self, name: &'static str, shape: Vec<usize>, data: Vec<T>, op: Op<T>, parents: &[NodeId]) -> Var<'_, T> {
        if self.check_finite && self.fault.borrow().is_none() && data.iter().any(|v| !v.is_finite()) {
            *self.fault.borrow_mut() = Some(Error::NonFinite { op: name });
        }
        let requires_grad = parents.iter().any(|&p| self.requires(p));
        let value = Arc::new(Tensor::new(shape, data).expect("op produced a consistent shape"));
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
            name,
        });
        Var {
            g: self,
            id: nodes.len() - 1,
        }
    }

    /// Back-propagates from a one-element `loss`, returning gradients of every
    /// leaf that requires one.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        self.check()?;
        let nodes = self.nodes.borrow();
        let loss_node = &nodes[loss.id];
        if loss_node.value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_node.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.id).map(|_| None).collect();
        grads[loss.id] = Some(vec![T::one()]);
        let mut leaves = HashMap::new();

        for id in (0..=loss.id).rev() {
            let Some(gout) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                leaves.insert(id, Tensor::new(node.value.shape().to_vec(), gout).expect("grad shape"));
                continue;
            }
            backprop(&nodes, id, &gout, &mut grads);
        }
        Ok(Gradients {
            leaves,
            params: self.params.borrow().clone(),
        })
    }

    /// Short description of each recorded op, for debugging.
    pub fn trace(&self) -> Vec<(&'static str, Vec<usize>)> {
        self.nodes
            .borrow()
            .iter()
            .map(|n| (n.name, n.value.shape().to_vec()))
            .collect()
    }
}

/// Gradient buffer for `id`, created zeroed on first touch; `None` when the
/// node does not take part in differentiation.
fn slot<'a, T: Scalar>(nodes: &[Node<T>], grads: &'a mut [Option<Vec<T>>], id: NodeId) -> Option<&'a mut [T]> {
    if !nodes[id].requires_grad {
        return None;
    }
    let len = nodes[id].value.numel();
    Some(grads[id].get_or_insert_with(|| vec![T::zero(); len]).as_mut_slice())
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn backprop<T: Scalar>(nodes: &[Node<T>], id: NodeId, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let y = nodes[id].value.data();
    let val = |i: NodeId| nodes[i].value.data();
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if let Some(d) = slot(nodes, grads, *a) {
                add_into(d, g);
            }
            if let Some(d) = slot(nodes, grads, *b) {
                add_into(d, g);
            }
        }
        Op::Sub(a, b) => {
            if let Some(d) = slot(nodes, grads, *a) {
                add_into(d, g);
            }
            if let Some(d) = slot(nodes, grads, *b) {
                for (d, &gv) in d.iter_mut().zip(g) {
                    *d -= gv;
                }
            }
        }
        Op::Mul(a, b) => {
            if let Some(d) = slot(nodes, grads, *a) {
                for ((d, &gv), &bv) in d.iter_mut().zip(g).zip(val(*b)) {
                    *d += gv * bv;
                }
            }
            if let Some(d) = slot(nodes, grads, *b) {
                for ((d, &gv), &av) in d.iter_mut().zip(g).zip(val(*a)) {
                    *d += gv * av;
                }
            }
        }
        Op::AddRow(x, row) => {
            if let Some(d) = slot(nodes, grads, *x) {
                add_into(d, g);
            }
            let n = nodes[*row].value.numel();
            if let Some(d) = slot(nodes, grads, *row) {
                kernels::sum_rows_into(g, n, d);
            }
        }
        Op::MulRow(x, row) => {
            let r = val(*row);
            let n = r.len();
            if let Some(d) = slot(nodes, grads, *x) {
                for (dc, gc) in d.chunks_exact_mut(n).zip(g.chunks_exact(n)) {
                    for ((dv, &gv), &rv) in dc.iter_mut().zip(gc).zip(r) {
                        *dv += gv * rv;
                    }
                }
            }
            let xv = val(*x);
            if let Some(d) = slot(nodes, grads, *row) {
                for (gc, xc) in g.chunks_exact(n).zip(xv.chunks_exact(n)) {
                    for ((dv, &gv), &xv) in d.iter_mut().zip(gc).zip(xc) {
                        *dv += gv * xv;
                    }
                }
            }
        }
        Op::Scale(x, c) => {
            if let Some(d) = slot(nodes, grads, *x) {
                for (d, &gv) in d.iter_mut().zip(g) {
                    *d += gv * *c;
                }
            }
        }
        Op::Shift(x) | Op::Reshape(x) => {
            if let Some(d) = slot(nodes, grads, *x) {
                add_into(d, g);
            }
        }
        Op::Exp(x) => {
            if let Some(d) = slot(nodes, grads, *x) {
                for ((d, &gv), &yv) in d.iter_mut().zip(g).zip(y) {
                    *d += gv * yv;
                }
            }
        }
        Op::Abs(x) => {
            let xv = val(*x);
            if let Some(d) = slot(nodes, grads, *x) {
                for ((d, &gv), &v) in d.iter_mut().zip(g).zip(xv) {
                    if v > T::zero() {
                        *d += gv;
                    } else if v < T::zero() {
                        *d -= gv;
                    }
                }
            }
        }
        Op::Gelu(x) => {
            let xv = val(*x);
            if let Some(d) = slot(nodes, grads, *x) {
                for ((d, &gv), &v) in d.iter_mut().zip(g).zip(xv) {
                    *d += gv * kernels::gelu_grad(v);
                }
            }
        }
        Op::Sigmoid(x) => {
            if let Some(d) = slot(nodes, grads, *x) {
                for ((d, &gv), &yv) in d.iter_mut().zip(g).zip(y) {
                    *d += gv * yv * (T::one() - yv);
                }
            }
        }
        Op::Softmax { x, outer, n, inner } => {
            if let Some(d) = slot(nodes, grads, *x) {
                kernels::softmax_backward(y, g, *outer, *n, *inner, d);
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            outer,
            n,
            inner,
            stats,
        } => {
            let xv = nodes[*x].value.clone();
            let gv = nodes[*gamma].value.clone();
            // Three distinct nodes; take their buffers out so they can be borrowed together.
            let mut dx = nodes[*x].requires_grad.then(|| take_slot(nodes, grads, *x));
            let mut dg = nodes[*gamma].requires_grad.then(|| take_slot(nodes, grads, *gamma));
            let mut db = nodes[*beta].requires_grad.then(|| take_slot(nodes, grads, *beta));
            kernels::layer_norm_backward(
                xv.data(),
                gv.data(),
                stats,
                g,
                *outer,
                *n,
                *inner,
                kernels::LayerNormGrads {
                    dx: dx.as_deref_mut(),
                    dgamma: dg.as_deref_mut(),
                    dbeta: db.as_deref_mut(),
                },
            );
            for (id, buf) in [(*x, dx), (*gamma, dg), (*beta, db)] {
                if let Some(buf) = buf {
                    grads[id] = Some(buf);
                }
            }
        }
        Op::MatMul { a, b, m, k, n, ta, tb } => {
            let (m, k, n) = (*m, *k, *n);
            let av = if *ta {
                MatView::col_major(m)
            } else {
                MatView::row_major(k)
            };
            let bv = if *tb {
                MatView::col_major(k)
            } else {
                MatView::row_major(n)
            };
            let gvw = MatView::row_major(n);
            if nodes[*a].requires_grad {
                let bval = nodes[*b].value.clone();
                let d = slot(nodes, grads, *a).expect("requires grad");
                // dA' = G B'^T
                let bt = MatView {
                    offset: 0,
                    rs: bv.cs,
                    cs: bv.rs,
                };
                let dv = if *ta {
                    MatView::col_major(m)
                } else {
                    MatView::row_major(k)
                };
                gemm(m, n, k, T::one(), g, gvw, bval.data(), bt, T::one(), d, dv);
            }
            if nodes[*b].requires_grad {
                let aval = nodes[*a].value.clone();
                let d = slot(nodes, grads, *b).expect("requires grad");
                // dB' = A'^T G
                let at = MatView {
                    offset: 0,
                    rs: av.cs,
                    cs: av.rs,
                };
                let dv = if *tb {
                    MatView::col_major(k)
                } else {
                    MatView::row_major(n)
                };
                gemm(k, m, n, T::one(), aval.data(), at, g, gvw, T::one(), d, dv);
            }
        }
        Op::Transpose { x, rows, cols } => {
            if let Some(d) = slot(nodes, grads, *x) {
                for i in 0..*rows {
                    for j in 0..*cols {
                        d[i * cols + j] += g[j * rows + i];
                    }
                }
            }
        }
        Op::Narrow {
            x,
            outer,
            n,
            inner,
            start,
            len,
        } => {
            if let Some(d) = slot(nodes, grads, *x) {
                for o in 0..*outer {
                    let src = &g[o * len * inner..][..len * inner];
                    let dst = &mut d[(o * n + start) * inner..][..len * inner];
                    add_into(dst, src);
                }
            }
        }
        Op::Concat {
            parts,
            outer,
            inner,
            total,
        } => {
            let mut offset = 0;
            for &(p, len) in parts {
                if let Some(d) = slot(nodes, grads, p) {
                    for o in 0..*outer {
                        let src = &g[(o * total + offset) * inner..][..len * inner];
                        add_into(&mut d[o * len * inner..][..len * inner], src);
                    }
                }
                offset += len;
            }
        }
        Op::Conv2d { x, w, b, geom } => {
            if let Some(b) = b {
                if let Some(d) = slot(nodes, grads, *b) {
                    kernels::sum_rows_into(g, geom.cout, d);
                }
            }
            let xv = nodes[*x].value.clone();
            let wv = nodes[*w].value.clone();
            let mut dx = nodes[*x].requires_grad.then(|| take_slot(nodes, grads, *x));
            let mut dw = nodes[*w].requires_grad.then(|| take_slot(nodes, grads, *w));
            kernels::conv2d_backward(g, xv.data(), wv.data(), geom, dx.as_deref_mut(), dw.as_deref_mut());
            for (id, buf) in [(*x, dx), (*w, dw)] {
                if let Some(buf) = buf {
                    grads[id] = Some(buf);
                }
            }
        }
        Op::PixelShuffle { x, h, w, c, r } => {
            if let Some(d) = slot(nodes, grads, *x) {
                let back = kernels::pixel_unshuffle(g, h * r, w * r, c / (r * r), *r);
                add_into(d, &back);
            }
        }
        Op::PixelUnshuffle { x, h, w, c, r } => {
            if let Some(d) = slot(nodes, grads, *x) {
                let back = kernels::pixel_shuffle(g, h / r, w / r, c * r * r, *r);
                add_into(d, &back);
            }
        }
        Op::AvgPool { x, h, w, c, oh, ow } => {
            if let Some(d) = slot(nodes, grads, *x) {
                kernels::adaptive_avg_pool_backward(g, *h, *w, *c, *oh, *ow, d);
            }
        }
        Op::Resize { x, h, w, c, oh, ow } => {
            if let Some(d) = slot(nodes, grads, *x) {
                kernels::resize_bilinear_backward(g, *h, *w, *c, *oh, *ow, d);
            }
        }
        Op::Gather { table, ids, width } => {
            if let Some(d) = slot(nodes, grads, *table) {
                for (row, &id) in ids.iter().enumerate() {
                    add_into(&mut d[id * width..][..*width], &g[row * width..][..*width]);
                }
            }
        }
        Op::Sum(x) => {
            if let Some(d) = slot(nodes, grads, *x) {
                d.iter_mut().for_each(|v| *v += g[0]);
            }
        }
        Op::Mean(x) => {
            if let Some(d) = slot(nodes, grads, *x) {
                let s = g[0] / T::lit(d.len() as f64);
                d.iter_mut().for_each(|v| *v += s);
            }
        }
        Op::BceLogits { logits, targets } => {
            let z = val(*logits);
            if let Some(d) = slot(nodes, grads, *logits) {
                let lo = T::lit(BCE_CLAMP);
                let hi = T::one() - lo;
                for ((d, &zv), &t) in d.iter_mut().zip(z).zip(targets) {
                    let p = kernels::sigmoid(zv);
                    if p > lo && p < hi {
                        *d += g[0] * (p - t);
                    }
                }
            }
        }
    }
}

fn take_slot<T: Scalar>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], id: NodeId) -> Vec<T> {
    grads[id]
        .take()
        .unwrap_or_else(|| vec![T::zero(); nodes[id].value.numel()])
}

/// Leaf gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    leaves: HashMap<NodeId, Tensor<T>>,
    params: HashMap<ParamId, NodeId>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.leaves.get(&v.id)
    }

    /// Gradient of a parameter, `None` if it did not influence the loss.
    pub fn param(&self, p: &Param<T>) -> Option<&Tensor<T>> {
        self.params.get(&p.id()).and_then(|id| self.leaves.get(id))
    }
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T: Scalar> {
    g: &'g Graph<T>,
    id: NodeId,
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.g
    }

    pub fn value(&self) -> Arc<Tensor<T>> {
        self.g.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.g.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.g.nodes.borrow()[self.id].value.numel()
    }

    fn unary(&self, name: &'static str, op: Op<T>, f: impl Fn(T) -> T) -> Self {
        let v = self.value();
        let data = v.data().iter().map(|&x| f(x)).collect();
        self.g.push(name, v.shape().to_vec(), data, op, &[self.id])
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> Result<ValuePair<T>> {
        let a = self.value();
        let b = other.value();
        if a.shape() != b.shape() {
            return Err(Error::shape(op, a.shape(), b.shape()));
        }
        Ok((a, b))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let (a, b) = self.same_shape(other, "add")?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
        Ok(self.g.push(
            "add",
            a.shape().to_vec(),
            data,
            Op::Add(self.id, other.id),
            &[self.id, other.id],
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let (a, b) = self.same_shape(other, "sub")?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x - y).collect();
        Ok(self.g.push(
            "sub",
            a.shape().to_vec(),
            data,
            Op::Sub(self.id, other.id),
            &[self.id, other.id],
        ))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        let (a, b) = self.same_shape(other, "mul")?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
        Ok(self.g.push(
            "mul",
            a.shape().to_vec(),
            data,
            Op::Mul(self.id, other.id),
            &[self.id, other.id],
        ))
    }

    fn last_dim_row(&self, row: &Self, op: &'static str) -> Result<ValuePair<T>> {
        let x = self.value();
        let r = row.value();
        let last = x.shape().last().copied().unwrap_or(1);
        if r.numel() != last || r.rank() != 1 {
            return Err(Error::shape(op, x.shape(), r.shape()));
        }
        Ok((x, r))
    }

    /// Adds a `[C]` vector to every row of a `[..., C]` tensor.
    pub fn add_row(&self, row: &Self) -> Result<Self> {
        let (x, r) = self.last_dim_row(row, "add_row")?;
        let n = r.numel();
        let mut data = x.data().to_vec();
        for c in data.chunks_exact_mut(n) {
            for (v, &b) in c.iter_mut().zip(r.data()) {
                *v += b;
            }
        }
        Ok(self.g.push(
            "add_row",
            x.shape().to_vec(),
            data,
            Op::AddRow(self.id, row.id),
            &[self.id, row.id],
        ))
    }

    /// Multiplies every row of a `[..., C]` tensor by a `[C]` vector.
    pub fn mul_row(&self, row: &Self) -> Result<Self> {
        let (x, r) = self.last_dim_row(row, "mul_row")?;
        let n = r.numel();
        let mut data = x.data().to_vec();
        for c in data.chunks_exact_mut(n) {
            for (v, &b) in c.iter_mut().zip(r.data()) {
                *v *= b;
            }
        }
        Ok(self.g.push(
            "mul_row",
            x.shape().to_vec(),
            data,
            Op::MulRow(self.id, row.id),
            &[self.id, row.id],
        ))
    }

    pub fn scale(&self, c: T) -> Self {
        self.unary("scale", Op::Scale(self.id, c), |x| x * c)
    }

    pub fn neg(&self) -> Self {
        self.scale(-T::one())
    }

    pub fn add_scalar(&self, c: T) -> Self {
        self.unary("add_scalar", Op::Shift(self.id), |x| x + c)
    }

    pub fn exp(&self) -> Self {
        self.unary("exp", Op::Exp(self.id), |x| x.exp())
    }

    pub fn abs(&self) -> Self {
        self.unary("abs", Op::Abs(self.id), |x| x.abs())
    }

    /// GELU with the tanh approximation.
    pub fn gelu(&self) -> Self {
        self.unary("gelu", Op::Gelu(self.id), kernels::gelu)
    }

    pub fn sigmoid(&self) -> Self {
        self.unary("sigmoid", Op::Sigmoid(self.id), kernels::sigmoid)
    }

    fn axis_extents(&self, axis: usize, op: &'static str) -> Result<(Arc<Tensor<T>>, usize, usize, usize)> {
        let x = self.value();
        if axis >= x.rank() {
            return Err(Error::invalid(
                op,
                format!("axis {axis} out of range for {:?}", x.shape()),
            ));
        }
        let (outer, n, inner) = split_axis(x.shape(), axis);
        Ok((x, outer, n, inner))
    }

    pub fn softmax(&self, axis: usize) -> Result<Self> {
        let (x, outer, n, inner) = self.axis_extents(axis, "softmax")?;
        let data = kernels::softmax(x.data(), outer, n, inner);
        Ok(self.g.push(
            "softmax",
            x.shape().to_vec(),
            data,
            Op::Softmax {
                x: self.id,
                outer,
                n,
                inner,
            },
            &[self.id],
        ))
    }

    /// Normalises along `axis` and applies per-feature `gamma`, `beta` of that extent.
    pub fn layer_norm(&self, axis: usize, gamma: &Self, beta: &Self, eps: T) -> Result<Self> {
        let (x, outer, n, inner) = self.axis_extents(axis, "layer_norm")?;
        let gv = gamma.value();
        let bv = beta.value();
        if gv.numel() != n || bv.numel() != n {
            return Err(Error::shape("layer_norm", x.shape(), gv.shape()));
        }
        let stats = kernels::layer_norm_stats(x.data(), outer, n, inner, eps);
        let data = kernels::layer_norm(x.data(), gv.data(), bv.data(), &stats, outer, n, inner);
        Ok(self.g.push(
            "layer_norm",
            x.shape().to_vec(),
            data,
            Op::LayerNorm {
                x: self.id,
                gamma: gamma.id,
                beta: beta.id,
                outer,
                n,
                inner,
                stats,
            },
            &[self.id, gamma.id, beta.id],
        ))
    }

    fn matmul_impl(&self, other: &Self, ta: bool, tb: bool) -> Result<Self> {
        let a = self.value();
        let b = other.value();
        if a.rank() != 2 || b.rank() != 2 {
            return Err(Error::shape("matmul", a.shape(), b.shape()));
        }
        let (m, ka) = if ta {
            (a.shape()[1], a.shape()[0])
        } else {
            (a.shape()[0], a.shape()[1])
        };
        let (kb, n) = if tb {
            (b.shape()[1], b.shape()[0])
        } else {
            (b.shape()[0], b.shape()[1])
        };
        if ka != kb {
            return Err(Error::shape("matmul", a.shape(), b.shape()));
        }
        let k = ka;
        let av = if ta {
            MatView::col_major(m)
        } else {
            MatView::row_major(k)
        };
        let bv = if tb {
            MatView::col_major(k)
        } else {
            MatView::row_major(n)
        };
        let mut out = vec![T::zero(); m * n];
        gemm(
            m,
            k,
            n,
            T::one(),
            a.data(),
            av,
            b.data(),
            bv,
            T::zero(),
            &mut out,
            MatView::row_major(n),
        );
        self.g.macs.set(self.g.macs.get() + (m * k * n) as u64);
        Ok(self.g.push(
            "matmul",
            vec![m, n],
            out,
            Op::MatMul {
                a: self.id,
                b: other.id,
                m,
                k,
                n,
                ta,
                tb,
            },
            &[self.id, other.id],
        ))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.matmul_impl(other, false, false)
    }

    /// `self * other^T` without materialising the transpose.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        self.matmul_impl(other, false, true)
    }

    /// `self^T * other` without materialising the transpose.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        self.matmul_impl(other, true, false)
    }

    pub fn transpose(&self) -> Result<Self> {
        let x = self.value();
        if x.rank() != 2 {
            return Err(Error::invalid(
                "transpose",
                format!("expected a matrix, got {:?}", x.shape()),
            ));
        }
        let (rows, cols) = (x.shape()[0], x.shape()[1]);
        let mut out = vec![T::zero(); rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                out[j * rows + i] = x.data()[i * cols + j];
            }
        }
        Ok(self.g.push(
            "transpose",
            vec![cols, rows],
            out,
            Op::Transpose { x: self.id, rows, cols },
            &[self.id],
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let x = self.value();
        if shape.iter().product::<usize>() != x.numel() {
            return Err(Error::shape("reshape", x.shape(), shape));
        }
        Ok(self.g.push(
            "reshape",
            shape.to_vec(),
            x.data().to_vec(),
            Op::Reshape(self.id),
            &[self.id],
        ))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        let (x, outer, n, inner) = self.axis_extents(axis, "narrow")?;
        if start + len > n {
            return Err(Error::invalid(
                "narrow",
                format!("range {start}..{} exceeds extent {n}", start + len),
            ));
        }
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&x.data()[(o * n + start) * inner..][..len * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        Ok(self.g.push(
            "narrow",
            shape,
            out,
            Op::Narrow {
                x: self.id,
                outer,
                n,
                inner,
                start,
                len,
            },
            &[self.id],
        ))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[Self], axis: usize) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        let g = first.g;
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(Error::invalid(
                "concat",
                format!("axis {axis} out of range for {base:?}"),
            ));
        }
        for v in &values[1..] {
            let s = v.shape();
            let ok = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape("concat", &base, s));
            }
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let total: usize = values.iter().map(|v| v.shape()[axis]).sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in &values {
                let len = v.shape()[axis];
                out.extend_from_slice(&v.data()[o * len * inner..][..len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let ids: Vec<NodeId> = parts.iter().map(|p| p.id).collect();
        let op = Op::Concat {
            parts: parts
                .iter()
                .zip(&values)
                .map(|(p, v)| (p.id, v.shape()[axis]))
                .collect(),
            outer,
            inner,
            total,
        };
        Ok(g.push("concat", shape, out, op, &ids))
    }

    /// Cross-correlation of `[H, W, C_in]` with `[C_out, C_in / groups, kh, kw]` weights.
    pub fn conv2d(&self, w: &Self, b: Option<&Self>, spec: Conv2dSpec) -> Result<Self> {
        let x = self.value();
        let wv = w.value();
        let geom = ConvGeom::new(x.shape(), wv.shape(), spec)?;
        let bias = match b {
            Some(b) => {
                let bv = b.value();
                if bv.numel() != geom.cout {
                    return Err(Error::shape("conv2d bias", wv.shape(), bv.shape()));
                }
                Some(bv)
            }
            None => None,
        };
        let out = kernels::conv2d_forward(x.data(), wv.data(), bias.as_ref().map(|b| b.data()), &geom);
        self.g.macs.set(self.g.macs.get() + geom.macs());
        let mut parents = vec![self.id, w.id];
        if let Some(b) = b {
            parents.push(b.id);
        }
        Ok(self.g.push(
            "conv2d",
            vec![geom.ho, geom.wo, geom.cout],
            out,
            Op::Conv2d {
                x: self.id,
                w: w.id,
                b: b.map(|b| b.id),
                geom,
            },
            &parents,
        ))
    }

    fn hwc(&self, op: &'static str) -> Result<(Arc<Tensor<T>>, usize, usize, usize)> {
        let x = self.value();
        match *x.shape() {
            [h, w, c] => Ok((x, h, w, c)),
            _ => Err(Error::invalid(op, format!("expected [H, W, C], got {:?}", x.shape()))),
        }
    }

    /// `[H, W, C] -> [H/r, W/r, C r^2]`.
    pub fn pixel_unshuffle(&self, r: usize) -> Result<Self> {
        let (x, h, w, c) = self.hwc("pixel_unshuffle")?;
        if r == 0 || h % r != 0 || w % r != 0 {
            return Err(Error::invalid(
                "pixel_unshuffle",
                format!("{h}x{w} not divisible by {r}"),
            ));
        }
        let out = kernels::pixel_unshuffle(x.data(), h, w, c, r);
        Ok(self.g.push(
            "pixel_unshuffle",
            vec![h / r, w / r, c * r * r],
            out,
            Op::PixelUnshuffle { x: self.id, h, w, c, r },
            &[self.id],
        ))
    }

    /// `[H, W, C r^2] -> [H r, W r, C]`, the exact inverse of [`Var::pixel_unshuffle`].
    pub fn pixel_shuffle(&self, r: usize) -> Result<Self> {
        let (x, h, w, c) = self.hwc("pixel_shuffle")?;
        if r == 0 || c % (r * r) != 0 {
            return Err(Error::invalid(
                "pixel_shuffle",
                format!("{c} channels not divisible by {}", r * r),
            ));
        }
        let out = kernels::pixel_shuffle(x.data(), h, w, c, r);
        Ok(self.g.push(
            "pixel_shuffle",
            vec![h * r, w * r, c / (r * r)],
            out,
            Op::PixelShuffle { x: self.id, h, w, c, r },
            &[self.id],
        ))
    }

    pub fn adaptive_avg_pool(&self, oh: usize, ow: usize) -> Result<Self> {
        let (x, h, w, c) = self.hwc("adaptive_avg_pool")?;
        if oh == 0 || ow == 0 || oh > h || ow > w {
            return Err(Error::invalid(
                "adaptive_avg_pool",
                format!("output {oh}x{ow} larger than input {h}x{w}"),
            ));
        }
        let out = kernels::adaptive_avg_pool(x.data(), h, w, c, oh, ow);
        Ok(self.g.push(
            "adaptive_avg_pool",
            vec![oh, ow, c],
            out,
            Op::AvgPool {
                x: self.id,
                h,
                w,
                c,
                oh,
                ow,
            },
            &[self.id],
        ))
    }

    /// Bilinear resampling with half-pixel centres.
    pub fn resize_bilinear(&self, oh: usize, ow: usize) -> Result<Self> {
        let (x, h, w, c) = self.hwc("resize_bilinear")?;
        if oh == 0 || ow == 0 {
            return Err(Error::invalid("resize_bilinear", "empty output"));
        }
        if (oh, ow) == (h, w) {
            return Ok(*self);
        }
        let out = kernels::resize_bilinear(x.data(), h, w, c, oh, ow);
        Ok(self.g.push(
            "resize_bilinear",
            vec![oh, ow, c],
            out,
            Op::Resize {
                x: self.id,
                h,
                w,
                c,
                oh,
                ow,
            },
            &[self.id],
        ))
    }

    /// Row lookup into a `[rows, width]` table.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Self> {
        let t = self.value();
        let [rows, width] = *t.shape() else {
            return Err(Error::invalid(
                "gather_rows",
                format!("expected a table, got {:?}", t.shape()),
            ));
        };
        let mut out = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            if id >= rows {
                return Err(Error::TokenOutOfRange { id, len: rows });
            }
            out.extend_from_slice(&t.data()[id * width..][..width]);
        }
        Ok(self.g.push(
            "gather_rows",
            vec![ids.len(), width],
            out,
            Op::Gather {
                table: self.id,
                ids: ids.to_vec(),
                width,
            },
            &[self.id],
        ))
    }

    pub fn sum(&self) -> Self {
        let x = self.value();
        let s = x.data().iter().copied().sum();
        self.g.push("sum", vec![1], vec![s], Op::Sum(self.id), &[self.id])
    }

    pub fn mean(&self) -> Self {
        let x = self.value();
        let s: T = x.data().iter().copied().sum();
        let m = s / T::lit(x.numel() as f64);
        self.g.push("mean", vec![1], vec![m], Op::Mean(self.id), &[self.id])
    }

    /// Summed binary cross-entropy of `sigmoid(self)` against `targets`, with
    /// probabilities clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce_with_logits(&self, targets: &[T]) -> Result<Self> {
        let z = self.value();
        if z.numel() != targets.len() {
            return Err(Error::shape("bce", z.shape(), &[targets.len()]));
        }
        let lo = T::lit(BCE_CLAMP);
        let hi = T::one() - lo;
        let loss = z
            .data()
            .iter()
            .zip(targets)
            .map(|(&zv, &t)| {
                let p = kernels::sigmoid(zv).max(lo).min(hi);
                -(t * p.ln() + (T::one() - t) * (T::one() - p).ln())
            })
            .sum();
        Ok(self.g.push(
            "bce",
            vec![1],
            vec![loss],
            Op::BceLogits {
                logits: self.id,
                targets: targets.to_vec(),
            },
            &[self.id],
        ))
    }
}
