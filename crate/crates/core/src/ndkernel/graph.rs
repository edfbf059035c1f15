//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every op is evaluated eagerly when it is recorded, so node values are
//! available immediately (the model code inspects them, e.g. to pick the
//! near-parallel branch of spherical interpolation). `backward` then walks
//! the recorded nodes once in reverse order.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::params::{ParamId, ParamStore};
use super::tensor::{axis_blocks, gemm, Tensor};
use super::KernelError;

pub const LEAKY_SLOPE: f64 = 0.01;

static NEXT_GRAPH: AtomicU64 = AtomicU64::new(1);

/// Handle to a node of one particular [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId {
    graph: u64,
    index: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Broadcast(usize),
    Relu(usize),
    LeakyRelu(usize),
    Tanh(usize),
    Sigmoid(usize),
    LogSigmoid(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Sin(usize),
    Acos(usize),
    Square(usize),
    Clamp { x: usize, lo: f64, hi: f64 },
    Sum(usize),
    Mean(usize),
    SumAxis(usize),
    Concat { xs: Vec<usize>, axis: usize },
    Slice { x: usize, axis: usize, start: usize },
    Reshape(usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::MatMul { .. } => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Broadcast(_) => "broadcast",
            Op::Relu(_) => "relu",
            Op::LeakyRelu(_) => "leaky_relu",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::LogSigmoid(_) => "log_sigmoid",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Sqrt(_) => "sqrt",
            Op::Sin(_) => "sin",
            Op::Acos(_) => "acos",
            Op::Square(_) => "square",
            Op::Clamp { .. } => "clamp",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumAxis(_) => "sum_axis",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(_) => "reshape",
        }
    }
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar with respect to every parameter of a [`ParamStore`].
///
/// Parameters the output does not depend on have no entry.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn new(n_params: usize) -> Self {
        Self {
            grads: vec![None; n_params],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn set(&mut self, id: ParamId, grad: Tensor) {
        self.grads[id.0] = Some(grad);
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Gradient of `id`, or zeros shaped like `like` when the output did not depend on it.
    pub fn get_or_zeros(&self, id: ParamId, like: &Tensor) -> Tensor {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    fn accumulate(&mut self, id: ParamId, grad: Tensor) {
        match &mut self.grads[id.0] {
            Some(g) => g.add_assign(&grad),
            slot => *slot = Some(grad),
        }
    }
}

/// Recorded computation. Not meant to be shared between threads while in use,
/// but it is `Send` and can be moved to a worker.
pub struct Graph {
    id: u64,
    n_params: usize,
    nodes: Vec<Node>,
}

impl Graph {
    /// New graph whose parameter nodes refer to a store of `n_params` entries.
    pub fn new(n_params: usize) -> Self {
        Self {
            id: NEXT_GRAPH.fetch_add(1, Ordering::Relaxed),
            n_params,
            nodes: Vec::new(),
        }
    }

    pub fn for_store(store: &ParamStore) -> Self {
        Self::new(store.len())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, node: NodeId) -> Result<usize, KernelError> {
        if node.graph != self.id || node.index >= self.nodes.len() {
            return Err(KernelError::ForeignNode);
        }
        Ok(node.index)
    }

    pub fn value(&self, node: NodeId) -> &Tensor {
        assert_eq!(node.graph, self.id, "node belongs to another graph");
        &self.nodes[node.index].value
    }

    pub fn shape(&self, node: NodeId) -> &[usize] {
        self.value(node).shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Result<NodeId, KernelError> {
        if !value.is_finite() {
            return Err(KernelError::NonFinite { op: op.name() });
        }
        self.push_arc(Arc::new(value), op, needs_grad)
    }

    fn push_arc(&mut self, value: Arc<Tensor>, op: Op, needs_grad: bool) -> Result<NodeId, KernelError> {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(NodeId {
            graph: self.id,
            index,
        })
    }

    /// Constant input; gradients are never propagated into it.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push_arc(Arc::new(value), Op::Input, false)
            .expect("push never fails for inputs")
    }

    pub fn constant(&mut self, shape: &[usize], value: f64) -> NodeId {
        self.input(Tensor::full(shape, value))
    }

    /// Parameter leaf sharing storage with the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        assert_eq!(store.len(), self.n_params, "graph built for another store");
        self.push_arc(store.shared(id), Op::Param(id), true)
            .expect("push never fails for params")
    }

    /// Parameter by name; panics on unknown names (a programming error).
    pub fn param_named(&mut self, store: &ParamStore, name: &str) -> NodeId {
        let id = store
            .id(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.param(store, id)
    }

    fn unary(
        &mut self,
        x: NodeId,
        make: impl Fn(usize) -> Op,
        f: impl Fn(f64) -> f64,
    ) -> Result<NodeId, KernelError> {
        let i = self.idx(x)?;
        let value = self.nodes[i].value.map(f);
        let ng = self.nodes[i].needs_grad;
        self.push(value, make(i), ng)
    }

    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        make: impl Fn(usize, usize) -> Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId, KernelError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let op = make(ia, ib);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.shape() != vb.shape() {
            return Err(KernelError::ShapeMismatch {
                op: op.name(),
                left: va.shape().to_vec(),
                right: vb.shape().to_vec(),
            });
        }
        let value = va.zip_map(vb, f);
        let ng = self.nodes[ia].needs_grad || self.nodes[ib].needs_grad;
        self.push(value, op, ng)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, KernelError> {
        self.matmul_t(a, false, b, false)
    }

    /// Matrix product with optional transposition of either operand.
    pub fn matmul_t(&mut self, a: NodeId, ta: bool, b: NodeId, tb: bool) -> Result<NodeId, KernelError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = gemm(&self.nodes[ia].value, ta, &self.nodes[ib].value, tb)?;
        let ng = self.nodes[ia].needs_grad || self.nodes[ib].needs_grad;
        self.push(value, Op::MatMul { a: ia, b: ib, ta, tb }, ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, KernelError> {
        self.binary(a, b, Op::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, KernelError> {
        self.binary(a, b, Op::Sub, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, KernelError> {
        self.binary(a, b, Op::Mul, |x, y| x * y)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, KernelError> {
        self.binary(a, b, Op::Div, |x, y| x / y)
    }

    /// Broadcast to `shape`; source dims must equal the target dim or be 1,
    /// and ranks must agree.
    pub fn broadcast(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, KernelError> {
        let i = self.idx(x)?;
        let src = &self.nodes[i].value;
        let value = broadcast_to(src, shape)?;
        let ng = self.nodes[i].needs_grad;
        self.push(value, Op::Broadcast(i), ng)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, KernelError> {
        self.unary(x, Op::Relu, |v| v.max(0.0))
    }

    pub fn leaky_relu(&mut self, x: NodeId) -> Result<NodeId, KernelError> {
        self.unary(x, Op::LeakyRelu, |v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId, KernelError> {
        self.unary(x, Op::Tanh, f64::tanh)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, KernelError> {
        self.unary(x, Op::Sigmoid, sigmoid)
    }

    /// `ln(sigmoid(x))`, finite for every finite input.
    pub fn log_sigmoid(&mut self, x: NodeId) -> Result<NodeId, KernelError> {
        self.unary(x, Op::LogSigmoid, log_sigmoid)
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId, KernelError> {
        self.unary(x, Op::Exp, f64::exp)
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId, KernelError> {
        self.unary(x, Op::Log, f64::ln)
    }

    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId, KernelError> {
        self.unary(x, Op::Sqrt, f64::sqrt)
    }

    pub fn sin(&mut self, x: NodeId) -> Result<NodeId, KernelError> {
        self.unary(x, Op::Sin, f64::sin)
    }

    pub fn acos(&mut self, x: NodeId) -> Result<NodeId, KernelError> {
        self.unary(x, Op::Acos, f64::acos)
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId, KernelError> {
        self.unary(x, Op::Square, |v| v * v)
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId, KernelError> {
        self.unary(x, |x| Op::Clamp { x, lo, hi }, |v| v.clamp(lo, hi))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, KernelError> {
        let i = self.idx(x)?;
        let value = Tensor::scalar(self.nodes[i].value.sum());
        let ng = self.nodes[i].needs_grad;
        self.push(value, Op::Sum(i), ng)
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId, KernelError> {
        let i = self.idx(x)?;
        let v = &self.nodes[i].value;
        let value = Tensor::scalar(v.sum() / v.len() as f64);
        let ng = self.nodes[i].needs_grad;
        self.push(value, Op::Mean(i), ng)
    }

    /// Sum along `axis`, keeping it with length 1.
    pub fn sum_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId, KernelError> {
        let i = self.idx(x)?;
        let v = &self.nodes[i].value;
        if axis >= v.ndim() {
            return Err(KernelError::BadAxis {
                op: "sum_axis",
                axis,
                shape: v.shape().to_vec(),
            });
        }
        let (outer, len, inner) = axis_blocks(v.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        let data = v.data();
        for o in 0..outer {
            for a in 0..len {
                let base = (o * len + a) * inner;
                for k in 0..inner {
                    out[o * inner + k] += data[base + k];
                }
            }
        }
        let mut shape = v.shape().to_vec();
        shape[axis] = 1;
        let ng = self.nodes[i].needs_grad;
        self.push(Tensor::new(shape, out)?, Op::SumAxis(i), ng)
    }

    pub fn concat(&mut self, xs: &[NodeId], axis: usize) -> Result<NodeId, KernelError> {
        let ids = xs.iter().map(|&x| self.idx(x)).collect::<Result<Vec<_>, _>>()?;
        let first = self.nodes[*ids.first().ok_or(KernelError::EmptyConcat)?].value.shape().to_vec();
        if axis >= first.len() {
            return Err(KernelError::BadAxis {
                op: "concat",
                axis,
                shape: first,
            });
        }
        let mut total = 0;
        for &i in &ids {
            let s = self.nodes[i].value.shape();
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(KernelError::ShapeMismatch {
                    op: "concat",
                    left: first.clone(),
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_blocks(&first, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &i in &ids {
                let v = &self.nodes[i].value;
                let chunk = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let ng = ids.iter().any(|&i| self.nodes[i].needs_grad);
        self.push(Tensor::new(shape, out)?, Op::Concat { xs: ids, axis }, ng)
    }

    /// `len` entries along `axis` starting at `start`.
    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId, KernelError> {
        let i = self.idx(x)?;
        let v = &self.nodes[i].value;
        if axis >= v.ndim() || len == 0 || start + len > v.shape()[axis] {
            return Err(KernelError::BadAxis {
                op: "slice",
                axis,
                shape: v.shape().to_vec(),
            });
        }
        let (outer, alen, inner) = axis_blocks(v.shape(), axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * alen + start) * inner;
            out.extend_from_slice(&v.data()[base..base + len * inner]);
        }
        let mut shape = v.shape().to_vec();
        shape[axis] = len;
        let ng = self.nodes[i].needs_grad;
        self.push(Tensor::new(shape, out)?, Op::Slice { x: i, axis, start }, ng)
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, KernelError> {
        let i = self.idx(x)?;
        let value = (*self.nodes[i].value).clone().reshaped(shape)?;
        let ng = self.nodes[i].needs_grad;
        self.push(value, Op::Reshape(i), ng)
    }

    // Composite helpers built from the primitives above.

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId, KernelError> {
        let shape = self.shape(x).to_vec();
        let k = self.constant(&shape, c);
        self.mul(x, k)
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId, KernelError> {
        let shape = self.shape(x).to_vec();
        let k = self.constant(&shape, c);
        self.add(x, k)
    }

    /// `x` of shape [rows, n] plus a length-n bias (shape [n] or [1, n]) on every row.
    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, KernelError> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().ok_or(KernelError::ShapeMismatch {
            op: "add_row_bias",
            left: shape.clone(),
            right: self.shape(bias).to_vec(),
        })?;
        let b = self.reshape(bias, &[1, n])?;
        let b = self.broadcast(b, &shape)?;
        self.add(x, b)
    }

    /// `x · w + b`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId, KernelError> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_row_bias(y, b),
            None => Ok(y),
        }
    }

    /// Run reverse-mode differentiation from a scalar node.
    pub fn backward(&self, output: NodeId) -> Result<Gradients, KernelError> {
        let out = self.idx(output)?;
        let out_shape = self.nodes[out].value.shape();
        if self.nodes[out].value.len() != 1 {
            return Err(KernelError::NonScalarOutput {
                shape: out_shape.to_vec(),
            });
        }
        let mut grads = Gradients::new(self.n_params);
        let mut adj: Vec<Option<Tensor>> = vec![None; out + 1];
        adj[out] = Some(Tensor::full(out_shape, 1.0));

        for i in (0..=out).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let y = &node.value;
            let val = |j: usize| -> &Tensor { &self.nodes[j].value };
            let send = |j: usize, grad: Tensor, adj: &mut Vec<Option<Tensor>>| {
                if !self.nodes[j].needs_grad {
                    return;
                }
                match &mut adj[j] {
                    Some(acc) => acc.add_assign(&grad),
                    slot => *slot = Some(grad),
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => grads.accumulate(*id, g),
                Op::MatMul { a, b, ta, tb } => {
                    let (a, b, ta, tb) = (*a, *b, *ta, *tb);
                    if self.nodes[a].needs_grad {
                        let da = if ta {
                            gemm(val(b), tb, &g, true)?
                        } else {
                            gemm(&g, false, val(b), !tb)?
                        };
                        send(a, da, &mut adj);
                    }
                    if self.nodes[b].needs_grad {
                        let db = if tb {
                            gemm(&g, true, val(a), ta)?
                        } else {
                            gemm(val(a), !ta, &g, false)?
                        };
                        send(b, db, &mut adj);
                    }
                }
                Op::Add(a, b) => {
                    send(*a, g.clone(), &mut adj);
                    send(*b, g, &mut adj);
                }
                Op::Sub(a, b) => {
                    send(*b, g.map(|v| -v), &mut adj);
                    send(*a, g, &mut adj);
                }
                Op::Mul(a, b) => {
                    send(*a, g.zip_map(val(*b), |g, v| g * v), &mut adj);
                    send(*b, g.zip_map(val(*a), |g, v| g * v), &mut adj);
                }
                Op::Div(a, b) => {
                    let vb = val(*b);
                    send(*a, g.zip_map(vb, |g, d| g / d), &mut adj);
                    // d(a/b)/db = -(a/b)/b
                    let gb = g.zip_map(y, |g, q| g * q).zip_map(vb, |t, d| -t / d);
                    send(*b, gb, &mut adj);
                }
                Op::Broadcast(x) => {
                    let reduced = reduce_to(&g, val(*x).shape());
                    send(*x, reduced, &mut adj);
                }
                Op::Relu(x) => {
                    send(*x, g.zip_map(val(*x), |g, v| if v > 0.0 { g } else { 0.0 }), &mut adj)
                }
                Op::LeakyRelu(x) => send(
                    *x,
                    g.zip_map(val(*x), |g, v| if v > 0.0 { g } else { LEAKY_SLOPE * g }),
                    &mut adj,
                ),
                Op::Tanh(x) => send(*x, g.zip_map(y, |g, t| g * (1.0 - t * t)), &mut adj),
                Op::Sigmoid(x) => send(*x, g.zip_map(y, |g, s| g * s * (1.0 - s)), &mut adj),
                Op::LogSigmoid(x) => send(*x, g.zip_map(val(*x), |g, v| g * sigmoid(-v)), &mut adj),
                Op::Exp(x) => send(*x, g.zip_map(y, |g, e| g * e), &mut adj),
                Op::Log(x) => send(*x, g.zip_map(val(*x), |g, v| g / v), &mut adj),
                Op::Sqrt(x) => send(*x, g.zip_map(y, |g, r| g * 0.5 / r), &mut adj),
                Op::Sin(x) => send(*x, g.zip_map(val(*x), |g, v| g * v.cos()), &mut adj),
                Op::Acos(x) => send(
                    *x,
                    g.zip_map(val(*x), |g, v| -g / (1.0 - v * v).max(f64::MIN_POSITIVE).sqrt()),
                    &mut adj,
                ),
                Op::Square(x) => send(*x, g.zip_map(val(*x), |g, v| 2.0 * g * v), &mut adj),
                Op::Clamp { x, lo, hi } => {
                    let (lo, hi) = (*lo, *hi);
                    send(
                        *x,
                        g.zip_map(val(*x), |g, v| if v >= lo && v <= hi { g } else { 0.0 }),
                        &mut adj,
                    )
                }
                Op::Sum(x) => {
                    let s = g.data()[0];
                    send(*x, Tensor::full(val(*x).shape(), s), &mut adj)
                }
                Op::Mean(x) => {
                    let v = val(*x);
                    let s = g.data()[0] / v.len() as f64;
                    send(*x, Tensor::full(v.shape(), s), &mut adj)
                }
                Op::SumAxis(x) => {
                    let expanded = broadcast_to(&g, val(*x).shape())?;
                    send(*x, expanded, &mut adj)
                }
                Op::Concat { xs, axis } => {
                    let mut offset = 0;
                    for &j in xs {
                        let s = val(j).shape();
                        let part = slice_tensor(&g, *axis, offset, s[*axis]);
                        offset += s[*axis];
                        send(j, part, &mut adj);
                    }
                }
                Op::Slice { x, axis, start } => {
                    let src = val(*x).shape();
                    let mut full = Tensor::zeros(src);
                    let (outer, alen, inner) = axis_blocks(src, *axis);
                    let len = g.shape()[*axis];
                    let gd = g.data();
                    let fd = full.data_mut();
                    for o in 0..outer {
                        let dst = (o * alen + start) * inner;
                        let srcb = o * len * inner;
                        fd[dst..dst + len * inner].copy_from_slice(&gd[srcb..srcb + len * inner]);
                    }
                    send(*x, full, &mut adj)
                }
                Op::Reshape(x) => {
                    let shape = val(*x).shape().to_vec();
                    send(*x, g.reshaped(&shape)?, &mut adj)
                }
            }
        }
        Ok(grads)
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn log_sigmoid(v: f64) -> f64 {
    v.min(0.0) - (-v.abs()).exp().ln_1p()
}

fn broadcast_to(src: &Tensor, shape: &[usize]) -> Result<Tensor, KernelError> {
    let s = src.shape();
    let ok = s.len() == shape.len() && s.iter().zip(shape).all(|(&a, &b)| a == b || a == 1);
    if !ok {
        return Err(KernelError::ShapeMismatch {
            op: "broadcast",
            left: s.to_vec(),
            right: shape.to_vec(),
        });
    }
    let n: usize = shape.iter().product();
    let src_strides = strides(s);
    let mut out = Vec::with_capacity(n);
    let mut index = vec![0usize; shape.len()];
    for _ in 0..n {
        let off: usize = index
            .iter()
            .zip(s)
            .zip(&src_strides)
            .map(|((&i, &d), &st)| if d == 1 { 0 } else { i * st })
            .sum();
        out.push(src.data()[off]);
        increment(&mut index, shape);
    }
    Tensor::new(shape.to_vec(), out)
}

/// Sum `g` over the dimensions where `target` has length 1.
fn reduce_to(g: &Tensor, target: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(target);
    let tstrides = strides(target);
    let shape = g.shape();
    let mut index = vec![0usize; shape.len()];
    for &v in g.data() {
        let off: usize = index
            .iter()
            .zip(target)
            .zip(&tstrides)
            .map(|((&i, &d), &st)| if d == 1 { 0 } else { i * st })
            .sum();
        out.data_mut()[off] += v;
        increment(&mut index, shape);
    }
    out
}

fn slice_tensor(t: &Tensor, axis: usize, start: usize, len: usize) -> Tensor {
    let (outer, alen, inner) = axis_blocks(t.shape(), axis);
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * alen + start) * inner;
        out.extend_from_slice(&t.data()[base..base + len * inner]);
    }
    let mut shape = t.shape().to_vec();
    shape[axis] = len;
    Tensor::new(shape, out).expect("slice of a valid tensor")
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut st = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        st[d] = st[d + 1] * shape[d + 1];
    }
    st
}

fn increment(index: &mut [usize], shape: &[usize]) {
    for d in (0..shape.len()).rev() {
        index[d] += 1;
        if index[d] < shape[d] {
            return;
        }
        index[d] = 0;
    }
}
