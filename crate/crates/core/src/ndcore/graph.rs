//! Static computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] is built once by appending nodes; every node can only refer to
//! nodes created before it, so the node list is already in topological order.
//! [`Graph::forward`] evaluates all nodes and caches their values, and
//! [`Graph::backward`] propagates a seed from one named output back to every
//! parameter and input.
//!
//! There is no implicit broadcasting. Batched ops take the batch on the
//! leading axis: `dense` maps `[N, in] -> [N, out]` and `conv1d` maps
//! `[N, C_in, L] -> [N, C_out, L']`.

use std::collections::BTreeMap;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

/// Named tensors fed into [`Graph::forward`].
pub type Feed = BTreeMap<String, Tensor>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Input(String),
    Param(String),
    Dense { x: NodeId, w: NodeId, b: NodeId },
    Conv1d { x: NodeId, w: NodeId, b: NodeId, pad: usize },
    Relu(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Softplus(NodeId),
    Abs(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Minimum(NodeId, NodeId),
    Scale(NodeId, f64),
    Shift(NodeId, f64),
    Clamp { x: NodeId, lo: f64, hi: f64 },
    Softmax(NodeId),
    SumLast(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Reshape(NodeId, Vec<usize>),
    Concat(NodeId, NodeId),
    OffsetColumn { x: NodeId, s: NodeId, col: usize },
    ShiftRows(NodeId),
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Dense { .. } => "dense",
            Op::Conv1d { .. } => "conv1d",
            Op::Relu(_) => "relu",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Softplus(_) => "softplus",
            Op::Abs(_) => "abs",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Minimum(..) => "minimum",
            Op::Scale(..) => "scale",
            Op::Shift(..) => "shift",
            Op::Clamp { .. } => "clamp",
            Op::Softmax(_) => "softmax",
            Op::SumLast(_) => "sum_last",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Reshape(..) => "reshape",
            Op::Concat(..) => "concat",
            Op::OffsetColumn { .. } => "offset_column",
            Op::ShiftRows(_) => "shift_rows",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    label: String,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    pub params: BTreeMap<String, Tensor>,
    pub inputs: BTreeMap<String, Tensor>,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    outputs: BTreeMap<String, NodeId>,
    values: Option<Vec<Tensor>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> NodeId {
        for dep in deps(&op) {
            assert!(dep.0 < self.nodes.len(), "node refers to a later node");
        }
        let id = NodeId(self.nodes.len());
        let label = match &op {
            Op::Input(name) => format!("input `{name}`"),
            Op::Param(name) => format!("param `{name}`"),
            other => format!("#{} {}", id.0, other.kind()),
        };
        self.nodes.push(Node { op, label });
        self.values = None;
        id
    }

    /// Overrides the label used in error messages.
    pub fn label(&mut self, id: NodeId, label: impl Into<String>) -> NodeId {
        self.nodes[id.0].label = label.into();
        id
    }

    pub fn input(&mut self, name: impl Into<String>) -> NodeId {
        self.push(Op::Input(name.into()))
    }

    pub fn param(&mut self, name: impl Into<String>) -> NodeId {
        self.push(Op::Param(name.into()))
    }

    /// `x·Wᵀ + b` with `x: [N, in]` or `[in]`, `w: [out, in]`, `b: [out]`.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Dense { x, w, b })
    }

    /// 1-D convolution over the last axis with symmetric zero padding.
    /// `x: [N, C_in, L]`, `w: [C_out, C_in, K]`, `b: [C_out]`.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId, pad: usize) -> NodeId {
        self.push(Op::Conv1d { x, w, b, pad })
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Relu(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Tanh(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Exp(x))
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Log(x))
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Softplus(x))
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Abs(x))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Div(a, b))
    }

    /// Elementwise minimum; on ties the gradient goes to `a`.
    pub fn minimum(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Minimum(a, b))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        self.push(Op::Scale(x, factor))
    }

    pub fn shift(&mut self, x: NodeId, offset: f64) -> NodeId {
        self.push(Op::Shift(x, offset))
    }

    /// Clips to `[lo, hi]`; gradient passes only where `lo <= x <= hi`.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        self.push(Op::Clamp { x, lo, hi })
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Softmax(x))
    }

    /// Sums the last axis away; a 1-D input reduces to shape `[1]`.
    pub fn sum_last(&mut self, x: NodeId) -> NodeId {
        self.push(Op::SumLast(x))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Mean(x))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> NodeId {
        self.push(Op::Reshape(x, shape))
    }

    /// Concatenates two `[N, a]` and `[N, b]` tensors into `[N, a + b]`.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Concat(a, b))
    }

    /// Adds the scalar `s: [1]` to column `col` of `x: [N, K]`.
    pub fn offset_column(&mut self, x: NodeId, s: NodeId, col: usize) -> NodeId {
        self.push(Op::OffsetColumn { x, s, col })
    }

    /// Moves every row of `x: [N, K]` down by one; row 0 becomes zeros and
    /// the last row is dropped.
    pub fn shift_rows(&mut self, x: NodeId) -> NodeId {
        self.push(Op::ShiftRows(x))
    }

    pub fn output(&mut self, name: impl Into<String>, id: NodeId) {
        self.outputs.insert(name.into(), id);
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Names of all parameters referenced by the graph.
    pub fn param_names(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Param(name) => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Evaluates every node, caching intermediates for [`backward`](Self::backward).
    pub fn forward(&mut self, params: &ParamStore, inputs: &Feed) -> Result<BTreeMap<String, Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = eval(node, &values, params, inputs)?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("output of node `{}`", node.label)));
            }
            values.push(v);
        }
        let out = self
            .outputs
            .iter()
            .map(|(name, id)| (name.clone(), values[id.0].clone()))
            .collect();
        self.values = Some(values);
        Ok(out)
    }

    /// Cached value of any node from the last forward pass.
    pub fn value(&self, id: NodeId) -> Result<&Tensor> {
        let values = self.values.as_ref().ok_or_else(not_evaluated)?;
        Ok(&values[id.0])
    }

    /// Cached value of a named output from the last forward pass.
    pub fn output_value(&self, name: &str) -> Result<&Tensor> {
        let id = *self
            .outputs
            .get(name)
            .ok_or_else(|| Error::Missing(name.into()))?;
        self.value(id)
    }

    /// Vector-Jacobian product of output `name` with `seed`.
    ///
    /// Every parameter and input node reachable from the graph receives a
    /// gradient (zero if it does not influence the output).
    pub fn backward(&self, name: &str, seed: &Tensor) -> Result<Gradients> {
        let values = self.values.as_ref().ok_or_else(not_evaluated)?;
        let out = *self
            .outputs
            .get(name)
            .ok_or_else(|| Error::Missing(name.into()))?;
        if values[out.0].shape() != seed.shape() {
            return Err(Error::Shape {
                node: self.nodes[out.0].label.clone(),
                detail: format!(
                    "seed shape {:?} does not match output shape {:?}",
                    seed.shape(),
                    values[out.0].shape()
                ),
            });
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; out.0 + 1];
        grads[out.0] = Some(seed.clone());
        let mut result = Gradients::default();

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Param(p) => accumulate_named(&mut result.params, p, g),
                Op::Input(p) => accumulate_named(&mut result.inputs, p, g),
                op => {
                    for (dep, dg) in vjp(op, &values[idx], values, &g) {
                        match &mut grads[dep.0] {
                            Some(existing) => existing.add_assign(&dg),
                            slot @ None => *slot = Some(dg),
                        }
                    }
                }
            }
        }

        // Leaves the output does not depend on still get an explicit zero.
        for (node, v) in self.nodes.iter().zip(values) {
            match &node.op {
                Op::Param(p) => {
                    result.params.entry(p.clone()).or_insert_with(|| Tensor::zeros(v.shape()));
                }
                Op::Input(p) => {
                    result.inputs.entry(p.clone()).or_insert_with(|| Tensor::zeros(v.shape()));
                }
                _ => {}
            }
        }
        Ok(result)
    }
}

fn not_evaluated() -> Error {
    Error::State("backward called before forward".into())
}

fn accumulate_named(map: &mut BTreeMap<String, Tensor>, name: &str, g: Tensor) {
    match map.get_mut(name) {
        Some(existing) => existing.add_assign(&g),
        None => {
            map.insert(name.to_string(), g);
        }
    }
}

fn deps(op: &Op) -> Vec<NodeId> {
    match op {
        Op::Input(_) | Op::Param(_) => vec![],
        Op::Dense { x, w, b } | Op::Conv1d { x, w, b, .. } => vec![*x, *w, *b],
        Op::Relu(x)
        | Op::Tanh(x)
        | Op::Exp(x)
        | Op::Log(x)
        | Op::Softplus(x)
        | Op::Abs(x)
        | Op::Scale(x, _)
        | Op::Shift(x, _)
        | Op::Clamp { x, .. }
        | Op::Softmax(x)
        | Op::SumLast(x)
        | Op::Sum(x)
        | Op::Mean(x)
        | Op::Reshape(x, _)
        | Op::ShiftRows(x) => vec![*x],
        Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::Div(a, b)
        | Op::Minimum(a, b)
        | Op::Concat(a, b) => vec![*a, *b],
        Op::OffsetColumn { x, s, .. } => vec![*x, *s],
    }
}

fn shape_err(node: &Node, detail: String) -> Error {
    Error::Shape {
        node: node.label.clone(),
        detail,
    }
}

fn same_shape<'a>(node: &Node, a: &'a Tensor, b: &'a Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(
            node,
            format!("operands have shapes {:?} and {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(rows, cols)` view of a tensor over its last axis.
fn rows_cols(t: &Tensor) -> (usize, usize) {
    let cols = t.last_dim();
    (t.len() / cols, cols)
}

fn eval(node: &Node, values: &[Tensor], params: &ParamStore, inputs: &Feed) -> Result<Tensor> {
    let v = |id: &NodeId| &values[id.0];
    Ok(match &node.op {
        Op::Input(name) => inputs
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Missing(format!("input {name}")))?,
        Op::Param(name) => params
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Missing(format!("parameter {name}")))?,
        Op::Dense { x, w, b } => {
            let (x, w, b) = (v(x), v(w), v(b));
            if w.shape().len() != 2 || b.shape() != [w.shape()[0]] {
                return Err(shape_err(
                    node,
                    format!("weight {:?} and bias {:?} are not [out, in] / [out]", w.shape(), b.shape()),
                ));
            }
            let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
            if x.last_dim() != in_dim || x.shape().len() > 2 {
                return Err(shape_err(
                    node,
                    format!("input {:?} does not end in {in_dim}", x.shape()),
                ));
            }
            let n = x.len() / in_dim;
            let mut out = Vec::with_capacity(n * out_dim);
            for row in x.data().chunks(in_dim) {
                for o in 0..out_dim {
                    let wr = &w.data()[o * in_dim..(o + 1) * in_dim];
                    let s: f64 = wr.iter().zip(row).map(|(a, b)| a * b).sum();
                    out.push(s + b.data()[o]);
                }
            }
            let shape = if x.shape().len() == 1 { vec![out_dim] } else { vec![n, out_dim] };
            Tensor::new(shape, out)?
        }
        Op::Conv1d { x, w, b, pad } => {
            let (x, w, b) = (v(x), v(w), v(b));
            let geo = ConvGeometry::new(node, x, w, b, *pad)?;
            let mut out = vec![0.0; geo.n * geo.c_out * geo.l_out];
            for n in 0..geo.n {
                for co in 0..geo.c_out {
                    let base = (n * geo.c_out + co) * geo.l_out;
                    for t in 0..geo.l_out {
                        let mut s = b.data()[co];
                        for ci in 0..geo.c_in {
                            for k in 0..geo.k {
                                if let Some(src) = geo.source(t, k) {
                                    s += w.data()[geo.w_index(co, ci, k)]
                                        * x.data()[geo.x_index(n, ci, src)];
                                }
                            }
                        }
                        out[base + t] = s;
                    }
                }
            }
            Tensor::new(vec![geo.n, geo.c_out, geo.l_out], out)?
        }
        Op::Relu(x) => v(x).map(|a| a.max(0.0)),
        Op::Tanh(x) => v(x).map(f64::tanh),
        Op::Exp(x) => v(x).map(f64::exp),
        Op::Log(x) => {
            let x = v(x);
            if let Some(bad) = x.data().iter().find(|&&a| a <= 0.0) {
                return Err(Error::NonFinite(format!(
                    "log of nonpositive value {bad} at node `{}`",
                    node.label
                )));
            }
            x.map(f64::ln)
        }
        Op::Softplus(x) => v(x).map(softplus),
        Op::Abs(x) => v(x).map(f64::abs),
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::Minimum(a, b) => {
            let (a, b) = (v(a), v(b));
            same_shape(node, a, b)?;
            match &node.op {
                Op::Add(..) => a.zip_map(b, |p, q| p + q),
                Op::Sub(..) => a.zip_map(b, |p, q| p - q),
                Op::Mul(..) => a.zip_map(b, |p, q| p * q),
                Op::Div(..) => a.zip_map(b, |p, q| p / q),
                _ => a.zip_map(b, |p, q| if p <= q { p } else { q }),
            }
        }
        Op::Scale(x, c) => v(x).map(|a| a * c),
        Op::Shift(x, c) => v(x).map(|a| a + c),
        Op::Clamp { x, lo, hi } => v(x).map(|a| a.clamp(*lo, *hi)),
        Op::Softmax(x) => {
            let x = v(x);
            let (_, cols) = rows_cols(x);
            let mut out = Vec::with_capacity(x.len());
            for row in x.data().chunks(cols) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = row.iter().map(|a| (a - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                out.extend(exps.iter().map(|e| e / total));
            }
            Tensor::new(x.shape().to_vec(), out)?
        }
        Op::SumLast(x) => {
            let x = v(x);
            let (_, cols) = rows_cols(x);
            let sums: Vec<f64> = x.data().chunks(cols).map(|r| r.iter().sum()).collect();
            let shape = if x.shape().len() == 1 {
                vec![1]
            } else {
                x.shape()[..x.shape().len() - 1].to_vec()
            };
            Tensor::new(shape, sums)?
        }
        Op::Sum(x) => Tensor::scalar(v(x).data().iter().sum()),
        Op::Mean(x) => {
            let x = v(x);
            Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64)
        }
        Op::Reshape(x, shape) => v(x)
            .clone()
            .reshape(shape.clone())
            .map_err(|e| shape_err(node, e.to_string()))?,
        Op::Concat(a, b) => {
            let (a, b) = (v(a), v(b));
            if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[0] != b.shape()[0] {
                return Err(shape_err(
                    node,
                    format!("cannot concatenate {:?} and {:?}", a.shape(), b.shape()),
                ));
            }
            let (n, ca, cb) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let mut out = Vec::with_capacity(n * (ca + cb));
            for r in 0..n {
                out.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
                out.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
            }
            Tensor::new(vec![n, ca + cb], out)?
        }
        Op::OffsetColumn { x, s, col } => {
            let (x, s) = (v(x), v(s));
            if s.shape() != [1] || x.shape().len() != 2 || *col >= x.shape()[1] {
                return Err(shape_err(
                    node,
                    format!("cannot offset column {col} of {:?} by {:?}", x.shape(), s.shape()),
                ));
            }
            let mut out = x.clone();
            let cols = x.shape()[1];
            for r in 0..x.shape()[0] {
                out.data_mut()[r * cols + col] += s.data()[0];
            }
            out
        }
        Op::ShiftRows(x) => {
            let x = v(x);
            if x.shape().len() != 2 {
                return Err(shape_err(node, format!("cannot shift rows of {:?}", x.shape())));
            }
            let k = x.shape()[1];
            let mut out = Tensor::zeros(x.shape());
            let n = x.len();
            if n > 0 {
                out.data_mut()[k..].copy_from_slice(&x.data()[..n - k]);
            }
            out
        }
    })
}

struct ConvGeometry {
    n: usize,
    c_in: usize,
    c_out: usize,
    l: usize,
    k: usize,
    pad: usize,
    l_out: usize,
}

impl ConvGeometry {
    fn new(node: &Node, x: &Tensor, w: &Tensor, b: &Tensor, pad: usize) -> Result<Self> {
        if x.shape().len() != 3 || w.shape().len() != 3 {
            return Err(shape_err(
                node,
                format!("expected x [N, C, L] and w [C_out, C_in, K], got {:?} and {:?}", x.shape(), w.shape()),
            ));
        }
        let (n, c_in, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (c_out, wc_in, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        if wc_in != c_in || b.shape() != [c_out] {
            return Err(shape_err(
                node,
                format!(
                    "input has {c_in} channels but weight is {:?} and bias {:?}",
                    w.shape(),
                    b.shape()
                ),
            ));
        }
        if l + 2 * pad < k {
            return Err(shape_err(
                node,
                format!("kernel {k} longer than padded input length {}", l + 2 * pad),
            ));
        }
        Ok(Self {
            n,
            c_in,
            c_out,
            l,
            k,
            pad,
            l_out: l + 2 * pad - k + 1,
        })
    }

    fn source(&self, t: usize, k: usize) -> Option<usize> {
        let pos = t + k;
        if pos < self.pad || pos - self.pad >= self.l {
            None
        } else {
            Some(pos - self.pad)
        }
    }

    fn w_index(&self, co: usize, ci: usize, k: usize) -> usize {
        (co * self.c_in + ci) * self.k + k
    }

    fn x_index(&self, n: usize, ci: usize, t: usize) -> usize {
        (n * self.c_in + ci) * self.l + t
    }
}

/// Gradient contributions of one node to its operands.
fn vjp(op: &Op, out: &Tensor, values: &[Tensor], g: &Tensor) -> Vec<(NodeId, Tensor)> {
    let v = |id: &NodeId| &values[id.0];
    match op {
        Op::Input(_) | Op::Param(_) => vec![],
        Op::Dense { x, w, b } => {
            let (xv, wv) = (v(x), v(w));
            let (out_dim, in_dim) = (wv.shape()[0], wv.shape()[1]);
            let mut gx = Tensor::zeros(xv.shape());
            let mut gw = Tensor::zeros(wv.shape());
            let mut gb = Tensor::zeros(&[out_dim]);
            for (r, (xr, gr)) in xv.data().chunks(in_dim).zip(g.data().chunks(out_dim)).enumerate() {
                for (o, &go) in gr.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    gb.data_mut()[o] += go;
                    let wr = &wv.data()[o * in_dim..(o + 1) * in_dim];
                    let gxr = &mut gx.data_mut()[r * in_dim..(r + 1) * in_dim];
                    for i in 0..in_dim {
                        gxr[i] += go * wr[i];
                    }
                    let gwr = &mut gw.data_mut()[o * in_dim..(o + 1) * in_dim];
                    for i in 0..in_dim {
                        gwr[i] += go * xr[i];
                    }
                }
            }
            vec![(*x, gx), (*w, gw), (*b, gb)]
        }
        Op::Conv1d { x, w, b, pad } => {
            let (xv, wv) = (v(x), v(w));
            let dummy = Node {
                op: Op::Input(String::new()),
                label: String::new(),
            };
            let geo = ConvGeometry::new(&dummy, xv, wv, v(b), *pad).expect("validated in forward");
            let mut gx = Tensor::zeros(xv.shape());
            let mut gw = Tensor::zeros(wv.shape());
            let mut gb = Tensor::zeros(&[geo.c_out]);
            for n in 0..geo.n {
                for co in 0..geo.c_out {
                    let base = (n * geo.c_out + co) * geo.l_out;
                    for t in 0..geo.l_out {
                        let go = g.data()[base + t];
                        if go == 0.0 {
                            continue;
                        }
                        gb.data_mut()[co] += go;
                        for ci in 0..geo.c_in {
                            for k in 0..geo.k {
                                if let Some(src) = geo.source(t, k) {
                                    let wi = geo.w_index(co, ci, k);
                                    let xi = geo.x_index(n, ci, src);
                                    gx.data_mut()[xi] += go * wv.data()[wi];
                                    gw.data_mut()[wi] += go * xv.data()[xi];
                                }
                            }
                        }
                    }
                }
            }
            vec![(*x, gx), (*w, gw), (*b, gb)]
        }
        Op::Relu(x) => vec![(*x, v(x).zip_map(g, |a, gi| if a > 0.0 { gi } else { 0.0 }))],
        Op::Tanh(x) => vec![(*x, out.zip_map(g, |y, gi| gi * (1.0 - y * y)))],
        Op::Exp(x) => vec![(*x, out.zip_map(g, |y, gi| gi * y))],
        Op::Log(x) => vec![(*x, v(x).zip_map(g, |a, gi| gi / a))],
        Op::Softplus(x) => vec![(*x, v(x).zip_map(g, |a, gi| gi * sigmoid(a)))],
        Op::Abs(x) => vec![(*x, v(x).zip_map(g, |a, gi| {
            if a > 0.0 {
                gi
            } else if a < 0.0 {
                -gi
            } else {
                0.0
            }
        }))],
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|gi| -gi))],
        Op::Mul(a, b) => vec![(*a, g.zip_map(v(b), |gi, q| gi * q)), (*b, g.zip_map(v(a), |gi, p| gi * p))],
        Op::Div(a, b) => {
            let (av, bv) = (v(a), v(b));
            let ga = g.zip_map(bv, |gi, q| gi / q);
            let mut gb = g.clone();
            for ((gbi, p), q) in gb.data_mut().iter_mut().zip(av.data()).zip(bv.data()) {
                *gbi = -*gbi * p / (q * q);
            }
            vec![(*a, ga), (*b, gb)]
        }
        Op::Minimum(a, b) => {
            let (av, bv) = (v(a), v(b));
            let mut ga = g.clone();
            let mut gb = g.clone();
            for i in 0..g.len() {
                if av.data()[i] <= bv.data()[i] {
                    gb.data_mut()[i] = 0.0;
                } else {
                    ga.data_mut()[i] = 0.0;
                }
            }
            vec![(*a, ga), (*b, gb)]
        }
        Op::Scale(x, c) => vec![(*x, g.map(|gi| gi * c))],
        Op::Shift(x, _) => vec![(*x, g.clone())],
        Op::Clamp { x, lo, hi } => vec![(*x, v(x).zip_map(g, |a, gi| {
            if a >= *lo && a <= *hi {
                gi
            } else {
                0.0
            }
        }))],
        Op::Softmax(x) => {
            let (_, cols) = rows_cols(out);
            let mut gx = Vec::with_capacity(out.len());
            for (yr, gr) in out.data().chunks(cols).zip(g.data().chunks(cols)) {
                let dot: f64 = yr.iter().zip(gr).map(|(y, gi)| y * gi).sum();
                gx.extend(yr.iter().zip(gr).map(|(y, gi)| y * (gi - dot)));
            }
            vec![(*x, Tensor::new(out.shape().to_vec(), gx).expect("same shape"))]
        }
        Op::SumLast(x) => {
            let xv = v(x);
            let (_, cols) = rows_cols(xv);
            let gx = Tensor::from_fn(xv.shape(), |i| g.data()[i / cols]);
            vec![(*x, gx)]
        }
        Op::Sum(x) => vec![(*x, Tensor::full(v(x).shape(), g.data()[0]))],
        Op::Mean(x) => {
            let xv = v(x);
            vec![(*x, Tensor::full(xv.shape(), g.data()[0] / xv.len() as f64))]
        }
        Op::Reshape(x, _) => {
            let gx = g.clone().reshape(v(x).shape().to_vec()).expect("same size");
            vec![(*x, gx)]
        }
        Op::Concat(a, b) => {
            let (ca, cb) = (v(a).shape()[1], v(b).shape()[1]);
            let n = g.shape()[0];
            let mut ga = Vec::with_capacity(n * ca);
            let mut gb = Vec::with_capacity(n * cb);
            for row in g.data().chunks(ca + cb) {
                ga.extend_from_slice(&row[..ca]);
                gb.extend_from_slice(&row[ca..]);
            }
            vec![
                (*a, Tensor::new(vec![n, ca], ga).expect("shape")),
                (*b, Tensor::new(vec![n, cb], gb).expect("shape")),
            ]
        }
        Op::OffsetColumn { x, s, col } => {
            let cols = g.shape()[1];
            let gs: f64 = g.data().iter().skip(*col).step_by(cols).sum();
            vec![(*x, g.clone()), (*s, Tensor::scalar(gs))]
        }
        Op::ShiftRows(x) => {
            let k = g.shape()[1];
            let n = g.len();
            let mut gx = Tensor::zeros(g.shape());
            if n > 0 {
                gx.data_mut()[..n - k].copy_from_slice(&g.data()[k..]);
            }
            vec![(*x, gx)]
        }
    }
}
