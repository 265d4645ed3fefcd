//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] evaluates eagerly: every operation computes its value as soon
//! as it is recorded and appends a node to the tape. Nodes only ever refer to
//! earlier nodes, so the tape is already in topological order and
//! [`Graph::backward`] is a single reverse sweep.
//!
//! Parameters enter the tape through [`Graph::param`], which copies the
//! current value out of a [`ParamStore`]. After the sweep,
//! [`Gradients::accumulate_into`] adds the leaf gradients back into the
//! store they came from. Graphs are per-call and never shared.

use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    LeakyRelu(Var, f64),
    Silu(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Dropout(Var, Tensor),
    LogSoftmaxRows(Var),
    SoftmaxRows(Var),
    LogSoftmaxComplementRows(Var),
    LogSumExpRows(Var),
    Sum(Var),
    Gather(Var, Vec<(usize, usize)>),
    SelectRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Reshape(Var),
    MeanPoolGroups(Var, usize),
    L2NormalizeRows(Var, Vec<f64>),
    GroupedScores(Var, Var, usize, f64),
    GroupedMix(Var, Var, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A constant input; no gradient is tracked through it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a parameter; frozen parameters enter as constants.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.value.clone(), Op::Param(id), p.trainable)
    }

    /// Copies the value of `v` as a constant, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(value, Op::Transpose(a), rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Adds a `1 x C` row to every row of an `N x C` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (n, c) = self.shape(x);
        if self.shape(row) != (1, c) {
            return Err(shape_err(
                "add_row",
                format!("{:?} broadcast onto {n}x{c}", self.shape(row)),
            ));
        }
        let mut value = self.value(x).clone();
        let b = self.value(row).data().to_vec();
        for r in 0..n {
            for (v, bb) in value.row_mut(r).iter_mut().zip(&b) {
                *v += bb;
            }
        }
        let rg = self.rg(&[x, row]);
        Ok(self.push(value, Op::AddRow(x, row), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| x * k);
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, k), rg)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| x + k);
        let rg = self.rg(&[a]);
        self.push(value, Op::AddScalar(a), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.rg(&[a]);
        self.push(value, Op::LeakyRelu(a, slope), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, 0.0)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * crate::stablemath::sigmoid(x));
        let rg = self.rg(&[a]);
        self.push(value, Op::Silu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(crate::stablemath::sigmoid);
        let rg = self.rg(&[a]);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(crate::stablemath::log_sigmoid);
        let rg = self.rg(&[a]);
        self.push(value, Op::LogSigmoid(a), rg)
    }

    /// Inverted dropout: kept entries are scaled by `1 / (1 - p)`.
    pub fn dropout(&mut self, a: Var, p: f64, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!("dropout probability {p} not in [0, 1)")));
        }
        if p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let (r, c) = self.shape(a);
        let mask_data = (0..r * c)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mask = Tensor::from_vec(r, c, mask_data)?;
        let value = self.value(a).zip_map(&mask, |x, m| x * m);
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Dropout(a, mask), rg))
    }

    fn map_rows(
        &self,
        a: Var,
        out_cols: usize,
        f: impl Fn(&[f64], &mut [f64]) -> Result<()>,
    ) -> Result<Tensor> {
        let x = self.value(a);
        let mut out = Tensor::zeros(x.rows(), out_cols);
        for r in 0..x.rows() {
            f(x.row(r), out.row_mut(r))?;
        }
        Ok(out)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let cols = self.shape(a).1;
        let value = self.map_rows(a, cols, |x, o| {
            o.copy_from_slice(&crate::stablemath::log_softmax(x)?);
            Ok(())
        })?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::LogSoftmaxRows(a), rg))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let cols = self.shape(a).1;
        let value = self.map_rows(a, cols, |x, o| {
            o.copy_from_slice(&crate::stablemath::softmax(x)?);
            Ok(())
        })?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SoftmaxRows(a), rg))
    }

    /// `ln(1 - softmax(x)_c)` per entry.
    pub fn log_softmax_complement_rows(&mut self, a: Var) -> Result<Var> {
        let cols = self.shape(a).1;
        let value = self.map_rows(a, cols, |x, o| {
            o.copy_from_slice(&crate::stablemath::log_softmax_complement(x)?);
            Ok(())
        })?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::LogSoftmaxComplementRows(a), rg))
    }

    /// `N x C -> N x 1`.
    pub fn logsumexp_rows(&mut self, a: Var) -> Result<Var> {
        let value = self.map_rows(a, 1, |x, o| {
            o[0] = crate::stablemath::logsumexp(x)?;
            Ok(())
        })?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::LogSumExpRows(a), rg))
    }

    /// Sum of all entries, as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Picks `x[r, c]` for each position, producing a `K x 1` column.
    pub fn gather(&mut self, a: Var, positions: Vec<(usize, usize)>) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        if let Some(&(r, c)) = positions.iter().find(|(r, c)| *r >= rows || *c >= cols) {
            return Err(shape_err("gather", format!("({r}, {c}) outside {rows}x{cols}")));
        }
        let data = positions.iter().map(|&(r, c)| x.get(r, c)).collect();
        let value = Tensor::from_vec(positions.len(), 1, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Gather(a, positions), rg))
    }

    pub fn select_rows(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        if let Some(bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(shape_err("select_rows", format!("row {bad} of {rows}")));
        }
        let mut value = Tensor::zeros(indices.len(), cols);
        for (k, &i) in indices.iter().enumerate() {
            value.row_mut(k).copy_from_slice(x.row(i));
        }
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SelectRows(a, indices), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(shape_err("concat_cols", "no inputs".into()));
        };
        let rows = self.shape(*first).0;
        if parts.iter().any(|p| self.shape(*p).0 != rows) {
            return Err(shape_err("concat_cols", "row counts differ".into()));
        }
        let total: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut value = Tensor::zeros(rows, total);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let src = self.value(*p).row(r);
                value.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if start >= end || end > cols {
            return Err(shape_err("slice_cols", format!("{start}..{end} of {cols}")));
        }
        let x = self.value(a);
        let mut value = Tensor::zeros(rows, end - start);
        for r in 0..rows {
            value.row_mut(r).copy_from_slice(&x.row(r)[start..end]);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    /// Row-major reinterpretation; `N x (T·d)` becomes `(N·T) x d`.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(a).clone().reshaped(rows, cols)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Averages consecutive groups of `group` rows: `(N·T) x d -> N x d`.
    pub fn mean_pool_groups(&mut self, a: Var, group: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if group == 0 || rows % group != 0 {
            return Err(shape_err("mean_pool_groups", format!("{rows} rows in groups of {group}")));
        }
        let x = self.value(a);
        let mut value = Tensor::zeros(rows / group, cols);
        for r in 0..rows {
            let src = x.row(r);
            for (o, v) in value.row_mut(r / group).iter_mut().zip(src) {
                *o += v / group as f64;
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::MeanPoolGroups(a, group), rg))
    }

    /// Divides each row by its Euclidean norm. Zero rows are a domain error.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let mut norms = Vec::with_capacity(x.rows());
        let mut value = x.clone();
        for r in 0..x.rows() {
            let n = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                return Err(Error::Domain(format!("row {r} has zero norm")));
            }
            norms.push(n);
            for v in value.row_mut(r) {
                *v /= n;
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::L2NormalizeRows(a, norms), rg))
    }

    fn check_grouped(&self, op: &'static str, a: Var, b: Var, group: usize) -> Result<()> {
        let (ra, _) = self.shape(a);
        let (rb, _) = self.shape(b);
        if group == 0 || ra != rb || ra % group != 0 {
            return Err(shape_err(op, format!("{ra} and {rb} rows in groups of {group}")));
        }
        Ok(())
    }

    /// Per-group scaled dot products: for each group `g` of `group` rows,
    /// `S_g = k · Q_g K_gᵀ`, stacked into a `(G·T) x T` matrix.
    pub fn grouped_scores(&mut self, q: Var, k: Var, group: usize, scale: f64) -> Result<Var> {
        self.check_grouped("grouped_scores", q, k, group)?;
        if self.shape(q).1 != self.shape(k).1 {
            return Err(shape_err("grouped_scores", "query/key widths differ".into()));
        }
        let (qv, kv) = (self.value(q), self.value(k));
        let rows = qv.rows();
        let mut value = Tensor::zeros(rows, group);
        for r in 0..rows {
            let base = r - r % group;
            for j in 0..group {
                let d: f64 = qv.row(r).iter().zip(kv.row(base + j)).map(|(a, b)| a * b).sum();
                value.set(r, j, scale * d);
            }
        }
        let rg = self.rg(&[q, k]);
        Ok(self.push(value, Op::GroupedScores(q, k, group, scale), rg))
    }

    /// Per-group weighted sums: `O_g = A_g V_g` with `A` of shape `(G·T) x T`.
    pub fn grouped_mix(&mut self, weights: Var, v: Var, group: usize) -> Result<Var> {
        self.check_grouped("grouped_mix", weights, v, group)?;
        if self.shape(weights).1 != group {
            return Err(shape_err("grouped_mix", "weight width must equal group size".into()));
        }
        let (av, vv) = (self.value(weights), self.value(v));
        let (rows, d) = vv.shape();
        let mut value = Tensor::zeros(rows, d);
        for r in 0..rows {
            let base = r - r % group;
            for j in 0..group {
                let w = av.get(r, j);
                let src = vv.row(base + j).to_vec();
                for (o, s) in value.row_mut(r).iter_mut().zip(&src) {
                    *o += w * s;
                }
            }
        }
        let rg = self.rg(&[weights, v]);
        Ok(self.push(value, Op::GroupedMix(weights, v, group), rg))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.nodes.is_empty() || output.0 >= self.nodes.len() {
            return Err(Error::Graph("backward called before any forward pass".into()));
        }
        if self.shape(output) != (1, 1) {
            return Err(Error::Graph(format!(
                "backward needs a scalar output, got {:?}",
                self.shape(output)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::scalar(1.0));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        let param_grads = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match (&n.op, &grads[i]) {
                (Op::Param(id), Some(g)) if n.requires_grad => Some((*id, g.clone())),
                _ => None,
            })
            .collect();
        Ok(Gradients {
            nodes: grads,
            params: param_grads,
        })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut send = |v: Var, t: Tensor| {
            if self.nodes[v.0].requires_grad {
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                send(*a, g.matmul_t(val(*b))?);
                send(*b, val(*a).t_matmul(g)?);
            }
            Op::Transpose(a) => send(*a, g.transpose()),
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                send(*a, g.zip_map(val(*b), |x, y| x * y));
                send(*b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::AddRow(x, row) => {
                send(*x, g.clone());
                let mut acc = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, v) in acc.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                send(*row, acc);
            }
            Op::Scale(a, k) => send(*a, g.map(|x| x * k)),
            Op::AddScalar(a) => send(*a, g.clone()),
            Op::LeakyRelu(a, slope) => {
                send(*a, g.zip_map(val(*a), |gg, x| if x > 0.0 { gg } else { gg * slope }))
            }
            Op::Silu(a) => send(
                *a,
                g.zip_map(val(*a), |gg, x| {
                    let s = crate::stablemath::sigmoid(x);
                    gg * s * (1.0 + x * (1.0 - s))
                }),
            ),
            Op::Sigmoid(a) => send(*a, g.zip_map(&node.value, |gg, y| gg * y * (1.0 - y))),
            Op::LogSigmoid(a) => send(
                *a,
                g.zip_map(val(*a), |gg, x| gg * crate::stablemath::sigmoid(-x)),
            ),
            Op::Dropout(a, mask) => send(*a, g.zip_map(mask, |gg, m| gg * m)),
            Op::LogSoftmaxRows(a) => {
                let mut out = g.clone();
                for r in 0..g.rows() {
                    let gs: f64 = g.row(r).iter().sum();
                    for (o, y) in out.row_mut(r).iter_mut().zip(node.value.row(r)) {
                        *o -= y.exp() * gs;
                    }
                }
                send(*a, out);
            }
            Op::SoftmaxRows(a) => {
                let mut out = g.clone();
                for r in 0..g.rows() {
                    let s = node.value.row(r);
                    let dot: f64 = g.row(r).iter().zip(s).map(|(x, y)| x * y).sum();
                    for (o, y) in out.row_mut(r).iter_mut().zip(s) {
                        *o = y * (*o - dot);
                    }
                }
                send(*a, out);
            }
            Op::LogSoftmaxComplementRows(a) => {
                let x = val(*a);
                let mut out = Tensor::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let xr = x.row(r);
                    let lse = crate::stablemath::logsumexp(xr)?;
                    let yr = node.value.row(r);
                    let gr = g.row(r);
                    let gsum: f64 = gr.iter().sum();
                    let o = out.row_mut(r);
                    for k in 0..xr.len() {
                        let log_s = xr[k] - lse;
                        let mut acc = -log_s.exp() * gsum;
                        for c in 0..xr.len() {
                            if c != k {
                                // softmax over classes other than c, at k
                                acc += gr[c] * (log_s - yr[c]).exp();
                            }
                        }
                        o[k] = acc;
                    }
                }
                send(*a, out);
            }
            Op::LogSumExpRows(a) => {
                let x = val(*a);
                let mut out = Tensor::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let lse = node.value.get(r, 0);
                    let gr = g.get(r, 0);
                    for (o, v) in out.row_mut(r).iter_mut().zip(x.row(r)) {
                        *o = gr * (v - lse).exp();
                    }
                }
                send(*a, out);
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                send(*a, Tensor::filled(r, c, g.item()));
            }
            Op::Gather(a, pos) => {
                let (r, c) = val(*a).shape();
                let mut out = Tensor::zeros(r, c);
                for (k, &(i, j)) in pos.iter().enumerate() {
                    out.set(i, j, out.get(i, j) + g.get(k, 0));
                }
                send(*a, out);
            }
            Op::SelectRows(a, idx) => {
                let (r, c) = val(*a).shape();
                let mut out = Tensor::zeros(r, c);
                for (k, &i) in idx.iter().enumerate() {
                    for (o, v) in out.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                send(*a, out);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let (r, c) = val(*p).shape();
                    let mut out = Tensor::zeros(r, c);
                    for i in 0..r {
                        out.row_mut(i).copy_from_slice(&g.row(i)[off..off + c]);
                    }
                    off += c;
                    send(*p, out);
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = val(*a).shape();
                let mut out = Tensor::zeros(r, c);
                let w = g.cols();
                for i in 0..r {
                    out.row_mut(i)[*start..*start + w].copy_from_slice(g.row(i));
                }
                send(*a, out);
            }
            Op::Reshape(a) => {
                let (r, c) = val(*a).shape();
                send(*a, g.clone().reshaped(r, c)?);
            }
            Op::MeanPoolGroups(a, group) => {
                let (r, c) = val(*a).shape();
                let mut out = Tensor::zeros(r, c);
                for i in 0..r {
                    for (o, v) in out.row_mut(i).iter_mut().zip(g.row(i / group)) {
                        *o = v / *group as f64;
                    }
                }
                send(*a, out);
            }
            Op::L2NormalizeRows(a, norms) => {
                let y = &node.value;
                let mut out = g.clone();
                for (r, norm) in norms.iter().enumerate() {
                    let dot: f64 = y.row(r).iter().zip(g.row(r)).map(|(a, b)| a * b).sum();
                    for (o, yy) in out.row_mut(r).iter_mut().zip(y.row(r)) {
                        *o = (*o - yy * dot) / norm;
                    }
                }
                send(*a, out);
            }
            Op::GroupedScores(q, k, group, scale) => {
                let (qv, kv) = (val(*q), val(*k));
                let mut dq = Tensor::zeros(qv.rows(), qv.cols());
                let mut dk = Tensor::zeros(kv.rows(), kv.cols());
                for r in 0..qv.rows() {
                    let base = r - r % group;
                    for j in 0..*group {
                        let w = scale * g.get(r, j);
                        if w == 0.0 {
                            continue;
                        }
                        for d in 0..qv.cols() {
                            dq.set(r, d, dq.get(r, d) + w * kv.get(base + j, d));
                            dk.set(base + j, d, dk.get(base + j, d) + w * qv.get(r, d));
                        }
                    }
                }
                send(*q, dq);
                send(*k, dk);
            }
            Op::GroupedMix(a, v, group) => {
                let (av, vv) = (val(*a), val(*v));
                let mut da = Tensor::zeros(av.rows(), av.cols());
                let mut dv = Tensor::zeros(vv.rows(), vv.cols());
                for r in 0..vv.rows() {
                    let base = r - r % group;
                    let gr = g.row(r);
                    for j in 0..*group {
                        let dot: f64 = gr.iter().zip(vv.row(base + j)).map(|(x, y)| x * y).sum();
                        da.set(r, j, dot);
                        let w = av.get(r, j);
                        for (o, gg) in dv.row_mut(base + j).iter_mut().zip(gr) {
                            *o += w * gg;
                        }
                    }
                }
                send(*a, da);
                send(*v, dv);
            }
        }
        Ok(())
    }
}

/// Result of a reverse sweep.
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Tensor)>,
}

impl Gradients {
    /// Gradient of the output with respect to `v`, if `v` contributed to it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    /// Adds parameter gradients into `store`. Parameters bound from other
    /// stores are ignored.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (id, g) in &self.params {
            if id.store == store.store_id() {
                store.accumulate(id.index, g);
            }
        }
    }
}
