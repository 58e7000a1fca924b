//! Eager reverse-mode differentiation over dense matrices.
//!
//! Every primitive computes its value when it is recorded and appends one
//! entry to the [`Tape`]. [`Tape::gradient`] walks the entries backwards and
//! accumulates adjoints. A `stop_gradient` entry copies its input's value
//! but never passes an adjoint upstream.

use crate::error::{Error, Result};
use crate::par::Exec;

use super::tensor::{dot, gemm, MatView, Tensor};

/// Added to each norm inside `cosine_similarity` so zero vectors are
/// well-defined.
pub const COSINE_NORM_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeRef(usize);

impl NodeRef {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Variable-length index groups stored contiguously.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Groups {
    offsets: Vec<usize>,
    items: Vec<usize>,
}

impl Groups {
    pub fn new() -> Self {
        Groups {
            offsets: vec![0],
            items: Vec::new(),
        }
    }

    pub fn from_lists<I, L>(lists: I) -> Self
    where
        I: IntoIterator<Item = L>,
        L: IntoIterator<Item = usize>,
    {
        let mut g = Groups::new();
        for l in lists {
            g.push(l);
        }
        g
    }

    pub fn push(&mut self, group: impl IntoIterator<Item = usize>) {
        self.items.extend(group);
        self.offsets.push(self.items.len());
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, k: usize) -> &[usize] {
        &self.items[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.len()).map(move |k| self.get(k))
    }

    fn max_item(&self) -> Option<usize> {
        self.items.iter().copied().max()
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    MatMul(NodeRef, NodeRef),
    Add(NodeRef, NodeRef),
    Sub(NodeRef, NodeRef),
    Scale(NodeRef, f64),
    ConcatCols(NodeRef, NodeRef),
    MeanRows(NodeRef),
    Relu(NodeRef),
    Sigmoid(NodeRef),
    LogSigmoid(NodeRef),
    Log(NodeRef),
    Exp(NodeRef),
    Dot(NodeRef, NodeRef),
    Sum(NodeRef),
    Gather(NodeRef, Vec<usize>),
    GroupMean(NodeRef, Groups),
    PairDot(NodeRef, NodeRef, Vec<(usize, usize)>),
    PairCosine(NodeRef, NodeRef, Vec<(usize, usize)>),
    GroupLogSumExp(NodeRef, Groups),
    Reshape(NodeRef),
    StopGradient(NodeRef),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "subtract",
            Op::Scale(..) => "scalar-multiply",
            Op::ConcatCols(..) => "concat-columns",
            Op::MeanRows(..) => "mean-rows",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::LogSigmoid(..) => "log-sigmoid",
            Op::Log(..) => "log",
            Op::Exp(..) => "exp",
            Op::Dot(..) => "dot",
            Op::Sum(..) => "sum",
            Op::Gather(..) => "embedding-lookup",
            Op::GroupMean(..) => "group-mean",
            Op::PairDot(..) => "pair-dot",
            Op::PairCosine(..) => "cosine_similarity",
            Op::GroupLogSumExp(..) => "logsumexp-over-set",
            Op::Reshape(..) => "reshape",
            Op::StopGradient(..) => "stop_gradient",
        }
    }

    fn inputs(&self) -> [Option<NodeRef>; 2] {
        match *self {
            Op::Leaf | Op::Constant => [None, None],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::ConcatCols(a, b)
            | Op::Dot(a, b)
            | Op::PairDot(a, b, _)
            | Op::PairCosine(a, b, _) => [Some(a), Some(b)],
            Op::Scale(a, _)
            | Op::MeanRows(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::LogSigmoid(a)
            | Op::Log(a)
            | Op::Exp(a)
            | Op::Sum(a)
            | Op::Gather(a, _)
            | Op::GroupMean(a, _)
            | Op::GroupLogSumExp(a, _)
            | Op::Reshape(a)
            | Op::StopGradient(a) => [Some(a), None],
        }
    }
}

#[derive(Debug)]
struct Entry {
    op: Op,
    value: Tensor,
    /// Set on stop-gradient entries: adjoints never cross them.
    barrier: bool,
    requires_grad: bool,
}

/// Record of one differentiable computation.
#[derive(Debug, Default)]
pub struct Tape {
    entries: Vec<Entry>,
    exec: Exec,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn log_sigmoid(x: f64) -> f64 {
    // -softplus(-x)
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::with_exec(Exec::default())
    }

    pub fn with_exec(exec: Exec) -> Self {
        Tape {
            entries: Vec::new(),
            exec,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, n: NodeRef) -> &Tensor {
        &self.entries[n.0].value
    }

    /// Scalar value of a `1x1` node.
    pub fn scalar(&self, n: NodeRef) -> Result<f64> {
        self.value(n).item()
    }

    pub fn is_barrier(&self, n: NodeRef) -> bool {
        self.entries[n.0].barrier
    }

    /// Names of the recorded primitives in order.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.op.name()).collect()
    }

    /// A differentiable input (parameter).
    pub fn leaf(&mut self, value: Tensor) -> NodeRef {
        self.entries.push(Entry {
            op: Op::Leaf,
            value,
            barrier: false,
            requires_grad: true,
        });
        NodeRef(self.entries.len() - 1)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> NodeRef {
        self.entries.push(Entry {
            op: Op::Constant,
            value,
            barrier: false,
            requires_grad: false,
        });
        NodeRef(self.entries.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<NodeRef> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite output from {} at tape position {}",
                op.name(),
                self.entries.len()
            )));
        }
        let barrier = matches!(op, Op::StopGradient(_));
        let requires_grad = !barrier
            && op
                .inputs()
                .iter()
                .flatten()
                .any(|n| self.entries[n.0].requires_grad);
        self.entries.push(Entry {
            op,
            value,
            barrier,
            requires_grad,
        });
        Ok(NodeRef(self.entries.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: NodeRef, b: NodeRef) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(Error::shape(
                "matmul",
                format!("{:?} · {:?}", va.shape(), vb.shape()),
            ));
        }
        let (m, k, n) = (va.rows(), va.cols(), vb.cols());
        let mut out = vec![0.0; m * n];
        gemm(self.exec, m, k, n, MatView::of(va), MatView::of(vb), &mut out);
        let value = Tensor::from_vec(m, n, out)?;
        self.push(Op::MatMul(a, b), value)
    }

    pub fn add(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        self.same_shape("add", a, b)?;
        let mut v = self.value(a).clone();
        v.axpy(1.0, self.value(b));
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        self.same_shape("subtract", a, b)?;
        let mut v = self.value(a).clone();
        v.axpy(-1.0, self.value(b));
        self.push(Op::Sub(a, b), v)
    }

    pub fn scale(&mut self, a: NodeRef, c: f64) -> Result<NodeRef> {
        let v = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), v)
    }

    pub fn concat_cols(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(Error::shape(
                "concat-columns",
                format!("{:?} | {:?}", va.shape(), vb.shape()),
            ));
        }
        let cols = va.cols() + vb.cols();
        let mut data = Vec::with_capacity(va.rows() * cols);
        for r in 0..va.rows() {
            data.extend_from_slice(va.row(r));
            data.extend_from_slice(vb.row(r));
        }
        let v = Tensor::from_vec(va.rows(), cols, data)?;
        self.push(Op::ConcatCols(a, b), v)
    }

    /// Column means, `1 x cols`.
    pub fn mean_rows(&mut self, a: NodeRef) -> Result<NodeRef> {
        let va = self.value(a);
        if va.rows() == 0 {
            return Err(Error::shape("mean-rows", "no rows"));
        }
        let mut v = Tensor::zeros(1, va.cols());
        for r in 0..va.rows() {
            for (o, x) in v.data_mut().iter_mut().zip(va.row(r)) {
                *o += x;
            }
        }
        let inv = 1.0 / va.rows() as f64;
        let v = v.map(|x| x * inv);
        self.push(Op::MeanRows(a), v)
    }

    pub fn relu(&mut self, a: NodeRef) -> Result<NodeRef> {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeRef) -> Result<NodeRef> {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    /// `ln σ(x)`, evaluated without forming σ(x).
    pub fn log_sigmoid(&mut self, a: NodeRef) -> Result<NodeRef> {
        let v = self.value(a).map(log_sigmoid);
        self.push(Op::LogSigmoid(a), v)
    }

    pub fn log(&mut self, a: NodeRef) -> Result<NodeRef> {
        let va = self.value(a);
        if let Some(x) = va.data().iter().find(|&&x| x <= 0.0) {
            return Err(Error::Numeric(format!("log of non-positive value {x}")));
        }
        let v = va.map(f64::ln);
        self.push(Op::Log(a), v)
    }

    pub fn exp(&mut self, a: NodeRef) -> Result<NodeRef> {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    /// Sum of the elementwise product of two equally shaped tensors.
    pub fn dot(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        self.same_shape("dot", a, b)?;
        let v = dot(self.value(a).data(), self.value(b).data());
        self.push(Op::Dot(a, b), Tensor::scalar(v))
    }

    pub fn sum(&mut self, a: NodeRef) -> Result<NodeRef> {
        let v = self.value(a).sum();
        self.push(Op::Sum(a), Tensor::scalar(v))
    }

    /// Row selection: output row `i` is row `indices[i]` of `a`.
    pub fn gather(&mut self, a: NodeRef, indices: Vec<usize>) -> Result<NodeRef> {
        let va = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= va.rows()) {
            return Err(Error::shape(
                "embedding-lookup",
                format!("row {bad} out of {}", va.rows()),
            ));
        }
        let cols = va.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in &indices {
            data.extend_from_slice(va.row(i));
        }
        let v = Tensor::from_vec(indices.len(), cols, data)?;
        self.push(Op::Gather(a, indices), v)
    }

    /// Embedding lookup is row selection on the table.
    pub fn embedding_lookup(&mut self, table: NodeRef, ids: Vec<usize>) -> Result<NodeRef> {
        self.gather(table, ids)
    }

    /// Output row `k` is the mean of the rows of `a` listed in group `k`;
    /// an empty group yields the zero row.
    pub fn group_mean(&mut self, a: NodeRef, groups: Groups) -> Result<NodeRef> {
        let va = self.value(a);
        if groups.max_item().is_some_and(|m| m >= va.rows()) {
            return Err(Error::shape("group-mean", "group index out of range"));
        }
        let cols = va.cols();
        let mut v = Tensor::zeros(groups.len(), cols);
        for (k, g) in groups.iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            let out = v.row_mut(k);
            for &i in g {
                for (o, x) in out.iter_mut().zip(va.row(i)) {
                    *o += x;
                }
            }
            let inv = 1.0 / g.len() as f64;
            out.iter_mut().for_each(|o| *o *= inv);
        }
        self.push(Op::GroupMean(a, groups), v)
    }

    fn check_pairs(&self, op: &'static str, a: NodeRef, b: NodeRef, pairs: &[(usize, usize)]) -> Result<()> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(Error::shape(op, format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        if pairs.iter().any(|&(i, j)| i >= va.rows() || j >= vb.rows()) {
            return Err(Error::shape(op, "pair index out of range"));
        }
        Ok(())
    }

    /// Column of dot products `a[i]·b[j]` for each pair `(i, j)`.
    pub fn pair_dot(&mut self, a: NodeRef, b: NodeRef, pairs: Vec<(usize, usize)>) -> Result<NodeRef> {
        self.check_pairs("pair-dot", a, b, &pairs)?;
        let (va, vb) = (self.value(a), self.value(b));
        let v: Vec<f64> = pairs.iter().map(|&(i, j)| dot(va.row(i), vb.row(j))).collect();
        self.push(Op::PairDot(a, b, pairs), Tensor::column(v))
    }

    /// Column of cosine similarities between rows `a[i]` and `b[j]`.
    pub fn pair_cosine(&mut self, a: NodeRef, b: NodeRef, pairs: Vec<(usize, usize)>) -> Result<NodeRef> {
        self.check_pairs("cosine_similarity", a, b, &pairs)?;
        let (va, vb) = (self.value(a), self.value(b));
        let v: Vec<f64> = pairs
            .iter()
            .map(|&(i, j)| cosine(va.row(i), vb.row(j)))
            .collect();
        self.push(Op::PairCosine(a, b, pairs), Tensor::column(v))
    }

    /// Cosine similarity of two equally shaped tensors, each treated as one
    /// flattened vector, as a `1x1` node.
    pub fn cosine_similarity(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef> {
        self.same_shape("cosine_similarity", a, b)?;
        let n = self.value(a).data().len();
        let ra = self.reshape(a, 1, n)?;
        let rb = self.reshape(b, 1, n)?;
        self.pair_cosine(ra, rb, vec![(0, 0)])
    }

    /// Same data, new shape.
    pub fn reshape(&mut self, a: NodeRef, rows: usize, cols: usize) -> Result<NodeRef> {
        let va = self.value(a);
        if va.shape() == (rows, cols) {
            return Ok(a);
        }
        let v = Tensor::from_vec(rows, cols, va.data().to_vec())?;
        self.push(Op::Reshape(a), v)
    }

    /// `ln Σ exp(x_i)` over each group of entries of the column `a`.
    pub fn group_logsumexp(&mut self, a: NodeRef, groups: Groups) -> Result<NodeRef> {
        let va = self.value(a);
        if va.cols() != 1 {
            return Err(Error::shape("logsumexp-over-set", "input must be a column"));
        }
        if groups.max_item().is_some_and(|m| m >= va.rows()) {
            return Err(Error::shape("logsumexp-over-set", "group index out of range"));
        }
        if groups.iter().any(<[usize]>::is_empty) {
            return Err(Error::shape("logsumexp-over-set", "empty set"));
        }
        let x = va.data();
        let v: Vec<f64> = groups.iter().map(|g| logsumexp(g.iter().map(|&i| x[i]))).collect();
        self.push(Op::GroupLogSumExp(a, groups), Tensor::column(v))
    }

    /// `ln Σ exp(x_i)` over all entries of `a`, as a `1x1` node.
    pub fn logsumexp(&mut self, a: NodeRef) -> Result<NodeRef> {
        let n = self.value(a).data().len();
        let col = self.reshape(a, n, 1)?;
        self.group_logsumexp(col, Groups::from_lists(std::iter::once(0..n)))
    }

    /// Identity on values; blocks every adjoint flowing back through it.
    pub fn stop_gradient(&mut self, a: NodeRef) -> Result<NodeRef> {
        let v = self.value(a).clone();
        self.push(Op::StopGradient(a), v)
    }

    /// Reverse accumulation from the scalar `output`. Returns one tensor per
    /// entry of `params`, shaped like that node's value; nodes with no path
    /// to `output` receive zeros.
    pub fn gradient(&self, output: NodeRef, params: &[NodeRef]) -> Result<Vec<Tensor>> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(Error::shape(
                "gradient",
                format!("output must be scalar, got {:?}", out.shape()),
            ));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Tensor::scalar(1.0));

        for i in (0..=output.0).rev() {
            let e = &self.entries[i];
            if !e.requires_grad || matches!(e.op, Op::Leaf) {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.backward_entry(e, &g, &mut adj)?;
        }

        Ok(params
            .iter()
            .map(|p| {
                adj.get(p.0)
                    .and_then(Option::clone)
                    .unwrap_or_else(|| {
                        let (r, c) = self.value(*p).shape();
                        Tensor::zeros(r, c)
                    })
            })
            .collect())
    }

    fn wants(&self, n: NodeRef) -> bool {
        self.entries[n.0].requires_grad
    }

    fn backward_entry(&self, e: &Entry, g: &Tensor, adj: &mut [Option<Tensor>]) -> Result<()> {
        let acc = |adj: &mut [Option<Tensor>], n: NodeRef, contrib: Tensor| match &mut adj[n.0] {
            Some(t) => t.axpy(1.0, &contrib),
            slot @ None => *slot = Some(contrib),
        };
        let zeros_like = |n: NodeRef| {
            let (r, c) = self.value(n).shape();
            Tensor::zeros(r, c)
        };
        match &e.op {
            Op::Leaf | Op::Constant | Op::StopGradient(_) => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if self.wants(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(self.exec, m, n, k, MatView::of(g), MatView::transposed(vb), &mut da);
                    acc(adj, *a, Tensor::from_vec(m, k, da)?);
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(self.exec, k, m, n, MatView::transposed(va), MatView::of(g), &mut db);
                    acc(adj, *b, Tensor::from_vec(k, n, db)?);
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    acc(adj, *a, g.clone());
                }
                if self.wants(*b) {
                    acc(adj, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    acc(adj, *a, g.clone());
                }
                if self.wants(*b) {
                    acc(adj, *b, g.map(|x| -x));
                }
            }
            Op::Scale(a, c) => {
                if self.wants(*a) {
                    acc(adj, *a, g.map(|x| c * x));
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                if self.wants(*a) {
                    let mut t = zeros_like(*a);
                    for r in 0..g.rows() {
                        t.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    }
                    acc(adj, *a, t);
                }
                if self.wants(*b) {
                    let mut t = zeros_like(*b);
                    for r in 0..g.rows() {
                        t.row_mut(r).copy_from_slice(&g.row(r)[ca..ca + cb]);
                    }
                    acc(adj, *b, t);
                }
            }
            Op::MeanRows(a) => {
                if self.wants(*a) {
                    let mut t = zeros_like(*a);
                    let inv = 1.0 / t.rows() as f64;
                    for r in 0..t.rows() {
                        for (o, x) in t.row_mut(r).iter_mut().zip(g.row(0)) {
                            *o = x * inv;
                        }
                    }
                    acc(adj, *a, t);
                }
            }
            Op::Relu(a) => {
                // Derivative at exactly 0 is 0.
                let va = self.value(*a);
                let mut t = g.clone();
                for (o, x) in t.data_mut().iter_mut().zip(va.data()) {
                    if *x <= 0.0 {
                        *o = 0.0;
                    }
                }
                acc(adj, *a, t);
            }
            Op::Sigmoid(a) => {
                let mut t = g.clone();
                for (o, y) in t.data_mut().iter_mut().zip(e.value.data()) {
                    *o *= y * (1.0 - y);
                }
                acc(adj, *a, t);
            }
            Op::LogSigmoid(a) => {
                let va = self.value(*a);
                let mut t = g.clone();
                for (o, x) in t.data_mut().iter_mut().zip(va.data()) {
                    *o *= sigmoid(-x);
                }
                acc(adj, *a, t);
            }
            Op::Log(a) => {
                let va = self.value(*a);
                let mut t = g.clone();
                for (o, x) in t.data_mut().iter_mut().zip(va.data()) {
                    *o /= x;
                }
                acc(adj, *a, t);
            }
            Op::Exp(a) => {
                let mut t = g.clone();
                for (o, y) in t.data_mut().iter_mut().zip(e.value.data()) {
                    *o *= y;
                }
                acc(adj, *a, t);
            }
            Op::Dot(a, b) => {
                let s = g.data()[0];
                if self.wants(*a) {
                    acc(adj, *a, self.value(*b).map(|x| s * x));
                }
                if self.wants(*b) {
                    acc(adj, *b, self.value(*a).map(|x| s * x));
                }
            }
            Op::Reshape(a) => {
                let (r, c) = self.value(*a).shape();
                acc(adj, *a, Tensor::from_vec(r, c, g.data().to_vec())?);
            }
            Op::Sum(a) => {
                let s = g.data()[0];
                acc(adj, *a, self.value(*a).map(|_| s));
            }
            Op::Gather(a, idx) => {
                let mut t = zeros_like(*a);
                for (k, &i) in idx.iter().enumerate() {
                    for (o, x) in t.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
                acc(adj, *a, t);
            }
            Op::GroupMean(a, groups) => {
                let mut t = zeros_like(*a);
                for (k, grp) in groups.iter().enumerate() {
                    if grp.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / grp.len() as f64;
                    for &i in grp {
                        for (o, x) in t.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += x * inv;
                        }
                    }
                }
                acc(adj, *a, t);
            }
            Op::PairDot(a, b, pairs) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (wa, wb) = (self.wants(*a), self.wants(*b));
                let mut ta = if wa { Some(zeros_like(*a)) } else { None };
                let mut tb = if wb { Some(zeros_like(*b)) } else { None };
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    let s = g.data()[p];
                    if let Some(ta) = ta.as_mut() {
                        for (o, x) in ta.row_mut(i).iter_mut().zip(vb.row(j)) {
                            *o += s * x;
                        }
                    }
                    if let Some(tb) = tb.as_mut() {
                        for (o, x) in tb.row_mut(j).iter_mut().zip(va.row(i)) {
                            *o += s * x;
                        }
                    }
                }
                if let Some(ta) = ta {
                    acc(adj, *a, ta);
                }
                if let Some(tb) = tb {
                    acc(adj, *b, tb);
                }
            }
            Op::PairCosine(a, b, pairs) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (wa, wb) = (self.wants(*a), self.wants(*b));
                let mut ta = if wa { Some(zeros_like(*a)) } else { None };
                let mut tb = if wb { Some(zeros_like(*b)) } else { None };
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    let s = g.data()[p];
                    let (x, y) = (va.row(i), vb.row(j));
                    if let Some(ta) = ta.as_mut() {
                        cosine_grad_into(x, y, s, ta.row_mut(i));
                    }
                    if let Some(tb) = tb.as_mut() {
                        cosine_grad_into(y, x, s, tb.row_mut(j));
                    }
                }
                if let Some(ta) = ta {
                    acc(adj, *a, ta);
                }
                if let Some(tb) = tb {
                    acc(adj, *b, tb);
                }
            }
            Op::GroupLogSumExp(a, groups) => {
                let x = self.value(*a).data();
                let mut t = zeros_like(*a);
                for (k, grp) in groups.iter().enumerate() {
                    let lse = e.value.data()[k];
                    let s = g.data()[k];
                    for &i in grp {
                        t.data_mut()[i] += s * (x[i] - lse).exp();
                    }
                }
                acc(adj, *a, t);
            }
        }
        Ok(())
    }
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Cosine similarity with [`COSINE_NORM_EPS`] added to each norm.
pub fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let nx = dot(x, x).sqrt();
    let ny = dot(y, y).sqrt();
    dot(x, y) / ((nx + COSINE_NORM_EPS) * (ny + COSINE_NORM_EPS))
}

/// Adds `s · ∂cos(x, y)/∂x` into `out`.
fn cosine_grad_into(x: &[f64], y: &[f64], s: f64, out: &mut [f64]) {
    let nx = dot(x, x).sqrt();
    let ny = dot(y, y).sqrt();
    let denom = (nx + COSINE_NORM_EPS) * (ny + COSINE_NORM_EPS);
    let c = dot(x, y) / denom;
    // ∂/∂x [x·y / ((|x|+ε)(|y|+ε))] = y/D − c · x / (|x| (|x|+ε))
    let radial = if nx > 0.0 {
        c / (nx * (nx + COSINE_NORM_EPS))
    } else {
        0.0
    };
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o += s * (yi / denom - radial * xi);
    }
}
