//! Per-domain ID embeddings and the two-layer mean-aggregation graph
//! encoder whose final representation concatenates both layer outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};

use crate::diffmath::{Groups, NodeRef, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graphstore::{parse_node_label, sample_neighbors_flat, Domain, DomainGraph, NodeKind, SamplerConfig};
use crate::par::Exec;
use crate::seeding::{fmt_sig9, rng_for};

pub const EMB_MAGIC: &str = "SCCDR-EMB v1";
pub const WEIGHT_MAGIC: &str = "SCCDR-W v1";

const INIT_TAG: u64 = 0xE1;

/// Layer widths. The encoder output has `d1 + d2` columns, plus `d0` when
/// the input layer joins the concatenation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderDims {
    pub d0: usize,
    pub d1: usize,
    pub d2: usize,
    pub jk_include_input: bool,
}

impl Default for EncoderDims {
    fn default() -> Self {
        EncoderDims {
            d0: 64,
            d1: 64,
            d2: 64,
            jk_include_input: false,
        }
    }
}

impl EncoderDims {
    pub fn with_width(d: usize) -> Self {
        EncoderDims {
            d0: d,
            d1: d,
            d2: d,
            jk_include_input: false,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.d1 + self.d2 + if self.jk_include_input { self.d0 } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d0 == 0 || self.d1 == 0 || self.d2 == 0 {
            return Err(Error::Config(format!("encoder widths must be positive, got {self:?}")));
        }
        Ok(())
    }
}

/// Trainable state of one domain's encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub domain: Domain,
    pub users: usize,
    pub dims: EncoderDims,
    /// One row per flat node (users, then items).
    pub embeddings: Tensor,
    pub w1: Tensor,
    pub w2: Tensor,
}

fn uniform_tensor(rows: usize, cols: usize, bound: f64, rng: &mut impl rand::Rng) -> Tensor {
    let dist = Uniform::new_inclusive(-bound, bound);
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::from_vec(rows, cols, data).expect("length matches shape")
}

/// Embeddings ~ U(±1/√d0); weights ~ U(±√(6/(fan_in+fan_out))).
pub fn init_params(domain: Domain, users: usize, items: usize, dims: EncoderDims, seed: u64) -> Result<EncoderParams> {
    dims.validate()?;
    let mut rng = rng_for(&[seed, INIT_TAG, domain as u64]);
    let embeddings = uniform_tensor(users + items, dims.d0, 1.0 / (dims.d0 as f64).sqrt(), &mut rng);
    let glorot = |a: usize, b: usize| (6.0 / (a + b) as f64).sqrt();
    let w1 = uniform_tensor(dims.d0, dims.d1, glorot(dims.d0, dims.d1), &mut rng);
    let w2 = uniform_tensor(dims.d1, dims.d2, glorot(dims.d1, dims.d2), &mut rng);
    Ok(EncoderParams {
        domain,
        users,
        dims,
        embeddings,
        w1,
        w2,
    })
}

impl EncoderParams {
    pub fn for_graph(g: &DomainGraph, dims: EncoderDims, seed: u64) -> Result<Self> {
        init_params(g.domain(), g.users(), g.items(), dims, seed)
    }

    pub fn num_nodes(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn tensors(&self) -> [&Tensor; 3] {
        [&self.embeddings, &self.w1, &self.w2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 3] {
        [&mut self.embeddings, &mut self.w1, &mut self.w2]
    }

    /// Puts the parameters on `tape` as differentiable leaves.
    pub fn record(&self, tape: &mut Tape) -> EncoderLeaves {
        EncoderLeaves {
            embeddings: tape.leaf(self.embeddings.clone()),
            w1: tape.leaf(self.w1.clone()),
            w2: tape.leaf(self.w2.clone()),
            dims: self.dims,
        }
    }

    /// Puts the parameters on `tape` as constants (inference only).
    pub fn record_frozen(&self, tape: &mut Tape) -> EncoderLeaves {
        EncoderLeaves {
            embeddings: tape.constant(self.embeddings.clone()),
            w1: tape.constant(self.w1.clone()),
            w2: tape.constant(self.w2.clone()),
            dims: self.dims,
        }
    }

    fn label(&self, flat: usize) -> String {
        if flat < self.users {
            format!("u:{flat}")
        } else {
            format!("i:{}", flat - self.users)
        }
    }

    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        let dim = self.embeddings.cols();
        let _ = writeln!(out, "{EMB_MAGIC} {} {} {dim}", self.domain, self.num_nodes());
        for f in 0..self.num_nodes() {
            out.push_str(&self.label(f));
            for v in self.embeddings.row(f) {
                out.push(' ');
                out.push_str(&fmt_sig9(*v));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "{WEIGHT_MAGIC} 2");
        for (name, w) in [("W1", &self.w1), ("W2", &self.w2)] {
            let _ = writeln!(out, "{name} {} {}", w.rows(), w.cols());
            for r in 0..w.rows() {
                let row: Vec<String> = w.row(r).iter().map(|v| fmt_sig9(*v)).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    /// Reads a checkpoint and checks it against the expected domain graph
    /// and widths.
    pub fn load(path: &Path, g: &DomainGraph, dims: EncoderDims) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p = parse_checkpoint(&text).map_err(|msg| Error::Checkpoint {
            path: path.to_path_buf(),
            msg,
        })?;
        let fail = |msg: String| Error::Checkpoint {
            path: path.to_path_buf(),
            msg,
        };
        if p.domain != g.domain() {
            return Err(fail(format!("expected domain {}, found {}", g.domain(), p.domain)));
        }
        if p.num_nodes() != g.num_nodes() || p.users != g.users() {
            return Err(fail(format!(
                "expected {} nodes ({} users), found {} ({} users)",
                g.num_nodes(),
                g.users(),
                p.num_nodes(),
                p.users
            )));
        }
        let found = (p.embeddings.cols(), p.w1.cols(), p.w2.cols());
        if found != (dims.d0, dims.d1, dims.d2) {
            return Err(fail(format!(
                "expected dims {:?}, found {found:?}",
                (dims.d0, dims.d1, dims.d2)
            )));
        }
        Ok(EncoderParams { dims, ..p })
    }
}

fn parse_floats(fields: &[&str], want: usize, line: usize) -> std::result::Result<Vec<f64>, String> {
    if fields.len() != want {
        return Err(format!("line {line}: expected {want} values, found {}", fields.len()));
    }
    fields
        .iter()
        .map(|s| s.parse::<f64>().map_err(|_| format!("line {line}: bad number {s:?}")))
        .collect()
}

fn parse_checkpoint(text: &str) -> std::result::Result<EncoderParams, String> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or("empty file")?;
    let rest = header
        .strip_prefix(EMB_MAGIC)
        .ok_or_else(|| format!("unsupported header {header:?}, expected {EMB_MAGIC:?}"))?;
    let h: Vec<&str> = rest.split_whitespace().collect();
    if h.len() != 3 {
        return Err(format!("malformed header {header:?}"));
    }
    let domain = Domain::parse(h[0]).ok_or_else(|| format!("unknown domain {:?}", h[0]))?;
    let n: usize = h[1].parse().map_err(|_| "bad node count".to_string())?;
    let dim: usize = h[2].parse().map_err(|_| "bad dimension".to_string())?;
    let mut emb = Vec::with_capacity(n * dim);
    let mut users = 0;
    for k in 0..n {
        let (ln, line) = lines.next().ok_or_else(|| format!("truncated: {k} of {n} node rows"))?;
        let fields: Vec<&str> = line.split(' ').collect();
        let (kind, idx) = parse_node_label(fields[0]).ok_or_else(|| format!("line {ln}: bad node label"))?;
        let expect = if kind == NodeKind::User { k } else { k - users };
        if idx != expect || (kind == NodeKind::User && users != k) {
            return Err(format!("line {ln}: nodes out of order"));
        }
        if kind == NodeKind::User {
            users += 1;
        }
        emb.extend(parse_floats(&fields[1..], dim, ln)?);
    }
    let (ln, wh) = lines.next().ok_or("truncated: missing weight section")?;
    if wh != format!("{WEIGHT_MAGIC} 2") {
        return Err(format!("line {ln}: expected {WEIGHT_MAGIC:?} section"));
    }
    let mut weights = Vec::new();
    for name in ["W1", "W2"] {
        let (ln, mh) = lines.next().ok_or_else(|| format!("truncated: missing {name}"))?;
        let f: Vec<&str> = mh.split(' ').collect();
        if f.len() != 3 || f[0] != name {
            return Err(format!("line {ln}: expected {name} header"));
        }
        let r: usize = f[1].parse().map_err(|_| format!("line {ln}: bad rows"))?;
        let c: usize = f[2].parse().map_err(|_| format!("line {ln}: bad cols"))?;
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r {
            let (ln, row) = lines.next().ok_or_else(|| format!("truncated: {name} rows"))?;
            data.extend(parse_floats(&row.split(' ').collect::<Vec<_>>(), c, ln)?);
        }
        weights.push(Tensor::from_vec(r, c, data).map_err(|e| e.to_string())?);
    }
    if let Some((ln, _)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(format!("line {ln}: trailing content"));
    }
    let w2 = weights.pop().expect("two matrices");
    let w1 = weights.pop().expect("two matrices");
    if w1.rows() != dim || w2.rows() != w1.cols() {
        return Err(format!(
            "weight shapes {:?}, {:?} do not chain from width {dim}",
            w1.shape(),
            w2.shape()
        ));
    }
    let dims = EncoderDims {
        d0: dim,
        d1: w1.cols(),
        d2: w2.cols(),
        jk_include_input: false,
    };
    Ok(EncoderParams {
        domain,
        users,
        dims,
        embeddings: Tensor::from_vec(n, dim, emb).map_err(|e| e.to_string())?,
        w1,
        w2,
    })
}

/// Tape handles of one encoder's parameters.
#[derive(Debug, Clone, Copy)]
pub struct EncoderLeaves {
    pub embeddings: NodeRef,
    pub w1: NodeRef,
    pub w2: NodeRef,
    pub dims: EncoderDims,
}

impl EncoderLeaves {
    pub fn refs(&self) -> [NodeRef; 3] {
        [self.embeddings, self.w1, self.w2]
    }
}

/// Anchors plus the neighborhoods the two layers aggregate over, with the
/// node sets each layer has to materialize.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBatch {
    /// Flat node indices to encode, unique.
    pub anchors: Vec<usize>,
    /// Nodes whose first-layer output is needed; anchors come first.
    pub nodes1: Vec<usize>,
    /// Nodes whose input embedding is needed; `nodes1` comes first.
    pub nodes0: Vec<usize>,
    /// Per `nodes1` entry: positions in `nodes0` of its layer-1 neighbors.
    pub groups1: Groups,
    /// Per anchor: positions in `nodes1` of its layer-2 neighbors.
    pub groups2: Groups,
}

struct Positions {
    slot: Vec<u32>,
    order: Vec<usize>,
}

impl Positions {
    fn new(n: usize) -> Self {
        Positions {
            slot: vec![u32::MAX; n],
            order: Vec::new(),
        }
    }

    fn insert(&mut self, f: usize) -> usize {
        if self.slot[f] == u32::MAX {
            self.slot[f] = self.order.len() as u32;
            self.order.push(f);
        }
        self.slot[f] as usize
    }
}

impl NodeBatch {
    fn build(g: &DomainGraph, anchors: &[usize], mut neighbors: impl FnMut(usize, u64) -> Vec<u32>) -> Result<Self> {
        let n = g.num_nodes();
        let mut p1 = Positions::new(n);
        for &a in anchors {
            if a >= n {
                return Err(Error::shape("encode", format!("node {a} out of {n}")));
            }
            if p1.slot[a] != u32::MAX {
                return Err(Error::shape("encode", format!("duplicate anchor {a}")));
            }
            p1.insert(a);
        }
        let lists2: Vec<Vec<u32>> = anchors.iter().map(|&a| neighbors(a, 2)).collect();
        let mut groups2 = Groups::new();
        for l in &lists2 {
            groups2.push(l.iter().map(|&j| p1.insert(j as usize)).collect::<Vec<_>>());
        }
        let nodes1 = p1.order;
        let mut p0 = Positions::new(n);
        for &f in &nodes1 {
            p0.insert(f);
        }
        let mut groups1 = Groups::new();
        for &f in &nodes1 {
            let l = neighbors(f, 1);
            groups1.push(l.iter().map(|&j| p0.insert(j as usize)).collect::<Vec<_>>());
        }
        Ok(NodeBatch {
            anchors: anchors.to_vec(),
            nodes1,
            nodes0: p0.order,
            groups1,
            groups2,
        })
    }

    /// Neighborhoods drawn by the seeded sampler for this epoch.
    pub fn sampled(g: &DomainGraph, anchors: &[usize], cfg: &SamplerConfig, epoch: u64) -> Result<Self> {
        Self::build(g, anchors, |f, layer| sample_neighbors_flat(g, f, cfg, epoch, layer))
    }

    /// Complete neighborhoods (inference).
    pub fn full(g: &DomainGraph, anchors: &[usize]) -> Result<Self> {
        Self::build(g, anchors, |f, _| g.neighbors_flat(f).to_vec())
    }
}

/// Records the forward pass; returns a `|anchors| x output_dim` node.
pub fn encode(leaves: &EncoderLeaves, batch: &NodeBatch, tape: &mut Tape) -> Result<NodeRef> {
    let h0 = tape.embedding_lookup(leaves.embeddings, batch.nodes0.clone())?;
    let m1 = tape.group_mean(h0, batch.groups1.clone())?;
    let s1 = tape.gather(h0, (0..batch.nodes1.len()).collect())?;
    let a1 = tape.add(m1, s1)?;
    let z1 = tape.matmul(a1, leaves.w1)?;
    let h1 = tape.relu(z1)?;
    let m2 = tape.group_mean(h1, batch.groups2.clone())?;
    let s2 = tape.gather(h1, (0..batch.anchors.len()).collect())?;
    let a2 = tape.add(m2, s2)?;
    let z2 = tape.matmul(a2, leaves.w2)?;
    let h2 = tape.relu(z2)?;
    let out = tape.concat_cols(s2, h2)?;
    if leaves.dims.jk_include_input {
        let own = tape.gather(h0, (0..batch.anchors.len()).collect())?;
        return tape.concat_cols(own, out);
    }
    Ok(out)
}

/// Final representations of every node of `g` from full neighborhoods.
pub fn embed_all(params: &EncoderParams, g: &DomainGraph, exec: Exec) -> Result<Tensor> {
    let all: Vec<usize> = (0..g.num_nodes()).collect();
    let batch = NodeBatch::full(g, &all)?;
    let mut tape = Tape::with_exec(exec);
    let leaves = params.record_frozen(&mut tape);
    let out = encode(&leaves, &batch, &mut tape)?;
    Ok(tape.value(out).clone())
}
