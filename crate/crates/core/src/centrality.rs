//! Katz centrality of each domain's bipartite graph, the precomputed
//! difficulty signal for negative samples.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::graphstore::{parse_node_label, Domain, DomainGraph, NodeId, NodeKind};
use crate::par::Exec;
use crate::seeding::fmt_sig9;

pub const CENTRALITY_HEADER: &str = "node\tscore";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KatzConfig {
    /// Attenuation; must stay below `1 / λ_max(A)`.
    pub alpha: f64,
    /// Initial centrality added to every node.
    pub beta: f64,
    /// Convergence threshold on the L1 norm of the iterate change.
    pub tol: f64,
    pub max_iter: usize,
    /// L2-normalize the converged vector.
    pub normalize: bool,
}

impl Default for KatzConfig {
    fn default() -> Self {
        KatzConfig {
            alpha: 0.1,
            beta: 1.0,
            tol: 1e-6,
            max_iter: 1000,
            normalize: true,
        }
    }
}

impl KatzConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.tol > 0.0) || self.max_iter == 0 || !self.beta.is_finite() {
            return Err(Error::Config(format!("invalid Katz parameters {self:?}")));
        }
        Ok(())
    }
}

/// Per-node scores of one domain, indexed by flat node index.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralityTable {
    pub domain: Domain,
    pub users: usize,
    pub scores: Vec<f64>,
    /// Attenuation actually used (differs from the configured one only
    /// after a fallback, see [`katz_with_fallback`]).
    pub alpha: f64,
}

impl CentralityTable {
    pub fn score(&self, node: NodeId) -> f64 {
        match node.kind {
            NodeKind::User => self.scores[node.index],
            NodeKind::Item => self.scores[self.users + node.index],
        }
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::from(CENTRALITY_HEADER);
        out.push('\n');
        for (f, s) in self.scores.iter().enumerate() {
            let label = if f < self.users {
                format!("u:{f}")
            } else {
                format!("i:{}", f - self.users)
            };
            let _ = writeln!(out, "{label}\t{}", fmt_sig9(*s));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: &Path, g: &DomainGraph) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(CENTRALITY_HEADER) {
            return Err(Error::parse(path, 1, "missing centrality header"));
        }
        let mut scores = vec![f64::NAN; g.num_nodes()];
        for (n, line) in lines.enumerate() {
            let bad = |m: &str| Error::parse(path, n + 2, m.to_string());
            let (label, score) = line.split_once('\t').ok_or_else(|| bad("expected node\\tscore"))?;
            let (kind, idx) = parse_node_label(label).ok_or_else(|| bad("bad node label"))?;
            let node = NodeId { domain: g.domain(), kind, index: idx };
            if !g.contains(node) {
                return Err(bad("node out of range"));
            }
            scores[g.flat(node)] = score.parse().map_err(|_| bad("bad score"))?;
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Data(format!("{}: missing nodes", path.display())));
        }
        Ok(CentralityTable {
            domain: g.domain(),
            users: g.users(),
            scores,
            alpha: f64::NAN,
        })
    }
}

/// Solves `x = α·A·x + β·1` by power iteration from `x = 0`.
pub fn katz_centrality(g: &DomainGraph, cfg: &KatzConfig) -> Result<CentralityTable> {
    katz_centrality_with(g, cfg, Exec::default())
}

pub fn katz_centrality_with(g: &DomainGraph, cfg: &KatzConfig, exec: Exec) -> Result<CentralityTable> {
    cfg.validate()?;
    let n = g.num_nodes();
    if n == 0 {
        return Err(Error::Data(format!("{} graph is empty", g.domain())));
    }
    let mut x = vec![0.0; n];
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let next = exec.map(n, |i| {
            let s: f64 = g.neighbors_flat(i).iter().map(|&j| x[j as usize]).sum();
            cfg.alpha * s + cfg.beta
        });
        let delta: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if !delta.is_finite() {
            break;
        }
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "Katz iteration on the {} graph did not converge in {} iterations (alpha {} too large for its spectral radius)",
            g.domain(),
            cfg.max_iter,
            cfg.alpha
        )));
    }
    if cfg.normalize {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            x.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(CentralityTable {
        domain: g.domain(),
        users: g.users(),
        scores: x,
        alpha: cfg.alpha,
    })
}

/// Largest adjacency eigenvalue, by power iteration on `A²` (the spectrum
/// of a bipartite graph is symmetric, so `A` alone oscillates).
pub fn spectral_radius(g: &DomainGraph, iters: usize) -> f64 {
    let n = g.num_nodes();
    if g.edge_count() == 0 {
        return 0.0;
    }
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| g.neighbors_flat(i).iter().map(|&j| v[j as usize]).sum())
            .collect()
    };
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (g.degree_flat(i) as f64).sqrt()).collect();
    let mut lambda_sq = 0.0;
    for _ in 0..iters {
        let w = apply(&apply(&v));
        let norm_v = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let norm_w = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm_w == 0.0 {
            return 0.0;
        }
        lambda_sq = norm_w / norm_v;
        v = w.into_iter().map(|a| a / norm_w).collect();
    }
    lambda_sq.sqrt()
}

/// [`katz_centrality`], but when the configured attenuation diverges the
/// attenuation is lowered to `0.9 / λ_max` and the table records the value
/// used. Ordering by centrality is what the curriculum consumes, and an
/// attenuation above `1 / λ_max` leaves the series undefined.
pub fn katz_with_fallback(g: &DomainGraph, cfg: &KatzConfig) -> Result<CentralityTable> {
    match katz_centrality(g, cfg) {
        Ok(t) => Ok(t),
        Err(Error::Numeric(msg)) => {
            let lambda = spectral_radius(g, 200);
            let mut alpha = 0.9 / lambda.max(f64::MIN_POSITIVE);
            for _ in 0..8 {
                let retry = KatzConfig { alpha, ..*cfg };
                match katz_centrality(g, &retry) {
                    Ok(t) => {
                        warn!(
                            "{msg}; using alpha {alpha:.6} (spectral radius ~{lambda:.3}) for the {} graph",
                            g.domain()
                        );
                        return Ok(t);
                    }
                    Err(Error::Numeric(_)) => alpha *= 0.5,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Numeric(msg))
        }
        Err(e) => Err(e),
    }
}
