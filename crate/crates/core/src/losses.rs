//! Contrastive objectives: link-prediction BCE within a domain, and
//! InfoNCE across domains for aligned users and for their target-side
//! neighbors.

use rand::seq::index;
use rand::Rng;

use crate::diffmath::{Groups, NodeRef, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graphstore::DomainGraph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub tau: f64,
    pub n_pos_intra: usize,
    pub n_neg_intra: usize,
    /// Negative pool size per aligned user.
    pub n_neg_inter: usize,
    pub lambda_intra: f64,
    pub lambda_inter: f64,
    /// Leave the positive out of the InfoNCE denominator.
    pub denominator_negatives_only: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: 0.5,
            n_pos_intra: 5,
            n_neg_intra: 5,
            n_neg_inter: 20,
            lambda_intra: 1.0,
            lambda_inter: 0.5,
            denominator_negatives_only: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.n_pos_intra == 0 || self.n_neg_intra == 0 {
            return Err(Error::Config("intra positive/negative counts must be at least 1".into()));
        }
        if self.n_neg_inter < 2 || !self.n_neg_inter.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "n_neg_inter must be even and at least 2, got {}",
                self.n_neg_inter
            )));
        }
        for (k, v) in [("lambda_intra", self.lambda_intra), ("lambda_inter", self.lambda_inter)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{k} must be a non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

/// A scalar loss node plus the number of terms it averages over, so batch
/// values can be merged into epoch means.
#[derive(Debug, Clone, Copy)]
pub struct LossTerm {
    pub node: NodeRef,
    pub count: usize,
}

/// One anchor's link-prediction sample; indices are rows of the embedding
/// node passed to [`intra_bce_loss`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntraSample {
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Mean over every (anchor, positive, negative) triple of
/// `-[ln σ(z_a·z_p) + ln(1 - σ(z_a·z_n))]`. Anchors without positives or
/// negatives contribute nothing; with no triples at all the result is `None`.
pub fn intra_bce_loss(tape: &mut Tape, z: NodeRef, samples: &[IntraSample]) -> Result<Option<LossTerm>> {
    let triples: usize = samples.iter().map(|s| s.positives.len() * s.negatives.len()).sum();
    if triples == 0 {
        return Ok(None);
    }
    let total = triples as f64;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    let (mut wp, mut wn) = (Vec::new(), Vec::new());
    for s in samples {
        let (p, n) = (s.positives.len(), s.negatives.len());
        if p == 0 || n == 0 {
            continue;
        }
        for &j in &s.positives {
            pos.push((s.anchor, j));
            wp.push(n as f64 / total);
        }
        for &k in &s.negatives {
            neg.push((s.anchor, k));
            wn.push(p as f64 / total);
        }
    }
    let sp = tape.pair_dot(z, z, pos)?;
    let lp = tape.log_sigmoid(sp)?;
    let sn = tape.pair_dot(z, z, neg)?;
    let flipped = tape.scale(sn, -1.0)?;
    let ln = tape.log_sigmoid(flipped)?;
    let cp = tape.constant(Tensor::column(wp));
    let cn = tape.constant(Tensor::column(wn));
    let a = tape.dot(lp, cp)?;
    let b = tape.dot(ln, cn)?;
    let s = tape.add(a, b)?;
    let node = tape.scale(s, -1.0)?;
    Ok(Some(LossTerm { node, count: triples }))
}

/// One aligned user's rows: `source` indexes the source-side embedding
/// node, the rest index the target-side node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterAnchor {
    pub source: usize,
    pub target_self: usize,
    /// Target-domain neighbors of the user (positives of the neighbor loss).
    pub neighbors: Vec<usize>,
    /// Negative pool, easiest first.
    pub pool: Vec<usize>,
}

/// Shared logits for both cross-domain losses: per anchor the self pair,
/// then the active negatives, then each neighbor.
struct InterLogits {
    logits: NodeRef,
    self_pos: Vec<usize>,
    neg_start: Vec<usize>,
    nbr_start: Vec<usize>,
}

fn inter_logits(
    tape: &mut Tape,
    zs: NodeRef,
    zt: NodeRef,
    anchors: &[InterAnchor],
    k_active: usize,
    tau: f64,
    with_neighbors: bool,
) -> Result<InterLogits> {
    if k_active == 0 {
        return Err(Error::Config("active negative count must be at least 1".into()));
    }
    let mut pairs = Vec::new();
    let (mut self_pos, mut neg_start, mut nbr_start) = (Vec::new(), Vec::new(), Vec::new());
    for a in anchors {
        if a.pool.len() < k_active {
            return Err(Error::Config(format!(
                "{k_active} active negatives requested from a pool of {}",
                a.pool.len()
            )));
        }
        self_pos.push(pairs.len());
        pairs.push((a.source, a.target_self));
        neg_start.push(pairs.len());
        pairs.extend(a.pool[..k_active].iter().map(|&v| (a.source, v)));
        nbr_start.push(pairs.len());
        if with_neighbors {
            pairs.extend(a.neighbors.iter().map(|&v| (a.source, v)));
        }
    }
    let cos = tape.pair_cosine(zs, zt, pairs)?;
    let logits = tape.scale(cos, 1.0 / tau)?;
    Ok(InterLogits {
        logits,
        self_pos,
        neg_start,
        nbr_start,
    })
}

/// `Σ_r w_r (lse(group_r) - logit[pos_r])` as a `1x1` node.
fn weighted_infonce(tape: &mut Tape, logits: NodeRef, groups: Groups, pos: Vec<usize>, w: Vec<f64>) -> Result<NodeRef> {
    let lse = tape.group_logsumexp(logits, groups)?;
    let p = tape.gather(logits, pos)?;
    let diff = tape.sub(lse, p)?;
    let wc = tape.constant(Tensor::column(w));
    tape.dot(diff, wc)
}

fn user_term(
    tape: &mut Tape,
    l: &InterLogits,
    anchors: &[InterAnchor],
    k_active: usize,
    negatives_only: bool,
) -> Result<Option<LossTerm>> {
    if anchors.is_empty() {
        return Ok(None);
    }
    let mut groups = Groups::new();
    for i in 0..anchors.len() {
        let negs = l.neg_start[i]..l.neg_start[i] + k_active;
        if negatives_only {
            groups.push(negs);
        } else {
            groups.push(std::iter::once(l.self_pos[i]).chain(negs));
        }
    }
    let w = vec![1.0 / anchors.len() as f64; anchors.len()];
    let node = weighted_infonce(tape, l.logits, groups, l.self_pos.clone(), w)?;
    Ok(Some(LossTerm {
        node,
        count: anchors.len(),
    }))
}

fn neighbor_term(
    tape: &mut Tape,
    l: &InterLogits,
    anchors: &[InterAnchor],
    k_active: usize,
    negatives_only: bool,
) -> Result<Option<LossTerm>> {
    let with_nbrs = anchors.iter().filter(|a| !a.neighbors.is_empty()).count();
    if with_nbrs == 0 {
        return Ok(None);
    }
    let mut groups = Groups::new();
    let (mut pos, mut w) = (Vec::new(), Vec::new());
    for (i, a) in anchors.iter().enumerate() {
        let negs = l.neg_start[i]..l.neg_start[i] + k_active;
        let weight = 1.0 / (with_nbrs * a.neighbors.len()) as f64;
        for r in 0..a.neighbors.len() {
            let p = l.nbr_start[i] + r;
            if negatives_only {
                groups.push(negs.clone());
            } else {
                groups.push(std::iter::once(p).chain(negs.clone()));
            }
            pos.push(p);
            w.push(weight);
        }
    }
    let node = weighted_infonce(tape, l.logits, groups, pos, w)?;
    Ok(Some(LossTerm { node, count: with_nbrs }))
}

/// Aligned-user InfoNCE with cosine similarity: the source-side user
/// should be closer to its own target-side row than to the first
/// `k_active` pool entries. Averaged over anchors.
pub fn inter_user_infonce(
    tape: &mut Tape,
    zs: NodeRef,
    zt: NodeRef,
    anchors: &[InterAnchor],
    k_active: usize,
    cfg: &LossConfig,
) -> Result<Option<LossTerm>> {
    let l = inter_logits(tape, zs, zt, anchors, k_active, cfg.tau, false)?;
    user_term(tape, &l, anchors, k_active, cfg.denominator_negatives_only)
}

/// Neighbor InfoNCE: each target-side neighbor of the aligned user is a
/// positive against the same active negatives. Mean over an anchor's
/// neighbors, then over anchors that have any.
pub fn inter_neighbor_infonce(
    tape: &mut Tape,
    zs: NodeRef,
    zt: NodeRef,
    anchors: &[InterAnchor],
    k_active: usize,
    cfg: &LossConfig,
) -> Result<Option<LossTerm>> {
    let l = inter_logits(tape, zs, zt, anchors, k_active, cfg.tau, true)?;
    neighbor_term(tape, &l, anchors, k_active, cfg.denominator_negatives_only)
}

/// Both cross-domain losses over one shared set of cosine logits.
pub fn inter_losses(
    tape: &mut Tape,
    zs: NodeRef,
    zt: NodeRef,
    anchors: &[InterAnchor],
    k_active: usize,
    cfg: &LossConfig,
) -> Result<(Option<LossTerm>, Option<LossTerm>)> {
    let l = inter_logits(tape, zs, zt, anchors, k_active, cfg.tau, true)?;
    let u = user_term(tape, &l, anchors, k_active, cfg.denominator_negatives_only)?;
    let n = neighbor_term(tape, &l, anchors, k_active, cfg.denominator_negatives_only)?;
    Ok((u, n))
}

/// `n_neg` distinct target nodes (flat indices, users or items), uniformly
/// drawn from everything except the user itself and its neighbors.
pub fn sample_inter_negative_pool<R: Rng + ?Sized>(
    target: &DomainGraph,
    target_user: usize,
    n_neg: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = target.num_nodes();
    let nbrs = target.neighbors_flat(target_user);
    let eligible = n - 1 - nbrs.len();
    if eligible < n_neg {
        return Err(Error::Data(format!(
            "target user {target_user} has {eligible} eligible negatives, {n_neg} required"
        )));
    }
    // Sorted exclusions; rank k of the eligible set maps past them.
    let mut excluded: Vec<usize> = nbrs.iter().map(|&j| j as usize).collect();
    excluded.push(target_user);
    excluded.sort_unstable();
    let picks = index::sample(rng, eligible, n_neg);
    Ok(picks
        .into_iter()
        .map(|mut k| {
            for &x in &excluded {
                if x <= k {
                    k += 1;
                } else {
                    break;
                }
            }
            k
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphstore::Domain;
    use crate::seeding::rng_for;

    fn rows<R: AsRef<[f64]>>(t: &mut Tape, r: &[R]) -> NodeRef {
        let v: Vec<Vec<f64>> = r.iter().map(|x| x.as_ref().to_vec()).collect();
        t.leaf(Tensor::from_rows(&v).unwrap())
    }

    fn value(t: &Tape, l: Option<LossTerm>) -> f64 {
        t.scalar(l.unwrap().node).unwrap()
    }

    #[test]
    fn bce_zero_scores() {
        let mut t = Tape::new();
        let z = rows(&mut t, &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let s = [IntraSample {
            anchor: 0,
            positives: vec![1],
            negatives: vec![2],
        }];
        let l = intra_bce_loss(&mut t, z, &s).unwrap();
        assert!((value(&t, l) - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_unit_vectors() {
        let mut t = Tape::new();
        let z = rows(&mut t, &[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let s = [IntraSample {
            anchor: 0,
            positives: vec![1],
            negatives: vec![2],
        }];
        let l = intra_bce_loss(&mut t, z, &s).unwrap();
        let oracle = (1.0 + (-1.0f64).exp()).ln() + 2f64.ln();
        assert!((value(&t, l) - oracle).abs() < 1e-12);
        assert!((value(&t, l) - 1.006409).abs() < 1e-6);
    }

    #[test]
    fn bce_counts_every_triple() {
        // Two positives, one negative on anchor 0; one of each on anchor 1.
        let mut t = Tape::new();
        let z = rows(&mut t, &[&[0.3, 0.1], &[0.2, -0.4], &[1.0, 0.5], &[-0.7, 0.2]]);
        let s = [
            IntraSample {
                anchor: 0,
                positives: vec![1, 2],
                negatives: vec![3],
            },
            IntraSample {
                anchor: 1,
                positives: vec![3],
                negatives: vec![0],
            },
            IntraSample {
                anchor: 2,
                positives: vec![],
                negatives: vec![0],
            },
        ];
        let l = intra_bce_loss(&mut t, z, &s).unwrap().unwrap();
        assert_eq!(l.count, 3);
        let v = t.value(z).clone();
        let d = |i: usize, j: usize| v.row(i).iter().zip(v.row(j)).map(|(a, b)| a * b).sum::<f64>();
        let sp = |x: f64| (1.0 + (-x).exp()).ln();
        let brute = [(0, 1, 3), (0, 2, 3), (1, 3, 0)]
            .iter()
            .map(|&(a, p, n)| sp(d(a, p)) + sp(-d(a, n)))
            .sum::<f64>()
            / 3.0;
        assert!((t.scalar(l.node).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn bce_without_triples_is_none() {
        let mut t = Tape::new();
        let z = rows(&mut t, &[&[1.0]]);
        let s = [IntraSample {
            anchor: 0,
            positives: vec![],
            negatives: vec![0],
        }];
        assert!(intra_bce_loss(&mut t, z, &s).unwrap().is_none());
    }

    fn anchor(pool: usize, nbrs: &[usize]) -> InterAnchor {
        InterAnchor {
            source: 0,
            target_self: 0,
            neighbors: nbrs.to_vec(),
            pool: (1..=pool).collect(),
        }
    }

    #[test]
    fn uniform_similarity_values() {
        let cfg = LossConfig::default();
        let mut t = Tape::new();
        let zs = rows(&mut t, &[&[1.0, 1.0]]);
        let zt = rows(&mut t, &[[2.0, 2.0]; 9]);
        let l = inter_user_infonce(&mut t, zs, zt, &[anchor(3, &[])], 3, &cfg).unwrap();
        assert!((value(&t, l) - 4f64.ln()).abs() < 1e-9);
        let a = InterAnchor {
            neighbors: vec![8],
            ..anchor(7, &[])
        };
        let l = inter_neighbor_infonce(&mut t, zs, zt, &[a], 7, &cfg).unwrap();
        assert!((value(&t, l) - 8f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn derived_constants() {
        let cfg = LossConfig::default();
        let mut t = Tape::new();
        // sim(pos) = 1, three orthogonal negatives.
        let zs = rows(&mut t, &[&[1.0, 0.0]]);
        let zt = rows(&mut t, &[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 2.0], &[0.0, -3.0]]);
        let l = inter_user_infonce(&mut t, zs, zt, &[anchor(3, &[])], 3, &cfg).unwrap();
        let e2 = 2f64.exp();
        let oracle = ((e2 + 3.0) / e2).ln();
        assert!((value(&t, l) - oracle).abs() < 1e-9);
        assert!((oracle - 0.340753).abs() < 1e-6);

        // One neighbor at cosine 0.8, negatives at 0.1 and -0.2.
        let mut t = Tape::new();
        let zs = rows(&mut t, &[[1.0, 0.0]]);
        let c = |x: f64| [x, (1.0 - x * x).sqrt()];
        let zt = rows(&mut t, &[[1.0, 0.0], c(0.1), c(-0.2), c(0.8)]);
        let a = InterAnchor {
            source: 0,
            target_self: 0,
            neighbors: vec![3],
            pool: vec![1, 2],
        };
        let l = inter_neighbor_infonce(&mut t, zs, zt, &[a], 2, &cfg).unwrap();
        let oracle = -(1.6f64.exp() / (1.6f64.exp() + 0.2f64.exp() + (-0.4f64).exp())).ln();
        assert!((value(&t, l) - oracle).abs() < 1e-9);
        assert!((oracle - 0.323483).abs() < 1e-6);
    }

    #[test]
    fn none_without_neighbors() {
        let cfg = LossConfig::default();
        let mut t = Tape::new();
        let zs = rows(&mut t, &[&[1.0, 0.0]]);
        let zt = rows(&mut t, &[&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]]);
        let (u, n) = inter_losses(&mut t, zs, zt, &[anchor(2, &[])], 2, &cfg).unwrap();
        assert!(u.is_some() && n.is_none());
        assert!(inter_user_infonce(&mut t, zs, zt, &[anchor(2, &[])], 0, &cfg).is_err());
        assert!(inter_user_infonce(&mut t, zs, zt, &[anchor(2, &[])], 3, &cfg).is_err());
    }

    #[test]
    fn negatives_only_denominator() {
        let cfg = LossConfig {
            denominator_negatives_only: true,
            ..LossConfig::default()
        };
        let mut t = Tape::new();
        let zs = rows(&mut t, &[&[1.0, 1.0]]);
        let zt = rows(&mut t, &[[1.0, 1.0]; 4]);
        let l = inter_user_infonce(&mut t, zs, zt, &[anchor(3, &[])], 3, &cfg).unwrap();
        assert!((value(&t, l) - 3f64.ln()).abs() < 1e-9);
    }

    fn chain_graph() -> DomainGraph {
        // 1 user with 2 items, plus 3 more users and items.
        let h = vec![vec![0, 1], vec![2], vec![3], vec![4]];
        DomainGraph::from_histories(
            Domain::Target,
            (0..4).map(|i| format!("u{i}")).collect(),
            (0..5).map(|i| format!("i{i}")).collect(),
            h,
        )
        .unwrap()
    }

    #[test]
    fn pool_excludes_self_and_neighbors() {
        let g = chain_graph();
        // 9 nodes, minus self and 2 neighbors = 6 eligible.
        let mut rng = rng_for(&[1u64]);
        let mut p = sample_inter_negative_pool(&g, 0, 6, &mut rng).unwrap();
        p.sort_unstable();
        assert_eq!(p, vec![1, 2, 3, 6, 7, 8]);
        assert!(sample_inter_negative_pool(&g, 0, 7, &mut rng).is_err());
        for s in 0..50u64 {
            let p = sample_inter_negative_pool(&g, 0, 3, &mut rng_for(&[s])).unwrap();
            assert!(p.iter().all(|&v| v != 0 && v != 4 && v != 5));
            let mut q = p.clone();
            q.sort_unstable();
            q.dedup();
            assert_eq!(q.len(), 3);
        }
    }
}
