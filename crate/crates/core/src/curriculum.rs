//! Easy-to-hard ordering of negative pools by Katz centrality and the
//! epoch schedule for how many of them are active.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::centrality::CentralityTable;
use crate::error::{Error, Result};
use crate::seeding::fmt_sig9;

/// Difficulty of contrasting `candidate` against `anchor`; a larger sum
/// means an easier negative.
pub fn pair_difficulty(anchor_centrality: f64, candidate_centrality: f64) -> f64 {
    anchor_centrality + candidate_centrality
}

/// `(n_step, initial_active)` for a run of `n_epoch` epochs.
pub fn build_schedule(n_epoch: usize, n_neg: usize) -> Result<(usize, usize)> {
    if n_neg < 2 || !n_neg.is_multiple_of(2) {
        return Err(Error::Config(format!("pool size must be even and at least 2, got {n_neg}")));
    }
    if n_epoch == 0 {
        return Err(Error::Config("curriculum needs at least one epoch".into()));
    }
    let half = n_neg / 2;
    Ok(((n_epoch / half).max(1), half))
}

/// Sorts `(candidate, difficulty)` easiest first: descending difficulty
/// sum, ties by ascending candidate.
pub fn order_easiest_first(pool: &mut [(usize, f64)]) {
    pool.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Ordered negative pools and the schedule that grows their active prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumState {
    pub n_neg: usize,
    pub n_epoch: usize,
    pub n_step: usize,
    /// Per anchor, `(candidate, difficulty)` easiest first.
    pools: Vec<(usize, Vec<(usize, f64)>)>,
}

impl CurriculumState {
    /// Orders each anchor's pool. `anchors[i]` is the anchor's flat index
    /// in the domain that `table` scores; candidates are flat indices too.
    pub fn build(
        anchors: &[usize],
        pools: Vec<Vec<usize>>,
        table: &CentralityTable,
        n_epoch: usize,
        n_neg: usize,
    ) -> Result<Self> {
        let (n_step, _) = build_schedule(n_epoch, n_neg)?;
        if anchors.len() != pools.len() {
            return Err(Error::shape(
                "curriculum",
                format!("{} anchors, {} pools", anchors.len(), pools.len()),
            ));
        }
        let mut ordered = Vec::with_capacity(pools.len());
        for (&a, pool) in anchors.iter().zip(pools) {
            if pool.len() != n_neg {
                return Err(Error::Data(format!("pool of anchor {a} has {} entries, expected {n_neg}", pool.len())));
            }
            let xa = table.scores[a];
            let mut scored: Vec<(usize, f64)> = pool
                .into_iter()
                .map(|c| (c, pair_difficulty(xa, table.scores[c])))
                .collect();
            order_easiest_first(&mut scored);
            ordered.push((a, scored));
        }
        Ok(CurriculumState {
            n_neg,
            n_epoch,
            n_step,
            pools: ordered,
        })
    }

    pub fn active_count(&self, epoch: usize) -> Result<usize> {
        if epoch >= self.n_epoch {
            return Err(Error::Config(format!(
                "epoch {epoch} outside a {}-epoch curriculum",
                self.n_epoch
            )));
        }
        Ok(active_count(self.n_neg, self.n_step, epoch))
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    /// Candidates of pool `i`, easiest first.
    pub fn pool(&self, i: usize) -> Vec<usize> {
        self.pools[i].1.iter().map(|p| p.0).collect()
    }

    pub fn scored_pool(&self, i: usize) -> &[(usize, f64)] {
        &self.pools[i].1
    }

    pub fn write_debug_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("anchor\trank\tnode\tdifficulty\n");
        for (a, pool) in &self.pools {
            for (rank, (c, d)) in pool.iter().enumerate() {
                let _ = writeln!(out, "{a}\t{rank}\t{c}\t{}", fmt_sig9(*d));
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// `min(n_neg, n_neg/2 + floor(epoch / n_step))`.
pub fn active_count(n_neg: usize, n_step: usize, epoch: usize) -> usize {
    (n_neg / 2 + epoch / n_step.max(1)).min(n_neg)
}
