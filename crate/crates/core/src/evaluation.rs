//! Full-corpus HIT@N retrieval over the target domain, and loss-stability
//! statistics of training logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::diffmath::{cosine, Tensor};
use crate::encoder::{embed_all, EncoderParams};
use crate::error::{Error, Result};
use crate::graphstore::CrossDomainDataset;
use crate::par::Exec;
use crate::seeding::fmt_sig9;
use crate::trainer::{TrainLog, LOSS_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Similarity {
    #[default]
    Cosine,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    #[default]
    Test,
    Valid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub cutoffs: Vec<usize>,
    pub similarity: Similarity,
    /// Keep the user's training items among the candidates.
    pub include_train_items: bool,
    pub split: Split,
    pub exec: Exec,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            cutoffs: vec![50, 100],
            similarity: Similarity::Cosine,
            include_train_items: false,
            split: Split::Test,
            exec: Exec::default(),
        }
    }
}

/// One retrieval query: `user` should find `item` among all items except
/// `exclude` (item indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub user: usize,
    pub item: usize,
    pub exclude: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub hit_at: BTreeMap<usize, f64>,
    pub num_test_rows: usize,
    pub mode: String,
    pub seed: u64,
}

impl EvalReport {
    /// Keys sorted, two-space indented, trailing newline.
    pub fn to_json(&self) -> String {
        let mut m = Map::new();
        for (n, v) in &self.hit_at {
            m.insert(format!("hit@{n}"), Value::from(*v));
        }
        m.insert("mode".into(), Value::from(self.mode.clone()));
        m.insert("num_test_rows".into(), Value::from(self.num_test_rows));
        m.insert("seed".into(), Value::from(self.seed));
        let mut s = serde_json::to_string_pretty(&Value::Object(m)).expect("plain values serialize");
        s.push('\n');
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// 1-based rank of each query's item: items scoring higher, or equal with
/// a smaller index, rank ahead of it.
pub fn rank_queries(users: &Tensor, items: &Tensor, queries: &[Query], sim: Similarity, exec: Exec) -> Result<Vec<usize>> {
    if users.cols() != items.cols() {
        return Err(Error::shape("rank", format!("{:?} vs {:?}", users.shape(), items.shape())));
    }
    if let Some(q) = queries.iter().find(|q| q.user >= users.rows() || q.item >= items.rows()) {
        return Err(Error::Data(format!("query ({}, {}) out of range", q.user, q.item)));
    }
    let score = |u: &[f64], i: usize| match sim {
        Similarity::Cosine => cosine(u, items.row(i)),
        Similarity::Dot => u.iter().zip(items.row(i)).map(|(a, b)| a * b).sum(),
    };
    Ok(exec.map(queries.len(), |k| {
        let q = &queries[k];
        let u = users.row(q.user);
        let sy = score(u, q.item);
        let mut excluded = vec![false; items.rows()];
        for &x in &q.exclude {
            if x != q.item && x < excluded.len() {
                excluded[x] = true;
            }
        }
        1 + (0..items.rows())
            .filter(|&j| j != q.item && !excluded[j])
            .filter(|&j| {
                let s = score(u, j);
                s > sy || (s == sy && j < q.item)
            })
            .count()
    }))
}

pub fn hit_rates(ranks: &[usize], cutoffs: &[usize]) -> Result<BTreeMap<usize, f64>> {
    if ranks.is_empty() {
        return Err(Error::Data("no test rows to evaluate".into()));
    }
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(Error::Config("cutoffs must be a non-empty list of positive integers".into()));
    }
    Ok(cutoffs
        .iter()
        .map(|&n| (n, ranks.iter().filter(|&&r| r <= n).count() as f64 / ranks.len() as f64))
        .collect())
}

/// Queries for the held-out rows of `split`.
pub fn split_queries(ds: &CrossDomainDataset, split: Split, include_train_items: bool) -> Vec<Query> {
    ds.splits
        .iter()
        .map(|r| Query {
            user: r.user,
            item: match split {
                Split::Test => r.test_item,
                Split::Valid => r.valid_item,
            },
            exclude: if include_train_items {
                Vec::new()
            } else {
                ds.target
                    .neighbors_flat(r.user)
                    .iter()
                    .map(|&f| f as usize - ds.target.users())
                    .collect()
            },
        })
        .collect()
}

/// HIT@N of the target encoder on the dataset's held-out rows.
pub fn hit_at_n(params_t: &EncoderParams, ds: &CrossDomainDataset, opts: &EvalOptions, mode: &str, seed: u64) -> Result<EvalReport> {
    if opts.cutoffs.is_empty() || opts.cutoffs.contains(&0) {
        return Err(Error::Config("cutoffs must be a non-empty list of positive integers".into()));
    }
    let queries = split_queries(ds, opts.split, opts.include_train_items);
    if queries.is_empty() {
        return Err(Error::Data("no test rows to evaluate".into()));
    }
    let z = embed_all(params_t, &ds.target, opts.exec)?;
    let users = ds.target.users();
    let (zu, zi) = split_rows(&z, users)?;
    let ranks = rank_queries(&zu, &zi, &queries, opts.similarity, opts.exec)?;
    Ok(EvalReport {
        hit_at: hit_rates(&ranks, &opts.cutoffs)?,
        num_test_rows: queries.len(),
        mode: mode.to_string(),
        seed,
    })
}

fn split_rows(z: &Tensor, at: usize) -> Result<(Tensor, Tensor)> {
    let c = z.cols();
    let (a, b) = z.data().split_at(at * c);
    Ok((Tensor::from_vec(at, c, a.to_vec())?, Tensor::from_vec(z.rows() - at, c, b.to_vec())?))
}

/// Sample standard deviation over the last `ceil(n/2)` entries of an
/// `n`-epoch series, skipping absent values; `None` when the window holds
/// no values, 0 when it holds one.
pub fn final_half_std(series: &[Option<f64>]) -> Option<f64> {
    let window: Vec<f64> = series[series.len() / 2..].iter().flatten().copied().collect();
    match window.len() {
        0 => None,
        1 => Some(0.0),
        n => {
            let mean = window.iter().sum::<f64>() / n as f64;
            let ss: f64 = window.iter().map(|v| (v - mean).powi(2)).sum();
            Some((ss / (n - 1) as f64).sqrt())
        }
    }
}

/// A training log tagged with the mode and seed that produced it.
#[derive(Debug, Clone)]
pub struct TaggedLog<'a> {
    pub mode: String,
    pub seed: u64,
    pub log: &'a TrainLog,
}

/// Combined cross-domain loss name used in stability tables.
pub const INTER_TOTAL: &str = "l_inter";

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub mode: String,
    pub loss: String,
    /// Mean over seeds of the final-half standard deviation.
    pub std_final_half: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityPair {
    pub seed: u64,
    pub full_inter_std: f64,
    pub mixed_inter_std: f64,
}

impl StabilityPair {
    pub fn full_lower(&self) -> bool {
        self.full_inter_std < self.mixed_inter_std
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub pairs: Vec<StabilityPair>,
}

fn series_of(log: &TrainLog, loss: &str) -> Vec<Option<f64>> {
    match LOSS_NAMES.iter().position(|n| *n == loss) {
        Some(i) => log.series(i),
        None => log.records.iter().map(|r| r.inter_total()).collect(),
    }
}

/// Final-half standard deviation of every loss series, averaged over seeds
/// per mode, plus per-seed `full` vs `mixed` comparisons of the combined
/// cross-domain loss.
pub fn stability_report(logs: &[TaggedLog<'_>]) -> Result<StabilityReport> {
    let Some(first) = logs.first() else {
        return Err(Error::Data("no training logs".into()));
    };
    if let Some(bad) = logs.iter().find(|l| l.log.len() != first.log.len()) {
        return Err(Error::Data(format!(
            "epoch counts differ: {} has {}, {} has {}",
            first.mode,
            first.log.len(),
            bad.mode,
            bad.log.len()
        )));
    }
    let mut modes: Vec<&str> = Vec::new();
    for l in logs {
        if !modes.contains(&l.mode.as_str()) {
            modes.push(&l.mode);
        }
    }
    let names: Vec<&str> = LOSS_NAMES.iter().copied().chain([INTER_TOTAL]).collect();
    let mut report = StabilityReport::default();
    for mode in modes {
        for loss in &names {
            let stds: Vec<f64> = logs
                .iter()
                .filter(|l| l.mode == mode)
                .filter_map(|l| final_half_std(&series_of(l.log, loss)))
                .collect();
            if stds.is_empty() {
                continue;
            }
            report.rows.push(StabilityRow {
                mode: mode.to_string(),
                loss: loss.to_string(),
                std_final_half: stds.iter().sum::<f64>() / stds.len() as f64,
            });
        }
    }
    let mut seeds: Vec<u64> = logs.iter().map(|l| l.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    for seed in seeds {
        let std_of = |mode: &str| {
            logs.iter()
                .find(|l| l.seed == seed && l.mode == mode)
                .and_then(|l| final_half_std(&series_of(l.log, INTER_TOTAL)))
        };
        if let (Some(f), Some(m)) = (std_of("full"), std_of("mixed")) {
            report.pairs.push(StabilityPair {
                seed,
                full_inter_std: f,
                mixed_inter_std: m,
            });
        }
    }
    Ok(report)
}

impl StabilityReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("mode\tloss\tstd_final_half\n");
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{}", r.mode, r.loss, fmt_sig9(r.std_final_half));
        }
        out
    }

    pub fn pairs_tsv(&self) -> String {
        let mut out = String::from("seed\tfull_inter_std\tmixed_inter_std\tfull_lower\n");
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                p.seed,
                fmt_sig9(p.full_inter_std),
                fmt_sig9(p.mixed_inter_std),
                p.full_lower()
            );
        }
        out
    }

    /// Writes `stability.tsv` and `stability_pairs.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, body) in [("stability.tsv", self.to_tsv()), ("stability_pairs.tsv", self.pairs_tsv())] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
