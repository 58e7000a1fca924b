//! Two-stage training (within-domain link prediction, then cross-domain
//! alignment of the target encoder), the ablation modes, and the joint
//! single-phase diagnostic.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::{index, SliceRandom};

use crate::centrality::CentralityTable;
use crate::curriculum::CurriculumState;
use crate::diffmath::{AdamConfig, AdamState, NodeRef, Tape};
use crate::encoder::{encode, EncoderDims, EncoderLeaves, EncoderParams, NodeBatch};
use crate::error::{Error, Result};
use crate::graphstore::{sample_non_neighbor_flat, CrossDomainDataset, Domain, DomainGraph, SamplerConfig};
use crate::losses::{inter_losses, intra_bce_loss, sample_inter_negative_pool, InterAnchor, IntraSample, LossConfig, LossTerm};
use crate::par::Exec;
use crate::seeding::{fmt_sig9, rng_for};

const TAG_INTRA_ORDER: u64 = 0x11;
const TAG_INTRA_SAMPLE: u64 = 0x12;
const TAG_INTER_ORDER: u64 = 0x21;
const TAG_POOL: u64 = 0x22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Separated stages, stop-gradient on the source side, curriculum.
    Full,
    /// As `Full` with every pool entry active from the first epoch.
    NoCurriculum,
    /// As `NoCurriculum` with gradients reaching the source encoder.
    NoStopgrad,
    /// One phase minimizing the within- and cross-domain losses jointly.
    Mixed,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Full, Mode::NoCurriculum, Mode::NoStopgrad, Mode::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoCurriculum => "no-curriculum",
            Mode::NoStopgrad => "no-stopgrad",
            Mode::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn uses_curriculum(self) -> bool {
        self == Mode::Full
    }

    pub fn stops_source_gradient(self) -> bool {
        matches!(self, Mode::Full | Mode::NoCurriculum)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub epochs_intra: usize,
    pub epochs_inter: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub loss: LossConfig,
    /// Fanout per layer; the sampler seed is always `seed`.
    pub fanout: usize,
    pub dims: EncoderDims,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Full,
            epochs_intra: 100,
            epochs_inter: 100,
            batch_size: 1024,
            lr: 1e-3,
            weight_decay: 5e-4,
            seed: 42,
            loss: LossConfig::default(),
            fanout: crate::graphstore::DEFAULT_FANOUT,
            dims: EncoderDims::default(),
            exec: Exec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.dims.validate()?;
        if self.epochs_intra == 0 || self.epochs_inter == 0 {
            return Err(Error::Config("epoch counts must be at least 1".into()));
        }
        if self.batch_size == 0 || self.fanout == 0 {
            return Err(Error::Config("batch_size and fanout must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "lr must be positive and weight_decay non-negative, got {} / {}",
                self.lr, self.weight_decay
            )));
        }
        Ok(())
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            fanout: self.fanout,
            seed: self.seed,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_intra + self.epochs_inter
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Intra,
    Inter,
    Mixed,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Intra => "intra",
            Stage::Inter => "inter",
            Stage::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub l_intra_s: Option<f64>,
    pub l_intra_t: Option<f64>,
    pub l_inter_u: Option<f64>,
    pub l_inter_n: Option<f64>,
    pub seconds: f64,
}

impl EpochRecord {
    pub fn losses(&self) -> [Option<f64>; 4] {
        [self.l_intra_s, self.l_intra_t, self.l_inter_u, self.l_inter_n]
    }

    /// `l_inter_u + l_inter_n` when both are present.
    pub fn inter_total(&self) -> Option<f64> {
        Some(self.l_inter_u? + self.l_inter_n?)
    }
}

pub const LOSS_NAMES: [&str; 4] = ["l_intra_s", "l_intra_t", "l_inter_u", "l_inter_n"];
pub const TRAINLOG_HEADER: &str = "epoch\tstage\tl_intra_s\tl_intra_t\tl_inter_u\tl_inter_n\tseconds";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Loss columns only, for comparisons that ignore wall time.
    pub fn loss_rows(&self) -> Vec<(usize, Stage, [Option<f64>; 4])> {
        self.records.iter().map(|r| (r.epoch, r.stage, r.losses())).collect()
    }

    pub fn series(&self, loss: usize) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.losses()[loss]).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{TRAINLOG_HEADER}\n");
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), fmt_sig9);
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.3}",
                r.epoch,
                r.stage.name(),
                cell(r.l_intra_s),
                cell(r.l_intra_t),
                cell(r.l_inter_u),
                cell(r.l_inter_n),
                r.seconds
            );
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    fn push(&mut self, r: EpochRecord) {
        log::debug!("epoch {} {}: losses {:?} in {:.2}s", r.epoch, r.stage.name(), r.losses(), r.seconds);
        self.records.push(r);
    }
}

/// Parameters and optimizer state of both encoders.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub source: EncoderParams,
    pub target: EncoderParams,
    adam_s: AdamState,
    adam_t: AdamState,
}

impl TrainState {
    pub fn init(ds: &CrossDomainDataset, cfg: &TrainConfig) -> Result<Self> {
        let source = EncoderParams::for_graph(&ds.source, cfg.dims, cfg.seed)?;
        let target = EncoderParams::for_graph(&ds.target, cfg.dims, cfg.seed)?;
        let adam_s = AdamState::new(cfg.adam(), &source.tensors());
        let adam_t = AdamState::new(cfg.adam(), &target.tensors());
        Ok(TrainState {
            source,
            target,
            adam_s,
            adam_t,
        })
    }

    fn params(&self, d: Domain) -> &EncoderParams {
        match d {
            Domain::Source => &self.source,
            Domain::Target => &self.target,
        }
    }

    fn apply(&mut self, d: Domain, grads: &[crate::diffmath::Tensor]) -> Result<()> {
        let (p, a) = match d {
            Domain::Source => (&mut self.source, &mut self.adam_s),
            Domain::Target => (&mut self.target, &mut self.adam_t),
        };
        a.update(&mut p.tensors_mut(), grads)
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        for p in [&self.source, &self.target] {
            let d = dir.join(p.domain.name());
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            p.save(&d.join("encoder.ckpt"))?;
        }
        Ok(())
    }
}

/// Reads `dir/source/encoder.ckpt` and `dir/target/encoder.ckpt`.
pub fn load_checkpoint(dir: &Path, ds: &CrossDomainDataset, dims: EncoderDims) -> Result<(EncoderParams, EncoderParams)> {
    let s = EncoderParams::load(&dir.join("source").join("encoder.ckpt"), &ds.source, dims)?;
    let t = EncoderParams::load(&dir.join("target").join("encoder.ckpt"), &ds.target, dims)?;
    Ok((s, t))
}

/// Running mean weighted by term counts.
#[derive(Debug, Default, Clone, Copy)]
struct Mean {
    sum: f64,
    count: usize,
}

impl Mean {
    fn add(&mut self, value: f64, count: usize) {
        self.sum += value * count as f64;
        self.count += count;
    }

    fn get(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

fn with_epoch<T>(epoch: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}: {m}")),
        other => other,
    })
}

/// Shuffled node batches of one domain for one epoch.
fn intra_batches(g: &DomainGraph, cfg: &TrainConfig, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..g.num_nodes()).collect();
    order.shuffle(&mut rng_for(&[cfg.seed, TAG_INTRA_ORDER, g.domain() as u64, epoch as u64]));
    order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect()
}

/// Rows to encode and the link-prediction samples over those rows.
pub(crate) struct IntraBatch {
    pub nodes: Vec<usize>,
    pub samples: Vec<IntraSample>,
}

pub(crate) fn intra_batch(g: &DomainGraph, anchors: &[usize], cfg: &TrainConfig, epoch: usize, batch: usize) -> Result<IntraBatch> {
    let mut rng = rng_for(&[cfg.seed, TAG_INTRA_SAMPLE, g.domain() as u64, epoch as u64, batch as u64]);
    let mut slot = std::collections::HashMap::new();
    let mut nodes = Vec::new();
    let mut row = |f: usize, nodes: &mut Vec<usize>| {
        *slot.entry(f).or_insert_with(|| {
            nodes.push(f);
            nodes.len() - 1
        })
    };
    let mut samples = Vec::new();
    for &a in anchors {
        let nbrs = g.neighbors_flat(a);
        if nbrs.is_empty() {
            continue;
        }
        let k = cfg.loss.n_pos_intra.min(nbrs.len());
        let pos: Vec<usize> = index::sample(&mut rng, nbrs.len(), k).into_iter().map(|i| nbrs[i] as usize).collect();
        let mut neg = Vec::with_capacity(cfg.loss.n_neg_intra);
        for _ in 0..cfg.loss.n_neg_intra {
            match sample_non_neighbor_flat(g, a, &mut rng) {
                Ok(v) => neg.push(v),
                Err(Error::Degenerate(_)) => break,
                Err(e) => return Err(e),
            }
        }
        if neg.is_empty() {
            continue;
        }
        let anchor = row(a, &mut nodes);
        let positives = pos.into_iter().map(|v| row(v, &mut nodes)).collect();
        let negatives = neg.into_iter().map(|v| row(v, &mut nodes)).collect();
        samples.push(IntraSample {
            anchor,
            positives,
            negatives,
        });
    }
    Ok(IntraBatch { nodes, samples })
}

fn record_intra(
    tape: &mut Tape,
    leaves: &EncoderLeaves,
    g: &DomainGraph,
    batch: &IntraBatch,
    cfg: &TrainConfig,
    sampler_epoch: usize,
) -> Result<Option<LossTerm>> {
    if batch.samples.is_empty() {
        return Ok(None);
    }
    let nb = NodeBatch::sampled(g, &batch.nodes, &cfg.sampler(), sampler_epoch as u64)?;
    let z = encode(leaves, &nb, tape)?;
    intra_bce_loss(tape, z, &batch.samples)
}

/// Within-domain link-prediction stage; both domains train on their own
/// batches with their own optimizer.
pub fn train_stage_intra(ds: &CrossDomainDataset, state: &mut TrainState, cfg: &TrainConfig, log: &mut TrainLog) -> Result<()> {
    cfg.validate()?;
    let lambda = cfg.loss.lambda_intra;
    for epoch in 0..cfg.epochs_intra {
        let t0 = Instant::now();
        let mut means = [Mean::default(); 2];
        for (slot, d) in [Domain::Source, Domain::Target].into_iter().enumerate() {
            let g = ds.graph(d);
            for (b, anchors) in intra_batches(g, cfg, epoch).iter().enumerate() {
                let batch = intra_batch(g, anchors, cfg, epoch, b)?;
                let mut tape = Tape::with_exec(cfg.exec);
                let leaves = state.params(d).record(&mut tape);
                let Some(term) = with_epoch(epoch, record_intra(&mut tape, &leaves, g, &batch, cfg, epoch))? else {
                    continue;
                };
                means[slot].add(tape.scalar(term.node)?, term.count);
                if lambda > 0.0 {
                    let obj = tape.scale(term.node, lambda)?;
                    let grads = tape.gradient(obj, &leaves.refs())?;
                    with_epoch(epoch, state.apply(d, &grads))?;
                }
            }
        }
        log.push(EpochRecord {
            epoch,
            stage: Stage::Intra,
            l_intra_s: means[0].get(),
            l_intra_t: means[1].get(),
            l_inter_u: None,
            l_inter_n: None,
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(())
}

/// Negative pools for every aligned user, sampled once and ordered easiest
/// first by target-domain centrality. Pool `i` belongs to `ds.overlap[i]`.
pub fn build_curriculum(ds: &CrossDomainDataset, target_centrality: &CentralityTable, cfg: &TrainConfig) -> Result<CurriculumState> {
    if ds.overlap.is_empty() {
        return Err(Error::Data("no aligned users".into()));
    }
    let n_neg = cfg.loss.n_neg_inter;
    let anchors: Vec<usize> = ds.overlap.iter().map(|&(_, t)| t).collect();
    let pools = anchors
        .iter()
        .map(|&t| sample_inter_negative_pool(&ds.target, t, n_neg, &mut rng_for(&[cfg.seed, TAG_POOL, t as u64])))
        .collect::<Result<Vec<_>>>()?;
    let n_epoch = match cfg.mode {
        Mode::Mixed => cfg.total_epochs(),
        _ => cfg.epochs_inter,
    };
    CurriculumState::build(&anchors, pools, target_centrality, n_epoch, n_neg)
}

fn inter_batches(ds: &CrossDomainDataset, cfg: &TrainConfig, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..ds.overlap.len()).collect();
    order.shuffle(&mut rng_for(&[cfg.seed, TAG_INTER_ORDER, epoch as u64]));
    order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect()
}

/// Handles of one recorded cross-domain batch.
pub(crate) struct InterRecord {
    pub user: Option<LossTerm>,
    pub neighbor: Option<LossTerm>,
}

/// Records both cross-domain losses for the aligned users `pairs`
/// (indices into `ds.overlap`) with the first `k_active` pool entries.
#[allow(clippy::too_many_arguments)]
pub(crate) fn record_inter(
    tape: &mut Tape,
    ls: &EncoderLeaves,
    lt: &EncoderLeaves,
    ds: &CrossDomainDataset,
    curriculum: &CurriculumState,
    pairs: &[usize],
    k_active: usize,
    stop_source: bool,
    cfg: &TrainConfig,
    sampler_epoch: usize,
) -> Result<InterRecord> {
    let sources: Vec<usize> = pairs.iter().map(|&i| ds.overlap[i].0).collect();
    let mut slot = std::collections::HashMap::new();
    let mut tnodes = Vec::new();
    let mut row = |f: usize, nodes: &mut Vec<usize>| {
        *slot.entry(f).or_insert_with(|| {
            nodes.push(f);
            nodes.len() - 1
        })
    };
    let selves: Vec<usize> = pairs.iter().map(|&i| row(ds.overlap[i].1, &mut tnodes)).collect();
    let mut anchors = Vec::with_capacity(pairs.len());
    for (r, &i) in pairs.iter().enumerate() {
        let t = ds.overlap[i].1;
        let neighbors = ds.target.neighbors_flat(t).iter().map(|&v| row(v as usize, &mut tnodes)).collect();
        let pool = curriculum.pool(i)[..k_active].iter().map(|&v| row(v, &mut tnodes)).collect();
        anchors.push(InterAnchor {
            source: r,
            target_self: selves[r],
            neighbors,
            pool,
        });
    }
    let sampler = cfg.sampler();
    let bs = NodeBatch::sampled(&ds.source, &sources, &sampler, sampler_epoch as u64)?;
    let bt = NodeBatch::sampled(&ds.target, &tnodes, &sampler, sampler_epoch as u64)?;
    let mut zs = encode(ls, &bs, tape)?;
    if stop_source {
        zs = tape.stop_gradient(zs)?;
    }
    let zt = encode(lt, &bt, tape)?;
    let (user, neighbor) = inter_losses(tape, zs, zt, &anchors, k_active, &cfg.loss)?;
    Ok(InterRecord { user, neighbor })
}

/// Sum of `weight * term` over present terms with positive weight.
fn objective(tape: &mut Tape, terms: &[(Option<LossTerm>, f64)]) -> Result<Option<NodeRef>> {
    let mut acc: Option<NodeRef> = None;
    for (t, w) in terms {
        let (Some(t), true) = (t, *w > 0.0) else { continue };
        let s = tape.scale(t.node, *w)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, s)?,
            None => s,
        });
    }
    Ok(acc)
}

/// Cross-domain stage. Modes with stop-gradient never touch the source
/// encoder or its optimizer state.
pub fn train_stage_inter(
    ds: &CrossDomainDataset,
    state: &mut TrainState,
    curriculum: &CurriculumState,
    cfg: &TrainConfig,
    log: &mut TrainLog,
) -> Result<()> {
    cfg.validate()?;
    if cfg.mode == Mode::Mixed {
        return Err(Error::Config("the mixed mode has no separate cross-domain stage".into()));
    }
    if ds.overlap.is_empty() {
        return Err(Error::Data("no aligned users".into()));
    }
    let stop = cfg.mode.stops_source_gradient();
    let lambda = cfg.loss.lambda_inter;
    for e in 0..cfg.epochs_inter {
        let epoch = cfg.epochs_intra + e;
        let t0 = Instant::now();
        let k = if cfg.mode.uses_curriculum() {
            curriculum.active_count(e)?
        } else {
            curriculum.n_neg
        };
        let (mut mu, mut mn) = (Mean::default(), Mean::default());
        for pairs in inter_batches(ds, cfg, epoch) {
            let mut tape = Tape::with_exec(cfg.exec);
            let ls = state.source.record(&mut tape);
            let lt = state.target.record(&mut tape);
            let rec = with_epoch(
                epoch,
                record_inter(&mut tape, &ls, &lt, ds, curriculum, &pairs, k, stop, cfg, epoch),
            )?;
            for (m, t) in [(&mut mu, rec.user), (&mut mn, rec.neighbor)] {
                if let Some(t) = t {
                    m.add(tape.scalar(t.node)?, t.count);
                }
            }
            let Some(obj) = objective(&mut tape, &[(rec.user, lambda), (rec.neighbor, lambda)])? else {
                continue;
            };
            if stop {
                let g = tape.gradient(obj, &lt.refs())?;
                with_epoch(epoch, state.apply(Domain::Target, &g))?;
            } else {
                let refs = [ls.refs(), lt.refs()].concat();
                let mut g = tape.gradient(obj, &refs)?;
                let gt = g.split_off(3);
                with_epoch(epoch, state.apply(Domain::Source, &g))?;
                with_epoch(epoch, state.apply(Domain::Target, &gt))?;
            }
        }
        log.push(EpochRecord {
            epoch,
            stage: Stage::Inter,
            l_intra_s: None,
            l_intra_t: None,
            l_inter_u: mu.get(),
            l_inter_n: mn.get(),
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(())
}

/// Single phase over `epochs_intra + epochs_inter` epochs minimizing all
/// four losses jointly on one tape per step, without stop-gradient or
/// curriculum. Within-domain batches are drawn exactly as in
/// [`train_stage_intra`]; cross-domain batches ride along on the first steps.
pub fn train_mixed(
    ds: &CrossDomainDataset,
    state: &mut TrainState,
    curriculum: &CurriculumState,
    cfg: &TrainConfig,
    log: &mut TrainLog,
) -> Result<()> {
    cfg.validate()?;
    if ds.overlap.is_empty() {
        return Err(Error::Data("no aligned users".into()));
    }
    let (li, le) = (cfg.loss.lambda_intra, cfg.loss.lambda_inter);
    let k = curriculum.n_neg;
    for epoch in 0..cfg.total_epochs() {
        let t0 = Instant::now();
        let bs = intra_batches(&ds.source, cfg, epoch);
        let bt = intra_batches(&ds.target, cfg, epoch);
        let bi = inter_batches(ds, cfg, epoch);
        let steps = bs.len().max(bt.len()).max(bi.len());
        let mut means = [Mean::default(); 4];
        for step in 0..steps {
            let mut tape = Tape::with_exec(cfg.exec);
            let ls = state.source.record(&mut tape);
            let lt = state.target.record(&mut tape);
            let mut intra = [None, None];
            for (slot, (d, batches, leaves)) in [(Domain::Source, &bs, &ls), (Domain::Target, &bt, &lt)].into_iter().enumerate() {
                if let Some(anchors) = batches.get(step) {
                    let g = ds.graph(d);
                    let batch = intra_batch(g, anchors, cfg, epoch, step)?;
                    intra[slot] = with_epoch(epoch, record_intra(&mut tape, leaves, g, &batch, cfg, epoch))?;
                }
            }
            let inter = match bi.get(step) {
                Some(pairs) => {
                    let r = record_inter(&mut tape, &ls, &lt, ds, curriculum, pairs, k, false, cfg, epoch);
                    let r = with_epoch(epoch, r)?;
                    [r.user, r.neighbor]
                }
                None => [None, None],
            };
            for (m, t) in means.iter_mut().zip(intra.iter().chain(inter.iter())) {
                if let Some(t) = t {
                    m.add(tape.scalar(t.node)?, t.count);
                }
            }
            let has_inter = le > 0.0 && inter.iter().any(Option::is_some);
            let step_s = (li > 0.0 && intra[0].is_some()) || has_inter;
            let step_t = (li > 0.0 && intra[1].is_some()) || has_inter;
            let terms = [(intra[0], li), (intra[1], li), (inter[0], le), (inter[1], le)];
            let Some(obj) = objective(&mut tape, &terms)? else { continue };
            let refs = [ls.refs(), lt.refs()].concat();
            let mut g = tape.gradient(obj, &refs)?;
            let gt = g.split_off(3);
            if step_s {
                with_epoch(epoch, state.apply(Domain::Source, &g))?;
            }
            if step_t {
                with_epoch(epoch, state.apply(Domain::Target, &gt))?;
            }
        }
        log.push(EpochRecord {
            epoch,
            stage: Stage::Mixed,
            l_intra_s: means[0].get(),
            l_intra_t: means[1].get(),
            l_inter_u: means[2].get(),
            l_inter_n: means[3].get(),
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(())
}

/// Runs the configured mode from freshly initialized parameters.
pub fn train(ds: &CrossDomainDataset, target_centrality: &CentralityTable, cfg: &TrainConfig) -> Result<(TrainState, TrainLog)> {
    cfg.validate()?;
    let mut state = TrainState::init(ds, cfg)?;
    let mut log = TrainLog::default();
    let curriculum = build_curriculum(ds, target_centrality, cfg)?;
    if cfg.mode == Mode::Mixed {
        train_mixed(ds, &mut state, &curriculum, cfg, &mut log)?;
    } else {
        train_stage_intra(ds, &mut state, cfg, &mut log)?;
        train_stage_inter(ds, &mut state, &curriculum, cfg, &mut log)?;
    }
    Ok((state, log))
}

#[cfg(test)]
mod tests;
