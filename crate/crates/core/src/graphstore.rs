//! Two-domain bipartite interaction graphs, overlapping-user alignment,
//! leave-last-out splits and seeded neighbor sampling.
//!
//! Nodes of one domain share a flat index space: users occupy
//! `0..users` and items `users..users + items`. The encoder and losses
//! work on flat indices; [`NodeId`] is the typed view used at the edges.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::mix;

pub const EDGE_HEADER: &str = "user_id\titem_id";
pub const OVERLAP_HEADER: &str = "source_user_id\ttarget_user_id";

/// Default neighbors drawn per node per encoder layer.
pub const DEFAULT_FANOUT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }

    pub fn parse(s: &str) -> Option<Domain> {
        match s {
            "source" => Some(Domain::Source),
            "target" => Some(Domain::Target),
            _ => None,
        }
    }

    fn tag(self) -> u64 {
        match self {
            Domain::Source => 1,
            Domain::Target => 2,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    User,
    Item,
}

impl NodeKind {
    pub fn opposite(self) -> NodeKind {
        match self {
            NodeKind::User => NodeKind::Item,
            NodeKind::Item => NodeKind::User,
        }
    }

    /// Prefix used in file formats: `u` or `i`.
    pub fn prefix(self) -> &'static str {
        match self {
            NodeKind::User => "u",
            NodeKind::Item => "i",
        }
    }
}

/// Typed node reference. Ordering is lexicographic over
/// `(domain, kind, index)`, so users precede items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub domain: Domain,
    pub kind: NodeKind,
    pub index: usize,
}

impl NodeId {
    pub fn user(domain: Domain, index: usize) -> Self {
        NodeId {
            domain,
            kind: NodeKind::User,
            index,
        }
    }

    pub fn item(domain: Domain, index: usize) -> Self {
        NodeId {
            domain,
            kind: NodeKind::Item,
            index,
        }
    }

    /// `u:<idx>` or `i:<idx>`.
    pub fn label(&self) -> String {
        format!("{}:{}", self.kind.prefix(), self.index)
    }
}

/// Parses a `u:<idx>` / `i:<idx>` label.
pub fn parse_node_label(s: &str) -> Option<(NodeKind, usize)> {
    let (k, idx) = s.split_once(':')?;
    let kind = match k {
        "u" => NodeKind::User,
        "i" => NodeKind::Item,
        _ => return None,
    };
    Some((kind, idx.parse().ok()?))
}

/// One domain's user–item interaction graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGraph {
    domain: Domain,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_lookup: HashMap<String, usize>,
    /// Per user, distinct items in file (chronological) order.
    history: Vec<Vec<u32>>,
    offsets: Vec<usize>,
    adjacency: Vec<u32>,
}

impl DomainGraph {
    /// Builds a graph from per-user item histories. Duplicate items within
    /// a history are collapsed to their first occurrence.
    pub fn from_histories(
        domain: Domain,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        history: Vec<Vec<u32>>,
    ) -> Result<Self> {
        if history.len() != user_ids.len() {
            return Err(Error::Data(format!(
                "{} histories for {} users",
                history.len(),
                user_ids.len()
            )));
        }
        let users = user_ids.len();
        let items = item_ids.len();
        let mut seen = HashSet::new();
        let history: Vec<Vec<u32>> = history
            .into_iter()
            .map(|h| {
                seen.clear();
                h.into_iter().filter(|&i| seen.insert(i)).collect()
            })
            .collect();
        if let Some(bad) = history.iter().flatten().find(|&&i| i as usize >= items) {
            return Err(Error::Data(format!("item index {bad} out of {items}")));
        }

        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); users + items];
        for (u, h) in history.iter().enumerate() {
            for &i in h {
                lists[u].push((users + i as usize) as u32);
                lists[users + i as usize].push(u as u32);
            }
        }
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut adjacency = Vec::new();
        offsets.push(0);
        for mut l in lists {
            l.sort_unstable();
            adjacency.extend(l);
            offsets.push(adjacency.len());
        }
        let user_lookup = user_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(DomainGraph {
            domain,
            user_ids,
            item_ids,
            user_lookup,
            history,
            offsets,
            adjacency,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.users() + self.items()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.len() / 2
    }

    pub fn user_id(&self, u: usize) -> &str {
        &self.user_ids[u]
    }

    pub fn item_id(&self, i: usize) -> &str {
        &self.item_ids[i]
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn user_index(&self, raw: &str) -> Option<usize> {
        self.user_lookup.get(raw).copied()
    }

    /// Items of user `u` in file order.
    pub fn history(&self, u: usize) -> &[u32] {
        &self.history[u]
    }

    pub fn flat(&self, node: NodeId) -> usize {
        match node.kind {
            NodeKind::User => node.index,
            NodeKind::Item => self.users() + node.index,
        }
    }

    pub fn node(&self, flat: usize) -> NodeId {
        if flat < self.users() {
            NodeId::user(self.domain, flat)
        } else {
            NodeId::item(self.domain, flat - self.users())
        }
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.domain == self.domain
            && match node.kind {
                NodeKind::User => node.index < self.users(),
                NodeKind::Item => node.index < self.items(),
            }
    }

    /// Sorted flat neighbor indices of a flat node.
    #[inline]
    pub fn neighbors_flat(&self, flat: usize) -> &[u32] {
        &self.adjacency[self.offsets[flat]..self.offsets[flat + 1]]
    }

    #[inline]
    pub fn degree_flat(&self, flat: usize) -> usize {
        self.offsets[flat + 1] - self.offsets[flat]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.degree_flat(self.flat(node))
    }

    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.neighbors_flat(self.flat(node))
            .iter()
            .map(move |&f| self.node(f as usize))
    }

    pub fn has_edge_flat(&self, a: usize, b: usize) -> bool {
        self.neighbors_flat(a).binary_search(&(b as u32)).is_ok()
    }

    /// Flat index range of the partition opposite to `flat`.
    fn opposite_range(&self, flat: usize) -> std::ops::Range<usize> {
        if flat < self.users() {
            self.users()..self.num_nodes()
        } else {
            0..self.users()
        }
    }
}

/// Loads a `user_id\titem_id` edge file. Dense indices follow first
/// appearance; repeated pairs collapse to one edge.
pub fn load_edges(path: &Path, domain: Domain) -> Result<DomainGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.split('\n');
    let header = lines.next().unwrap_or("");
    if text.is_empty() {
        return Err(Error::parse(path, 1, "empty file"));
    }
    if header.trim_end_matches('\r') != EDGE_HEADER {
        return Err(Error::parse(
            path,
            1,
            format!("expected header {EDGE_HEADER:?}, got {header:?}"),
        ));
    }

    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut users: HashMap<String, u32> = HashMap::new();
    let mut items: HashMap<String, u32> = HashMap::new();
    let mut history: Vec<Vec<u32>> = Vec::new();
    let total = text.split('\n').count();

    for (n, raw) in lines.enumerate() {
        let line_no = n + 2;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() && line_no == total {
            break;
        }
        let mut fields = line.split('\t');
        let (Some(u), Some(i), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(path, line_no, format!("expected 2 tab-separated fields: {line:?}")));
        };
        if u.is_empty() || i.is_empty() {
            return Err(Error::parse(path, line_no, "empty id"));
        }
        let ui = *users.entry(u.to_string()).or_insert_with(|| {
            user_ids.push(u.to_string());
            history.push(Vec::new());
            (user_ids.len() - 1) as u32
        });
        let ii = *items.entry(i.to_string()).or_insert_with(|| {
            item_ids.push(i.to_string());
            (item_ids.len() - 1) as u32
        });
        history[ui as usize].push(ii);
    }
    DomainGraph::from_histories(domain, user_ids, item_ids, history)
}

/// Held-out interactions of one target user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRow {
    pub user: usize,
    pub valid_item: usize,
    pub test_item: usize,
}

/// Minimum target-user degree for a user to receive a split row.
pub const SPLIT_MIN_DEGREE: usize = 3;

/// Source graph, target training graph, overlapping users and the
/// target-domain leave-last-out splits.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossDomainDataset {
    pub source: DomainGraph,
    /// Target graph with validation and test interactions removed.
    pub target: DomainGraph,
    /// `(source user, target user)`, sorted by target user.
    pub overlap: Vec<(usize, usize)>,
    pub splits: Vec<SplitRow>,
    pub seed: u64,
}

impl CrossDomainDataset {
    /// Source user aligned with target user `t`, if any.
    pub fn source_of_target(&self, t: usize) -> Option<usize> {
        self.overlap
            .binary_search_by_key(&t, |&(_, tu)| tu)
            .ok()
            .map(|k| self.overlap[k].0)
    }

    pub fn graph(&self, domain: Domain) -> &DomainGraph {
        match domain {
            Domain::Source => &self.source,
            Domain::Target => &self.target,
        }
    }
}

fn read_overlap(path: &Path, source: &DomainGraph, target: &DomainGraph) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == OVERLAP_HEADER => {}
        Some(h) => {
            return Err(Error::parse(path, 1, format!("expected header {OVERLAP_HEADER:?}, got {h:?}")))
        }
        None => return Err(Error::parse(path, 1, "empty file")),
    }
    let mut pairs = Vec::new();
    let (mut seen_s, mut seen_t) = (HashSet::new(), HashSet::new());
    for (n, line) in lines.enumerate() {
        let line_no = n + 2;
        let line = line.trim_end_matches('\r');
        let Some((s, t)) = line.split_once('\t') else {
            return Err(Error::parse(path, line_no, format!("expected 2 tab-separated fields: {line:?}")));
        };
        let su = source
            .user_index(s)
            .ok_or_else(|| Error::parse(path, line_no, format!("unknown source user {s:?}")))?;
        let tu = target
            .user_index(t)
            .ok_or_else(|| Error::parse(path, line_no, format!("unknown target user {t:?}")))?;
        if !seen_s.insert(su) || !seen_t.insert(tu) {
            return Err(Error::parse(path, line_no, "user aligned more than once"));
        }
        pairs.push((su, tu));
    }
    Ok(pairs)
}

/// Aligns the two domains and carves the target splits: for every target
/// user with at least [`SPLIT_MIN_DEGREE`] interactions the last one is the
/// test item and the second to last the validation item.
pub fn build_dataset(
    source: DomainGraph,
    target: DomainGraph,
    overlap_path: Option<&Path>,
    seed: u64,
) -> Result<CrossDomainDataset> {
    let mut overlap = match overlap_path {
        Some(p) => read_overlap(p, &source, &target)?,
        None => target
            .user_ids()
            .iter()
            .enumerate()
            .filter_map(|(t, raw)| source.user_index(raw).map(|s| (s, t)))
            .collect(),
    };
    if overlap.is_empty() {
        return Err(Error::Data("no overlapping users between domains".into()));
    }
    overlap.sort_unstable_by_key(|&(_, t)| t);

    let mut splits = Vec::new();
    let mut train_history = Vec::with_capacity(target.users());
    for u in 0..target.users() {
        let h = target.history(u);
        if h.len() >= SPLIT_MIN_DEGREE {
            splits.push(SplitRow {
                user: u,
                valid_item: h[h.len() - 2] as usize,
                test_item: h[h.len() - 1] as usize,
            });
            train_history.push(h[..h.len() - 2].to_vec());
        } else {
            train_history.push(h.to_vec());
        }
    }
    let target = DomainGraph::from_histories(
        Domain::Target,
        target.user_ids.clone(),
        target.item_ids.clone(),
        train_history,
    )?;
    Ok(CrossDomainDataset {
        source,
        target,
        overlap,
        splits,
        seed,
    })
}

/// Loads `source.tsv`, `target.tsv` and, when present, `overlap.tsv` from
/// `dir`.
pub fn load_dataset(dir: &Path, seed: u64) -> Result<CrossDomainDataset> {
    let source = load_edges(&dir.join("source.tsv"), Domain::Source)?;
    let target = load_edges(&dir.join("target.tsv"), Domain::Target)?;
    let overlap = dir.join("overlap.tsv");
    build_dataset(source, target, overlap.exists().then_some(overlap.as_path()), seed)
}

/// Neighbor sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub fanout: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            fanout: DEFAULT_FANOUT,
            seed: 0,
        }
    }
}

/// Up to `fanout` distinct neighbors of a flat node, uniformly without
/// replacement, in draw order. A pure function of
/// `(seed, domain, node, epoch, layer)`.
pub fn sample_neighbors_flat(
    g: &DomainGraph,
    node: usize,
    cfg: &SamplerConfig,
    epoch: u64,
    layer: u64,
) -> Vec<u32> {
    let nbrs = g.neighbors_flat(node);
    let k = cfg.fanout.min(nbrs.len());
    if k == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[cfg.seed, g.domain.tag(), node as u64, epoch, layer]));
    let mut pool = nbrs.to_vec();
    let (chosen, _) = pool.partial_shuffle(&mut rng, k);
    chosen.to_vec()
}

pub fn sample_neighbors(
    g: &DomainGraph,
    node: NodeId,
    cfg: &SamplerConfig,
    epoch: u64,
    layer: u64,
) -> Vec<NodeId> {
    sample_neighbors_flat(g, g.flat(node), cfg, epoch, layer)
        .into_iter()
        .map(|f| g.node(f as usize))
        .collect()
}

/// A uniformly random node of the opposite partition not adjacent to
/// `node`, as a flat index.
pub fn sample_non_neighbor_flat<R: Rng + ?Sized>(g: &DomainGraph, node: usize, rng: &mut R) -> Result<usize> {
    let range = g.opposite_range(node);
    let size = range.len();
    let nbrs = g.neighbors_flat(node);
    if nbrs.len() >= size {
        return Err(Error::Degenerate(format!(
            "{} is adjacent to every node of the opposite partition",
            g.node(node).label()
        )));
    }
    if nbrs.len() * 2 <= size {
        loop {
            let c = rng.gen_range(range.clone());
            if nbrs.binary_search(&(c as u32)).is_err() {
                return Ok(c);
            }
        }
    }
    // Dense neighborhood: draw the k-th non-neighbor directly.
    let mut k = rng.gen_range(0..size - nbrs.len());
    let mut last = range.start;
    for &n in nbrs {
        let gap = n as usize - last;
        if k < gap {
            return Ok(last + k);
        }
        k -= gap;
        last = n as usize + 1;
    }
    Ok(last + k)
}

pub fn sample_non_neighbor<R: Rng + ?Sized>(g: &DomainGraph, node: NodeId, rng: &mut R) -> Result<NodeId> {
    sample_non_neighbor_flat(g, g.flat(node), rng).map(|f| g.node(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn graph(lines: &[(&str, &str)]) -> DomainGraph {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("user_id\titem_id\n");
        for (u, i) in lines {
            body.push_str(&format!("{u}\t{i}\n"));
        }
        let p = write(dir.path(), "e.tsv", &body);
        load_edges(&p, Domain::Target).unwrap()
    }

    #[test]
    fn duplicates_collapse() {
        let g = graph(&[("a", "x"), ("a", "x"), ("b", "x")]);
        assert_eq!(g.edge_count(), 2);
        assert_eq!((g.users(), g.items()), (2, 1));
    }

    #[test]
    fn header_only_is_an_empty_graph() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "e.tsv", "user_id\titem_id\n");
        let g = load_edges(&p, Domain::Source).unwrap();
        assert_eq!((g.users(), g.items(), g.edge_count()), (0, 0, 0));
    }

    #[test]
    fn degree_sums_on_small_fixture() {
        // 4 users, 3 items, 6 distinct pairs; counted by hand.
        let g = graph(&[("u1", "a"), ("u1", "b"), ("u2", "a"), ("u3", "c"), ("u4", "a"), ("u4", "c")]);
        assert_eq!((g.users(), g.items()), (4, 3));
        let user_side: usize = (0..4).map(|u| g.degree(NodeId::user(Domain::Target, u))).sum();
        let item_side: usize = (0..3).map(|i| g.degree(NodeId::item(Domain::Target, i))).sum();
        assert_eq!((user_side, item_side), (6, 6));
        assert_eq!(user_side + item_side, 12);
    }

    #[test]
    fn malformed_and_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bad.tsv", "user_id\titem_id\na\tb\nc d\n");
        match load_edges(&p, Domain::Source) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let p = write(dir.path(), "empty.tsv", "");
        assert!(load_edges(&p, Domain::Source).is_err());
        let p = write(dir.path(), "hdr.tsv", "a\tb\n");
        assert!(load_edges(&p, Domain::Source).is_err());
        let p = write(dir.path(), "three.tsv", "user_id\titem_id\na\tb\tc\n");
        assert!(load_edges(&p, Domain::Source).is_err());
    }

    #[test]
    fn adjacency_is_symmetric_sorted_and_bipartite() {
        let g = graph(&[("u1", "b"), ("u1", "a"), ("u2", "a"), ("u2", "b"), ("u3", "c")]);
        for f in 0..g.num_nodes() {
            let n = g.neighbors_flat(f);
            assert!(n.windows(2).all(|w| w[0] < w[1]));
            for &m in n {
                assert!(g.has_edge_flat(m as usize, f));
                assert_ne!(g.node(f).kind, g.node(m as usize).kind);
            }
        }
    }

    #[test]
    fn split_protocol() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.tsv", "user_id\titem_id\nx\tp\ny\tp\n");
        let t = write(
            dir.path(),
            "t.tsv",
            "user_id\titem_id\nx\ta\nx\tb\nx\tc\nx\td\nx\te\ny\ta\ny\tb\n",
        );
        let ds = build_dataset(
            load_edges(&s, Domain::Source).unwrap(),
            load_edges(&t, Domain::Target).unwrap(),
            None,
            0,
        )
        .unwrap();
        assert_eq!(ds.overlap, vec![(0, 0), (1, 1)]);
        assert_eq!(ds.splits.len(), 1);
        let row = ds.splits[0];
        assert_eq!(ds.target.item_id(row.test_item), "e");
        assert_eq!(ds.target.item_id(row.valid_item), "d");
        assert_eq!(ds.target.degree(NodeId::user(Domain::Target, 0)), 3);
        assert_eq!(ds.target.degree(NodeId::user(Domain::Target, 1)), 2);
        let x = ds.target.flat(NodeId::user(Domain::Target, 0));
        let e = ds.target.flat(NodeId::item(Domain::Target, row.test_item));
        assert!(!ds.target.has_edge_flat(x, e));
    }

    #[test]
    fn overlap_file_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.tsv", "user_id\titem_id\nx\tp\ny\tp\n");
        let t = write(dir.path(), "t.tsv", "user_id\titem_id\nA\ta\nB\tb\n");
        let load = || {
            (
                load_edges(&s, Domain::Source).unwrap(),
                load_edges(&t, Domain::Target).unwrap(),
            )
        };
        let (sg, tg) = load();
        assert!(matches!(build_dataset(sg, tg, None, 0), Err(Error::Data(_))));

        let o = write(dir.path(), "o.tsv", "source_user_id\ttarget_user_id\ny\tA\n");
        let (sg, tg) = load();
        let ds = build_dataset(sg, tg, Some(&o), 0).unwrap();
        assert_eq!(ds.overlap, vec![(1, 0)]);
        assert_eq!(ds.source_of_target(0), Some(1));
        assert_eq!(ds.source_of_target(1), None);

        let o = write(dir.path(), "o2.tsv", "source_user_id\ttarget_user_id\nzz\tA\n");
        let (sg, tg) = load();
        assert!(build_dataset(sg, tg, Some(&o), 0).is_err());

        let o = write(dir.path(), "o3.tsv", "source_user_id\ttarget_user_id\nx\tA\nx\tB\n");
        let (sg, tg) = load();
        assert!(build_dataset(sg, tg, Some(&o), 0).is_err());
    }

    #[test]
    fn neighbor_sampling_contract() {
        let g = graph(&[("u", "a"), ("u", "b"), ("u", "c"), ("v", "a")]);
        let u = NodeId::user(Domain::Target, 0);
        let cfg = SamplerConfig { fanout: 5, seed: 3 };
        let all = sample_neighbors(&g, u, &cfg, 0, 1);
        assert_eq!(all.len(), 3);
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, g.neighbors(u).collect::<Vec<_>>());
        assert_eq!(all, sample_neighbors(&g, u, &cfg, 0, 1));

        let small = SamplerConfig { fanout: 2, seed: 3 };
        let two = sample_neighbors(&g, u, &small, 4, 2);
        assert_eq!(two.len(), 2);
        assert_ne!(two[0], two[1]);
        assert!(two.iter().all(|n| g.neighbors(u).any(|m| m == *n)));

        let iso = DomainGraph::from_histories(Domain::Source, vec!["a".into()], vec!["z".into()], vec![vec![]]).unwrap();
        assert!(sample_neighbors_flat(&iso, 0, &cfg, 0, 0).is_empty());
    }

    #[test]
    fn non_neighbor_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = DomainGraph::from_histories(
            Domain::Source,
            vec!["u".into()],
            vec!["a".into(), "b".into()],
            vec![vec![0]],
        )
        .unwrap();
        for _ in 0..20 {
            let n = sample_non_neighbor(&g, NodeId::user(Domain::Source, 0), &mut rng).unwrap();
            assert_eq!(n, NodeId::item(Domain::Source, 1));
        }
        let full = DomainGraph::from_histories(
            Domain::Source,
            vec!["u".into()],
            vec!["a".into(), "b".into()],
            vec![vec![0, 1]],
        )
        .unwrap();
        assert!(matches!(
            sample_non_neighbor(&full, NodeId::user(Domain::Source, 0), &mut rng),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn non_neighbor_frequencies_are_uniform() {
        let items: Vec<String> = (0..10).map(|i| format!("i{i}")).collect();
        let g = DomainGraph::from_histories(Domain::Source, vec!["u".into()], items, vec![vec![2, 7]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 10];
        for _ in 0..1000 {
            let n = sample_non_neighbor(&g, NodeId::user(Domain::Source, 0), &mut rng).unwrap();
            counts[n.index] += 1;
        }
        assert_eq!(counts[2] + counts[7], 0);
        for (i, &c) in counts.iter().enumerate() {
            if i != 2 && i != 7 {
                let f = c as f64 / 1000.0;
                assert!((f - 0.125).abs() <= 0.05, "item {i}: {f}");
            }
        }
    }

    #[test]
    fn dense_non_neighbor_branch_is_uniform_over_complement() {
        let items: Vec<String> = (0..6).map(|i| format!("i{i}")).collect();
        let g = DomainGraph::from_histories(Domain::Source, vec!["u".into()], items, vec![vec![0, 1, 3, 5]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen = HashSet::new();
        for _ in 0..200 {
            seen.insert(sample_non_neighbor(&g, NodeId::user(Domain::Source, 0), &mut rng).unwrap().index);
        }
        assert_eq!(seen, HashSet::from([2, 4]));
    }

    #[test]
    fn node_labels_round_trip() {
        let n = NodeId::item(Domain::Target, 17);
        assert_eq!(n.label(), "i:17");
        assert_eq!(parse_node_label("i:17"), Some((NodeKind::Item, 17)));
        assert_eq!(parse_node_label("x:1"), None);
        assert!(NodeId::user(Domain::Target, 99) < NodeId::item(Domain::Target, 0));
    }
}
