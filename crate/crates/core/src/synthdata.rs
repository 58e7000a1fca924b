//! Seeded two-domain interaction data with planted clusters shared by the
//! aligned users, so that source structure is informative for the target.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graphstore::{EDGE_HEADER, OVERLAP_HEADER};
use crate::seeding::rng_for;

pub const CLUSTERS_HEADER: &str = "node\tcluster";

const TAG_SYNTH: u64 = 0x5D;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub clusters: usize,
    pub source_users: usize,
    pub target_users: usize,
    pub overlap: usize,
    pub source_items: usize,
    pub target_items: usize,
    pub source_degree: usize,
    pub target_degree: usize,
    /// Probability that an edge stays inside the user's cluster.
    pub p_in: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            clusters: 8,
            source_users: 2000,
            target_users: 2000,
            overlap: 500,
            source_items: 1000,
            target_items: 500,
            source_degree: 20,
            target_degree: 3,
            p_in: 0.9,
            seed: 42,
        }
    }
}

impl SynthConfig {
    /// Probability of each particular foreign cluster.
    pub fn p_out(&self) -> f64 {
        if self.clusters > 1 {
            (1.0 - self.p_in) / (self.clusters - 1) as f64
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.clusters == 0 {
            return bad("clusters must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.p_in) || (self.clusters > 1 && self.p_in <= self.p_out()) {
            return bad(format!(
                "p_in {} must lie in [0, 1] and exceed the per-cluster p_out {}",
                self.p_in,
                self.p_out()
            ));
        }
        if self.overlap > self.source_users.min(self.target_users) {
            return bad(format!("overlap {} exceeds the user counts", self.overlap));
        }
        for (name, deg, items) in [
            ("source", self.source_degree, self.source_items),
            ("target", self.target_degree, self.target_items),
        ] {
            if deg > items {
                return bad(format!("{name} degree {deg} exceeds its {items} items"));
            }
            if items < self.clusters {
                return bad(format!("{name} has fewer items than clusters"));
            }
        }
        Ok(())
    }
}

/// Generated files' content, in write order.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub source_edges: Vec<(String, String)>,
    pub target_edges: Vec<(String, String)>,
    pub overlap: Vec<String>,
    /// `(domain:raw_id, cluster)` for every user and item.
    pub clusters: Vec<(String, usize)>,
}

/// Balanced cluster labels in random order.
fn assign(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut c: Vec<usize> = (0..n).map(|i| i % k).collect();
    c.shuffle(rng);
    c
}

struct Side<'a> {
    users: &'a [(String, usize)],
    items: usize,
    item_prefix: &'a str,
    degree: usize,
}

fn draw_edges(side: &Side<'_>, cfg: &SynthConfig, rng: &mut impl Rng, clusters_out: &mut Vec<(String, usize)>, domain: &str) -> Vec<(String, String)> {
    let k = cfg.clusters;
    let item_cluster = assign(side.items, k, rng);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in item_cluster.iter().enumerate() {
        members[c].push(i);
        clusters_out.push((format!("{domain}:{}{i}", side.item_prefix), c));
    }
    let mut edges = Vec::with_capacity(side.users.len() * side.degree);
    let mut used = vec![false; side.items];
    for (user, uc) in side.users {
        let mut remaining: Vec<usize> = members.iter().map(Vec::len).collect();
        let mut chosen = Vec::with_capacity(side.degree);
        for _ in 0..side.degree {
            let mut c = if k == 1 || rng.gen_bool(cfg.p_in) {
                *uc
            } else {
                let o = rng.gen_range(0..k - 1);
                if o >= *uc {
                    o + 1
                } else {
                    o
                }
            };
            if remaining[c] == 0 {
                let open: Vec<usize> = (0..k).filter(|&j| remaining[j] > 0).collect();
                c = *open.choose(rng).expect("degree <= items");
            }
            // Uniform over the cluster's items this user has not taken.
            let mut r = rng.gen_range(0..remaining[c]);
            let item = *members[c]
                .iter()
                .find(|&&i| {
                    if used[i] {
                        return false;
                    }
                    if r == 0 {
                        return true;
                    }
                    r -= 1;
                    false
                })
                .expect("remaining count matches");
            used[item] = true;
            remaining[c] -= 1;
            chosen.push(item);
            edges.push((user.clone(), format!("{}{item}", side.item_prefix)));
        }
        for i in chosen {
            used[i] = false;
        }
    }
    edges
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let k = cfg.clusters;
    let mut rng = rng_for(&[cfg.seed, TAG_SYNTH]);
    let shared = assign(cfg.overlap, k, &mut rng);
    let only_s = assign(cfg.source_users - cfg.overlap, k, &mut rng);
    let only_t = assign(cfg.target_users - cfg.overlap, k, &mut rng);
    let overlap: Vec<String> = (0..cfg.overlap).map(|n| format!("u{n}")).collect();
    let users = |prefix: &str, own: &[usize]| -> Vec<(String, usize)> {
        overlap
            .iter()
            .cloned()
            .zip(shared.iter().copied())
            .chain(own.iter().enumerate().map(|(n, &c)| (format!("{prefix}{n}"), c)))
            .collect()
    };
    let su = users("s_u", &only_s);
    let tu = users("t_u", &only_t);
    let mut clusters: Vec<(String, usize)> = Vec::new();
    for (d, list) in [("source", &su), ("target", &tu)] {
        clusters.extend(list.iter().map(|(u, c)| (format!("{d}:{u}"), *c)));
    }
    let source_edges = draw_edges(
        &Side {
            users: &su,
            items: cfg.source_items,
            item_prefix: "s_i",
            degree: cfg.source_degree,
        },
        cfg,
        &mut rng,
        &mut clusters,
        "source",
    );
    let target_edges = draw_edges(
        &Side {
            users: &tu,
            items: cfg.target_items,
            item_prefix: "t_i",
            degree: cfg.target_degree,
        },
        cfg,
        &mut rng,
        &mut clusters,
        "target",
    );
    Ok(SynthData {
        source_edges,
        target_edges,
        overlap,
        clusters,
    })
}

impl SynthData {
    /// Writes `source.tsv`, `target.tsv`, `overlap.tsv` and `clusters.tsv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let edges = |list: &[(String, String)]| {
            let mut s = format!("{EDGE_HEADER}\n");
            for (u, i) in list {
                let _ = writeln!(s, "{u}\t{i}");
            }
            s
        };
        let mut overlap = format!("{OVERLAP_HEADER}\n");
        for u in &self.overlap {
            let _ = writeln!(overlap, "{u}\t{u}");
        }
        let mut clusters = format!("{CLUSTERS_HEADER}\n");
        for (n, c) in &self.clusters {
            let _ = writeln!(clusters, "{n}\t{c}");
        }
        for (name, body) in [
            ("source.tsv", edges(&self.source_edges)),
            ("target.tsv", edges(&self.target_edges)),
            ("overlap.tsv", overlap),
            ("clusters.tsv", clusters),
        ] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    pub fn cluster_of(&self) -> std::collections::HashMap<&str, usize> {
        self.clusters.iter().map(|(n, c)| (n.as_str(), *c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn in_cluster_fraction(d: &SynthData, domain: &str, edges: &[(String, String)]) -> f64 {
        let c = d.cluster_of();
        let inside = edges
            .iter()
            .filter(|(u, i)| c[format!("{domain}:{u}").as_str()] == c[format!("{domain}:{i}").as_str()])
            .count();
        inside as f64 / edges.len() as f64
    }

    #[test]
    fn default_counts_are_exact() {
        let d = generate(&SynthConfig::default()).unwrap();
        assert_eq!(d.target_edges.len(), 6000);
        assert_eq!(d.source_edges.len(), 40_000);
        let distinct: HashSet<_> = d.target_edges.iter().collect();
        assert_eq!(distinct.len(), 6000);
        assert_eq!(d.overlap.len(), 500);
    }

    #[test]
    fn in_cluster_fraction_tracks_p_in() {
        let d = generate(&SynthConfig::default()).unwrap();
        for (dom, e) in [("source", &d.source_edges), ("target", &d.target_edges)] {
            let f = in_cluster_fraction(&d, dom, e);
            assert!((f - 0.9).abs() < 0.02, "{dom}: {f}");
        }
    }

    #[test]
    fn aligned_users_keep_their_cluster() {
        let d = generate(&SynthConfig::default()).unwrap();
        let c = d.cluster_of();
        for u in &d.overlap {
            assert_eq!(c[format!("source:{u}").as_str()], c[format!("target:{u}").as_str()]);
        }
    }

    #[test]
    fn single_cluster_degenerate_case() {
        let cfg = SynthConfig {
            clusters: 1,
            p_in: 1.0,
            source_users: 30,
            target_users: 20,
            overlap: 10,
            source_items: 15,
            target_items: 8,
            source_degree: 15,
            target_degree: 4,
            seed: 3,
        };
        let d = generate(&cfg).unwrap();
        assert_eq!(in_cluster_fraction(&d, "target", &d.target_edges), 1.0);
        assert_eq!(d.source_edges.len(), 30 * 15);
        let per_user: HashSet<_> = d.source_edges.iter().filter(|(u, _)| u == "u0").map(|(_, i)| i).collect();
        assert_eq!(per_user.len(), 15);
    }

    #[test]
    fn same_seed_same_files() {
        let cfg = SynthConfig {
            source_users: 200,
            target_users: 150,
            overlap: 50,
            ..SynthConfig::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate(&cfg).unwrap().write(a.path()).unwrap();
        generate(&cfg).unwrap().write(b.path()).unwrap();
        for f in ["source.tsv", "target.tsv", "overlap.tsv", "clusters.tsv"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let other = generate(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(other, generate(&SynthConfig::default()).unwrap());
    }

    #[test]
    fn infeasible_configs() {
        let base = SynthConfig::default();
        for bad in [
            SynthConfig {
                target_degree: 501,
                ..base.clone()
            },
            SynthConfig {
                overlap: 2001,
                ..base.clone()
            },
            SynthConfig {
                p_in: 0.1,
                ..base.clone()
            },
            SynthConfig {
                clusters: 0,
                ..base.clone()
            },
        ] {
            assert!(matches!(generate(&bad), Err(Error::Config(_))));
        }
    }
}
