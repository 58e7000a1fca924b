//! Small seeded fixtures shared by unit tests.

use crate::graphstore::{build_dataset, CrossDomainDataset, Domain, DomainGraph};

fn domain(d: Domain, users: &[&str], items: usize, histories: Vec<Vec<u32>>) -> DomainGraph {
    DomainGraph::from_histories(
        d,
        users.iter().map(|s| s.to_string()).collect(),
        (0..items).map(|i| format!("{}{i}", d.name())).collect(),
        histories,
    )
    .unwrap()
}

/// 20 nodes: 4 users and 6 items per domain; three aligned users; every
/// target user keeps two training edges.
pub(crate) fn fixture() -> CrossDomainDataset {
    let source = domain(
        Domain::Source,
        &["a", "b", "c", "s"],
        6,
        vec![vec![0, 1, 2], vec![1, 2, 3], vec![3, 4, 5, 0], vec![5, 4]],
    );
    let target = domain(
        Domain::Target,
        &["a", "b", "c", "t"],
        6,
        vec![vec![0, 1, 2, 3], vec![1, 2, 4, 5], vec![2, 3, 5, 0], vec![4, 5, 1, 3]],
    );
    build_dataset(source, target, None, 7).unwrap()
}
