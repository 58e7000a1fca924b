//! Sequential vs rayon execution of the data-parallel hot paths.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sccdr::centrality::{katz_centrality_with, KatzConfig};
use sccdr::diffmath::Tensor;
use sccdr::encoder::{embed_all, EncoderDims, EncoderParams};
use sccdr::evaluation::{rank_queries, split_queries, Similarity, Split};
use sccdr::graphstore::{load_dataset, CrossDomainDataset};
use sccdr::par::Exec;
use sccdr::synthdata::{generate, SynthConfig};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn dataset() -> CrossDomainDataset {
    let dir = tempfile::tempdir().unwrap();
    generate(&SynthConfig::default()).unwrap().write(dir.path()).unwrap();
    load_dataset(dir.path(), 42).unwrap()
}

fn bench(c: &mut Criterion) {
    let ds = dataset();
    let params = EncoderParams::for_graph(&ds.target, EncoderDims::default(), 42).unwrap();
    let z = embed_all(&params, &ds.target, Exec::Sequential).unwrap();
    let (u, d) = (ds.target.users(), z.cols());
    let (head, tail) = z.data().split_at(u * d);
    let users = Tensor::from_vec(u, d, head.to_vec()).unwrap();
    let items = Tensor::from_vec(z.rows() - u, d, tail.to_vec()).unwrap();
    let queries = split_queries(&ds, Split::Test, false);
    let katz = KatzConfig {
        alpha: 0.02,
        ..KatzConfig::default()
    };

    let mut g = c.benchmark_group("exec");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("katz_source", name), &exec, |b, &e| {
            b.iter(|| katz_centrality_with(&ds.source, &katz, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("embed_all_target", name), &exec, |b, &e| {
            b.iter(|| embed_all(&params, &ds.target, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("rank_test_rows", name), &exec, |b, &e| {
            b.iter(|| rank_queries(&users, &items, &queries, Similarity::Cosine, e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
