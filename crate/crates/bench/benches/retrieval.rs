use std::hint::black_box;

use avatar_core::eval::build_suite_case;
use avatar_core::index::VectorIndex;
use avatar_core::retrieval::build_pool;
use avatar_core::synth::{generate_catalog, SynthSpec, DEFAULT_LAMBDA};
use avatar_core::*;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn catalog(n: usize) -> Vec<Asset> {
    let mut spec = SynthSpec::uniform(64, &["c"], 8, n, 1);
    spec.noise_sigma = 0.1;
    generate_catalog(&spec).unwrap().assets()
}

fn index_search(c: &mut Criterion) {
    let mut group = c.benchmark_group("index_search");
    for n in [1_000, 10_000] {
        let assets = catalog(n);
        let idx = build_index("c", &assets).unwrap();
        let query = assets[n / 2].embedding.clone();
        for k in [1, 40] {
            group.bench_with_input(BenchmarkId::new(format!("k{k}"), n), &k, |b, &k| {
                b.iter(|| idx.search(black_box(&query), k).unwrap())
            });
        }
    }
    group.finish();
}

fn suppression(c: &mut Criterion) {
    let case = build_suite_case(1, DEFAULT_LAMBDA, FusionWeights::default()).unwrap();
    let g = case.scenario.truth.g.clone();
    let others: Vec<&CategorySubspace> = case
        .scenario
        .subspaces
        .values()
        .filter(|s| s.category_id != "body")
        .collect();
    c.bench_function("suppress_4_subspaces_d64", |b| {
        b.iter(|| suppress(black_box(&g), &others).unwrap())
    });
    let embs: Vec<EmbeddingVector> = catalog(1_000).into_iter().map(|a| a.embedding).collect();
    c.bench_function("subspace_svd_n1000_d64", |b| {
        b.iter(|| compute_category_subspace("c", black_box(&embs), &SubspaceOptions::default()).unwrap())
    });
}

fn pool(c: &mut Criterion) {
    let assets = catalog(1_000);
    let idx = build_index("c", &assets).unwrap();
    let tag = |hits: Vec<SearchHit>, source| -> Vec<Candidate> {
        hits.into_iter()
            .map(|h| Candidate {
                asset_id: h.asset_id,
                score: h.score,
                source,
            })
            .collect()
    };
    let part = tag(idx.search(&assets[3].embedding, 40).unwrap(), Source::Part);
    let residual = tag(idx.search(&assets[4].embedding, 40).unwrap(), Source::ConceptResidual);
    let branches = vec![part, residual];
    c.bench_function("build_pool_2x40", |b| b.iter(|| build_pool("c", black_box(&branches), 40)));
}

criterion_group!(benches, index_search, suppression, pool);
criterion_main!(benches);
