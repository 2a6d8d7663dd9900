use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use hge_bench::bench_events;
use hge_core::events::sort_journeys;
use hge_core::multigraph::{build_multigraph, duplicate_and_annotate, train_patient_embeddings, PatientConfig};
use hge_core::parallel::ThreadMode;
use hge_core::service_graph::build_cooccurrence;
use hge_core::sgns::{train_sgns, SgnsConfig};
use hge_core::walks::{generate_walks, WalkConfig};

fn bench_cooccurrence(c: &mut Criterion) {
    let events = bench_events();
    let journeys = sort_journeys(&events);
    c.bench_function("build_cooccurrence_400p", |b| {
        b.iter(|| build_cooccurrence(black_box(&journeys), 8).unwrap())
    });
}

fn bench_walks(c: &mut Criterion) {
    let events = bench_events();
    let graph = build_cooccurrence(&sort_journeys(&events), 8).unwrap();
    let cfg = WalkConfig { walks_per_node: 5, walk_length: 40, seed: 1, ..WalkConfig::default() };
    c.bench_function("generate_walks_50svc", |b| {
        b.iter(|| generate_walks(black_box(&graph), &cfg).unwrap())
    });
}

fn bench_sgns_epoch(c: &mut Criterion) {
    let events = bench_events();
    let graph = build_cooccurrence(&sort_journeys(&events), 8).unwrap();
    let wcfg = WalkConfig { walks_per_node: 5, walk_length: 40, seed: 1, ..WalkConfig::default() };
    let walks = generate_walks(&graph, &wcfg).unwrap();
    let scfg = SgnsConfig {
        dim: 64,
        window: 5,
        negatives: 5,
        epochs: 1,
        seed: 2,
        ..SgnsConfig::default()
    };
    c.bench_function("sgns_epoch_dim64", |b| {
        b.iter(|| {
            train_sgns(
                black_box(&walks),
                graph.services(),
                hge_core::embedding::EntityKind::Service,
                &scfg,
                ThreadMode::Deterministic,
            )
            .unwrap()
        })
    });
}

fn bench_patient_epoch(c: &mut Criterion) {
    use hge_core::embedding::{EmbeddingTable, EntityKind};
    use rand::Rng;
    let events = bench_events();
    let hybrid = duplicate_and_annotate(&build_multigraph(&events));
    // Frozen random service/doctor tables stand in for the upstream stages.
    let mut rng = hge_core::rng::seeded_rng(3);
    let mut ids: Vec<String> = events.iter().map(|e| e.service_id.clone()).collect();
    ids.sort_unstable();
    ids.dedup();
    let services = EmbeddingTable::new(
        EntityKind::Service,
        ids.clone(),
        32,
        (0..ids.len() * 32).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let mut doc_ids: Vec<String> = events.iter().map(|e| e.doctor_id.clone()).collect();
    doc_ids.sort_unstable();
    doc_ids.dedup();
    let doctors = EmbeddingTable::new(
        EntityKind::Doctor,
        doc_ids.clone(),
        32,
        (0..doc_ids.len() * 32).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let cfg = PatientConfig { dim: 32, negatives: 5, epochs: 1, seed: 4, ..PatientConfig::default() };
    c.bench_function("patient_epoch_dim32", |b| {
        b.iter(|| {
            train_patient_embeddings(
                black_box(&hybrid),
                &services,
                &doctors,
                &cfg,
                ThreadMode::Deterministic,
            )
            .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_cooccurrence,
    bench_walks,
    bench_sgns_epoch,
    bench_patient_epoch
);
criterion_main!(benches);
