//! Bipartite graphs and the single-relation baseline embeddings.
//!
//! The baselines cannot fuse doctors and services at once, so each runs on
//! one of two bipartite projections of the events: patient-service or
//! patient-doctor (the third entity collapsed, edge weight = event count).

use std::collections::BTreeMap;

use crate::embedding::{EmbeddingTable, EntityKind};
use crate::error::{Error, Result};
use crate::events::JourneyEvent;
use crate::parallel::ThreadMode;
use crate::second_order::{train_second_order, ContextModel, SecondOrderConfig};
use crate::service_graph::ServiceGraph;
use crate::sgns::{train_sgns, SgnsConfig};
use crate::walks::{generate_walks, WalkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BipartiteMode {
    PatientService,
    PatientDoctor,
}

impl BipartiteMode {
    pub fn name(self) -> &'static str {
        match self {
            BipartiteMode::PatientService => "service",
            BipartiteMode::PatientDoctor => "doctor",
        }
    }
}

/// Weighted bipartite simple graph between patients and one other entity.
#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    pub patients: Vec<String>,
    pub others: Vec<String>,
    /// `(patient index, other index, weight)`, sorted.
    pub edges: Vec<(usize, usize, u64)>,
}

/// Collapse the third entity: edge weight = number of events for the
/// (patient, other) pair.
pub fn build_bipartite(events: &[JourneyEvent], mode: BipartiteMode) -> BipartiteGraph {
    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    for e in events {
        let other = match mode {
            BipartiteMode::PatientService => e.service_id.clone(),
            BipartiteMode::PatientDoctor => e.doctor_id.clone(),
        };
        *counts.entry((e.patient_id.clone(), other)).or_insert(0) += 1;
    }
    let mut patients: Vec<String> = counts.keys().map(|(p, _)| p.clone()).collect();
    patients.sort_unstable();
    patients.dedup();
    let mut others: Vec<String> = counts.keys().map(|(_, o)| o.clone()).collect();
    others.sort_unstable();
    others.dedup();
    let p_index: BTreeMap<&str, usize> =
        patients.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let o_index: BTreeMap<&str, usize> =
        others.iter().enumerate().map(|(i, o)| (o.as_str(), i)).collect();
    let edges = counts
        .iter()
        .map(|((p, o), &w)| (p_index[p.as_str()], o_index[o.as_str()], w))
        .collect();
    BipartiteGraph { patients, others, edges }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Node2vec,
    Line2,
}

impl BaselineMethod {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Node2vec => "node2vec",
            BaselineMethod::Line2 => "line2",
        }
    }
}

/// Baseline hyperparameters; node2vec reuses the walk + SGNS machinery,
/// line2 reuses the second-order trainer with free context vectors.
#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub dim: usize,
    pub walk: WalkConfig,
    pub sgns: SgnsConfig,
    pub second_order: SecondOrderConfig,
}

impl BaselineConfig {
    pub fn with_dim_seed(dim: usize, seed: u64) -> Self {
        BaselineConfig {
            dim,
            walk: WalkConfig { seed, ..WalkConfig::default() },
            sgns: SgnsConfig { dim, seed, ..SgnsConfig::default() },
            second_order: SecondOrderConfig {
                dim,
                negatives: 10,
                epochs: 5,
                learning_rate: 0.025,
                min_learning_rate: 1.0e-4,
                samples_per_epoch: None,
                context_lr_scale: 1.0,
                track_exact_loss: false,
                seed,
            },
        }
    }
}

// Patient ids can collide with service/doctor ids once the bipartite graph
// is treated as homogeneous; prefixes keep the sides apart.
const PATIENT_PREFIX: &str = "P\u{1}";
const OTHER_PREFIX: &str = "O\u{1}";

/// View the bipartite graph as a homogeneous weighted graph with prefixed
/// vertex names. Exposed for tests that inspect walk alternation.
pub fn to_homogeneous(graph: &BipartiteGraph) -> Result<ServiceGraph> {
    ServiceGraph::from_edges(graph.edges.iter().map(|&(p, o, w)| {
        (
            format!("{PATIENT_PREFIX}{}", graph.patients[p]),
            format!("{OTHER_PREFIX}{}", graph.others[o]),
            w,
        )
    }))
}

/// Train one baseline on a bipartite graph; only patient rows are returned.
pub fn run_baseline(
    graph: &BipartiteGraph,
    method: BaselineMethod,
    cfg: &BaselineConfig,
    mode: ThreadMode,
) -> Result<EmbeddingTable> {
    if graph.edges.is_empty() {
        return Err(Error::Empty("bipartite graph"));
    }
    match method {
        BaselineMethod::Node2vec => {
            let g = to_homogeneous(graph)?;
            let walks = generate_walks(&g, &cfg.walk)?;
            let out = train_sgns(&walks, g.services(), EntityKind::Service, &cfg.sgns, mode)?;
            let table = out.embeddings;
            let mut ids = Vec::new();
            let mut data = Vec::new();
            for (i, id) in table.ids().iter().enumerate() {
                if let Some(stripped) = id.strip_prefix(PATIENT_PREFIX) {
                    ids.push(stripped.to_string());
                    data.extend_from_slice(table.row(i));
                }
            }
            EmbeddingTable::new(EntityKind::Patient, ids, table.dim(), data)
        }
        BaselineMethod::Line2 => {
            let edges: Vec<(usize, usize, f64)> = graph
                .edges
                .iter()
                .map(|&(p, o, w)| (p, o, w as f64))
                .collect();
            let contexts = ContextModel::free(graph.others.len(), cfg.second_order.dim);
            let result = train_second_order(
                &edges,
                graph.patients.len(),
                contexts,
                &cfg.second_order,
                mode,
            )?;
            EmbeddingTable::new(
                EntityKind::Patient,
                graph.patients.clone(),
                cfg.second_order.dim,
                result.sources,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine;

    fn event(p: &str, d: &str, s: &str) -> JourneyEvent {
        JourneyEvent {
            patient_id: p.into(),
            doctor_id: d.into(),
            service_id: s.into(),
            day: 0,
        }
    }

    #[test]
    fn collapse_sums_event_counts() {
        let events = vec![event("p", "d1", "s"), event("p", "d2", "s")];
        let ps = build_bipartite(&events, BipartiteMode::PatientService);
        assert_eq!(ps.edges, vec![(0, 0, 2)]);
        let pd = build_bipartite(&events, BipartiteMode::PatientDoctor);
        assert_eq!(pd.edges, vec![(0, 0, 1), (0, 1, 1)]);
    }

    #[test]
    fn weights_match_pair_histogram() {
        use rand::Rng;
        let mut rng = crate::rng::seeded_rng(13);
        let events: Vec<JourneyEvent> = (0..200)
            .map(|_| {
                event(
                    &format!("p{}", rng.random_range(0..6)),
                    &format!("d{}", rng.random_range(0..4)),
                    &format!("s{}", rng.random_range(0..5)),
                )
            })
            .collect();
        let g = build_bipartite(&events, BipartiteMode::PatientService);
        let mut histogram: std::collections::HashMap<(String, String), u64> =
            std::collections::HashMap::new();
        for e in &events {
            *histogram.entry((e.patient_id.clone(), e.service_id.clone())).or_insert(0) += 1;
        }
        assert_eq!(g.edges.len(), histogram.len());
        for &(p, o, w) in &g.edges {
            assert_eq!(w, histogram[&(g.patients[p].clone(), g.others[o].clone())]);
        }
    }

    #[test]
    fn walks_alternate_between_sides() {
        let events = vec![
            event("p1", "d", "s1"),
            event("p1", "d", "s2"),
            event("p2", "d", "s1"),
            event("p2", "d", "s3"),
        ];
        let graph = build_bipartite(&events, BipartiteMode::PatientService);
        let g = to_homogeneous(&graph).unwrap();
        let walks = generate_walks(
            &g,
            &WalkConfig { walks_per_node: 2, walk_length: 9, seed: 3, ..WalkConfig::default() },
        )
        .unwrap();
        for walk in &walks {
            for pair in walk.windows(2) {
                let a = g.services()[pair[0] as usize].starts_with(PATIENT_PREFIX);
                let b = g.services()[pair[1] as usize].starts_with(PATIENT_PREFIX);
                assert_ne!(a, b, "walk stepped within one side");
            }
        }
    }

    #[test]
    fn private_service_patient_still_embeds() {
        let events = vec![
            event("p1", "d", "s_private"),
            event("p2", "d", "s_a"),
            event("p3", "d", "s_a"),
        ];
        let graph = build_bipartite(&events, BipartiteMode::PatientService);
        let cfg = BaselineConfig::with_dim_seed(8, 5);
        for method in [BaselineMethod::Node2vec, BaselineMethod::Line2] {
            let table = run_baseline(&graph, method, &cfg, ThreadMode::Deterministic).unwrap();
            let row = table.get("p1").unwrap();
            assert!(row.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn line2_twins_land_closer_than_random_pairs() {
        let mut events = Vec::new();
        for p in ["twin_a", "twin_b"] {
            for _ in 0..3 {
                events.push(event(p, "d", "s0"));
            }
            events.push(event(p, "d", "s1"));
        }
        events.push(event("px", "d", "s2"));
        events.push(event("px", "d", "s3"));
        events.push(event("py", "d", "s4"));
        events.push(event("py", "d", "s1"));
        events.push(event("pz", "d", "s3"));
        events.push(event("pz", "d", "s5"));
        let graph = build_bipartite(&events, BipartiteMode::PatientService);
        let mut cfg = BaselineConfig::with_dim_seed(8, 11);
        cfg.second_order.epochs = 60;
        cfg.second_order.learning_rate = 0.05;
        let table = run_baseline(&graph, BaselineMethod::Line2, &cfg, ThreadMode::Deterministic).unwrap();
        let twins = cosine(table.get("twin_a").unwrap(), table.get("twin_b").unwrap());
        let mut others = 0.0;
        let mut n = 0;
        for a in ["twin_a", "twin_b"] {
            for b in ["px", "py", "pz"] {
                others += cosine(table.get(a).unwrap(), table.get(b).unwrap());
                n += 1;
            }
        }
        others /= f64::from(n as u8);
        assert!(twins > others, "twins {twins} <= others {others}");
    }
}
