//! Weighted service co-occurrence graph built from patient journeys.
//!
//! Each patient's journey is partitioned into consecutive non-overlapping
//! windows of `T` days anchored at that patient's first event day. Within a
//! window, every unordered pair of distinct services present counts once
//! (set semantics, so repeated billing of one service inside a window does
//! not inflate weights), and counts are summed over patients.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::events::JourneyEvent;

/// Undirected weighted graph over service ids. Vertex index = position in
/// the sorted service list; edge weights are co-occurrence counts.
#[derive(Debug, Clone)]
pub struct ServiceGraph {
    services: Vec<String>,
    index: HashMap<String, u32>,
    /// Upper-triangle edge weights, keyed `(i, j)` with `i < j`.
    weights: BTreeMap<(u32, u32), u64>,
    /// Per-vertex neighbor lists `(neighbor, weight)`, sorted by neighbor.
    adjacency: Vec<Vec<(u32, u64)>>,
}

impl ServiceGraph {
    fn from_parts(services: Vec<String>, weights: BTreeMap<(u32, u32), u64>) -> Self {
        let index = services
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        let mut adjacency = vec![Vec::new(); services.len()];
        for (&(i, j), &w) in &weights {
            adjacency[i as usize].push((j, w));
            adjacency[j as usize].push((i, w));
        }
        for list in &mut adjacency {
            list.sort_unstable_by_key(|&(n, _)| n);
        }
        ServiceGraph { services, index, weights, adjacency }
    }

    pub fn n_vertices(&self) -> usize {
        self.services.len()
    }

    pub fn n_edges(&self) -> usize {
        self.weights.len()
    }

    pub fn services(&self) -> &[String] {
        &self.services
    }

    pub fn service_index(&self, id: &str) -> Option<u32> {
        self.index.get(id).copied()
    }

    /// Symmetric edge weight; 0 on the diagonal and for absent edges.
    pub fn weight(&self, i: u32, j: u32) -> u64 {
        if i == j {
            return 0;
        }
        let key = (i.min(j), i.max(j));
        self.weights.get(&key).copied().unwrap_or(0)
    }

    pub fn weight_by_id(&self, a: &str, b: &str) -> u64 {
        match (self.service_index(a), self.service_index(b)) {
            (Some(i), Some(j)) => self.weight(i, j),
            _ => 0,
        }
    }

    /// Neighbors of vertex `i` with edge weights, sorted by neighbor index.
    pub fn neighbors(&self, i: u32) -> &[(u32, u64)] {
        &self.adjacency[i as usize]
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, u64)> + '_ {
        self.weights.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    pub fn total_weight(&self) -> u64 {
        self.weights.values().sum()
    }

    /// Weighted degree (row sum of the adjacency matrix) per service.
    pub fn degree_profile(&self) -> BTreeMap<String, u64> {
        self.services
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let degree = self.adjacency[i].iter().map(|&(_, w)| w).sum();
                (s.clone(), degree)
            })
            .collect()
    }

    /// Edge-list text: `service_i<TAB>service_j<TAB>weight`, one undirected
    /// edge per line with `service_i < service_j` lexicographically.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (&(i, j), &w) in &self.weights {
            // Vertex order is the sorted service order, so index order is
            // lexicographic order.
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                self.services[i as usize], self.services[j as usize], w
            ));
        }
        out
    }

    pub fn save_edge_list(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }

    /// Build a weighted undirected graph from raw id-pair edges; parallel
    /// edges sum their weights. Used by the baselines to treat a bipartite
    /// graph as a homogeneous one.
    pub fn from_edges(raw: impl IntoIterator<Item = (String, String, u64)>) -> Result<Self> {
        let raw: Vec<(String, String, u64)> = raw.into_iter().collect();
        let mut services: Vec<String> = raw
            .iter()
            .flat_map(|(a, b, _)| [a.clone(), b.clone()])
            .collect();
        services.sort_unstable();
        services.dedup();
        let index: HashMap<String, u32> = services
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        let mut weights = BTreeMap::new();
        for (a, b, w) in raw {
            if a == b {
                return Err(Error::InvalidConfig(format!("self edge on `{a}`")));
            }
            let (i, j) = (index[&a], index[&b]);
            let key = (i.min(j), i.max(j));
            *weights.entry(key).or_insert(0) += w;
        }
        Ok(ServiceGraph::from_parts(services, weights))
    }

    /// Parse an edge list written by [`ServiceGraph::to_edge_list`].
    ///
    /// Vertices that were isolated in the source graph do not appear in an
    /// edge list and are not recovered.
    pub fn from_edge_list(text: &str, origin: &Path) -> Result<Self> {
        let mut raw: Vec<(String, String, u64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = lineno + 1;
            let mut fields = line.split('\t');
            let a = fields
                .next()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::parse(origin, row, "missing first service id"))?;
            let b = fields
                .next()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::parse(origin, row, "missing second service id"))?;
            let w: u64 = fields
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(origin, row, "missing or bad weight"))?;
            if a == b {
                return Err(Error::parse(origin, row, "self edge"));
            }
            raw.push((a.to_string(), b.to_string(), w));
        }
        let mut services: Vec<String> = raw
            .iter()
            .flat_map(|(a, b, _)| [a.clone(), b.clone()])
            .collect();
        services.sort_unstable();
        services.dedup();
        let index: HashMap<String, u32> = services
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        let mut weights = BTreeMap::new();
        for (a, b, w) in raw {
            let (i, j) = (index[&a], index[&b]);
            let key = (i.min(j), i.max(j));
            *weights.entry(key).or_insert(0) += w;
        }
        Ok(ServiceGraph::from_parts(services, weights))
    }

    pub fn load_edge_list(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ServiceGraph::from_edge_list(&text, path)
    }
}

/// Count co-occurrences for one patient journey into `acc`.
fn count_patient(
    journey: &[JourneyEvent],
    window_days: i64,
    index: &HashMap<String, u32>,
    acc: &mut BTreeMap<(u32, u32), u64>,
) {
    if journey.is_empty() {
        return;
    }
    let anchor = journey[0].day;
    let mut pos = 0;
    while pos < journey.len() {
        let window = (journey[pos].day - anchor) / window_days;
        let mut in_window: Vec<u32> = Vec::new();
        while pos < journey.len() && (journey[pos].day - anchor) / window_days == window {
            in_window.push(index[&journey[pos].service_id]);
            pos += 1;
        }
        in_window.sort_unstable();
        in_window.dedup();
        for a in 0..in_window.len() {
            for b in (a + 1)..in_window.len() {
                *acc.entry((in_window[a], in_window[b])).or_insert(0) += 1;
            }
        }
    }
}

/// Build the co-occurrence graph from sorted per-patient journeys.
///
/// Every service occurring in any event becomes a vertex, co-occurring or
/// not. Patients are counted independently and merged; the merge is a sum of
/// non-negative integers, so the parallel result equals the sequential one.
pub fn build_cooccurrence(
    journeys: &BTreeMap<String, Vec<JourneyEvent>>,
    window_days: i64,
) -> Result<ServiceGraph> {
    if window_days < 1 {
        return Err(Error::InvalidConfig(format!(
            "window_days must be >= 1, got {window_days}"
        )));
    }
    let mut services: Vec<String> = journeys
        .values()
        .flatten()
        .map(|e| e.service_id.clone())
        .collect();
    services.sort_unstable();
    services.dedup();
    let index: HashMap<String, u32> = services
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as u32))
        .collect();

    let weights = journeys
        .par_iter()
        .map(|(_, journey)| {
            let mut acc = BTreeMap::new();
            count_patient(journey, window_days, &index, &mut acc);
            acc
        })
        .reduce(BTreeMap::new, |mut left, right| {
            for (key, w) in right {
                *left.entry(key).or_insert(0) += w;
            }
            left
        });

    Ok(ServiceGraph::from_parts(services, weights))
}
