//! Biased random walks over a weighted graph.
//!
//! Transitions follow the second-order node2vec scheme: stepping from `v`
//! with previous vertex `t`, a neighbor `x` is drawn proportionally to
//! `weight(v, x) * bias(x)` where `bias` is `1/p` for backtracking to `t`,
//! `1` for neighbors of `t`, and `1/q` otherwise. With `p = q = 1` this is a
//! plain edge-weight-proportional walk.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};
use crate::sampling::weighted_choice;
use crate::service_graph::ServiceGraph;

/// Walk generation parameters.
#[derive(Debug, Clone)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// Return parameter `p`: larger values discourage backtracking.
    pub return_param: f64,
    /// In-out parameter `q`: larger values keep walks local.
    pub inout_param: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walks_per_node: 10,
            walk_length: 80,
            return_param: 1.0,
            inout_param: 1.0,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node == 0 {
            return Err(Error::InvalidConfig("walks_per_node must be >= 1".into()));
        }
        if self.walk_length < 2 {
            return Err(Error::InvalidConfig("walk_length must be >= 2".into()));
        }
        if !(self.return_param > 0.0) || !(self.inout_param > 0.0) {
            return Err(Error::InvalidConfig("p and q must be positive".into()));
        }
        Ok(())
    }
}

fn adjacent(g: &ServiceGraph, a: u32, b: u32) -> bool {
    g.neighbors(a).binary_search_by_key(&b, |&(n, _)| n).is_ok()
}

/// Walk a single trajectory from `start`.
fn walk_from(g: &ServiceGraph, cfg: &WalkConfig, start: u32, walk_seed: u64) -> Vec<u32> {
    let mut rng = seeded_rng(walk_seed);
    let mut walk = Vec::with_capacity(cfg.walk_length);
    walk.push(start);

    // First step: edge-weight proportional.
    let first = g.neighbors(start);
    if first.is_empty() {
        return walk;
    }
    let weights: Vec<f64> = first.iter().map(|&(_, w)| w as f64).collect();
    walk.push(first[weighted_choice(&weights, &mut rng)].0);

    while walk.len() < cfg.walk_length {
        let cur = walk[walk.len() - 1];
        let prev = walk[walk.len() - 2];
        let neighbors = g.neighbors(cur);
        if neighbors.is_empty() {
            break;
        }
        let weights: Vec<f64> = neighbors
            .iter()
            .map(|&(x, w)| {
                let bias = if x == prev {
                    1.0 / cfg.return_param
                } else if adjacent(g, x, prev) {
                    1.0
                } else {
                    1.0 / cfg.inout_param
                };
                w as f64 * bias
            })
            .collect();
        walk.push(neighbors[weighted_choice(&weights, &mut rng)].0);
    }
    walk
}

/// Generate `walks_per_node` walks from every non-isolated vertex.
///
/// Each walk draws from its own generator seeded by `(seed, round, start)`,
/// so the output is identical whether walks are produced in parallel or one
/// by one. Isolated vertices yield no walks.
pub fn generate_walks(g: &ServiceGraph, cfg: &WalkConfig) -> Result<Vec<Vec<u32>>> {
    cfg.validate()?;
    if g.n_vertices() == 0 {
        return Err(Error::Empty("graph"));
    }
    let starts: Vec<u32> = (0..g.n_vertices() as u32)
        .filter(|&v| !g.neighbors(v).is_empty())
        .collect();

    let jobs: Vec<(usize, u32)> = (0..cfg.walks_per_node)
        .flat_map(|round| starts.iter().map(move |&v| (round, v)))
        .collect();

    let walks = jobs
        .par_iter()
        .map(|&(round, v)| {
            let walk_seed = derive_seed(cfg.seed, "walk", (round as u64) << 32 | u64::from(v));
            walk_from(g, cfg, v, walk_seed)
        })
        .collect();
    Ok(walks)
}
