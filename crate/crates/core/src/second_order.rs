//! Second-order proximity trainer over a weighted bipartite edge list.
//!
//! Source vertices (patients) get trainable vectors; context vertices are
//! either free trainable vectors (the LINE-style baseline) or the annotation
//! transform of frozen base vectors (the hybrid-node model, where gradients
//! flow into `W_a` and `b_a` instead of the context rows).
//!
//! Training samples edges proportionally to their weight and applies the
//! same negative-sampling term as the skip-gram trainer
//! ([`crate::sgns::pair_objective`]); negatives are drawn from the context
//! weighted-degree distribution raised to the 3/4 power.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::multigraph::AnnotationParams;
use crate::parallel::{SharedMatrix, ThreadMode};
use crate::rng::{derive_seed, seeded_rng};
use crate::sampling::AliasTable;
use crate::sgns::pair_objective;

/// Annotated contexts: vector `i` is `W_a base[i] + b_a`.
pub struct AnnotatedContexts {
    pub params: AnnotationParams,
    pub base: Vec<Vec<f64>>,
}

/// Free contexts: one trainable vector per context vertex.
pub struct FreeContexts {
    pub vectors: Vec<f64>,
    pub dim: usize,
}

pub enum ContextModel {
    Annotated(AnnotatedContexts),
    Free(FreeContexts),
}

impl ContextModel {
    pub fn annotated(params: AnnotationParams, base: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(bad) = base.iter().find(|b| b.len() != params.in_dim) {
            return Err(Error::DimensionMismatch {
                context: "annotation base vector",
                expected: params.in_dim,
                actual: bad.len(),
            });
        }
        Ok(ContextModel::Annotated(AnnotatedContexts { params, base }))
    }

    /// Zero-initialized free context vectors (word2vec-style asymmetry:
    /// sources carry the random init).
    pub fn free(n_contexts: usize, dim: usize) -> Self {
        ContextModel::Free(FreeContexts { vectors: vec![0.0; n_contexts * dim], dim })
    }

    pub fn len(&self) -> usize {
        match self {
            ContextModel::Annotated(a) => a.base.len(),
            ContextModel::Free(f) => f.vectors.len() / f.dim.max(1),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            ContextModel::Annotated(a) => a.params.out_dim,
            ContextModel::Free(f) => f.dim,
        }
    }

    /// Materialize context vector `i` under the current parameters.
    pub fn vector(&self, i: usize) -> Vec<f64> {
        match self {
            ContextModel::Annotated(a) => a.params.apply(&a.base[i]),
            ContextModel::Free(f) => f.vectors[i * f.dim..(i + 1) * f.dim].to_vec(),
        }
    }
}

/// Loss and gradients of one weighted edge term under annotated contexts:
/// `weight * (-log sigma(h_pos . p) - sum_neg log sigma(-h_neg . p))` with
/// the context gradients chained through `h = W_a c + b_a` into `W_a`, `b_a`.
///
/// The training loop applies exactly these gradients; tests difference them.
pub fn annotated_edge_objective(
    patient: &[f64],
    pos: usize,
    negatives: &[usize],
    ctx: &AnnotatedContexts,
    weight: f64,
) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
    let pos_vec = ctx.params.apply(&ctx.base[pos]);
    let neg_vecs: Vec<Vec<f64>> = negatives.iter().map(|&n| ctx.params.apply(&ctx.base[n])).collect();
    let neg_refs: Vec<&[f64]> = neg_vecs.iter().map(Vec::as_slice).collect();
    let (loss, mut g_patient, mut g_pos, mut g_negs) =
        pair_objective(patient, &pos_vec, &neg_refs);

    let (out_dim, in_dim) = (ctx.params.out_dim, ctx.params.in_dim);
    let mut g_w = vec![0.0; out_dim * in_dim];
    let mut g_b = vec![0.0; out_dim];
    let mut accumulate = |g_h: &[f64], base: &[f64]| {
        for r in 0..out_dim {
            g_b[r] += g_h[r];
            let row = &mut g_w[r * in_dim..(r + 1) * in_dim];
            for (slot, b) in row.iter_mut().zip(base) {
                *slot += g_h[r] * b;
            }
        }
    };
    for v in &mut g_pos {
        *v *= weight;
    }
    accumulate(&g_pos, &ctx.base[pos]);
    for (g_neg, &n) in g_negs.iter_mut().zip(negatives) {
        for v in g_neg.iter_mut() {
            *v *= weight;
        }
        accumulate(g_neg, &ctx.base[n]);
    }
    for v in &mut g_patient {
        *v *= weight;
    }
    (loss * weight, g_patient, g_w, g_b)
}

/// Trainer settings.
#[derive(Debug, Clone)]
pub struct SecondOrderConfig {
    pub dim: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    /// Edge draws per epoch; defaults to the rounded total edge weight.
    pub samples_per_epoch: Option<usize>,
    /// Multiplier on the context-side learning rate. Shared context
    /// parameters (the annotation transform) absorb a gradient term from
    /// every positive and negative draw, orders of magnitude more often
    /// than any single source vector; scaling their step down keeps the
    /// context geometry from collapsing under that traffic.
    pub context_lr_scale: f64,
    /// Record the exact full-softmax loss per epoch (toy scale only).
    pub track_exact_loss: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct SecondOrderStats {
    /// Exact loss before training and after each epoch, when tracked.
    pub exact_loss: Vec<f64>,
}

pub struct SecondOrderResult {
    /// Trained source vectors, `n_sources x dim` row-major.
    pub sources: Vec<f64>,
    pub contexts: ContextModel,
    pub stats: SecondOrderStats,
}

enum SharedContexts {
    Annotated { w_a: SharedMatrix, b_a: SharedMatrix, base: Vec<Vec<f64>>, out_dim: usize, in_dim: usize },
    Free { vectors: SharedMatrix, dim: usize },
}

impl SharedContexts {
    fn vector(&self, i: usize) -> Vec<f64> {
        match self {
            SharedContexts::Annotated { w_a, b_a, base, out_dim, in_dim } => {
                // Safety: hogwild contract; reads may race with updates.
                let w = unsafe { &*(w_a.row_mut(0) as *mut [f64]) };
                let b = unsafe { &*(b_a.row_mut(0) as *mut [f64]) };
                let c = &base[i];
                (0..*out_dim)
                    .map(|r| {
                        b[r] + w[r * in_dim..(r + 1) * in_dim]
                            .iter()
                            .zip(c)
                            .map(|(x, y)| x * y)
                            .sum::<f64>()
                    })
                    .collect()
            }
            SharedContexts::Free { vectors, dim } => {
                let row = unsafe { &*(vectors.row_mut(i) as *mut [f64]) };
                row[..*dim].to_vec()
            }
        }
    }

    fn apply(&self, i: usize, grad: &[f64], lr: f64) {
        match self {
            SharedContexts::Annotated { w_a, b_a, base, in_dim, .. } => {
                let w = unsafe { w_a.row_mut(0) };
                let b = unsafe { b_a.row_mut(0) };
                let c = &base[i];
                for (r, &g) in grad.iter().enumerate() {
                    b[r] -= lr * g;
                    let row = &mut w[r * in_dim..(r + 1) * in_dim];
                    for (slot, x) in row.iter_mut().zip(c) {
                        *slot -= lr * g * x;
                    }
                }
            }
            SharedContexts::Free { vectors, .. } => {
                let row = unsafe { vectors.row_mut(i) };
                for (slot, g) in row.iter_mut().zip(grad) {
                    *slot -= lr * g;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_shard(
    edges: &[(usize, usize, f64)],
    edge_table: &AliasTable,
    neg_table: &AliasTable,
    sources: &SharedMatrix,
    contexts: &SharedContexts,
    cfg: &SecondOrderConfig,
    draws: usize,
    rng: &mut ChaCha8Rng,
    processed: &std::sync::atomic::AtomicUsize,
    total_draws: usize,
) {
    use std::sync::atomic::Ordering;
    for _ in 0..draws {
        let done = processed.fetch_add(1, Ordering::Relaxed);
        let progress = done as f64 / total_draws.max(1) as f64;
        let lr = (cfg.learning_rate * (1.0 - progress)).max(cfg.min_learning_rate);

        let (src, pos, _) = edges[edge_table.sample(rng)];
        let mut negatives = Vec::with_capacity(cfg.negatives);
        for _ in 0..cfg.negatives {
            let mut n = neg_table.sample(rng);
            let mut attempts = 0;
            while n == pos && attempts < 8 {
                n = neg_table.sample(rng);
                attempts += 1;
            }
            if n != pos {
                negatives.push(n);
            }
        }

        // Safety: hogwild contract.
        let p = unsafe { sources.row_mut(src) };
        let pos_vec = contexts.vector(pos);
        let neg_vecs: Vec<Vec<f64>> = negatives.iter().map(|&n| contexts.vector(n)).collect();
        let neg_refs: Vec<&[f64]> = neg_vecs.iter().map(Vec::as_slice).collect();
        let (_, g_p, g_pos, g_negs) = pair_objective(p, &pos_vec, &neg_refs);

        for (slot, g) in p.iter_mut().zip(&g_p) {
            *slot -= lr * g;
        }
        let ctx_lr = lr * cfg.context_lr_scale;
        contexts.apply(pos, &g_pos, ctx_lr);
        for (g_neg, &n) in g_negs.iter().zip(&negatives) {
            contexts.apply(n, g_neg, ctx_lr);
        }
    }
}

/// Exact full-softmax second-order loss over the current state.
fn exact_loss(
    edges: &[(usize, usize, f64)],
    n_sources: usize,
    dim: usize,
    sources: &SharedMatrix,
    contexts: &SharedContexts,
    n_contexts: usize,
) -> f64 {
    let ctx_vecs: Vec<Vec<f64>> = (0..n_contexts).map(|i| contexts.vector(i)).collect();
    let mut totals = vec![0.0; n_sources];
    for &(s, _, w) in edges {
        totals[s] += w;
    }
    let mut loss = 0.0;
    for &(s, h, w) in edges {
        let p = unsafe { &*(sources.row_mut(s) as *mut [f64]) };
        let p = &p[..dim];
        let dots: Vec<f64> = ctx_vecs
            .iter()
            .map(|c| c.iter().zip(p).map(|(a, b)| a * b).sum())
            .collect();
        let max = dots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = dots.iter().map(|d| (d - max).exp()).sum();
        let log_p2 = dots[h] - max - z.ln();
        loss -= (w / totals[s]) * log_p2;
    }
    loss
}

/// Train source vectors (and the context model) on a weighted edge list.
pub fn train_second_order(
    edges: &[(usize, usize, f64)],
    n_sources: usize,
    contexts: ContextModel,
    cfg: &SecondOrderConfig,
    mode: ThreadMode,
) -> Result<SecondOrderResult> {
    if edges.is_empty() {
        return Err(Error::Empty("edge list"));
    }
    if cfg.dim == 0 || cfg.negatives == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidConfig("dim, negatives and epochs must be >= 1".into()));
    }
    if contexts.dim() != cfg.dim {
        return Err(Error::DimensionMismatch {
            context: "context model vs trainer dim",
            expected: cfg.dim,
            actual: contexts.dim(),
        });
    }
    let n_contexts = contexts.len();
    for &(s, c, w) in edges {
        if s >= n_sources || c >= n_contexts || !(w > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bad edge ({s}, {c}, {w}) for {n_sources} sources, {n_contexts} contexts"
            )));
        }
    }

    let dim = cfg.dim;
    let mut source_data = vec![0.0; n_sources * dim];
    for row in 0..n_sources {
        let mut rng = seeded_rng(derive_seed(cfg.seed, "so-init", row as u64));
        for v in &mut source_data[row * dim..(row + 1) * dim] {
            *v = (rng.random::<f64>() - 0.5) / dim as f64;
        }
    }
    let sources = SharedMatrix::new(source_data, dim);

    let shared = match contexts {
        ContextModel::Annotated(a) => SharedContexts::Annotated {
            out_dim: a.params.out_dim,
            in_dim: a.params.in_dim,
            w_a: SharedMatrix::new(a.params.w_a, a.params.out_dim * a.params.in_dim),
            b_a: SharedMatrix::new(a.params.b_a, a.params.out_dim),
            base: a.base,
        },
        ContextModel::Free(f) => {
            SharedContexts::Free { vectors: SharedMatrix::new(f.vectors, f.dim), dim: f.dim }
        }
    };

    let edge_weights: Vec<f64> = edges.iter().map(|&(_, _, w)| w).collect();
    let edge_table = AliasTable::new(&edge_weights)?;
    let mut degrees = vec![0.0; n_contexts];
    for &(_, c, w) in edges {
        degrees[c] += w;
    }
    let neg_table = AliasTable::unigram(&degrees, 0.75)?;

    let total_weight: f64 = edge_weights.iter().sum();
    let per_epoch = cfg
        .samples_per_epoch
        .unwrap_or((total_weight.round() as usize).max(edges.len()));
    let total_draws = per_epoch * cfg.epochs;
    let processed = std::sync::atomic::AtomicUsize::new(0);

    let mut stats = SecondOrderStats::default();
    if cfg.track_exact_loss {
        stats
            .exact_loss
            .push(exact_loss(edges, n_sources, dim, &sources, &shared, n_contexts));
    }

    let workers = mode.workers();
    for epoch in 0..cfg.epochs {
        if workers <= 1 {
            let mut rng = seeded_rng(derive_seed(cfg.seed, "so-epoch", epoch as u64));
            run_shard(
                edges, &edge_table, &neg_table, &sources, &shared, cfg, per_epoch, &mut rng,
                &processed, total_draws,
            );
        } else {
            let per_worker = per_epoch.div_ceil(workers);
            std::thread::scope(|scope| {
                for worker in 0..workers {
                    let draws = per_worker.min(per_epoch - (per_worker * worker).min(per_epoch));
                    if draws == 0 {
                        continue;
                    }
                    let mut rng = seeded_rng(derive_seed(
                        cfg.seed,
                        "so-epoch",
                        (epoch as u64) << 16 | worker as u64,
                    ));
                    let (sources, shared, processed, edge_table, neg_table) =
                        (&sources, &shared, &processed, &edge_table, &neg_table);
                    scope.spawn(move || {
                        run_shard(
                            edges, edge_table, neg_table, sources, shared, cfg, draws, &mut rng,
                            processed, total_draws,
                        );
                    });
                }
            });
        }
        if cfg.track_exact_loss {
            stats
                .exact_loss
                .push(exact_loss(edges, n_sources, dim, &sources, &shared, n_contexts));
        }
    }

    let contexts = match shared {
        SharedContexts::Annotated { w_a, b_a, base, out_dim, in_dim } => {
            ContextModel::Annotated(AnnotatedContexts {
                params: AnnotationParams {
                    w_a: w_a.into_inner(),
                    b_a: b_a.into_inner(),
                    out_dim,
                    in_dim,
                },
                base,
            })
        }
        SharedContexts::Free { vectors, dim } => {
            ContextModel::Free(FreeContexts { vectors: vectors.into_inner(), dim })
        }
    };
    Ok(SecondOrderResult { sources: sources.into_inner(), contexts, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine;

    fn twin_edges() -> (Vec<(usize, usize, f64)>, usize, usize) {
        // Patients 0 and 1 share identical context sets; 2..5 are scattered.
        let edges = vec![
            (0, 0, 3.0),
            (0, 1, 1.0),
            (1, 0, 3.0),
            (1, 1, 1.0),
            (2, 2, 2.0),
            (2, 3, 1.0),
            (3, 4, 2.0),
            (3, 1, 1.0),
            (4, 5, 2.0),
            (4, 2, 1.0),
            (5, 3, 2.0),
            (5, 5, 1.0),
        ];
        (edges, 6, 6)
    }

    fn cfg(dim: usize) -> SecondOrderConfig {
        SecondOrderConfig {
            dim,
            negatives: 3,
            epochs: 40,
            learning_rate: 0.05,
            min_learning_rate: 1.0e-4,
            samples_per_epoch: None,
            context_lr_scale: 1.0,
            track_exact_loss: true,
            seed: 9,
        }
    }

    #[test]
    fn twins_converge_with_free_contexts() {
        let (edges, n_src, n_ctx) = twin_edges();
        let result = train_second_order(
            &edges,
            n_src,
            ContextModel::free(n_ctx, 8),
            &cfg(8),
            ThreadMode::Deterministic,
        )
        .unwrap();
        let row = |i: usize| &result.sources[i * 8..(i + 1) * 8];
        let twin_cos = cosine(row(0), row(1));
        let mut others = 0.0;
        let mut n = 0;
        for j in 2..6 {
            others += cosine(row(0), row(j));
            n += 1;
        }
        others /= f64::from(n as u8);
        assert!(twin_cos > others, "twins {twin_cos} <= others {others}");
    }

    #[test]
    fn exact_loss_decreases_during_training() {
        let (edges, n_src, n_ctx) = twin_edges();
        let result = train_second_order(
            &edges,
            n_src,
            ContextModel::free(n_ctx, 8),
            &cfg(8),
            ThreadMode::Deterministic,
        )
        .unwrap();
        let first = result.stats.exact_loss.first().unwrap();
        let last = result.stats.exact_loss.last().unwrap();
        assert!(last < first, "loss went {first} -> {last}");
    }

    #[test]
    fn deterministic_mode_is_reproducible() {
        let (edges, n_src, n_ctx) = twin_edges();
        let run = || {
            train_second_order(
                &edges,
                n_src,
                ContextModel::free(n_ctx, 4),
                &cfg(4),
                ThreadMode::Deterministic,
            )
            .unwrap()
            .sources
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_edges_and_empty_input() {
        assert!(train_second_order(
            &[],
            1,
            ContextModel::free(1, 4),
            &cfg(4),
            ThreadMode::Deterministic
        )
        .is_err());
        assert!(train_second_order(
            &[(0, 9, 1.0)],
            1,
            ContextModel::free(2, 4),
            &cfg(4),
            ThreadMode::Deterministic
        )
        .is_err());
        assert!(train_second_order(
            &[(0, 0, 0.0)],
            1,
            ContextModel::free(1, 4),
            &cfg(4),
            ThreadMode::Deterministic
        )
        .is_err());
    }

    #[test]
    fn annotated_edge_gradients_match_finite_differences() {
        use crate::rng::seeded_rng;
        use rand::Rng;
        // 3-patient / 4-hybrid toy, fixed negatives, weighted term.
        let mut rng = seeded_rng(77);
        let (out_dim, in_dim) = (3, 5);
        let base: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..in_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let params = AnnotationParams {
            w_a: (0..out_dim * in_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            b_a: (0..out_dim).map(|_| rng.random_range(-0.5..0.5)).collect(),
            out_dim,
            in_dim,
        };
        let patient: Vec<f64> = (0..out_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ctx = AnnotatedContexts { params, base };
        let negatives = vec![1usize, 3, 1];
        let weight = 2.5;

        let (_, g_p, g_w, g_b) = annotated_edge_objective(&patient, 0, &negatives, &ctx, weight);

        let h = 1e-6;
        let mut max_rel = 0.0f64;
        let mut compare = |analytic: f64, plus: f64, minus: f64| {
            let numeric = (plus - minus) / (2.0 * h);
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max((analytic - numeric).abs() / denom);
        };

        let mut patient = patient;
        for i in 0..out_dim {
            patient[i] += h;
            let (plus, _, _, _) = annotated_edge_objective(&patient, 0, &negatives, &ctx, weight);
            patient[i] -= 2.0 * h;
            let (minus, _, _, _) = annotated_edge_objective(&patient, 0, &negatives, &ctx, weight);
            patient[i] += h;
            compare(g_p[i], plus, minus);
        }
        let mut ctx = ctx;
        for i in 0..out_dim * in_dim {
            ctx.params.w_a[i] += h;
            let (plus, _, _, _) = annotated_edge_objective(&patient, 0, &negatives, &ctx, weight);
            ctx.params.w_a[i] -= 2.0 * h;
            let (minus, _, _, _) = annotated_edge_objective(&patient, 0, &negatives, &ctx, weight);
            ctx.params.w_a[i] += h;
            compare(g_w[i], plus, minus);
        }
        for i in 0..out_dim {
            ctx.params.b_a[i] += h;
            let (plus, _, _, _) = annotated_edge_objective(&patient, 0, &negatives, &ctx, weight);
            ctx.params.b_a[i] -= 2.0 * h;
            let (minus, _, _, _) = annotated_edge_objective(&patient, 0, &negatives, &ctx, weight);
            ctx.params.b_a[i] += h;
            compare(g_b[i], plus, minus);
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }

    #[test]
    fn fast_mode_still_finds_twins() {
        let (edges, n_src, n_ctx) = twin_edges();
        let result = train_second_order(
            &edges,
            n_src,
            ContextModel::free(n_ctx, 8),
            &cfg(8),
            ThreadMode::Fast(4),
        )
        .unwrap();
        let row = |i: usize| &result.sources[i * 8..(i + 1) * 8];
        let twin_cos = cosine(row(0), row(1));
        let mut others = 0.0;
        for j in 2..6 {
            others += cosine(row(0), row(j));
        }
        others /= 4.0;
        assert!(twin_cos > others);
    }
}
