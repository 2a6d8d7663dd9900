//! Skip-gram with negative sampling over random-walk corpora.
//!
//! For every (center, context) pair within the window along a walk, the
//! trainer ascends
//!
//! ```text
//! log sigma(u_ctx . v_ctr) + sum_neg log sigma(-u_neg . v_ctr)
//! ```
//!
//! with negatives drawn from the walk-token unigram distribution raised to
//! the 3/4 power. Center (input) vectors are returned as the embedding.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::{EmbeddingTable, EntityKind};
use crate::error::{Error, Result};
use crate::parallel::{SharedMatrix, ThreadMode};
use crate::rng::{derive_seed, seeded_rng};
use crate::sampling::AliasTable;
use crate::service_graph::ServiceGraph;
use crate::walks::{generate_walks, WalkConfig};

/// SGNS hyperparameters.
#[derive(Debug, Clone)]
pub struct SgnsConfig {
    pub dim: usize,
    /// Context radius within a walk.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate; decays linearly to [`SgnsConfig::min_learning_rate`].
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub seed: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 128,
            window: 10,
            negatives: 10,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 1.0e-4,
            seed: 0,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        if self.negatives == 0 {
            return Err(Error::InvalidConfig("negatives must be >= 1".into()));
        }
        if self.window == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("window and epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Trained embeddings plus the per-epoch loss on a fixed probe batch.
pub struct SgnsOutcome {
    pub embeddings: EmbeddingTable,
    /// Probe loss evaluated before training and after each epoch.
    pub probe_loss: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss and gradients of one SGNS pair term:
/// `-log sigma(ctx . ctr) - sum_neg log sigma(-neg . ctr)`.
///
/// Returns `(loss, d/d ctr, d/d ctx, d/d negs)`. This kernel is the single
/// source of truth for the update math; the training loop applies exactly
/// these gradients (negated, for ascent on the log-likelihood).
pub fn pair_objective(
    center: &[f64],
    context: &[f64],
    negatives: &[&[f64]],
) -> (f64, Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let dim = center.len();
    let mut loss = 0.0;
    let mut grad_center = vec![0.0; dim];
    let mut grad_context = vec![0.0; dim];
    let mut grad_negs = Vec::with_capacity(negatives.len());

    let s = sigmoid(dot(context, center));
    loss -= s.max(f64::MIN_POSITIVE).ln();
    // d(-log sigma(x))/dx = sigma(x) - 1
    let coeff = s - 1.0;
    for i in 0..dim {
        grad_center[i] += coeff * context[i];
        grad_context[i] += coeff * center[i];
    }

    for neg in negatives {
        let sn = sigmoid(-dot(neg, center));
        loss -= sn.max(f64::MIN_POSITIVE).ln();
        // d(-log sigma(-x))/dx = sigma(x)
        let cn = sigmoid(dot(neg, center));
        let mut grad_neg = vec![0.0; dim];
        for i in 0..dim {
            grad_center[i] += cn * neg[i];
            grad_neg[i] = cn * center[i];
        }
        grad_negs.push(grad_neg);
    }
    (loss, grad_center, grad_context, grad_negs)
}

struct Vocab {
    /// Tokens (graph indices) that occur in the walks, ascending.
    tokens: Vec<u32>,
    /// Graph index -> dense vocab index, usize::MAX when absent.
    dense: Vec<usize>,
    counts: Vec<f64>,
}

fn build_vocab(walks: &[Vec<u32>]) -> Vocab {
    let max_token = walks
        .iter()
        .flatten()
        .copied()
        .max()
        .map_or(0, |m| m as usize + 1);
    let mut raw_counts = vec![0u64; max_token];
    for walk in walks {
        for &t in walk {
            raw_counts[t as usize] += 1;
        }
    }
    let tokens: Vec<u32> = (0..max_token as u32)
        .filter(|&t| raw_counts[t as usize] > 0)
        .collect();
    let mut dense = vec![usize::MAX; max_token];
    for (i, &t) in tokens.iter().enumerate() {
        dense[t as usize] = i;
    }
    let counts = tokens.iter().map(|&t| raw_counts[t as usize] as f64).collect();
    Vocab { tokens, dense, counts }
}

/// The fixed probe batch: the first pairs of the corpus with pre-drawn
/// negatives, used only for loss monitoring.
struct Probe {
    pairs: Vec<(usize, usize, Vec<usize>)>,
}

impl Probe {
    fn build(
        walks: &[Vec<u32>],
        vocab: &Vocab,
        window: usize,
        negatives: usize,
        table: &AliasTable,
        rng: &mut ChaCha8Rng,
        cap: usize,
    ) -> Probe {
        let mut pairs = Vec::new();
        'outer: for walk in walks {
            for (pos, &center) in walk.iter().enumerate() {
                let lo = pos.saturating_sub(window);
                let hi = (pos + window + 1).min(walk.len());
                for ctx_pos in lo..hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let c = vocab.dense[center as usize];
                    let o = vocab.dense[walk[ctx_pos] as usize];
                    let negs = (0..negatives).map(|_| table.sample(rng)).collect();
                    pairs.push((c, o, negs));
                    if pairs.len() >= cap {
                        break 'outer;
                    }
                }
            }
        }
        Probe { pairs }
    }

    fn loss(&self, dim: usize, center: &SharedMatrix, context: &SharedMatrix) -> f64 {
        let mut total = 0.0;
        for (c, o, negs) in &self.pairs {
            // Safety: read-only use between training phases.
            let vc = unsafe { &*(center.row_mut(*c) as *mut [f64]) };
            let uo = unsafe { &*(context.row_mut(*o) as *mut [f64]) };
            let neg_rows: Vec<&[f64]> = negs
                .iter()
                .map(|&n| unsafe { &*(context.row_mut(n) as *mut [f64]) })
                .collect();
            let (loss, _, _, _) = pair_objective(&vc[..dim], &uo[..dim], &neg_rows);
            total += loss;
        }
        total / self.pairs.len().max(1) as f64
    }
}

/// One worker pass over a shard of walks, applying hogwild updates.
#[allow(clippy::too_many_arguments)]
fn train_shard(
    walks: &[Vec<u32>],
    vocab: &Vocab,
    cfg: &SgnsConfig,
    table: &AliasTable,
    center: &SharedMatrix,
    context: &SharedMatrix,
    rng: &mut ChaCha8Rng,
    processed: &std::sync::atomic::AtomicUsize,
    total_tokens: usize,
) {
    use std::sync::atomic::Ordering;
    let dim = cfg.dim;
    let mut acc = vec![0.0; dim];

    for walk in walks {
        for (pos, &center_token) in walk.iter().enumerate() {
            let done = processed.fetch_add(1, Ordering::Relaxed);
            let progress = done as f64 / total_tokens.max(1) as f64;
            let lr = (cfg.learning_rate * (1.0 - progress)).max(cfg.min_learning_rate);

            let c = vocab.dense[center_token as usize];
            let lo = pos.saturating_sub(cfg.window);
            let hi = (pos + cfg.window + 1).min(walk.len());
            for ctx_pos in lo..hi {
                if ctx_pos == pos {
                    continue;
                }
                let o = vocab.dense[walk[ctx_pos] as usize];
                // Safety: hogwild contract (SharedMatrix docs).
                let vc = unsafe { center.row_mut(c) };
                acc.iter_mut().for_each(|a| *a = 0.0);

                let uo = unsafe { context.row_mut(o) };
                let s = sigmoid(dot(uo, vc));
                let g = (1.0 - s) * lr;
                for i in 0..dim {
                    acc[i] += g * uo[i];
                    uo[i] += g * vc[i];
                }

                for _ in 0..cfg.negatives {
                    // Resample collisions with the positive context.
                    let mut n = table.sample(rng);
                    let mut attempts = 0;
                    while n == o && attempts < 8 {
                        n = table.sample(rng);
                        attempts += 1;
                    }
                    if n == o {
                        continue;
                    }
                    let un = unsafe { context.row_mut(n) };
                    let sn = sigmoid(dot(un, vc));
                    let gn = -sn * lr;
                    for i in 0..dim {
                        acc[i] += gn * un[i];
                        un[i] += gn * vc[i];
                    }
                }

                for i in 0..dim {
                    vc[i] += acc[i];
                }
            }
        }
    }
}

/// Train SGNS embeddings on walks whose tokens index into `ids`.
///
/// Only tokens that occur in the walks receive rows. Deterministic mode
/// replays one global update order; fast mode shards walks across workers.
pub fn train_sgns(
    walks: &[Vec<u32>],
    ids: &[String],
    entity: EntityKind,
    cfg: &SgnsConfig,
    mode: ThreadMode,
) -> Result<SgnsOutcome> {
    cfg.validate()?;
    let vocab = build_vocab(walks);
    if vocab.tokens.is_empty() {
        return Err(Error::Empty("vocabulary"));
    }
    if let Some(&max) = vocab.tokens.last() {
        if max as usize >= ids.len() {
            return Err(Error::InvalidConfig(format!(
                "walk token {max} out of range for {} ids",
                ids.len()
            )));
        }
    }
    let n = vocab.tokens.len();
    let dim = cfg.dim;
    let table = AliasTable::unigram(&vocab.counts, 0.75)?;

    // Center rows seeded per token so init does not depend on training order.
    let mut center_data = vec![0.0; n * dim];
    for (row, &token) in vocab.tokens.iter().enumerate() {
        let mut rng = seeded_rng(derive_seed(cfg.seed, "sgns-init", u64::from(token)));
        for v in &mut center_data[row * dim..(row + 1) * dim] {
            *v = (rng.random::<f64>() - 0.5) / dim as f64;
        }
    }
    let center = SharedMatrix::new(center_data, dim);
    let context = SharedMatrix::new(vec![0.0; n * dim], dim);

    let mut probe_rng = seeded_rng(derive_seed(cfg.seed, "sgns-probe", 0));
    let probe = Probe::build(walks, &vocab, cfg.window, cfg.negatives, &table, &mut probe_rng, 512);

    let tokens_per_epoch: usize = walks.iter().map(Vec::len).sum();
    let total_tokens = tokens_per_epoch * cfg.epochs;
    let processed = std::sync::atomic::AtomicUsize::new(0);

    let mut probe_loss = vec![probe.loss(dim, &center, &context)];
    let workers = mode.workers();
    for epoch in 0..cfg.epochs {
        if workers <= 1 {
            let mut rng = seeded_rng(derive_seed(cfg.seed, "sgns-neg", epoch as u64));
            train_shard(
                walks, &vocab, cfg, &table, &center, &context, &mut rng, &processed, total_tokens,
            );
        } else {
            let chunk = walks.len().div_ceil(workers);
            std::thread::scope(|scope| {
                for (shard_id, shard) in walks.chunks(chunk.max(1)).enumerate() {
                    let mut rng = seeded_rng(derive_seed(
                        cfg.seed,
                        "sgns-neg",
                        (epoch as u64) << 16 | shard_id as u64,
                    ));
                    let (center, context, vocab, table, processed) =
                        (&center, &context, &vocab, &table, &processed);
                    scope.spawn(move || {
                        train_shard(
                            shard, vocab, cfg, table, center, context, &mut rng, processed,
                            total_tokens,
                        );
                    });
                }
            });
        }
        probe_loss.push(probe.loss(dim, &center, &context));
    }

    let row_ids: Vec<String> = vocab.tokens.iter().map(|&t| ids[t as usize].clone()).collect();
    let embeddings = EmbeddingTable::new(entity, row_ids, dim, center.into_inner())?;
    Ok(SgnsOutcome { embeddings, probe_loss })
}

/// Walk generation composed with SGNS training: the service-embedding stage.
pub fn embed_services(
    g: &ServiceGraph,
    wcfg: &WalkConfig,
    scfg: &SgnsConfig,
    mode: ThreadMode,
) -> Result<SgnsOutcome> {
    let walks = generate_walks(g, wcfg)?;
    if walks.is_empty() {
        return Err(Error::Empty("walks"));
    }
    train_sgns(&walks, g.services(), EntityKind::Service, scfg, mode)
}
