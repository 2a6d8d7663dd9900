//! Top-k principal components by power iteration with deflation.
//!
//! Small dense covariance (dim <= a few hundred), deterministic seeded start
//! vectors, no external solver. Used for the 2-D projection plots.

use rand::Rng;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};

/// Eigenpairs of the sample covariance, largest first, plus the data mean.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub eigenvalues: Vec<f64>,
    /// `k x dim`, orthonormal rows.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

impl PcaModel {
    /// Coordinates of one (uncentered) row in component space.
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(row.iter().zip(&self.mean))
                    .map(|(ci, (x, m))| ci * (x - m))
                    .sum()
            })
            .collect()
    }
}

fn covariance(rows: &[&[f64]], mean: &[f64]) -> Vec<f64> {
    let d = mean.len();
    let mut cov = vec![0.0; d * d];
    let denom = (rows.len().max(2) - 1) as f64;
    for row in rows {
        for i in 0..d {
            let xi = row[i] - mean[i];
            if xi == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i * d + j] += xi * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= denom;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    cov
}

fn matvec(m: &[f64], v: &[f64], d: usize) -> Vec<f64> {
    (0..d)
        .map(|r| m[r * d..(r + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fit the top `k` principal components of the table's rows.
pub fn fit_pca(table: &EmbeddingTable, k: usize, seed: u64) -> Result<PcaModel> {
    if table.len() < 2 {
        return Err(Error::Empty("pca input (need >= 2 rows)"));
    }
    let d = table.dim();
    if d < k {
        return Err(Error::DimensionMismatch {
            context: "pca components vs data dimension",
            expected: k,
            actual: d,
        });
    }
    let rows: Vec<&[f64]> = (0..table.len()).map(|i| table.row(i)).collect();
    let mut mean = vec![0.0; d];
    for row in &rows {
        for (m, x) in mean.iter_mut().zip(*row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= rows.len() as f64;
    }
    let mut cov = covariance(&rows, &mean);

    let total_variance: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if total_variance <= 1e-300 {
        return Err(Error::DegenerateData("all vectors identical; covariance is zero"));
    }

    let mut eigenvalues = Vec::with_capacity(k);
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    for comp in 0..k {
        let mut rng = seeded_rng(derive_seed(seed, "pca", comp as u64));
        let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Keep iterates orthogonal to found components.
        let orthogonalize = |v: &mut Vec<f64>, components: &[Vec<f64>]| {
            for c in components {
                let dot: f64 = c.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= dot * ci;
                }
            }
        };
        orthogonalize(&mut v, &components);
        let n = norm(&v);
        if n == 0.0 {
            return Err(Error::DegenerateData("power iteration start vector vanished"));
        }
        v.iter_mut().for_each(|x| *x /= n);

        let mut eigenvalue = 0.0;
        for _ in 0..100_000 {
            let mut next = matvec(&cov, &v, d);
            orthogonalize(&mut next, &components);
            let n = norm(&next);
            if n <= 1e-300 {
                // Remaining spectrum is numerically zero; keep the current
                // orthonormal direction with eigenvalue 0.
                eigenvalue = 0.0;
                break;
            }
            next.iter_mut().for_each(|x| *x /= n);
            let delta = v
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            eigenvalue = n; // ||C v|| for unit v converges to lambda (PSD)
            v = next;
            if delta < 1e-14 {
                break;
            }
        }
        // Deflate.
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= eigenvalue * v[i] * v[j];
            }
        }
        eigenvalues.push(eigenvalue);
        components.push(v);
    }
    Ok(PcaModel { eigenvalues, components, mean })
}

/// Project all rows to 2-D; returns `(id, x, y)` in table order.
pub fn project_2d(table: &EmbeddingTable, seed: u64) -> Result<Vec<(String, f64, f64)>> {
    let model = fit_pca(table, 2, seed)?;
    Ok(table
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let p = model.project(table.row(i));
            (id.clone(), p[0], p[1])
        })
        .collect())
}
