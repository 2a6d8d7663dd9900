//! Doctor embeddings via multi-head attention over conducted services.
//!
//! A doctor starts as the conduct-count-weighted average of their service
//! vectors. Per head, attention coefficients over the neighbor services are
//!
//! ```text
//! alpha_i = softmax_i(LeakyReLU(a . [W d || W s_i]))
//! ```
//!
//! and the head output is `ELU(sum_i alpha_i W s_i)`; the final doctor
//! embedding concatenates the heads. Everything is trained against a
//! specialty-prediction auxiliary task with a linear softmax classifier:
//! the doctor inputs `d`, per-head `W` and `a`, and the classifier move,
//! while the service vectors stay frozen.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::Rng;

use crate::embedding::{EmbeddingTable, EntityKind};
use crate::error::{Error, Result};
use crate::events::{DoctorSpecialty, JourneyEvent};
use crate::rng::{derive_seed, seeded_rng};

/// A doctor's conducted-service multiset: distinct services with counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DoctorServiceProfile {
    pub doctor_id: String,
    pub neighbors: Vec<(String, u64)>,
}

/// Aggregate events into per-doctor service profiles, sorted by doctor id.
pub fn build_profiles(events: &[JourneyEvent]) -> Vec<DoctorServiceProfile> {
    let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for e in events {
        *counts
            .entry(e.doctor_id.clone())
            .or_default()
            .entry(e.service_id.clone())
            .or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|(doctor_id, services)| DoctorServiceProfile {
            doctor_id,
            neighbors: services.into_iter().collect(),
        })
        .collect()
}

/// Attention layer and classifier parameters. `w[k]` is `head_dim x in_dim`
/// row-major, `a[k]` has length `2 * head_dim`, the classifier maps the
/// concatenated `heads * head_dim` vector to the specialty logits.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub heads: usize,
    pub head_dim: usize,
    pub in_dim: usize,
    pub leaky_slope: f64,
    pub w: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub classifier_w: Vec<f64>,
    pub classifier_b: Vec<f64>,
    /// Specialty label order used by the classifier rows.
    pub labels: Vec<String>,
}

impl AttentionParams {
    pub fn out_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    /// Flat text serialization: `name <ndims> <dims...> <values...>` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "heads 1 1 {}", self.heads);
        let _ = writeln!(out, "head_dim 1 1 {}", self.head_dim);
        let _ = writeln!(out, "in_dim 1 1 {}", self.in_dim);
        let _ = writeln!(out, "leaky_slope 1 1 {}", self.leaky_slope);
        let _ = write!(out, "labels 1 {}", self.labels.len());
        for l in &self.labels {
            let _ = write!(out, " {l}");
        }
        out.push('\n');
        let write_vec = |out: &mut String, name: &str, dims: &[usize], values: &[f64]| {
            let _ = write!(out, "{name} {}", dims.len());
            for d in dims {
                let _ = write!(out, " {d}");
            }
            for v in values {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        };
        for (k, w) in self.w.iter().enumerate() {
            write_vec(&mut out, &format!("w{k}"), &[self.head_dim, self.in_dim], w);
        }
        for (k, a) in self.a.iter().enumerate() {
            write_vec(&mut out, &format!("a{k}"), &[2 * self.head_dim], a);
        }
        write_vec(
            &mut out,
            "classifier_w",
            &[self.labels.len(), self.out_dim()],
            &self.classifier_w,
        );
        write_vec(&mut out, "classifier_b", &[self.labels.len()], &self.classifier_b);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields: HashMap<String, Vec<String>> = HashMap::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let name = it
                .next()
                .ok_or_else(|| Error::InvalidConfig("empty parameter line".into()))?;
            fields.insert(name.to_string(), it.map(str::to_string).collect());
        }
        let scalar = |name: &str| -> Result<f64> {
            let f = fields
                .get(name)
                .ok_or_else(|| Error::InvalidConfig(format!("missing parameter `{name}`")))?;
            f.last()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::InvalidConfig(format!("bad scalar `{name}`")))
        };
        let heads = scalar("heads")? as usize;
        let head_dim = scalar("head_dim")? as usize;
        let in_dim = scalar("in_dim")? as usize;
        let leaky_slope = scalar("leaky_slope")?;
        let labels_field = fields
            .get("labels")
            .ok_or_else(|| Error::InvalidConfig("missing labels".into()))?;
        if labels_field.len() < 2 {
            return Err(Error::InvalidConfig("bad labels line".into()));
        }
        let labels: Vec<String> = labels_field[2..].to_vec();
        let values = |name: &str, expected: usize| -> Result<Vec<f64>> {
            let f = fields
                .get(name)
                .ok_or_else(|| Error::InvalidConfig(format!("missing parameter `{name}`")))?;
            let ndims: usize = f[0]
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad dims for `{name}`")))?;
            let vals: Vec<f64> = f[1 + ndims..]
                .iter()
                .map(|v| v.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::InvalidConfig(format!("bad values for `{name}`")))?;
            if vals.len() != expected {
                return Err(Error::DimensionMismatch {
                    context: "attention parameter file",
                    expected,
                    actual: vals.len(),
                });
            }
            Ok(vals)
        };
        let w = (0..heads)
            .map(|k| values(&format!("w{k}"), head_dim * in_dim))
            .collect::<Result<Vec<_>>>()?;
        let a = (0..heads)
            .map(|k| values(&format!("a{k}"), 2 * head_dim))
            .collect::<Result<Vec<_>>>()?;
        let classifier_w = values("classifier_w", labels.len() * heads * head_dim)?;
        let classifier_b = values("classifier_b", labels.len())?;
        Ok(AttentionParams {
            heads,
            head_dim,
            in_dim,
            leaky_slope,
            w,
            a,
            classifier_w,
            classifier_b,
            labels,
        })
    }
}

/// Training configuration for the specialty auxiliary task.
#[derive(Debug, Clone)]
pub struct AttentionConfig {
    pub heads: usize,
    pub head_dim: usize,
    /// Must equal `heads * head_dim`; kept explicit so a misconfigured
    /// pipeline fails loudly instead of silently reshaping.
    pub doctor_dim: usize,
    pub leaky_slope: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            heads: 4,
            head_dim: 32,
            doctor_dim: 128,
            leaky_slope: 0.2,
            learning_rate: 0.01,
            epochs: 200,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.head_dim == 0 {
            return Err(Error::InvalidConfig("heads and head_dim must be >= 1".into()));
        }
        if self.heads * self.head_dim != self.doctor_dim {
            return Err(Error::DimensionMismatch {
                context: "doctor embedding (heads * head_dim)",
                expected: self.doctor_dim,
                actual: self.heads * self.head_dim,
            });
        }
        if !(self.learning_rate > 0.0) || self.epochs == 0 {
            return Err(Error::InvalidConfig("bad learning_rate or epochs".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::InvalidConfig("holdout_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Numerically safe softmax (max subtraction).
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `W x` for row-major `w` of shape `rows x cols`.
fn matvec(w: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows];
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        out[r] = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
    out
}

/// Conduct-count-weighted average of the neighbor service vectors.
pub fn init_doctor_embedding(
    profile: &DoctorServiceProfile,
    services: &EmbeddingTable,
) -> Result<Vec<f64>> {
    if profile.neighbors.is_empty() {
        return Err(Error::Empty("doctor service profile"));
    }
    let dim = services.dim();
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    for (service, count) in &profile.neighbors {
        let vec = services.get(service)?;
        let c = *count as f64;
        for (a, v) in acc.iter_mut().zip(vec) {
            *a += c * v;
        }
        total += c;
    }
    for a in &mut acc {
        *a /= total;
    }
    Ok(acc)
}

/// Pre-softmax attention logits of one head: `LeakyReLU(a . [W d || W s_i])`.
pub fn attention_logits(
    doctor: &[f64],
    neighbor_services: &[&[f64]],
    params: &AttentionParams,
    head: usize,
) -> Vec<f64> {
    let (p_out, p_in) = (params.head_dim, params.in_dim);
    let w = &params.w[head];
    let a = &params.a[head];
    let zd = matvec(w, doctor, p_out, p_in);
    let a_d = &a[..p_out];
    let a_s = &a[p_out..];
    let doctor_part: f64 = a_d.iter().zip(&zd).map(|(x, y)| x * y).sum();
    neighbor_services
        .iter()
        .map(|s| {
            let zs = matvec(w, s, p_out, p_in);
            let u = doctor_part + a_s.iter().zip(&zs).map(|(x, y)| x * y).sum::<f64>();
            leaky_relu(u, params.leaky_slope)
        })
        .collect()
}

/// Normalized attention coefficients of one head; a probability vector.
pub fn attention_coefficients(
    doctor: &[f64],
    neighbor_services: &[&[f64]],
    params: &AttentionParams,
    head: usize,
) -> Result<Vec<f64>> {
    if neighbor_services.is_empty() {
        return Err(Error::Empty("attention neighborhood"));
    }
    Ok(softmax(&attention_logits(doctor, neighbor_services, params, head)))
}

/// Multi-head aggregation: concatenated `ELU(sum_i alpha_i W s_i)` per head.
pub fn aggregate_multihead(
    doctor: &[f64],
    neighbor_services: &[&[f64]],
    params: &AttentionParams,
) -> Result<Vec<f64>> {
    if neighbor_services.is_empty() {
        return Err(Error::Empty("attention neighborhood"));
    }
    let (p_out, p_in) = (params.head_dim, params.in_dim);
    let mut out = Vec::with_capacity(params.out_dim());
    for head in 0..params.heads {
        let alpha = attention_coefficients(doctor, neighbor_services, params, head)?;
        let w = &params.w[head];
        let mut m = vec![0.0; p_out];
        for (s, &al) in neighbor_services.iter().zip(&alpha) {
            let zs = matvec(w, s, p_out, p_in);
            for (mi, zi) in m.iter_mut().zip(&zs) {
                *mi += al * zi;
            }
        }
        out.extend(m.into_iter().map(elu));
    }
    Ok(out)
}

/// A resolved training instance: the frozen service matrix, doctor states,
/// labels, and the attention parameters.
pub struct AttentionModel {
    pub params: AttentionParams,
    /// Doctor input vectors, `n x in_dim` row-major; updated by training.
    pub doctors: Vec<f64>,
    pub doctor_ids: Vec<String>,
    /// Per doctor: (service row in `svc`, conduct count).
    neighbor_rows: Vec<Vec<(usize, f64)>>,
    pub label_of: Vec<usize>,
    svc: Vec<f64>,
    svc_dim: usize,
}

/// Gradients of the mean cross-entropy loss over a batch.
pub struct AttentionGradients {
    pub w: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub classifier_w: Vec<f64>,
    pub classifier_b: Vec<f64>,
    /// Per batch doctor, gradient w.r.t. its input vector.
    pub doctors: Vec<Vec<f64>>,
}

impl AttentionModel {
    /// Resolve profiles against frozen service embeddings.
    ///
    /// Services without embeddings are dropped from profiles; doctors left
    /// with no known services are dropped entirely and reported in the
    /// second return value.
    pub fn new(
        profiles: &[DoctorServiceProfile],
        specialties: &[DoctorSpecialty],
        services: &EmbeddingTable,
        cfg: &AttentionConfig,
    ) -> Result<(Self, Vec<String>)> {
        cfg.validate()?;
        let specialty_of: HashMap<&str, &str> = specialties
            .iter()
            .map(|s| (s.doctor_id.as_str(), s.specialty.as_str()))
            .collect();
        let mut labels: Vec<String> = specialties.iter().map(|s| s.specialty.clone()).collect();
        labels.sort_unstable();
        labels.dedup();
        let label_index: HashMap<&str, usize> =
            labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();

        let mut dropped = Vec::new();
        let mut doctor_ids = Vec::new();
        let mut neighbor_rows = Vec::new();
        let mut label_of = Vec::new();
        let mut doctors = Vec::new();
        for profile in profiles {
            let specialty = specialty_of
                .get(profile.doctor_id.as_str())
                .ok_or_else(|| Error::MissingSpecialty(profile.doctor_id.clone()))?;
            let rows: Vec<(usize, f64)> = profile
                .neighbors
                .iter()
                .filter_map(|(s, c)| services.row_index(s).map(|r| (r, *c as f64)))
                .collect();
            if rows.is_empty() {
                dropped.push(profile.doctor_id.clone());
                continue;
            }
            let kept = DoctorServiceProfile {
                doctor_id: profile.doctor_id.clone(),
                neighbors: profile
                    .neighbors
                    .iter()
                    .filter(|(s, _)| services.row_index(s).is_some())
                    .cloned()
                    .collect(),
            };
            doctors.extend(init_doctor_embedding(&kept, services)?);
            doctor_ids.push(profile.doctor_id.clone());
            neighbor_rows.push(rows);
            label_of.push(label_index[*specialty]);
        }
        if doctor_ids.is_empty() {
            return Err(Error::Empty("trainable doctors"));
        }

        let in_dim = services.dim();
        let (p_out, heads) = (cfg.head_dim, cfg.heads);
        let mut rng = seeded_rng(derive_seed(cfg.seed, "attention-init", 0));
        let mut glorot = |n: usize, fan_in: usize, fan_out: usize| {
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-s..s)).collect::<Vec<f64>>()
        };
        let w: Vec<Vec<f64>> = (0..heads)
            .map(|_| glorot(p_out * in_dim, in_dim, p_out))
            .collect();
        let a: Vec<Vec<f64>> = (0..heads).map(|_| glorot(2 * p_out, 2 * p_out, 1)).collect();
        let out_dim = heads * p_out;
        let classifier_w = glorot(labels.len() * out_dim, out_dim, labels.len());
        let classifier_b = vec![0.0; labels.len()];

        let params = AttentionParams {
            heads,
            head_dim: p_out,
            in_dim,
            leaky_slope: cfg.leaky_slope,
            w,
            a,
            classifier_w,
            classifier_b,
            labels,
        };
        let model = AttentionModel {
            params,
            doctors,
            doctor_ids,
            neighbor_rows,
            label_of,
            svc: (0..services.len()).flat_map(|i| services.row(i).to_vec()).collect(),
            svc_dim: in_dim,
        };
        Ok((model, dropped))
    }

    pub fn n_doctors(&self) -> usize {
        self.doctor_ids.len()
    }

    fn doctor_vec(&self, j: usize) -> &[f64] {
        &self.doctors[j * self.params.in_dim..(j + 1) * self.params.in_dim]
    }

    fn service_row(&self, r: usize) -> &[f64] {
        &self.svc[r * self.svc_dim..(r + 1) * self.svc_dim]
    }

    /// Attention output `d'` for doctor `j` under the current parameters.
    pub fn doctor_output(&self, j: usize) -> Vec<f64> {
        let neighbors: Vec<&[f64]> = self.neighbor_rows[j]
            .iter()
            .map(|&(r, _)| self.service_row(r))
            .collect();
        aggregate_multihead(self.doctor_vec(j), &neighbors, &self.params)
            .expect("resolved doctors have neighbors")
    }

    pub fn logits(&self, j: usize) -> Vec<f64> {
        let out = self.doctor_output(j);
        let n_labels = self.params.labels.len();
        let d = self.params.out_dim();
        (0..n_labels)
            .map(|l| {
                self.params.classifier_b[l]
                    + self.params.classifier_w[l * d..(l + 1) * d]
                        .iter()
                        .zip(&out)
                        .map(|(x, y)| x * y)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Mean cross-entropy loss and analytic gradients over `batch`.
    pub fn loss_and_gradients(&self, batch: &[usize]) -> (f64, AttentionGradients) {
        let p = &self.params;
        let (heads, p_out, p_in) = (p.heads, p.head_dim, p.in_dim);
        let out_dim = p.out_dim();
        let n_labels = p.labels.len();
        let scale = 1.0 / batch.len() as f64;

        let mut grads = AttentionGradients {
            w: (0..heads).map(|_| vec![0.0; p_out * p_in]).collect(),
            a: (0..heads).map(|_| vec![0.0; 2 * p_out]).collect(),
            classifier_w: vec![0.0; n_labels * out_dim],
            classifier_b: vec![0.0; n_labels],
            doctors: batch.iter().map(|_| vec![0.0; p_in]).collect(),
        };
        let mut total_loss = 0.0;

        for (bi, &j) in batch.iter().enumerate() {
            let d = self.doctor_vec(j);
            let rows = &self.neighbor_rows[j];
            let neighbors: Vec<&[f64]> = rows.iter().map(|&(r, _)| self.service_row(r)).collect();
            let n = neighbors.len();

            // Forward, keeping per-head intermediates.
            let mut head_alpha = Vec::with_capacity(heads);
            let mut head_u = Vec::with_capacity(heads);
            let mut head_zd = Vec::with_capacity(heads);
            let mut head_zs = Vec::with_capacity(heads);
            let mut head_m = Vec::with_capacity(heads);
            let mut d_out = vec![0.0; out_dim];
            for k in 0..heads {
                let w = &p.w[k];
                let a_d = &p.a[k][..p_out];
                let a_s = &p.a[k][p_out..];
                let zd = matvec(w, d, p_out, p_in);
                let doctor_part: f64 = a_d.iter().zip(&zd).map(|(x, y)| x * y).sum();
                let zs: Vec<Vec<f64>> =
                    neighbors.iter().map(|s| matvec(w, s, p_out, p_in)).collect();
                let u: Vec<f64> = zs
                    .iter()
                    .map(|z| doctor_part + a_s.iter().zip(z).map(|(x, y)| x * y).sum::<f64>())
                    .collect();
                let e: Vec<f64> = u.iter().map(|&x| leaky_relu(x, p.leaky_slope)).collect();
                let alpha = softmax(&e);
                let mut m = vec![0.0; p_out];
                for (z, &al) in zs.iter().zip(&alpha) {
                    for (mi, zi) in m.iter_mut().zip(z) {
                        *mi += al * zi;
                    }
                }
                for t in 0..p_out {
                    d_out[k * p_out + t] = elu(m[t]);
                }
                head_alpha.push(alpha);
                head_u.push(u);
                head_zd.push(zd);
                head_zs.push(zs);
                head_m.push(m);
            }

            let logits: Vec<f64> = (0..n_labels)
                .map(|l| {
                    p.classifier_b[l]
                        + p.classifier_w[l * out_dim..(l + 1) * out_dim]
                            .iter()
                            .zip(&d_out)
                            .map(|(x, y)| x * y)
                            .sum::<f64>()
                })
                .collect();
            let probs = softmax(&logits);
            let y = self.label_of[j];
            total_loss -= probs[y].max(f64::MIN_POSITIVE).ln();

            // Backward.
            let mut dlogits = probs;
            dlogits[y] -= 1.0;
            for v in &mut dlogits {
                *v *= scale;
            }
            let mut g_out = vec![0.0; out_dim];
            for l in 0..n_labels {
                grads.classifier_b[l] += dlogits[l];
                for t in 0..out_dim {
                    grads.classifier_w[l * out_dim + t] += dlogits[l] * d_out[t];
                    g_out[t] += dlogits[l] * p.classifier_w[l * out_dim + t];
                }
            }

            for k in 0..heads {
                let w = &p.w[k];
                let a_d = &p.a[k][..p_out];
                let a_s = &p.a[k][p_out..];
                let alpha = &head_alpha[k];
                let u = &head_u[k];
                let zd = &head_zd[k];
                let zs = &head_zs[k];
                let m = &head_m[k];

                // Through ELU into this head's aggregate.
                let g_m: Vec<f64> = (0..p_out)
                    .map(|t| g_out[k * p_out + t] * elu_grad(m[t]))
                    .collect();

                // d alpha_i = g_m . z_i; the aggregate also feeds z_i directly.
                let mut d_alpha = vec![0.0; n];
                let mut g_zs: Vec<Vec<f64>> = vec![vec![0.0; p_out]; n];
                for i in 0..n {
                    d_alpha[i] = g_m.iter().zip(&zs[i]).map(|(x, y)| x * y).sum();
                    for t in 0..p_out {
                        g_zs[i][t] += alpha[i] * g_m[t];
                    }
                }

                // Softmax then LeakyReLU backward.
                let s: f64 = alpha.iter().zip(&d_alpha).map(|(x, y)| x * y).sum();
                let du: Vec<f64> = (0..n)
                    .map(|i| {
                        let de = alpha[i] * (d_alpha[i] - s);
                        de * if u[i] > 0.0 { 1.0 } else { p.leaky_slope }
                    })
                    .collect();
                let du_sum: f64 = du.iter().sum();

                for t in 0..p_out {
                    grads.a[k][t] += du_sum * zd[t];
                    for i in 0..n {
                        grads.a[k][p_out + t] += du[i] * zs[i][t];
                    }
                }

                // z gradients into W and the doctor vector.
                let mut g_zd = vec![0.0; p_out];
                for t in 0..p_out {
                    g_zd[t] = du_sum * a_d[t];
                }
                for i in 0..n {
                    for t in 0..p_out {
                        g_zs[i][t] += du[i] * a_s[t];
                    }
                }
                for t in 0..p_out {
                    for c in 0..p_in {
                        grads.w[k][t * p_in + c] += g_zd[t] * d[c];
                    }
                }
                for (i, s_vec) in neighbors.iter().enumerate() {
                    for t in 0..p_out {
                        let g = g_zs[i][t];
                        if g != 0.0 {
                            for c in 0..p_in {
                                grads.w[k][t * p_in + c] += g * s_vec[c];
                            }
                        }
                    }
                }
                for t in 0..p_out {
                    let g = g_zd[t];
                    for c in 0..p_in {
                        grads.doctors[bi][c] += g * w[t * p_in + c];
                    }
                }
            }
        }

        (total_loss * scale, grads)
    }

    /// Apply one gradient-descent step computed on `batch`. Doctors whose
    /// index is not marked trainable keep their input vector (their
    /// gradients are discarded), which is how held-out doctors stay unleaked.
    pub fn step(&mut self, batch: &[usize], trainable: &[bool], lr: f64) -> f64 {
        let (loss, grads) = self.loss_and_gradients(batch);
        let p = &mut self.params;
        for k in 0..p.heads {
            for (w, g) in p.w[k].iter_mut().zip(&grads.w[k]) {
                *w -= lr * g;
            }
            for (a, g) in p.a[k].iter_mut().zip(&grads.a[k]) {
                *a -= lr * g;
            }
        }
        for (w, g) in p.classifier_w.iter_mut().zip(&grads.classifier_w) {
            *w -= lr * g;
        }
        for (b, g) in p.classifier_b.iter_mut().zip(&grads.classifier_b) {
            *b -= lr * g;
        }
        let in_dim = p.in_dim;
        for (bi, &j) in batch.iter().enumerate() {
            if trainable[j] {
                let row = &mut self.doctors[j * in_dim..(j + 1) * in_dim];
                for (d, g) in row.iter_mut().zip(&grads.doctors[bi]) {
                    *d -= lr * g;
                }
            }
        }
        loss
    }
}

/// Training result: final doctor embeddings (`d'`, dimension
/// `heads * head_dim`), learned parameters, and an accuracy report.
pub struct DoctorTrainOutcome {
    pub doctors: EmbeddingTable,
    pub params: AttentionParams,
    pub report: SpecialtyReport,
}

#[derive(Debug, Clone)]
pub struct SpecialtyReport {
    pub train_accuracy: f64,
    pub holdout_accuracy: Option<f64>,
    pub holdout_ids: Vec<String>,
    /// Full-batch loss per epoch on the training split.
    pub probe_loss: Vec<f64>,
    pub dropped: Vec<String>,
}

/// Train doctor embeddings on the specialty auxiliary task.
///
/// Held-out doctors never contribute gradients and keep their initialized
/// input vectors; their reported accuracy therefore measures how well the
/// learned aggregation generalizes from service profiles alone.
pub fn train_doctor_embeddings(
    profiles: &[DoctorServiceProfile],
    specialties: &[DoctorSpecialty],
    services: &EmbeddingTable,
    cfg: &AttentionConfig,
) -> Result<DoctorTrainOutcome> {
    let (mut model, dropped) = AttentionModel::new(profiles, specialties, services, cfg)?;
    let n = model.n_doctors();

    // Stratified holdout split by specialty.
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for j in 0..n {
        by_label.entry(model.label_of[j]).or_default().push(j);
    }
    let mut rng = seeded_rng(derive_seed(cfg.seed, "attention-split", 0));
    let mut trainable = vec![true; n];
    let mut holdout = Vec::new();
    for members in by_label.values() {
        let mut members = members.clone();
        use rand::seq::SliceRandom;
        members.shuffle(&mut rng);
        let k = ((members.len() as f64) * cfg.holdout_fraction).floor() as usize;
        let k = k.min(members.len().saturating_sub(1)); // keep >= 1 in train
        for &j in &members[..k] {
            trainable[j] = false;
            holdout.push(j);
        }
    }
    holdout.sort_unstable();
    let train: Vec<usize> = (0..n).filter(|&j| trainable[j]).collect();

    let mut probe_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let loss = model.step(&train, &trainable, cfg.learning_rate);
        probe_loss.push(loss);
    }

    let accuracy = |set: &[usize]| -> Option<f64> {
        if set.is_empty() {
            return None;
        }
        let correct = set
            .iter()
            .filter(|&&j| {
                let logits = model.logits(j);
                let pred = logits
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap();
                pred == model.label_of[j]
            })
            .count();
        Some(correct as f64 / set.len() as f64)
    };

    let report = SpecialtyReport {
        train_accuracy: accuracy(&train).unwrap_or(0.0),
        holdout_accuracy: accuracy(&holdout),
        holdout_ids: holdout.iter().map(|&j| model.doctor_ids[j].clone()).collect(),
        probe_loss,
        dropped,
    };

    let out_dim = model.params.out_dim();
    let mut data = Vec::with_capacity(n * out_dim);
    for j in 0..n {
        data.extend(model.doctor_output(j));
    }
    let doctors = EmbeddingTable::new(EntityKind::Doctor, model.doctor_ids.clone(), out_dim, data)?;
    Ok(DoctorTrainOutcome { doctors, params: model.params, report })
}
