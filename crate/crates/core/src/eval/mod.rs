//! Node-classification protocol: logistic probes on patient embeddings,
//! Micro/Macro-F1 across training ratios with repeated stratified splits,
//! identical splits for every method so comparisons are paired.

pub mod baselines;
pub mod logreg;

use std::collections::BTreeMap;
use std::fmt::Write as _;

pub use baselines::{
    build_bipartite, run_baseline, to_homogeneous, BaselineConfig, BaselineMethod, BipartiteGraph,
    BipartiteMode,
};
pub use logreg::{train_logreg, LogregModel};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::events::PatientLabel;
use crate::rng::{derive_seed, seeded_rng};

/// Evaluation protocol settings.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub train_ratios: Vec<f64>,
    pub repeats: usize,
    pub l2_lambda: f64,
    pub logreg_max_iters: usize,
    pub logreg_grad_tol: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train_ratios: vec![0.2, 0.4, 0.6, 0.8],
            repeats: 10,
            l2_lambda: 1.0,
            logreg_max_iters: 3000,
            logreg_grad_tol: 1.0e-6,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_ratios.is_empty()
            || self.train_ratios.iter().any(|r| !(0.0 < *r && *r < 1.0))
        {
            return Err(Error::InvalidConfig("train ratios must lie in (0, 1)".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be >= 1".into()));
        }
        if self.l2_lambda < 0.0 {
            return Err(Error::InvalidConfig("l2_lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// (micro, macro) F1 for binary labels.
///
/// Per-class F1 with a zero denominator counts as 0; micro-F1 pools the
/// per-class counts and equals accuracy for single-label binary input.
pub fn f1_scores(y_true: &[u8], y_pred: &[u8]) -> Result<(f64, f64)> {
    if y_true.is_empty() {
        return Err(Error::Empty("label vectors"));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            context: "f1 labels",
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    let mut tp = [0u64; 2];
    let mut fp = [0u64; 2];
    let mut fn_ = [0u64; 2];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let (t, p) = (usize::from(t), usize::from(p));
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let f1_of = |tp: u64, fp: u64, fn_: u64| -> f64 {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let macro_f1 = (f1_of(tp[0], fp[0], fn_[0]) + f1_of(tp[1], fp[1], fn_[1])) / 2.0;
    let micro_f1 = f1_of(tp[0] + tp[1], fp[0] + fp[1], fn_[0] + fn_[1]);
    Ok((micro_f1, macro_f1))
}

/// Stratified train/test split over label indices; deterministic in
/// `(seed, ratio, repeat)` and independent of any embedding, so every method
/// sees identical splits.
pub fn stratified_split(
    labels: &[u8],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = seeded_rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for members in by_class.values() {
        if members.len() < 2 {
            return Err(Error::DegenerateSplit(ratio));
        }
        let mut members = members.clone();
        use rand::seq::SliceRandom;
        members.shuffle(&mut rng);
        let k = ((members.len() as f64) * ratio).round() as usize;
        let k = k.clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// One evaluation cell.
#[derive(Debug, Clone)]
pub struct F1Cell {
    pub method: String,
    pub ratio: f64,
    pub repeat: usize,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

/// All cells of one evaluation run.
#[derive(Debug, Clone, Default)]
pub struct F1Report {
    pub cells: Vec<F1Cell>,
}

#[derive(Debug, Clone, Copy)]
pub struct F1Summary {
    pub micro_mean: f64,
    pub micro_std: f64,
    pub macro_mean: f64,
    pub macro_std: f64,
}

impl F1Report {
    pub fn methods(&self) -> Vec<String> {
        let mut methods: Vec<String> = self.cells.iter().map(|c| c.method.clone()).collect();
        methods.sort_unstable();
        methods.dedup();
        methods
    }

    pub fn ratios(&self) -> Vec<f64> {
        let mut ratios: Vec<f64> = self.cells.iter().map(|c| c.ratio).collect();
        ratios.sort_by(f64::total_cmp);
        ratios.dedup();
        ratios
    }

    /// Mean and standard deviation over repeats of one (method, ratio) cell.
    pub fn summary(&self, method: &str, ratio: f64) -> Option<F1Summary> {
        let cells: Vec<&F1Cell> = self
            .cells
            .iter()
            .filter(|c| c.method == method && (c.ratio - ratio).abs() < 1e-12)
            .collect();
        if cells.is_empty() {
            return None;
        }
        let n = cells.len() as f64;
        let micro_mean = cells.iter().map(|c| c.micro_f1).sum::<f64>() / n;
        let macro_mean = cells.iter().map(|c| c.macro_f1).sum::<f64>() / n;
        let micro_std =
            (cells.iter().map(|c| (c.micro_f1 - micro_mean).powi(2)).sum::<f64>() / n).sqrt();
        let macro_std =
            (cells.iter().map(|c| (c.macro_f1 - macro_mean).powi(2)).sum::<f64>() / n).sqrt();
        Some(F1Summary { micro_mean, micro_std, macro_mean, macro_std })
    }

    /// `method,ratio,repeat,micro_f1,macro_f1` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,ratio,repeat,micro_f1,macro_f1\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                c.method, c.ratio, c.repeat, c.micro_f1, c.macro_f1
            );
        }
        out
    }

    /// Aligned text summary: one row per method, micro then macro means per
    /// training ratio.
    pub fn to_table(&self) -> String {
        let ratios = self.ratios();
        let mut out = String::new();
        let _ = write!(out, "{:<24}", "method");
        for &r in &ratios {
            let _ = write!(out, " micro@{:<4.0}%", r * 100.0);
        }
        for &r in &ratios {
            let _ = write!(out, " macro@{:<4.0}%", r * 100.0);
        }
        out.push('\n');
        for method in self.methods() {
            let _ = write!(out, "{method:<24}");
            for &r in &ratios {
                match self.summary(&method, r) {
                    Some(s) => {
                        let _ = write!(out, " {:<10.3}", s.micro_mean);
                    }
                    None => {
                        let _ = write!(out, " {:<10}", "-");
                    }
                }
            }
            for &r in &ratios {
                match self.summary(&method, r) {
                    Some(s) => {
                        let _ = write!(out, " {:<10.3}", s.macro_mean);
                    }
                    None => {
                        let _ = write!(out, " {:<10}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Standardize columns using train-row statistics only.
fn standardized(rows: &[Vec<f64>], train: &[usize]) -> Vec<Vec<f64>> {
    let dim = rows.first().map_or(0, Vec::len);
    let n = train.len() as f64;
    let mut mean = vec![0.0; dim];
    for &i in train {
        for (m, v) in mean.iter_mut().zip(&rows[i]) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for &i in train {
        for ((s, v), m) in var.iter_mut().zip(&rows[i]).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    rows.iter()
        .map(|r| r.iter().zip(&mean).zip(&std).map(|((v, m), s)| (v - m) / s).collect())
        .collect()
}

/// Run the full protocol for every method over ratios and repeats.
///
/// Splits depend only on `(labels, seed, ratio, repeat)`, so every method is
/// scored on identical train/test partitions.
pub fn evaluate_all(
    embeddings: &BTreeMap<String, EmbeddingTable>,
    labels: &[PatientLabel],
    cfg: &EvalConfig,
) -> Result<F1Report> {
    cfg.validate()?;
    if embeddings.is_empty() {
        return Err(Error::Empty("method set"));
    }
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let mut labels: Vec<PatientLabel> = labels.to_vec();
    labels.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    let y: Vec<u8> = labels.iter().map(|l| l.label).collect();

    // Pre-resolve feature rows per method; every labeled patient must be
    // covered by every method.
    let mut features: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    for (method, table) in embeddings {
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|l| table.get(&l.patient_id).map(<[f64]>::to_vec))
            .collect::<Result<_>>()?;
        features.insert(method, rows);
    }

    let mut report = F1Report::default();
    for (ratio_idx, &ratio) in cfg.train_ratios.iter().enumerate() {
        for repeat in 0..cfg.repeats {
            let split_seed = derive_seed(
                cfg.seed,
                "eval-split",
                (ratio_idx as u64) << 32 | repeat as u64,
            );
            let (train, test) = stratified_split(&y, ratio, split_seed)?;
            for (method, rows) in &features {
                let standardized_rows = standardized(rows, &train);
                let x_train: Vec<Vec<f64>> =
                    train.iter().map(|&i| standardized_rows[i].clone()).collect();
                let y_train: Vec<u8> = train.iter().map(|&i| y[i]).collect();
                let model = train_logreg(
                    &x_train,
                    &y_train,
                    cfg.l2_lambda,
                    cfg.logreg_max_iters,
                    cfg.logreg_grad_tol,
                )?;
                let y_test: Vec<u8> = test.iter().map(|&i| y[i]).collect();
                let y_pred: Vec<u8> =
                    test.iter().map(|&i| model.predict(&standardized_rows[i])).collect();
                let (micro_f1, macro_f1) = f1_scores(&y_test, &y_pred)?;
                report.cells.push(F1Cell {
                    method: method.to_string(),
                    ratio,
                    repeat,
                    micro_f1,
                    macro_f1,
                });
            }
        }
    }
    Ok(report)
}
