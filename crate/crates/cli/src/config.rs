//! Declarative pipeline configuration: one `key = value` file plus flag and
//! environment overrides (`HGE_SEED`, `HGE_THREADS`).
//!
//! Defaults: an 8-day co-occurrence window, 4 attention heads,
//! 128-dimensional embeddings at every level, 10 negative samples.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hge_core::events::EventFormat;
use hge_core::parallel::ThreadMode;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    // Paths.
    pub events: PathBuf,
    pub events_format: EventFormat,
    pub specialties: PathBuf,
    pub labels: PathBuf,
    pub output_dir: PathBuf,

    // Globals.
    pub seed: u64,
    pub threads: ThreadMode,

    // Service stage.
    pub window_days: i64,
    pub service_dim: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub return_param: f64,
    pub inout_param: f64,
    pub sgns_window: usize,
    pub negatives: usize,
    pub sgns_epochs: usize,
    pub sgns_learning_rate: f64,

    // Doctor stage.
    pub heads: usize,
    pub doctor_dim: usize,
    pub attention_learning_rate: f64,
    pub attention_epochs: usize,
    pub attention_holdout: f64,

    // Patient stage.
    pub patient_dim: usize,
    pub patient_epochs: usize,
    pub patient_learning_rate: f64,
    pub patient_samples_per_epoch: Option<usize>,
    pub annotation_lr_scale: f64,

    // Evaluation.
    pub eval_ratios: Vec<f64>,
    pub eval_repeats: usize,
    pub l2_lambda: f64,
    pub run_baselines: bool,
    /// Also evaluate concatenated service+doctor baseline embeddings.
    /// Off by default; reported as separate methods when enabled.
    pub concat_baselines: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            events: PathBuf::from("events.csv"),
            events_format: EventFormat::Csv,
            specialties: PathBuf::from("specialties.csv"),
            labels: PathBuf::from("labels.csv"),
            output_dir: PathBuf::from("out"),
            seed: 42,
            threads: ThreadMode::Deterministic,
            window_days: 8,
            service_dim: 128,
            walks_per_node: 10,
            walk_length: 80,
            return_param: 1.0,
            inout_param: 1.0,
            sgns_window: 10,
            negatives: 10,
            sgns_epochs: 5,
            sgns_learning_rate: 0.025,
            heads: 4,
            doctor_dim: 128,
            attention_learning_rate: 0.01,
            attention_epochs: 200,
            attention_holdout: 0.2,
            patient_dim: 128,
            patient_epochs: 5,
            patient_learning_rate: 0.025,
            patient_samples_per_epoch: None,
            annotation_lr_scale: 1.0,
            eval_ratios: vec![0.2, 0.4, 0.6, 0.8],
            eval_repeats: 10,
            l2_lambda: 1.0,
            run_baselines: true,
            concat_baselines: false,
        }
    }
}

fn parse_threads(text: &str) -> Result<ThreadMode> {
    if text == "deterministic" {
        Ok(ThreadMode::Deterministic)
    } else {
        let n: usize = text
            .parse()
            .with_context(|| format!("threads must be `deterministic` or a count, got `{text}`"))?;
        Ok(ThreadMode::Fast(n))
    }
}

impl PipelineConfig {
    /// Parse a config file; unknown keys fail rather than being ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = PipelineConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected `key = value`", path.display(), lineno + 1))?;
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        macro_rules! parse {
            () => {
                value.parse().with_context(|| format!("bad value `{value}` for `{key}`"))?
            };
        }
        match key {
            "events" => self.events = PathBuf::from(value),
            "events_format" => {
                self.events_format = match value {
                    "csv" => EventFormat::Csv,
                    "jsonl" => EventFormat::Jsonl,
                    other => bail!("events_format must be csv or jsonl, got `{other}`"),
                }
            }
            "specialties" => self.specialties = PathBuf::from(value),
            "labels" => self.labels = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "seed" => self.seed = parse!(),
            "threads" => self.threads = parse_threads(value)?,
            "window_days" => self.window_days = parse!(),
            "service_dim" => self.service_dim = parse!(),
            "walks_per_node" => self.walks_per_node = parse!(),
            "walk_length" => self.walk_length = parse!(),
            "p" | "return_param" => self.return_param = parse!(),
            "q" | "inout_param" => self.inout_param = parse!(),
            "sgns_window" => self.sgns_window = parse!(),
            "negatives" => self.negatives = parse!(),
            "sgns_epochs" => self.sgns_epochs = parse!(),
            "sgns_learning_rate" => self.sgns_learning_rate = parse!(),
            "heads" => self.heads = parse!(),
            "doctor_dim" => self.doctor_dim = parse!(),
            "attention_learning_rate" => self.attention_learning_rate = parse!(),
            "attention_epochs" => self.attention_epochs = parse!(),
            "attention_holdout" => self.attention_holdout = parse!(),
            "patient_dim" => self.patient_dim = parse!(),
            "patient_epochs" => self.patient_epochs = parse!(),
            "patient_learning_rate" => self.patient_learning_rate = parse!(),
            "patient_samples_per_epoch" => {
                self.patient_samples_per_epoch = Some(parse!());
            }
            "annotation_lr_scale" => self.annotation_lr_scale = parse!(),
            "eval_ratios" => {
                self.eval_ratios = value
                    .split(',')
                    .map(|r| r.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .with_context(|| format!("bad ratio list `{value}`"))?;
            }
            "eval_repeats" => self.eval_repeats = parse!(),
            "l2_lambda" => self.l2_lambda = parse!(),
            "run_baselines" => self.run_baselines = parse!(),
            "concat_baselines" => self.concat_baselines = parse!(),
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    /// Apply `HGE_SEED` / `HGE_THREADS` when present.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(seed) = std::env::var("HGE_SEED") {
            self.seed = seed.parse().context("bad HGE_SEED")?;
        }
        if let Ok(threads) = std::env::var("HGE_THREADS") {
            self.threads = parse_threads(&threads)?;
        }
        Ok(())
    }

    /// Canonical `key = value` dump; hashed into the manifest.
    pub fn canonical_text(&self) -> String {
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert("events", self.events.display().to_string());
        kv.insert(
            "events_format",
            match self.events_format {
                EventFormat::Csv => "csv".into(),
                EventFormat::Jsonl => "jsonl".into(),
            },
        );
        kv.insert("specialties", self.specialties.display().to_string());
        kv.insert("labels", self.labels.display().to_string());
        kv.insert("seed", self.seed.to_string());
        kv.insert(
            "threads",
            match self.threads {
                ThreadMode::Deterministic => "deterministic".into(),
                ThreadMode::Fast(n) => n.to_string(),
            },
        );
        kv.insert("window_days", self.window_days.to_string());
        kv.insert("service_dim", self.service_dim.to_string());
        kv.insert("walks_per_node", self.walks_per_node.to_string());
        kv.insert("walk_length", self.walk_length.to_string());
        kv.insert("p", self.return_param.to_string());
        kv.insert("q", self.inout_param.to_string());
        kv.insert("sgns_window", self.sgns_window.to_string());
        kv.insert("negatives", self.negatives.to_string());
        kv.insert("sgns_epochs", self.sgns_epochs.to_string());
        kv.insert("sgns_learning_rate", self.sgns_learning_rate.to_string());
        kv.insert("heads", self.heads.to_string());
        kv.insert("doctor_dim", self.doctor_dim.to_string());
        kv.insert("attention_learning_rate", self.attention_learning_rate.to_string());
        kv.insert("attention_epochs", self.attention_epochs.to_string());
        kv.insert("attention_holdout", self.attention_holdout.to_string());
        kv.insert("patient_dim", self.patient_dim.to_string());
        kv.insert("patient_epochs", self.patient_epochs.to_string());
        kv.insert("patient_learning_rate", self.patient_learning_rate.to_string());
        kv.insert("annotation_lr_scale", self.annotation_lr_scale.to_string());
        if let Some(s) = self.patient_samples_per_epoch {
            kv.insert("patient_samples_per_epoch", s.to_string());
        }
        kv.insert(
            "eval_ratios",
            self.eval_ratios
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.insert("eval_repeats", self.eval_repeats.to_string());
        kv.insert("l2_lambda", self.l2_lambda.to_string());
        kv.insert("run_baselines", self.run_baselines.to_string());
        kv.insert("concat_baselines", self.concat_baselines.to_string());
        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
