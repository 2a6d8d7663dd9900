//! Stage orchestration: build-graph, train-services, train-doctors,
//! train-patients, evaluate, project. Every stage reads its inputs from disk
//! and writes its artifacts into the output directory, so a run can resume
//! where it left off; the manifest records a content hash per artifact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};

use hge_core::attention::{build_profiles, train_doctor_embeddings, AttentionConfig};
use hge_core::embedding::{EmbeddingTable, EntityKind};
use hge_core::eval::{
    build_bipartite, evaluate_all, run_baseline, BaselineConfig, BaselineMethod, BipartiteMode,
    EvalConfig,
};
use hge_core::events::{load_events, load_labels, load_specialties, sort_journeys};
use hge_core::multigraph::{build_multigraph, duplicate_and_annotate, train_patient_embeddings, PatientConfig};
use hge_core::pca::project_2d;
use hge_core::rng::derive_seed;
use hge_core::second_order::SecondOrderConfig;
use hge_core::service_graph::{build_cooccurrence, ServiceGraph};
use hge_core::sgns::{embed_services, SgnsConfig};
use hge_core::walks::WalkConfig;

use crate::config::PipelineConfig;
use crate::manifest::{fnv64, Manifest};
use crate::project::{points_to_csv, points_to_svg};

pub const STAGES: [&str; 6] = [
    "build-graph",
    "train-services",
    "train-doctors",
    "train-patients",
    "evaluate",
    "project",
];

/// Artifact file names per stage, in write order.
pub fn stage_artifacts(stage: &str) -> Vec<&'static str> {
    match stage {
        "build-graph" => vec!["graph.tsv"],
        "train-services" => vec!["services.emb"],
        "train-doctors" => vec!["doctors.emb", "attention_params.txt", "doctor_report.txt"],
        "train-patients" => vec!["patients.emb", "annotation_params.txt"],
        "evaluate" => vec!["evaluation.csv", "summary.txt"],
        "project" => vec![
            "projection_services.csv",
            "projection_services.svg",
            "projection_doctors.csv",
            "projection_doctors.svg",
        ],
        _ => vec![],
    }
}

fn out_path(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn stage_build_graph(cfg: &PipelineConfig) -> Result<()> {
    let events = load_events(&cfg.events, cfg.events_format)?;
    let journeys = sort_journeys(&events);
    let graph = build_cooccurrence(&journeys, cfg.window_days)?;
    graph.save_edge_list(&out_path(cfg, "graph.tsv"))?;
    Ok(())
}

fn stage_train_services(cfg: &PipelineConfig) -> Result<()> {
    let graph = ServiceGraph::load_edge_list(&out_path(cfg, "graph.tsv"))?;
    let wcfg = WalkConfig {
        walks_per_node: cfg.walks_per_node,
        walk_length: cfg.walk_length,
        return_param: cfg.return_param,
        inout_param: cfg.inout_param,
        seed: derive_seed(cfg.seed, "stage-services", 0),
    };
    let scfg = SgnsConfig {
        dim: cfg.service_dim,
        window: cfg.sgns_window,
        negatives: cfg.negatives,
        epochs: cfg.sgns_epochs,
        learning_rate: cfg.sgns_learning_rate,
        min_learning_rate: 1.0e-4,
        seed: derive_seed(cfg.seed, "stage-services", 1),
    };
    let out = embed_services(&graph, &wcfg, &scfg, cfg.threads)?;
    out.embeddings.save(&out_path(cfg, "services.emb"))?;
    Ok(())
}

fn attention_config(cfg: &PipelineConfig) -> Result<AttentionConfig> {
    if cfg.heads == 0 || !cfg.doctor_dim.is_multiple_of(cfg.heads) {
        bail!(
            "doctor_dim {} is not divisible by heads {}",
            cfg.doctor_dim,
            cfg.heads
        );
    }
    let acfg = AttentionConfig {
        heads: cfg.heads,
        head_dim: cfg.doctor_dim / cfg.heads,
        doctor_dim: cfg.doctor_dim,
        leaky_slope: 0.2,
        learning_rate: cfg.attention_learning_rate,
        epochs: cfg.attention_epochs,
        holdout_fraction: cfg.attention_holdout,
        seed: derive_seed(cfg.seed, "stage-doctors", 0),
    };
    acfg.validate()?;
    Ok(acfg)
}

fn stage_train_doctors(cfg: &PipelineConfig) -> Result<()> {
    let events = load_events(&cfg.events, cfg.events_format)?;
    let specialties = load_specialties(&cfg.specialties)?;
    let services = EmbeddingTable::load(EntityKind::Service, &out_path(cfg, "services.emb"))?;
    let profiles = build_profiles(&events);
    let acfg = attention_config(cfg)?;
    let outcome = train_doctor_embeddings(&profiles, &specialties, &services, &acfg)?;

    outcome.doctors.save(&out_path(cfg, "doctors.emb"))?;
    std::fs::write(out_path(cfg, "attention_params.txt"), outcome.params.to_text())?;
    let mut report = String::new();
    let _ = writeln!(report, "train_accuracy {}", outcome.report.train_accuracy);
    match outcome.report.holdout_accuracy {
        Some(acc) => {
            let _ = writeln!(report, "holdout_accuracy {acc}");
        }
        None => {
            let _ = writeln!(report, "holdout_accuracy n/a");
        }
    }
    let _ = writeln!(report, "holdout_doctors {}", outcome.report.holdout_ids.join(" "));
    let _ = writeln!(report, "dropped_doctors {}", outcome.report.dropped.join(" "));
    for id in &outcome.report.dropped {
        eprintln!("warning: doctor `{id}` has no embeddable services and was dropped");
    }
    std::fs::write(out_path(cfg, "doctor_report.txt"), report)?;
    Ok(())
}

fn stage_train_patients(cfg: &PipelineConfig) -> Result<()> {
    let events = load_events(&cfg.events, cfg.events_format)?;
    let services = EmbeddingTable::load(EntityKind::Service, &out_path(cfg, "services.emb"))?;
    let doctors = EmbeddingTable::load(EntityKind::Doctor, &out_path(cfg, "doctors.emb"))?;
    let graph = duplicate_and_annotate(&build_multigraph(&events));
    let pcfg = PatientConfig {
        dim: cfg.patient_dim,
        negatives: cfg.negatives,
        epochs: cfg.patient_epochs,
        learning_rate: cfg.patient_learning_rate,
        min_learning_rate: 1.0e-4,
        samples_per_epoch: cfg.patient_samples_per_epoch,
        context_lr_scale: cfg.annotation_lr_scale,
        track_exact_loss: false,
        seed: derive_seed(cfg.seed, "stage-patients", 0),
    };
    let out = train_patient_embeddings(&graph, &services, &doctors, &pcfg, cfg.threads)?;
    out.patients.save(&out_path(cfg, "patients.emb"))?;
    std::fs::write(out_path(cfg, "annotation_params.txt"), out.params.to_text())?;
    Ok(())
}

fn baseline_config(cfg: &PipelineConfig, label: &str) -> BaselineConfig {
    let seed = derive_seed(cfg.seed, label, 0);
    BaselineConfig {
        dim: cfg.patient_dim,
        walk: WalkConfig {
            walks_per_node: cfg.walks_per_node,
            walk_length: cfg.walk_length,
            return_param: cfg.return_param,
            inout_param: cfg.inout_param,
            seed,
        },
        sgns: SgnsConfig {
            dim: cfg.patient_dim,
            window: cfg.sgns_window,
            negatives: cfg.negatives,
            epochs: cfg.sgns_epochs,
            learning_rate: cfg.sgns_learning_rate,
            min_learning_rate: 1.0e-4,
            seed: derive_seed(cfg.seed, label, 1),
        },
        second_order: SecondOrderConfig {
            dim: cfg.patient_dim,
            negatives: cfg.negatives,
            epochs: cfg.patient_epochs,
            learning_rate: cfg.patient_learning_rate,
            min_learning_rate: 1.0e-4,
            samples_per_epoch: cfg.patient_samples_per_epoch,
            context_lr_scale: 1.0,
            track_exact_loss: false,
            seed: derive_seed(cfg.seed, label, 2),
        },
    }
}

/// Row-wise concatenation over the patients both tables cover.
fn concat_tables(a: &EmbeddingTable, b: &EmbeddingTable) -> Result<EmbeddingTable> {
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (i, id) in a.ids().iter().enumerate() {
        if let Some(j) = b.row_index(id) {
            ids.push(id.clone());
            data.extend_from_slice(a.row(i));
            data.extend_from_slice(b.row(j));
        }
    }
    Ok(EmbeddingTable::new(EntityKind::Patient, ids, a.dim() + b.dim(), data)?)
}

fn stage_evaluate(cfg: &PipelineConfig) -> Result<()> {
    let events = load_events(&cfg.events, cfg.events_format)?;
    let labels = load_labels(&cfg.labels)?;
    let patients = EmbeddingTable::load(EntityKind::Patient, &out_path(cfg, "patients.emb"))?;

    let mut methods: BTreeMap<String, EmbeddingTable> = BTreeMap::new();
    methods.insert("hge".to_string(), patients);
    if cfg.run_baselines {
        let ps = build_bipartite(&events, BipartiteMode::PatientService);
        let pd = build_bipartite(&events, BipartiteMode::PatientDoctor);
        for (graph, mode_name) in [(&ps, "service"), (&pd, "doctor")] {
            for method in [BaselineMethod::Node2vec, BaselineMethod::Line2] {
                let label = format!("{}_{}", method.name(), mode_name);
                let bcfg = baseline_config(cfg, &label);
                let table = run_baseline(graph, method, &bcfg, cfg.threads)?;
                methods.insert(label, table);
            }
        }
        if cfg.concat_baselines {
            for method in ["node2vec", "line2"] {
                let service = &methods[&format!("{method}_service")];
                let doctor = &methods[&format!("{method}_doctor")];
                let concat = concat_tables(service, doctor)?;
                methods.insert(format!("{method}_concat"), concat);
            }
        }
    }

    let ecfg = EvalConfig {
        train_ratios: cfg.eval_ratios.clone(),
        repeats: cfg.eval_repeats,
        l2_lambda: cfg.l2_lambda,
        logreg_max_iters: 3000,
        logreg_grad_tol: 1.0e-6,
        seed: derive_seed(cfg.seed, "stage-evaluate", 0),
    };
    let report = evaluate_all(&methods, &labels, &ecfg)?;
    std::fs::write(out_path(cfg, "evaluation.csv"), report.to_csv())?;
    std::fs::write(out_path(cfg, "summary.txt"), report.to_table())?;
    Ok(())
}

fn stage_project(cfg: &PipelineConfig) -> Result<()> {
    let services = EmbeddingTable::load(EntityKind::Service, &out_path(cfg, "services.emb"))?;
    let points = project_2d(&services, derive_seed(cfg.seed, "stage-project", 0))?;
    std::fs::write(out_path(cfg, "projection_services.csv"), points_to_csv(&points))?;
    std::fs::write(
        out_path(cfg, "projection_services.svg"),
        points_to_svg(&points, None, "services"),
    )?;

    let doctors = EmbeddingTable::load(EntityKind::Doctor, &out_path(cfg, "doctors.emb"))?;
    let points = project_2d(&doctors, derive_seed(cfg.seed, "stage-project", 1))?;
    let specialty_of: BTreeMap<String, String> = load_specialties(&cfg.specialties)?
        .into_iter()
        .map(|s| (s.doctor_id, s.specialty))
        .collect();
    std::fs::write(out_path(cfg, "projection_doctors.csv"), points_to_csv(&points))?;
    std::fs::write(
        out_path(cfg, "projection_doctors.svg"),
        points_to_svg(&points, Some(&specialty_of), "doctors"),
    )?;
    Ok(())
}

/// Run one stage unconditionally.
pub fn run_stage(cfg: &PipelineConfig, stage: &str) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))?;
    let result = match stage {
        "build-graph" => stage_build_graph(cfg),
        "train-services" => stage_train_services(cfg),
        "train-doctors" => stage_train_doctors(cfg),
        "train-patients" => stage_train_patients(cfg),
        "evaluate" => stage_evaluate(cfg),
        "project" => stage_project(cfg),
        other => bail!("unknown stage `{other}`"),
    };
    result.with_context(|| format!("stage {stage} failed"))
}

/// Execute all stages in order, skipping a stage when all of its artifacts
/// already exist (unless `force`). Writes the manifest last. Returns
/// `(stage, ran)` in order.
pub fn run_pipeline(cfg: &PipelineConfig, force: bool) -> Result<Vec<(String, bool)>> {
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))?;
    let mut log = Vec::new();
    for stage in STAGES {
        let artifacts = stage_artifacts(stage);
        let complete = artifacts.iter().all(|a| out_path(cfg, a).exists());
        if complete && !force {
            log.push((stage.to_string(), false));
            continue;
        }
        run_stage(cfg, stage)?;
        log.push((stage.to_string(), true));
    }
    let stages: Vec<(String, Vec<String>)> = STAGES
        .iter()
        .map(|s| {
            (
                s.to_string(),
                stage_artifacts(s).iter().map(|a| a.to_string()).collect(),
            )
        })
        .collect();
    let config_hash = fnv64(cfg.canonical_text().as_bytes());
    Manifest::collect(&stages, &cfg.output_dir, config_hash, cfg.seed)?
        .write(&cfg.output_dir)?;
    Ok(log)
}
