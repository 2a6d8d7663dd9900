use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use hge_cli::config::PipelineConfig;
use hge_cli::pipeline::{run_pipeline, run_stage};
use hge_cli::project::{points_to_csv, points_to_svg};
use hge_core::embedding::{EmbeddingTable, EntityKind};
use hge_core::events::{load_specialties, save_events, save_labels, save_specialties, EventFormat};
use hge_core::parallel::ThreadMode;
use hge_core::pca::project_2d;
use hge_core::synthetic::{generate_synthetic, LabelRule, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "hge",
    about = "Hierarchical graph embeddings for longitudinal event data",
    version
)]
struct Cli {
    /// Config file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the global seed (also: HGE_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// `deterministic` or a worker count (also: HGE_THREADS).
    #[arg(long, global = true)]
    threads: Option<String>,

    /// Re-run stages even when their artifacts exist.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted structure.
    GenSynthetic {
        #[arg(long, default_value_t = 200)]
        patients: usize,
        #[arg(long, default_value_t = 20)]
        doctors: usize,
        #[arg(long, default_value_t = 40)]
        services: usize,
        #[arg(long, default_value_t = 4)]
        specialties: usize,
        #[arg(long, default_value_t = 30)]
        days: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// `service_only` or `doctor_service_pair`.
        #[arg(long, default_value = "service_only")]
        label_rule: String,
        #[arg(long, default_value_t = 42)]
        gen_seed: u64,
        /// Directory for events.csv, specialties.csv, labels.csv.
        #[arg(long, default_value = "data")]
        out_dir: PathBuf,
    },
    /// Build the service co-occurrence graph.
    BuildGraph,
    /// Train service embeddings (walks + skip-gram).
    TrainServices,
    /// Train doctor embeddings (attention + specialty task).
    TrainDoctors,
    /// Train patient embeddings (hybrid-node second order).
    TrainPatients,
    /// Run the node-classification evaluation with baselines.
    Evaluate,
    /// Project an embedding file to 2-D (PCA) as CSV + SVG.
    Project {
        /// Embedding file in the shared format.
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        out_svg: PathBuf,
        /// Optional doctor_id,specialty CSV to color points.
        #[arg(long)]
        specialties: Option<PathBuf>,
    },
    /// Run all stages in order, skipping completed ones.
    Run,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = &cli.threads {
        cfg.threads = if threads == "deterministic" {
            ThreadMode::Deterministic
        } else {
            ThreadMode::Fast(threads.parse().context("bad --threads value")?)
        };
    }
    Ok(cfg)
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenSynthetic {
            patients,
            doctors,
            services,
            specialties,
            days,
            noise,
            label_rule,
            gen_seed,
            out_dir,
        } => {
            let spec = SyntheticSpec {
                n_patients: *patients,
                n_doctors: *doctors,
                n_services: *services,
                n_specialties: *specialties,
                journey_days: *days,
                noise_rate: *noise,
                label_rule: LabelRule::parse(label_rule)?,
                seed: cli.seed.unwrap_or(*gen_seed),
            };
            let (events, specialty_rows, labels) = generate_synthetic(&spec)?;
            std::fs::create_dir_all(out_dir)
                .with_context(|| format!("cannot create {}", out_dir.display()))?;
            save_events(&events, &out_dir.join("events.csv"), EventFormat::Csv)?;
            save_specialties(&specialty_rows, &out_dir.join("specialties.csv"))?;
            save_labels(&labels, &out_dir.join("labels.csv"))?;
            println!(
                "wrote {} events, {} doctors, {} labels to {}",
                events.len(),
                specialty_rows.len(),
                labels.len(),
                out_dir.display()
            );
        }
        Command::BuildGraph => run_stage(&load_config(&cli)?, "build-graph")?,
        Command::TrainServices => run_stage(&load_config(&cli)?, "train-services")?,
        Command::TrainDoctors => run_stage(&load_config(&cli)?, "train-doctors")?,
        Command::TrainPatients => run_stage(&load_config(&cli)?, "train-patients")?,
        Command::Evaluate => run_stage(&load_config(&cli)?, "evaluate")?,
        Command::Project { embedding, out_csv, out_svg, specialties } => {
            let cfg = load_config(&cli)?;
            let table = EmbeddingTable::load(EntityKind::Service, embedding)?;
            let points = project_2d(&table, cfg.seed)?;
            std::fs::write(out_csv, points_to_csv(&points))
                .with_context(|| format!("cannot write {}", out_csv.display()))?;
            let categories: Option<BTreeMap<String, String>> = match specialties {
                Some(path) => Some(
                    load_specialties(path)?
                        .into_iter()
                        .map(|s| (s.doctor_id, s.specialty))
                        .collect(),
                ),
                None => None,
            };
            let title = embedding
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "embedding".to_string());
            std::fs::write(out_svg, points_to_svg(&points, categories.as_ref(), &title))
                .with_context(|| format!("cannot write {}", out_svg.display()))?;
        }
        Command::Run => {
            let cfg = load_config(&cli)?;
            let log = run_pipeline(&cfg, cli.force)?;
            for (stage, ran) in log {
                println!("{stage}: {}", if ran { "ok" } else { "skipped" });
            }
        }
    }
    Ok(())
}
