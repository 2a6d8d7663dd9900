//! Hierarchical graph embeddings for longitudinal event data.
//!
//! The pipeline learns dense vectors for three linked entity levels:
//!
//! 1. **Services** — a temporal co-occurrence graph over journey events,
//!    embedded with biased random walks and skip-gram negative sampling.
//! 2. **Providers** — multi-head attention over each doctor's conducted
//!    services, trained against a specialty-prediction auxiliary task.
//! 3. **Patients** — an attributed patient-service multigraph collapsed into
//!    a simple bipartite graph over (service, doctor) hybrid nodes, embedded
//!    by matching second-order context distributions.
//!
//! A synthetic journey generator with planted structure makes every stage
//! verifiable at desk scale, and the evaluation module reproduces the
//! logistic-regression node-classification protocol with node2vec and
//! second-order baselines.

// Indexed loops are the clearest spelling for the row-major kernels here,
// and `!(x > 0.0)` in validations is deliberate: it rejects NaN.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod dates;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod events;
pub mod multigraph;
pub mod parallel;
pub mod pca;
pub mod rng;
pub mod sampling;
pub mod second_order;
pub mod service_graph;
pub mod sgns;
pub mod synthetic;
pub mod walks;

pub use embedding::{cosine, EmbeddingTable, EntityKind};
pub use error::{Error, Result};
pub use events::{
    load_events, load_labels, load_specialties, save_events, save_labels, save_specialties,
    sort_journeys, DoctorSpecialty, EventFormat, JourneyEvent, PatientLabel,
};
pub use parallel::ThreadMode;
pub use service_graph::{build_cooccurrence, ServiceGraph};
pub use synthetic::{generate_synthetic, LabelRule, SyntheticSpec};
