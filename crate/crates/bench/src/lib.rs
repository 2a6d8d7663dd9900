//! Shared fixtures for the stage benchmarks.

use hge_core::events::JourneyEvent;
use hge_core::synthetic::{generate_synthetic, LabelRule, SyntheticSpec};

/// A mid-sized synthetic corpus, deterministic across runs.
pub fn bench_events() -> Vec<JourneyEvent> {
    let spec = SyntheticSpec {
        n_patients: 400,
        n_doctors: 30,
        n_services: 50,
        n_specialties: 5,
        journey_days: 30,
        noise_rate: 0.05,
        label_rule: LabelRule::ServiceOnly,
        seed: 1234,
    };
    generate_synthetic(&spec).expect("valid spec").0
}
