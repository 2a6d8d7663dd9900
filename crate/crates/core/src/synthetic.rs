//! Synthetic journey generator with planted structure.
//!
//! Doctors are partitioned into specialty groups and each group owns a
//! disjoint block of the service vocabulary. A patient draws most events from
//! one dominant group, so specialty structure is recoverable by construction
//! and embedding quality can be checked at desk scale.
//!
//! Two label rules are supported:
//!
//! * `service_only` — label 1 means the journey contains a designated marker
//!   service; marker services never appear in label-0 journeys.
//! * `doctor_service_pair` — label 1 means the journey contains the
//!   designated `(group-0 doctor, cross service)` combination. Label-0
//!   patients receive the same services and see the same doctor groups but in
//!   the swapped pairing, so neither the service marginal nor the doctor
//!   marginal carries the label: only the pairing does.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::events::{DoctorSpecialty, JourneyEvent, PatientLabel};
use crate::rng::{derive_seed, seeded_rng};

/// How patient labels are planted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRule {
    ServiceOnly,
    DoctorServicePair,
}

impl LabelRule {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "service_only" => Ok(LabelRule::ServiceOnly),
            "doctor_service_pair" => Ok(LabelRule::DoctorServicePair),
            other => Err(Error::InvalidConfig(format!("unknown label rule `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelRule::ServiceOnly => "service_only",
            LabelRule::DoctorServicePair => "doctor_service_pair",
        }
    }
}

/// Generator parameters.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_patients: usize,
    pub n_doctors: usize,
    pub n_services: usize,
    pub n_specialties: usize,
    pub journey_days: usize,
    pub noise_rate: f64,
    pub label_rule: LabelRule,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0
            || self.n_doctors == 0
            || self.n_services == 0
            || self.n_specialties == 0
            || self.journey_days == 0
        {
            return Err(Error::InvalidConfig("all synthetic counts must be positive".into()));
        }
        if self.n_specialties > self.n_doctors {
            return Err(Error::InvalidConfig(format!(
                "n_specialties ({}) exceeds n_doctors ({})",
                self.n_specialties, self.n_doctors
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::InvalidConfig(format!(
                "noise_rate {} outside [0, 1]",
                self.noise_rate
            )));
        }
        match self.label_rule {
            LabelRule::ServiceOnly => {
                // Each group needs a marker plus at least one non-marker
                // service, otherwise label-0 patients have nothing to draw.
                if self.n_services < 2 * self.n_specialties {
                    return Err(Error::InvalidConfig(
                        "service_only rule needs n_services >= 2 * n_specialties".into(),
                    ));
                }
            }
            LabelRule::DoctorServicePair => {
                if self.n_specialties < 2 {
                    return Err(Error::InvalidConfig(
                        "doctor_service_pair rule needs at least 2 specialties".into(),
                    ));
                }
                if self.n_services < 2 * self.n_specialties {
                    return Err(Error::InvalidConfig(
                        "doctor_service_pair rule needs n_services >= 2 * n_specialties".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The deterministic group structure implied by a spec: which doctors belong
/// to which specialty and which services each specialty owns.
#[derive(Debug, Clone)]
pub struct SyntheticLayout {
    pub doctor_group: Vec<usize>,
    /// Service index ranges per group: group g owns `service_block[g].0 .. .1`.
    pub service_block: Vec<(usize, usize)>,
    /// First service of each group's block; the planted marker services.
    pub markers: Vec<usize>,
}

impl SyntheticLayout {
    pub fn from_spec(spec: &SyntheticSpec) -> Self {
        let k = spec.n_specialties;
        let doctor_group = (0..spec.n_doctors).map(|i| i % k).collect();
        let base = spec.n_services / k;
        let rem = spec.n_services % k;
        let mut service_block = Vec::with_capacity(k);
        let mut start = 0;
        for g in 0..k {
            let len = base + usize::from(g < rem);
            service_block.push((start, start + len));
            start += len;
        }
        let markers = service_block.iter().map(|&(s, _)| s).collect();
        SyntheticLayout { doctor_group, service_block, markers }
    }

    pub fn group_of_service(&self, service: usize) -> Option<usize> {
        self.service_block
            .iter()
            .position(|&(s, e)| service >= s && service < e)
    }

    pub fn doctors_in_group(&self, group: usize) -> Vec<usize> {
        self.doctor_group
            .iter()
            .enumerate()
            .filter(|&(_, &g)| g == group)
            .map(|(i, _)| i)
            .collect()
    }
}

fn id_width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(2)
}

pub fn patient_id(spec: &SyntheticSpec, i: usize) -> String {
    format!("p{:0w$}", i, w = id_width(spec.n_patients))
}

pub fn doctor_id(spec: &SyntheticSpec, i: usize) -> String {
    format!("d{:0w$}", i, w = id_width(spec.n_doctors))
}

pub fn service_id(spec: &SyntheticSpec, i: usize) -> String {
    format!("s{:0w$}", i, w = id_width(spec.n_services))
}

struct RawEvent {
    doctor: usize,
    service: usize,
    day: i64,
}

/// Generate events, specialties and labels. Pure function of the spec: the
/// same seed always yields byte-identical output.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
) -> Result<(Vec<JourneyEvent>, Vec<DoctorSpecialty>, Vec<PatientLabel>)> {
    spec.validate()?;
    let layout = SyntheticLayout::from_spec(spec);

    let specialties: Vec<DoctorSpecialty> = (0..spec.n_doctors)
        .map(|i| DoctorSpecialty {
            doctor_id: doctor_id(spec, i),
            specialty: format!("spec{}", layout.doctor_group[i]),
        })
        .collect();

    let mut labels: Vec<u8> = (0..spec.n_patients)
        .map(|k| {
            let mut rng = seeded_rng(derive_seed(spec.seed, "label", k as u64));
            u8::from(rng.random::<f64>() < 0.5)
        })
        .collect();
    // Tiny corpora can come out single-class; flip patient 0 so both classes
    // exist whenever that is possible at all.
    if spec.n_patients >= 2 {
        let ones = labels.iter().filter(|&&l| l == 1).count();
        if ones == 0 {
            labels[0] = 1;
        } else if ones == spec.n_patients {
            labels[0] = 0;
        }
    }

    let mut events = Vec::new();
    for k in 0..spec.n_patients {
        let mut rng = seeded_rng(derive_seed(spec.seed, "journey", k as u64));
        let journey = generate_journey(spec, &layout, labels[k], &mut rng);
        let pid = patient_id(spec, k);
        for e in journey {
            events.push(JourneyEvent {
                patient_id: pid.clone(),
                doctor_id: doctor_id(spec, e.doctor),
                service_id: service_id(spec, e.service),
                day: e.day,
            });
        }
    }

    let labels = (0..spec.n_patients)
        .map(|k| PatientLabel { patient_id: patient_id(spec, k), label: labels[k] })
        .collect();
    Ok((events, specialties, labels))
}

fn generate_journey(
    spec: &SyntheticSpec,
    layout: &SyntheticLayout,
    label: u8,
    rng: &mut ChaCha8Rng,
) -> Vec<RawEvent> {
    let dominant = rng.random_range(0..spec.n_specialties);
    let mut events = Vec::new();

    // Base journey: 0-2 events per day, dominated by one specialty group.
    for day in 0..spec.journey_days as i64 {
        let u = rng.random::<f64>();
        let count = if u < 0.35 {
            0
        } else if u < 0.80 {
            1
        } else {
            2
        };
        for _ in 0..count {
            let e = draw_event(spec, layout, dominant, label, day, rng);
            events.push(e);
        }
    }

    // Planted label structure.
    match spec.label_rule {
        LabelRule::ServiceOnly => {
            if label == 1 {
                let group_doctors = layout.doctors_in_group(dominant);
                let marker = layout.markers[dominant];
                let n_inject = 1 + rng.random_range(0..2);
                for _ in 0..n_inject {
                    events.push(RawEvent {
                        doctor: group_doctors[rng.random_range(0..group_doctors.len())],
                        service: marker,
                        day: rng.random_range(0..spec.journey_days as i64),
                    });
                }
            }
        }
        LabelRule::DoctorServicePair => {
            // Designated pair: (group-0 doctor, group-1 marker s*); the pair
            // occurs iff label = 1. Label-0 patients still receive s*, but
            // from non-group-0 doctors and less often, so marker presence is
            // class-independent while each single relation carries only a
            // partial count signal (more s* weight, more group-0 contact for
            // label 1). Only the joint view sees the full separation.
            let g0_doctors = layout.doctors_in_group(0);
            let other_doctors: Vec<usize> = (0..spec.n_doctors)
                .filter(|&d| layout.doctor_group[d] != 0)
                .collect();
            let s_cross = layout.markers[1]; // s*: group-1 marker
            if label == 1 {
                let x = 3 + rng.random_range(0..2);
                for _ in 0..x {
                    events.push(RawEvent {
                        doctor: g0_doctors[rng.random_range(0..g0_doctors.len())],
                        service: s_cross,
                        day: rng.random_range(0..spec.journey_days as i64),
                    });
                }
            } else {
                let x = 1 + rng.random_range(0..2);
                for _ in 0..x {
                    events.push(RawEvent {
                        doctor: other_doctors[rng.random_range(0..other_doctors.len())],
                        service: s_cross,
                        day: rng.random_range(0..spec.journey_days as i64),
                    });
                }
            }
        }
    }

    if events.is_empty() {
        // Guarantee the patient exists in the graph.
        let group_doctors = layout.doctors_in_group(dominant);
        let (start, end) = layout.service_block[dominant];
        let service = pick_service(spec, layout, dominant, label, start, end, rng);
        events.push(RawEvent { doctor: group_doctors[0], service, day: 0 });
    }

    events.sort_by_key(|e| (e.day, e.service, e.doctor));
    events
}

/// Draw one base event, resampling draws that would violate the label rule.
fn draw_event(
    spec: &SyntheticSpec,
    layout: &SyntheticLayout,
    dominant: usize,
    label: u8,
    day: i64,
    rng: &mut ChaCha8Rng,
) -> RawEvent {
    for _ in 0..256 {
        let (doctor, service) = if rng.random::<f64>() < spec.noise_rate {
            (rng.random_range(0..spec.n_doctors), rng.random_range(0..spec.n_services))
        } else {
            let group_doctors = layout.doctors_in_group(dominant);
            let (start, end) = layout.service_block[dominant];
            (group_doctors[rng.random_range(0..group_doctors.len())], rng.random_range(start..end))
        };
        if event_allowed(spec, layout, label, doctor, service) {
            return RawEvent { doctor, service, day };
        }
    }
    // Resampling failed (vanishingly unlikely given the validation rules);
    // fall back to a deterministic allowed draw.
    let group_doctors = layout.doctors_in_group(dominant);
    let (start, end) = layout.service_block[dominant];
    let service = pick_service(spec, layout, dominant, label, start, end, rng);
    RawEvent { doctor: group_doctors[0], service, day }
}

fn pick_service(
    spec: &SyntheticSpec,
    layout: &SyntheticLayout,
    dominant: usize,
    label: u8,
    start: usize,
    end: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    for _ in 0..256 {
        let s = rng.random_range(start..end);
        if event_allowed(spec, layout, label, layout.doctors_in_group(dominant)[0], s) {
            return s;
        }
    }
    start + 1 // non-marker member of the block (validation guarantees width >= 2)
}

fn event_allowed(
    spec: &SyntheticSpec,
    layout: &SyntheticLayout,
    label: u8,
    doctor: usize,
    service: usize,
) -> bool {
    match spec.label_rule {
        // Marker services define the label, so label-0 journeys must not
        // contain any marker.
        LabelRule::ServiceOnly => label == 1 || !layout.markers.contains(&service),
        // The designated (group-0 doctor, group-1 marker) pair defines the
        // label; keep it out of label-0 journeys.
        LabelRule::DoctorServicePair => {
            label == 1 || !(layout.doctor_group[doctor] == 0 && service == layout.markers[1])
        }
    }
}
