//! Journey events and the flat files they live in.
//!
//! An event is one `(patient, doctor, service, date)` record. Files are CSV
//! with header `patient_id,doctor_id,service_id,date` or JSONL with the same
//! keys; dates are ISO-8601 `YYYY-MM-DD` (a bare integer day index is also
//! accepted). Malformed rows abort ingestion: a silently dropped row would
//! corrupt every co-occurrence count downstream.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::dates::{format_date, parse_date};
use crate::error::{Error, Result};

/// One atomic record of a patient journey. `day` is a day number as produced
/// by [`crate::dates::parse_date`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JourneyEvent {
    pub patient_id: String,
    pub doctor_id: String,
    pub service_id: String,
    pub day: i64,
}

/// A doctor's primary specialty label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DoctorSpecialty {
    pub doctor_id: String,
    pub specialty: String,
}

/// A binary outcome label for one patient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientLabel {
    pub patient_id: String,
    pub label: u8,
}

/// Supported event file encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Jsonl,
}

fn validate_ids(patient: &str, doctor: &str, service: &str) -> std::result::Result<(), String> {
    if patient.is_empty() {
        return Err("empty patient_id".into());
    }
    if doctor.is_empty() {
        return Err("empty doctor_id".into());
    }
    if service.is_empty() {
        return Err("empty service_id".into());
    }
    Ok(())
}

/// Load all events from `path`. Row order is preserved; the first malformed
/// row fails the whole load with its row number.
pub fn load_events(path: &Path, format: EventFormat) -> Result<Vec<JourneyEvent>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let events = match format {
        EventFormat::Csv => parse_events_csv(&text, path)?,
        EventFormat::Jsonl => parse_events_jsonl(&text, path)?,
    };
    if events.is_empty() {
        return Err(Error::Empty("events file"));
    }
    Ok(events)
}

fn parse_events_csv(text: &str, origin: &Path) -> Result<Vec<JourneyEvent>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::parse(origin, 1, e.to_string()))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(origin, 1, format!("missing column `{name}`")))
    };
    let (pi, di, si, ti) = (col("patient_id")?, col("doctor_id")?, col("service_id")?, col("date")?);

    let mut events = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, counting the header line
        let record = record.map_err(|e| Error::parse(origin, row, e.to_string()))?;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        validate_ids(field(pi), field(di), field(si))
            .map_err(|msg| Error::parse(origin, row, msg))?;
        let day = parse_date(field(ti)).map_err(|msg| Error::parse(origin, row, msg))?;
        events.push(JourneyEvent {
            patient_id: field(pi).to_string(),
            doctor_id: field(di).to_string(),
            service_id: field(si).to_string(),
            day,
        });
    }
    Ok(events)
}

fn parse_events_jsonl(text: &str, origin: &Path) -> Result<Vec<JourneyEvent>> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::parse(origin, row, e.to_string()))?;
        let key = |name: &str| -> Result<String> {
            match value.get(name) {
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                Some(other) => Ok(other.to_string()),
                None => Err(Error::parse(origin, row, format!("missing key `{name}`"))),
            }
        };
        let patient_id = key("patient_id")?;
        let doctor_id = key("doctor_id")?;
        let service_id = key("service_id")?;
        validate_ids(&patient_id, &doctor_id, &service_id)
            .map_err(|msg| Error::parse(origin, row, msg))?;
        let day = match value.get("date") {
            Some(serde_json::Value::String(s)) => {
                parse_date(s).map_err(|msg| Error::parse(origin, row, msg))?
            }
            Some(serde_json::Value::Number(n)) => n
                .as_i64()
                .ok_or_else(|| Error::parse(origin, row, "date must be an integer day"))?,
            _ => return Err(Error::parse(origin, row, "missing key `date`")),
        };
        events.push(JourneyEvent { patient_id, doctor_id, service_id, day });
    }
    Ok(events)
}

/// Write events in the given format; dates are emitted as ISO-8601.
pub fn save_events(events: &[JourneyEvent], path: &Path, format: EventFormat) -> Result<()> {
    let mut out = String::new();
    match format {
        EventFormat::Csv => {
            out.push_str("patient_id,doctor_id,service_id,date\n");
            for e in events {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    e.patient_id,
                    e.doctor_id,
                    e.service_id,
                    format_date(e.day)
                ));
            }
        }
        EventFormat::Jsonl => {
            for e in events {
                let value = serde_json::json!({
                    "patient_id": e.patient_id,
                    "doctor_id": e.doctor_id,
                    "service_id": e.service_id,
                    "date": format_date(e.day),
                });
                out.push_str(&value.to_string());
                out.push('\n');
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load `doctor_id,specialty` CSV.
pub fn load_specialties(path: &Path) -> Result<Vec<DoctorSpecialty>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::parse(path, row, e.to_string()))?;
        let doctor_id = record.get(0).unwrap_or("").to_string();
        let specialty = record.get(1).unwrap_or("").to_string();
        if doctor_id.is_empty() || specialty.is_empty() {
            return Err(Error::parse(path, row, "empty doctor_id or specialty"));
        }
        out.push(DoctorSpecialty { doctor_id, specialty });
    }
    Ok(out)
}

/// Load `patient_id,label` CSV with label in {0,1}.
pub fn load_labels(path: &Path) -> Result<Vec<PatientLabel>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::parse(path, row, e.to_string()))?;
        let patient_id = record.get(0).unwrap_or("").to_string();
        let label_text = record.get(1).unwrap_or("");
        if patient_id.is_empty() {
            return Err(Error::parse(path, row, "empty patient_id"));
        }
        let label = match label_text {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::parse(path, row, format!("label `{other}` is not 0 or 1")))
            }
        };
        out.push(PatientLabel { patient_id, label });
    }
    Ok(out)
}

pub fn save_specialties(specialties: &[DoctorSpecialty], path: &Path) -> Result<()> {
    let mut out = String::from("doctor_id,specialty\n");
    for s in specialties {
        out.push_str(&format!("{},{}\n", s.doctor_id, s.specialty));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn save_labels(labels: &[PatientLabel], path: &Path) -> Result<()> {
    let mut out = String::from("patient_id,label\n");
    for l in labels {
        out.push_str(&format!("{},{}\n", l.patient_id, l.label));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Group events by patient and sort each journey chronologically.
///
/// Ties within a day break by `(service_id, doctor_id)` so downstream passes
/// see one canonical order regardless of ingest order.
pub fn sort_journeys(events: &[JourneyEvent]) -> BTreeMap<String, Vec<JourneyEvent>> {
    let mut journeys: BTreeMap<String, Vec<JourneyEvent>> = BTreeMap::new();
    for e in events {
        journeys.entry(e.patient_id.clone()).or_default().push(e.clone());
    }
    for journey in journeys.values_mut() {
        journey.sort_by(|a, b| {
            (a.day, &a.service_id, &a.doctor_id).cmp(&(b.day, &b.service_id, &b.doctor_id))
        });
    }
    journeys
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn event(p: &str, d: &str, s: &str, day: i64) -> JourneyEvent {
        JourneyEvent {
            patient_id: p.into(),
            doctor_id: d.into(),
            service_id: s.into(),
            day,
        }
    }

    #[test]
    fn loads_one_well_formed_csv_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        std::fs::write(&path, "patient_id,doctor_id,service_id,date\np1,d1,s1,2020-01-05\n")
            .unwrap();
        let events = load_events(&path, EventFormat::Csv).unwrap();
        assert_eq!(events, vec![event("p1", "d1", "s1", crate::dates::day_number(2020, 1, 5))]);
    }

    #[test]
    fn empty_service_id_fails_with_row_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        std::fs::write(
            &path,
            "patient_id,doctor_id,service_id,date\np1,d1,s1,2020-01-05\np2,d2,,2020-01-06\n",
        )
        .unwrap();
        let err = load_events(&path, EventFormat::Csv).unwrap_err();
        match err {
            Error::Parse { row, ref msg, .. } => {
                assert_eq!(row, 3);
                assert!(msg.contains("service_id"), "msg: {msg}");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        std::fs::write(&path, "patient_id,doctor_id,service_id,date\n").unwrap();
        assert!(matches!(load_events(&path, EventFormat::Csv), Err(Error::Empty(_))));
    }

    #[test]
    fn jsonl_accepts_integer_days() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        std::fs::write(
            &path,
            "{\"patient_id\":\"p1\",\"doctor_id\":\"d1\",\"service_id\":\"s1\",\"date\":12}\n",
        )
        .unwrap();
        let events = load_events(&path, EventFormat::Jsonl).unwrap();
        assert_eq!(events[0].day, 12);
    }

    #[test]
    fn sort_journeys_orders_by_day_then_service_then_doctor() {
        let events = vec![
            event("p1", "d1", "s1", 9),
            event("p1", "d2", "sB", 3),
            event("p1", "d1", "sA", 3),
        ];
        let journeys = sort_journeys(&events);
        let days: Vec<(&str, i64)> = journeys["p1"]
            .iter()
            .map(|e| (e.service_id.as_str(), e.day))
            .collect();
        assert_eq!(days, vec![("sA", 3), ("sB", 3), ("s1", 9)]);
    }

    fn arb_event() -> impl Strategy<Value = JourneyEvent> {
        (
            "[a-z]{1,4}",
            "[a-z]{1,4}",
            "[a-z]{1,4}",
            -3000i64..3000i64,
        )
            .prop_map(|(p, d, s, day)| event(&p, &d, &s, day))
    }

    proptest! {
        // Round-trip oracle: ingest-save-ingest is the identity on event lists.
        #[test]
        fn save_then_load_round_trips(events in prop::collection::vec(arb_event(), 1..40)) {
            let dir = tempfile::tempdir().unwrap();
            for format in [EventFormat::Csv, EventFormat::Jsonl] {
                let path = dir.path().join(match format {
                    EventFormat::Csv => "e.csv",
                    EventFormat::Jsonl => "e.jsonl",
                });
                save_events(&events, &path, format).unwrap();
                let back = load_events(&path, format).unwrap();
                prop_assert_eq!(&back, &events);
            }
        }

        // Permutation invariance of per-patient sorting.
        #[test]
        fn sort_is_permutation_invariant(
            events in prop::collection::vec(arb_event(), 1..30),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut shuffled = events.clone();
            shuffled.shuffle(&mut crate::rng::seeded_rng(seed));
            prop_assert_eq!(sort_journeys(&events), sort_journeys(&shuffled));
        }
    }
}
