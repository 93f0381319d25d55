//! Loading, validating and resampling per-participant energy series.
//!
//! The on-disk format is long CSV with header
//! `timestamp,participant_id,generation_kwh,consumption_kwh`, one row per
//! participant per interval. Energies are kWh per interval.

mod synthetic;

pub use synthetic::{generate_synthetic, reference_roster, SyntheticSpec};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::model::{CommunityConfig, ParticipantId, Role};

pub const CSV_HEADER: [&str; 4] = ["timestamp", "participant_id", "generation_kwh", "consumption_kwh"];
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("cannot read input: {0}")]
    Io(String),
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("header must be `{}`, found `{found}`", CSV_HEADER.join(","))]
    Header { found: String },
    #[error("row {row}: unknown participant `{id}`")]
    UnknownParticipant { row: usize, id: String },
    #[error("row {row}: {field} must be finite and non-negative, got {value}")]
    InvalidEnergy {
        row: usize,
        field: &'static str,
        value: f64,
    },
    #[error("row {row}: consumer {id} reports generation {value} kWh")]
    RoleConsistency { row: usize, id: ParticipantId, value: f64 },
    #[error("row {row}: duplicate timestamp {timestamp} for {id}")]
    DuplicateTimestamp {
        row: usize,
        id: ParticipantId,
        timestamp: String,
    },
    #[error("row {row}: timestamp {timestamp} for {id} goes backwards")]
    OutOfOrder {
        row: usize,
        id: ParticipantId,
        timestamp: String,
    },
    #[error("row {row}: gap in {id}: expected {expected}, found {found}")]
    Gap {
        row: usize,
        id: ParticipantId,
        expected: String,
        found: String,
    },
    #[error("participant {id} has no rows")]
    MissingParticipant { id: ParticipantId },
    #[error("participants share no common time range")]
    NoCommonRange,
    #[error("series are not aligned: {0}")]
    Misaligned(String),
    #[error("cannot resample a {from}-minute series to {to} minutes: {reason}")]
    Resample { from: u32, to: u32, reason: String },
}

impl IngestError {
    pub fn row(&self) -> Option<usize> {
        match self {
            IngestError::Malformed { row, .. }
            | IngestError::UnknownParticipant { row, .. }
            | IngestError::InvalidEnergy { row, .. }
            | IngestError::RoleConsistency { row, .. }
            | IngestError::DuplicateTimestamp { row, .. }
            | IngestError::OutOfOrder { row, .. }
            | IngestError::Gap { row, .. } => Some(*row),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            IngestError::Io(_) => "io",
            IngestError::Malformed { .. } => "malformed",
            IngestError::Header { .. } => "header",
            IngestError::UnknownParticipant { .. } => "unknown_participant",
            IngestError::InvalidEnergy { .. } => "invalid_energy",
            IngestError::RoleConsistency { .. } => "role_consistency",
            IngestError::DuplicateTimestamp { .. } => "duplicate_timestamp",
            IngestError::OutOfOrder { .. } => "out_of_order",
            IngestError::Gap { .. } => "gap",
            IngestError::MissingParticipant { .. } => "missing_participant",
            IngestError::NoCommonRange => "no_common_range",
            IngestError::Misaligned(_) => "misaligned",
            IngestError::Resample { .. } => "resample",
        }
    }
}

/// Every problem found in one input, in row order.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{} validation error(s), first: {}", .0.len(), .0[0])]
pub struct IngestErrors(pub Vec<IngestError>);

#[derive(Serialize)]
struct ErrorEntry<'a> {
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    row: Option<usize>,
    message: String,
}

impl IngestErrors {
    /// `{"errors": [{"kind", "row", "message"}, ...]}`
    pub fn to_json(&self) -> String {
        let entries: Vec<_> = self
            .0
            .iter()
            .map(|e| ErrorEntry {
                kind: e.kind(),
                row: e.row(),
                message: e.to_string(),
            })
            .collect();
        serde_json::json!({ "errors": entries }).to_string()
    }
}

impl From<IngestError> for IngestErrors {
    fn from(e: IngestError) -> Self {
        IngestErrors(vec![e])
    }
}

/// Equally spaced energy values, kWh per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSeries {
    pub start: DateTime<Utc>,
    pub step_minutes: u32,
    pub values: Vec<f64>,
}

impl IntervalSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::minutes(self.step_minutes as i64 * index as i64)
    }

    /// Sums consecutive buckets into a coarser step.
    pub fn resample(&self, target_minutes: u32) -> Result<IntervalSeries, IngestError> {
        let err = |reason: &str| IngestError::Resample {
            from: self.step_minutes,
            to: target_minutes,
            reason: reason.to_owned(),
        };
        if target_minutes == 0 || !target_minutes.is_multiple_of(self.step_minutes) {
            return Err(err("target step is not an integer multiple of the source step"));
        }
        let ratio = (target_minutes / self.step_minutes) as usize;
        if !self.values.len().is_multiple_of(ratio) {
            return Err(err("series length is not a whole number of target buckets"));
        }
        Ok(IntervalSeries {
            start: self.start,
            step_minutes: target_minutes,
            values: self.values.chunks_exact(ratio).map(|c| c.iter().sum()).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantProfile {
    pub id: ParticipantId,
    pub generation: IntervalSeries,
    pub consumption: IntervalSeries,
}

impl ParticipantProfile {
    pub fn resample(&self, target_minutes: u32) -> Result<ParticipantProfile, IngestError> {
        Ok(ParticipantProfile {
            id: self.id.clone(),
            generation: self.generation.resample(target_minutes)?,
            consumption: self.consumption.resample(target_minutes)?,
        })
    }
}

/// Profiles sorted by participant id, all on the same time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    profiles: Vec<ParticipantProfile>,
}

impl ProfileSet {
    pub fn new(mut profiles: Vec<ParticipantProfile>) -> Result<Self, IngestError> {
        profiles.sort_by(|a, b| a.id.cmp(&b.id));
        let Some(first) = profiles.first() else {
            return Err(IngestError::Misaligned("no profiles".into()));
        };
        let axis = (
            first.generation.start,
            first.generation.step_minutes,
            first.generation.len(),
        );
        for p in &profiles {
            for (name, s) in [("generation", &p.generation), ("consumption", &p.consumption)] {
                if (s.start, s.step_minutes, s.len()) != axis {
                    return Err(IngestError::Misaligned(format!(
                        "{name} series of {} does not match the common time axis",
                        p.id
                    )));
                }
            }
        }
        for pair in profiles.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(IngestError::Misaligned(format!("{} appears twice", pair[0].id)));
            }
        }
        Ok(Self { profiles })
    }

    pub fn profiles(&self) -> &[ParticipantProfile] {
        &self.profiles
    }

    pub fn get(&self, id: &ParticipantId) -> Option<&ParticipantProfile> {
        self.profiles
            .binary_search_by(|p| p.id.cmp(id))
            .ok()
            .map(|i| &self.profiles[i])
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.profiles[0].generation.start
    }

    pub fn step_minutes(&self) -> u32 {
        self.profiles[0].generation.step_minutes
    }

    pub fn intervals(&self) -> usize {
        self.profiles[0].generation.len()
    }

    pub fn resample(&self, target_minutes: u32) -> Result<ProfileSet, IngestError> {
        let profiles = self
            .profiles
            .iter()
            .map(|p| p.resample(target_minutes))
            .collect::<Result<_, _>>()?;
        ProfileSet::new(profiles)
    }
}

fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(text, f).ok())
        .map(|t| t.and_utc())
}

fn format_timestamp(t: DateTime<Utc>) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

struct Row {
    line: usize,
    at: DateTime<Utc>,
    generation: f64,
    consumption: f64,
}

/// Reads long-format CSV for the participants in `config`.
pub fn read_timeseries<R: Read>(reader: R, config: &CommunityConfig) -> Result<ProfileSet, IngestErrors> {
    let roles: BTreeMap<&ParticipantId, Role> = config.participants.iter().map(|p| (&p.id, p.role)).collect();
    let step = Duration::minutes(config.interval_minutes as i64);

    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers().map_err(|e| IngestError::Io(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(IngestError::Header {
            found: header.iter().collect::<Vec<_>>().join(","),
        }
        .into());
    }

    let mut errors = Vec::new();
    let mut rows: BTreeMap<ParticipantId, Vec<Row>> = BTreeMap::new();
    for record in csv.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let row = e.position().map_or(0, |p| p.line() as usize);
                errors.push(IngestError::Malformed {
                    row,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line() as usize);
        let Some(at) = parse_timestamp(&record[0]) else {
            errors.push(IngestError::Malformed {
                row: line,
                message: format!("bad timestamp `{}`", &record[0]),
            });
            continue;
        };
        let id = ParticipantId::new(&record[1]);
        let Some(&role) = roles.get(&id) else {
            errors.push(IngestError::UnknownParticipant {
                row: line,
                id: record[1].to_owned(),
            });
            continue;
        };
        let mut energies = [0.0; 2];
        let mut ok = true;
        for (slot, (field, text)) in energies
            .iter_mut()
            .zip([("generation_kwh", &record[2]), ("consumption_kwh", &record[3])])
        {
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 => *slot = v,
                Ok(value) => {
                    errors.push(IngestError::InvalidEnergy {
                        row: line,
                        field,
                        value,
                    });
                    ok = false;
                }
                Err(_) => {
                    errors.push(IngestError::Malformed {
                        row: line,
                        message: format!("{field} `{text}` is not a number"),
                    });
                    ok = false;
                }
            }
        }
        if ok && role == Role::Consumer && energies[0] > 0.0 {
            errors.push(IngestError::RoleConsistency {
                row: line,
                id: id.clone(),
                value: energies[0],
            });
        }
        // Rows with bad values stay on the timeline so they do not also
        // show up as gaps.
        rows.entry(id).or_default().push(Row {
            line,
            at,
            generation: energies[0],
            consumption: energies[1],
        });
    }

    for (id, series) in &rows {
        for pair in series.windows(2) {
            let (prev, cur) = (&pair[0], &pair[1]);
            let ts = format_timestamp(cur.at);
            if cur.at == prev.at {
                errors.push(IngestError::DuplicateTimestamp {
                    row: cur.line,
                    id: id.clone(),
                    timestamp: ts,
                });
            } else if cur.at < prev.at {
                errors.push(IngestError::OutOfOrder {
                    row: cur.line,
                    id: id.clone(),
                    timestamp: ts,
                });
            } else if cur.at - prev.at != step {
                errors.push(IngestError::Gap {
                    row: cur.line,
                    id: id.clone(),
                    expected: format_timestamp(prev.at + step),
                    found: ts,
                });
            }
        }
    }
    let mut ids: Vec<&ParticipantId> = roles.keys().copied().collect();
    ids.dedup();
    for id in &ids {
        if !rows.contains_key(*id) {
            errors.push(IngestError::MissingParticipant { id: (*id).clone() });
        }
    }
    if !errors.is_empty() {
        errors.sort_by_key(|e| e.row().unwrap_or(usize::MAX));
        return Err(IngestErrors(errors));
    }

    // Trim every participant to the intersection of their ranges.
    let start = rows.values().map(|r| r[0].at).max().expect("at least one participant");
    let end = rows
        .values()
        .map(|r| r[r.len() - 1].at)
        .min()
        .expect("at least one participant");
    if end < start {
        return Err(IngestError::NoCommonRange.into());
    }
    let profiles = rows
        .into_iter()
        .map(|(id, series)| {
            let kept: Vec<&Row> = series.iter().filter(|r| r.at >= start && r.at <= end).collect();
            let make = |values: Vec<f64>| IntervalSeries {
                start,
                step_minutes: config.interval_minutes,
                values,
            };
            ParticipantProfile {
                id,
                generation: make(kept.iter().map(|r| r.generation).collect()),
                consumption: make(kept.iter().map(|r| r.consumption).collect()),
            }
        })
        .collect();
    ProfileSet::new(profiles).map_err(Into::into)
}

/// Reads long-format CSV from `path`.
pub fn load_timeseries(path: impl AsRef<Path>, config: &CommunityConfig) -> Result<ProfileSet, IngestErrors> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
    read_timeseries(std::io::BufReader::new(file), config)
}

/// Writes long-format CSV, timestamp-major, participants in id order.
pub fn write_timeseries<W: Write>(set: &ProfileSet, writer: W) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(writer);
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    let first = &set.profiles()[0].generation;
    for t in 0..set.intervals() {
        let ts = format_timestamp(first.timestamp(t));
        for p in set.profiles() {
            writeln!(
                out,
                "{ts},{},{},{}",
                p.id, p.generation.values[t], p.consumption.values[t]
            )?;
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Method, Participant, Scheme, Strategy, Tariff};
    use proptest::prelude::*;

    fn config() -> CommunityConfig {
        CommunityConfig {
            participants: vec![
                Participant::new("H1", "F1", Role::Prosumer),
                Participant::new("H2", "F1", Role::Consumer),
            ],
            strategy: Strategy::FeederAware,
            scheme: Scheme::Equal,
            method: Method::Dynamic,
            interval_minutes: 1,
            tariff: Tariff::default(),
        }
    }

    fn read(text: &str) -> Result<ProfileSet, IngestErrors> {
        read_timeseries(text.as_bytes(), &config())
    }

    const GOOD: &str = "timestamp,participant_id,generation_kwh,consumption_kwh
2020-01-01T00:00:00Z,H1,0.5,0.1
2020-01-01T00:00:00Z,H2,0,0.2
2020-01-01T00:01:00Z,H1,0.4,0.1
2020-01-01T00:01:00Z,H2,0,0.3
2020-01-01T00:02:00Z,H1,0,0.1
2020-01-01T00:02:00Z,H2,0,0.25
";

    #[test]
    fn loads_well_formed_file() {
        let set = read(GOOD).unwrap();
        assert_eq!(set.profiles().len(), 2);
        assert_eq!(set.intervals(), 3);
        let h2 = set.get(&"H2".into()).unwrap();
        assert_eq!(h2.consumption.values, vec![0.2, 0.3, 0.25]);
    }

    #[test]
    fn gap_cites_timestamp() {
        let text = GOOD.replace("2020-01-01T00:01:00Z,H2,0,0.3\n", "");
        let err = read(&text).unwrap_err();
        assert_eq!(err.0.len(), 1);
        match &err.0[0] {
            IngestError::Gap {
                expected,
                found,
                id,
                row,
            } => {
                assert_eq!(id.as_str(), "H2");
                assert_eq!(expected, "2020-01-01T00:01:00Z");
                assert_eq!(found, "2020-01-01T00:02:00Z");
                assert_eq!(*row, 6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn consumer_generation_is_rejected() {
        let text = GOOD.replace("00:01:00Z,H2,0,0.3", "00:01:00Z,H2,0.5,0.3");
        let err = read(&text).unwrap_err();
        assert_eq!(
            err.0,
            vec![IngestError::RoleConsistency {
                row: 5,
                id: "H2".into(),
                value: 0.5
            }]
        );
    }

    #[test]
    fn row_errors_are_collected() {
        let text = GOOD
            .replace("00:00:00Z,H1,0.5,0.1", "00:00:00Z,H1,-0.5,0.1")
            .replace("00:02:00Z,H2,0,0.25", "00:02:00Z,H9,0,0.25");
        let err = read(&text).unwrap_err();
        let kinds: Vec<_> = err.0.iter().map(|e| (e.kind(), e.row())).collect();
        assert_eq!(kinds, [("invalid_energy", Some(2)), ("unknown_participant", Some(7))]);
        let json: serde_json::Value = serde_json::from_str(&err.to_json()).unwrap();
        assert_eq!(json["errors"][0]["row"], 2);
    }

    #[test]
    fn duplicate_and_missing() {
        let text = GOOD.replace("2020-01-01T00:01:00Z,H1", "2020-01-01T00:00:00Z,H1");
        let err = read(&text).unwrap_err();
        assert_eq!(err.0[0].kind(), "duplicate_timestamp");

        let only_h1: String = GOOD
            .lines()
            .filter(|l| !l.contains(",H2,"))
            .map(|l| format!("{l}\n"))
            .collect();
        let err = read(&only_h1).unwrap_err();
        assert_eq!(err.0, vec![IngestError::MissingParticipant { id: "H2".into() }]);
    }

    #[test]
    fn bad_header() {
        let err = read("time,who,g,c\n").unwrap_err();
        assert_eq!(err.0[0].kind(), "header");
    }

    #[test]
    fn ranges_are_intersected() {
        let text = format!("{GOOD}2020-01-01T00:03:00Z,H1,0,0.1\n");
        let set = read(&text).unwrap();
        assert_eq!(set.intervals(), 3);
    }

    fn series(values: Vec<f64>, step: u32) -> IntervalSeries {
        IntervalSeries {
            start: parse_timestamp("2020-01-01T00:00:00Z").unwrap(),
            step_minutes: step,
            values,
        }
    }

    #[test]
    fn resample_examples() {
        let hourly = series(vec![0.01; 60], 1).resample(60).unwrap();
        assert_eq!(hourly.values.len(), 1);
        assert!((hourly.values[0] - 0.6).abs() < 1e-12);

        let s = series(vec![1.0, 2.0, 3.0], 1);
        assert_eq!(s.resample(1).unwrap(), s);

        let fine = series((0..30).map(f64::from).collect(), 1);
        let q = fine.resample(15).unwrap();
        assert_eq!(
            q.values,
            vec![(0..15).sum::<i32>() as f64, (15..30).sum::<i32>() as f64]
        );
        assert_eq!(q.step_minutes, 15);

        assert!(series(vec![1.0; 10], 15).resample(20).is_err());
        assert!(series(vec![1.0; 10], 1).resample(15).is_err());
    }

    #[test]
    fn timestamp_variants() {
        let a = parse_timestamp("2020-01-01T01:00:00+01:00").unwrap();
        let b = parse_timestamp("2020-01-01 00:00:00").unwrap();
        assert_eq!(a, b);
        assert_eq!(format_timestamp(a), "2020-01-01T00:00:00Z");
    }

    proptest! {
        #[test]
        fn resample_conserves_totals(values in prop::collection::vec(0.0..5.0f64, 1..40), ratio in 1u32..6) {
            let n = values.len() / ratio as usize * ratio as usize;
            prop_assume!(n > 0);
            let s = series(values[..n].to_vec(), 1);
            let r = s.resample(ratio).unwrap();
            prop_assert!((r.total() - s.total()).abs() <= 1e-12 * s.total().max(1.0));
        }

        #[test]
        fn write_then_read_is_fixed_point(
            g in prop::collection::vec(0.0..3.0f64, 1..20),
            c in prop::collection::vec(0.0..3.0f64, 1..20),
        ) {
            let n = g.len().min(c.len());
            let set = ProfileSet::new(vec![
                ParticipantProfile { id: "H1".into(), generation: series(g[..n].to_vec(), 1), consumption: series(c[..n].to_vec(), 1) },
                ParticipantProfile { id: "H2".into(), generation: series(vec![0.0; n], 1), consumption: series(g[..n].to_vec(), 1) },
            ]).unwrap();
            let mut bytes = Vec::new();
            write_timeseries(&set, &mut bytes).unwrap();
            let back = read_timeseries(&bytes[..], &config()).unwrap();
            prop_assert_eq!(&back, &set);
            let mut again = Vec::new();
            write_timeseries(&back, &mut again).unwrap();
            prop_assert_eq!(bytes, again);
        }
    }
}
