//! Append-only session event log and the analyses replayed from it.
//!
//! Every interaction (query, slider release, facet creation, selection) is
//! one [`SessionEvent`]. Step series and behavioral metrics are pure functions
//! of a session's events.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::facet::FacetKey;
use crate::llm::FacetDefinition;
use crate::rank::DEFAULT_WEIGHT;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("invalid event field {field}: {reason}")]
    InvalidEvent { field: &'static str, reason: String },
    #[error("session {0} already committed its final selection")]
    AlreadyFinalized(String),
    #[error("event log line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> TelemetryError {
    TelemetryError::InvalidEvent {
        field,
        reason: reason.into(),
    }
}

/// Number of claims in a committed final selection.
pub const FINAL_SELECTION_SIZE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventPayload {
    QuerySubmitted { query: String },
    WeightChanged { facet: FacetKey, old: f64, new: f64 },
    FacetCreated { facet: FacetDefinition },
    ClaimSelected { claim_id: String },
    ClaimUnselected { claim_id: String },
    FinalSelection { claim_ids: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub session_id: String,
    pub seq: u64,
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

#[derive(Debug, Default)]
struct SessionLog {
    events: Vec<SessionEvent>,
    ever_selected: HashSet<String>,
    finalized: bool,
}

impl SessionLog {
    fn next_seq(&self) -> u64 {
        self.events.last().map_or(1, |e| e.seq + 1)
    }

    fn validate(&self, session_id: &str, payload: &EventPayload) -> Result<(), TelemetryError> {
        match payload {
            EventPayload::WeightChanged { old, new, .. } => {
                for (field, v) in [("old", old), ("new", new)] {
                    if !(0.0..=1.0).contains(v) {
                        return Err(invalid(field, format!("weight {v} outside [0, 1]")));
                    }
                }
                if old == new {
                    return Err(invalid("new", "weight unchanged"));
                }
            }
            EventPayload::FacetCreated { facet } => {
                if facet.name.trim().is_empty() {
                    return Err(invalid("facet.name", "empty"));
                }
            }
            EventPayload::ClaimSelected { claim_id } | EventPayload::ClaimUnselected { claim_id } => {
                if claim_id.is_empty() {
                    return Err(invalid("claim_id", "empty"));
                }
            }
            EventPayload::FinalSelection { claim_ids } => {
                if self.finalized {
                    return Err(TelemetryError::AlreadyFinalized(session_id.to_string()));
                }
                if claim_ids.len() != FINAL_SELECTION_SIZE {
                    return Err(invalid(
                        "claim_ids",
                        format!("expected {FINAL_SELECTION_SIZE} ids, got {}", claim_ids.len()),
                    ));
                }
                if claim_ids.iter().collect::<HashSet<_>>().len() != claim_ids.len() {
                    return Err(invalid("claim_ids", "duplicate id"));
                }
                if let Some(id) = claim_ids.iter().find(|id| !self.ever_selected.contains(*id)) {
                    return Err(invalid("claim_ids", format!("{id} was never selected")));
                }
            }
            EventPayload::QuerySubmitted { .. } => {}
        }
        Ok(())
    }

    fn push(&mut self, event: SessionEvent) {
        match &event.payload {
            EventPayload::ClaimSelected { claim_id } => {
                self.ever_selected.insert(claim_id.clone());
            }
            EventPayload::FinalSelection { .. } => self.finalized = true,
            _ => {}
        }
        self.events.push(event);
    }
}

/// Event store keyed by session, optionally mirrored to a line-delimited file.
///
/// A record call returns only after the line has been written and synced.
pub struct EventLog {
    sessions: BTreeMap<String, SessionLog>,
    file: Option<File>,
    clock: Arc<dyn Clock>,
}

impl EventLog {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self {
            sessions: BTreeMap::new(),
            file: None,
            clock,
        }
    }

    /// Opens (or creates) a log file, replaying any events already in it.
    pub fn open(path: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Self, TelemetryError> {
        let path = path.as_ref();
        let mut log = if path.exists() {
            Self::import(BufReader::new(File::open(path)?), Arc::clone(&clock))?
        } else {
            Self::in_memory(Arc::clone(&clock))
        };
        log.file = Some(OpenOptions::new().create(true).append(true).open(path)?);
        Ok(log)
    }

    /// Validates and appends one event, assigning the next sequence number.
    pub fn record(&mut self, session_id: &str, payload: EventPayload) -> Result<u64, TelemetryError> {
        if session_id.is_empty() {
            return Err(invalid("session_id", "empty"));
        }
        let session = self.sessions.entry(session_id.to_string()).or_default();
        session.validate(session_id, &payload)?;
        let event = SessionEvent {
            session_id: session_id.to_string(),
            seq: session.next_seq(),
            timestamp_ms: self.clock.now_ms(),
            payload,
        };
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_vec(&event).map_err(io::Error::from)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
        }
        let seq = event.seq;
        session.push(event);
        Ok(seq)
    }

    pub fn events(&self, session_id: &str) -> &[SessionEvent] {
        self.sessions.get(session_id).map_or(&[], |s| &s.events)
    }

    pub fn session_ids(&self) -> impl Iterator<Item = &str> {
        self.sessions.keys().map(String::as_str)
    }

    pub fn is_finalized(&self, session_id: &str) -> bool {
        self.sessions.get(session_id).is_some_and(|s| s.finalized)
    }

    /// Reads a log produced by [`export_events`], checking every event's
    /// invariants and that sequence numbers increase within each session.
    pub fn import<R: BufRead>(reader: R, clock: Arc<dyn Clock>) -> Result<Self, TelemetryError> {
        let mut log = Self::in_memory(clock);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |reason: String| TelemetryError::Parse { line: i + 1, reason };
            let event: SessionEvent = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let session = log.sessions.entry(event.session_id.clone()).or_default();
            if event.seq < session.next_seq() {
                return Err(parse_err(format!(
                    "seq {} does not follow {} in session {}",
                    event.seq,
                    session.next_seq() - 1,
                    event.session_id
                )));
            }
            session
                .validate(&event.session_id, &event.payload)
                .map_err(|e| parse_err(e.to_string()))?;
            session.push(event);
        }
        Ok(log)
    }

    /// Every session's events, sessions in id order.
    pub fn export_all<W: Write>(&self, writer: W) -> io::Result<()> {
        export_events(self.sessions.values().flat_map(|s| s.events.iter()), writer)
    }
}

/// One JSON record per line.
pub fn export_events<'a, W: Write>(
    events: impl IntoIterator<Item = &'a SessionEvent>,
    mut writer: W,
) -> io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut writer, event)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub seq: u64,
    pub facet: FacetKey,
    pub weight: f64,
}

/// Piecewise-constant slider weights over a session: each row sets a facet's
/// weight from its `seq` until the next row for that facet.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepSeries {
    pub rows: Vec<StepRow>,
}

impl StepSeries {
    /// Weight of `facet` in effect after event `seq`.
    pub fn weight_at(&self, facet: &FacetKey, seq: u64) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .find(|r| &r.facet == facet && r.seq <= seq)
            .map(|r| r.weight)
    }

    pub fn facets(&self) -> BTreeSet<&FacetKey> {
        self.rows.iter().map(|r| &r.facet).collect()
    }

    /// `seq,facet,weight` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seq,facet,weight\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.seq, r.facet, r.weight));
        }
        out
    }
}

/// Replays slider weights. Every initial facet starts at the default weight at
/// seq 0; each weight change adds one row; each facet creation adds the new
/// facet and resets every active facet to the default.
pub fn step_series(events: &[SessionEvent], initial_facets: &[FacetKey]) -> StepSeries {
    let mut active: BTreeSet<FacetKey> = initial_facets.iter().cloned().collect();
    let mut rows: Vec<StepRow> = active
        .iter()
        .map(|f| StepRow {
            seq: 0,
            facet: f.clone(),
            weight: DEFAULT_WEIGHT,
        })
        .collect();
    for event in events {
        match &event.payload {
            EventPayload::WeightChanged { facet, new, .. } => {
                if active.insert(facet.clone()) {
                    rows.push(StepRow {
                        seq: 0,
                        facet: facet.clone(),
                        weight: DEFAULT_WEIGHT,
                    });
                }
                rows.push(StepRow {
                    seq: event.seq,
                    facet: facet.clone(),
                    weight: *new,
                });
            }
            EventPayload::FacetCreated { facet } => {
                active.insert(facet.key.clone());
                rows.extend(active.iter().map(|f| StepRow {
                    seq: event.seq,
                    facet: f.clone(),
                    weight: DEFAULT_WEIGHT,
                }));
            }
            _ => {}
        }
    }
    rows.sort_by(|a, b| a.seq.cmp(&b.seq).then_with(|| a.facet.cmp(&b.facet)));
    StepSeries { rows }
}

/// Counts describing one session (or one phase of it).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BehavioralMetrics {
    /// Non-blank queries submitted.
    pub n_queries: usize,
    /// Weight changes on any facet other than query similarity.
    pub n_checkworthy_slider_changes: usize,
    pub n_query_similarity_slider_changes: usize,
    /// Distinct claims ever selected.
    pub n_selected_claims: usize,
    /// Final-selection claims that were among the selected claims.
    pub n_final_claims_found_checkworthy: usize,
    /// `n_final_claims_found_checkworthy / n_selected_claims`; `None` when no
    /// claim was selected.
    pub conversion_rate: Option<f64>,
}

impl BehavioralMetrics {
    fn finish(mut self) -> Self {
        self.conversion_rate = (self.n_selected_claims > 0)
            .then(|| self.n_final_claims_found_checkworthy as f64 / self.n_selected_claims as f64);
        self
    }
}

/// Metrics split at the session's first facet creation. Events after it
/// belong to the customized phase; a selected claim belongs to the phase of
/// its first selection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseBreakdown {
    pub standard: BehavioralMetrics,
    pub customized: BehavioralMetrics,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Standard,
    Customized,
}

fn tally(events: &[SessionEvent], phase_of: impl Fn(u64) -> Phase, want: Option<Phase>) -> BehavioralMetrics {
    let in_scope = |seq: u64| want.is_none_or(|p| phase_of(seq) == p);
    let mut m = BehavioralMetrics::default();
    let mut first_selected: HashMap<&str, u64> = HashMap::new();
    let mut finals: &[String] = &[];
    for e in events {
        match &e.payload {
            EventPayload::QuerySubmitted { query } if in_scope(e.seq) && !query.trim().is_empty() => m.n_queries += 1,
            EventPayload::WeightChanged { facet, .. } if in_scope(e.seq) => {
                if facet.is_query_similarity() {
                    m.n_query_similarity_slider_changes += 1;
                } else {
                    m.n_checkworthy_slider_changes += 1;
                }
            }
            EventPayload::ClaimSelected { claim_id } => {
                first_selected.entry(claim_id).or_insert(e.seq);
            }
            EventPayload::FinalSelection { claim_ids } => finals = claim_ids,
            _ => {}
        }
    }
    m.n_selected_claims = first_selected.values().filter(|s| in_scope(**s)).count();
    m.n_final_claims_found_checkworthy = finals
        .iter()
        .filter(|id| first_selected.get(id.as_str()).is_some_and(|s| in_scope(*s)))
        .count();
    m.finish()
}

fn first_facet_created(events: &[SessionEvent]) -> Option<u64> {
    events
        .iter()
        .find(|e| matches!(e.payload, EventPayload::FacetCreated { .. }))
        .map(|e| e.seq)
}

pub fn metrics(events: &[SessionEvent]) -> BehavioralMetrics {
    tally(events, |_| Phase::Standard, None)
}

pub fn metrics_by_phase(events: &[SessionEvent]) -> PhaseBreakdown {
    let boundary = first_facet_created(events).unwrap_or(u64::MAX);
    let phase_of = |seq: u64| {
        if seq > boundary {
            Phase::Customized
        } else {
            Phase::Standard
        }
    };
    PhaseBreakdown {
        standard: tally(events, phase_of, Some(Phase::Standard)),
        customized: tally(events, phase_of, Some(Phase::Customized)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::TickClock;

    fn log() -> EventLog {
        EventLog::in_memory(Arc::new(TickClock::new(1_000, 1)))
    }

    fn select(id: &str) -> EventPayload {
        EventPayload::ClaimSelected { claim_id: id.into() }
    }

    fn weight(facet: &str, old: f64, new: f64) -> EventPayload {
        EventPayload::WeightChanged {
            facet: facet.into(),
            old,
            new,
        }
    }

    fn created(name: &str) -> EventPayload {
        EventPayload::FacetCreated {
            facet: FacetDefinition::custom(name, "context", 0).unwrap(),
        }
    }

    fn query(q: &str) -> EventPayload {
        EventPayload::QuerySubmitted { query: q.into() }
    }

    fn finals(ids: &[&str]) -> EventPayload {
        EventPayload::FinalSelection {
            claim_ids: ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn sequence_numbers_start_at_one_per_session() {
        let mut log = log();
        assert_eq!(log.record("s1", query("masks")).unwrap(), 1);
        assert_eq!(log.record("s1", query("vaccines")).unwrap(), 2);
        assert_eq!(log.record("s2", query("5g")).unwrap(), 1);
    }

    #[test]
    fn invalid_payloads_are_rejected() {
        let mut log = log();
        assert!(matches!(
            log.record("s", weight("verifiable", 0.1, 0.1)),
            Err(TelemetryError::InvalidEvent { field: "new", .. })
        ));
        assert!(log.record("s", weight("verifiable", 0.1, 1.5)).is_err());
        log.record("s", select("a")).unwrap();
        log.record("s", select("b")).unwrap();
        assert!(matches!(
            log.record("s", finals(&["a", "b"])),
            Err(TelemetryError::InvalidEvent { field: "claim_ids", .. })
        ));
        assert!(log.record("s", finals(&["a", "b", "c"])).is_err());
        assert!(log.record("s", finals(&["a", "a", "b"])).is_err());
        assert!(log.record("", query("x")).is_err());
        // Rejections do not consume sequence numbers.
        assert_eq!(log.record("s", query("x")).unwrap(), 3);
    }

    #[test]
    fn final_selection_commits_once() {
        let mut log = log();
        for id in ["a", "b", "c"] {
            log.record("s", select(id)).unwrap();
        }
        log.record("s", finals(&["a", "b", "c"])).unwrap();
        assert!(log.is_finalized("s"));
        assert!(matches!(
            log.record("s", finals(&["a", "b", "c"])),
            Err(TelemetryError::AlreadyFinalized(_))
        ));
    }

    #[test]
    fn replay_reads_back_identically() {
        let mut log = log();
        log.record("s", query("vaccine deaths")).unwrap();
        log.record("s", weight("verifiable", 0.1, 0.75)).unwrap();
        log.record("s", created("Statistics")).unwrap();
        let mut first = Vec::new();
        log.export_all(&mut first).unwrap();
        let reread = EventLog::import(first.as_slice(), Arc::new(TickClock::new(0, 1))).unwrap();
        assert_eq!(reread.events("s"), log.events("s"));
        let mut second = Vec::new();
        reread.export_all(&mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn import_rejects_out_of_order_sequences() {
        let a = r#"{"session_id":"s","seq":2,"timestamp_ms":0,"kind":"query_submitted","query":"a"}"#;
        let b = r#"{"session_id":"s","seq":2,"timestamp_ms":0,"kind":"query_submitted","query":"b"}"#;
        let data = format!("{a}\n{b}\n");
        assert!(matches!(
            EventLog::import(data.as_bytes(), Arc::new(TickClock::new(0, 1))),
            Err(TelemetryError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn file_backed_log_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        {
            let mut log = EventLog::open(&path, Arc::new(TickClock::new(0, 1))).unwrap();
            log.record("s", query("a")).unwrap();
            log.record("s", query("b")).unwrap();
        }
        let mut log = EventLog::open(&path, Arc::new(TickClock::new(0, 1))).unwrap();
        assert_eq!(log.events("s").len(), 2);
        assert_eq!(log.record("s", query("c")).unwrap(), 3);
    }

    #[test]
    fn step_series_without_weight_events_is_constant() {
        let mut log = log();
        log.record("s", query("a")).unwrap();
        let facets = [FacetKey::verifiable(), FacetKey::query_similarity()];
        let series = step_series(log.events("s"), &facets);
        assert_eq!(series.rows.len(), 2);
        for f in &facets {
            assert_eq!(series.weight_at(f, 0), Some(0.10));
            assert_eq!(series.weight_at(f, 99), Some(0.10));
        }
    }

    #[test]
    fn step_series_reset_on_facet_creation() {
        let mut log = log();
        log.record("s", query("a")).unwrap();
        log.record("s", query("b")).unwrap();
        log.record("s", weight("verifiable", 0.1, 0.75)).unwrap();
        log.record("s", query("c")).unwrap();
        log.record("s", created("Statistics")).unwrap();
        let facets = [FacetKey::verifiable(), FacetKey::likely_false()];
        let series = step_series(log.events("s"), &facets);
        let v = FacetKey::verifiable();
        assert_eq!(series.weight_at(&v, 2), Some(0.10));
        assert_eq!(series.weight_at(&v, 3), Some(0.75));
        assert_eq!(series.weight_at(&v, 4), Some(0.75));
        assert_eq!(series.weight_at(&v, 5), Some(0.10));
        assert_eq!(series.weight_at(&"llm_statistics".into(), 4), None);
        assert_eq!(series.weight_at(&"llm_statistics".into(), 5), Some(0.10));
        // Untouched facet: initial row plus the reset row, both 0.10.
        let lf: Vec<_> = series
            .rows
            .iter()
            .filter(|r| r.facet == FacetKey::likely_false())
            .collect();
        assert!(lf.iter().all(|r| r.weight == 0.10));
        assert!(series.to_csv().starts_with("seq,facet,weight\n0,likely_false,0.1\n"));
    }

    #[test]
    fn metrics_for_scripted_session() {
        let mut log = log();
        log.record("s", query("covid deaths")).unwrap();
        for id in ["a", "b", "c"] {
            log.record("s", select(id)).unwrap();
        }
        log.record("s", weight("query_similarity", 0.1, 0.5)).unwrap();
        log.record("s", query("vaccine")).unwrap();
        log.record("s", select("d")).unwrap();
        log.record("s", select("e")).unwrap();
        log.record("s", weight("likely_false", 0.1, 0.9)).unwrap();
        log.record("s", finals(&["a", "d", "e"])).unwrap();
        let m = metrics(log.events("s"));
        assert_eq!(m.n_queries, 2);
        assert_eq!(m.n_selected_claims, 5);
        assert_eq!(m.n_final_claims_found_checkworthy, 3);
        assert_eq!(m.n_checkworthy_slider_changes, 1);
        assert_eq!(m.n_query_similarity_slider_changes, 1);
        assert_eq!(m.conversion_rate, Some(0.6));
    }

    #[test]
    fn empty_session_has_undefined_conversion() {
        let m = metrics(&[]);
        assert_eq!(m, BehavioralMetrics::default());
        assert_eq!(m.conversion_rate, None);
    }

    #[test]
    fn phase_split_attributes_selections_to_first_selection() {
        let mut log = log();
        for id in ["a", "b", "c", "d", "e"] {
            log.record("s", select(id)).unwrap();
        }
        log.record("s", created("Statistics")).unwrap();
        log.record("s", query("after")).unwrap();
        log.record("s", finals(&["a", "b", "c"])).unwrap();
        let phases = metrics_by_phase(log.events("s"));
        assert_eq!(phases.standard.n_selected_claims, 5);
        assert_eq!(phases.standard.conversion_rate, Some(0.6));
        assert_eq!(phases.customized.n_selected_claims, 0);
        assert_eq!(phases.customized.conversion_rate, None);
        assert_eq!(phases.customized.n_queries, 1);
    }
}
