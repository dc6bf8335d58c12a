//! Claim corpus: ingestion from line-delimited JSON, lookup, persistence,
//! train/test splitting and uniform sub-sampling.
//!
//! Records are canonicalized on ingest (text trimmed, casing kept, missing
//! metrics set to zero) so that export followed by ingest reproduces the same
//! bytes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("claim not found: {0}")]
    NotFound(String),
    #[error("duplicate claim id: {0}")]
    DuplicateId(String),
    #[error("invalid claim: {0}")]
    InvalidClaim(String),
    #[error("split infeasible: need at least 3 labeled claims, found {labeled}")]
    SplitInfeasible { labeled: usize },
    #[error("invalid split ratio {0}:{1}")]
    InvalidRatio(u32, u32),
    #[error("corrupt store file at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Engagement counts shown in the claim preview.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialMetrics {
    #[serde(default)]
    pub reposts: u64,
    #[serde(default)]
    pub quotes: u64,
    #[serde(default)]
    pub likes: u64,
}

/// One candidate statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub metrics: SocialMetrics,
    /// Binary annotations keyed by label name. Unknown keys are kept verbatim.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub gold_labels: BTreeMap<String, u8>,
}

impl Claim {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            metrics: SocialMetrics::default(),
            gold_labels: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, key: impl Into<String>, value: u8) -> Self {
        self.gold_labels.insert(key.into(), value);
        self
    }

    pub fn with_metrics(mut self, metrics: SocialMetrics) -> Self {
        self.metrics = metrics;
        self
    }

    pub fn label(&self, key: &str) -> Option<bool> {
        self.gold_labels.get(key).map(|v| *v == 1)
    }

    pub fn is_labeled(&self) -> bool {
        !self.gold_labels.is_empty()
    }

    fn canonicalize(mut self) -> Result<Self, String> {
        self.id = self.id.trim().to_string();
        self.text = self.text.trim().to_string();
        if self.id.is_empty() {
            return Err("id is empty".into());
        }
        if self.text.is_empty() {
            return Err("text is empty".into());
        }
        if let Some((k, v)) = self.gold_labels.iter().find(|(_, v)| **v > 1) {
            return Err(format!("label {k:?} has value {v}, expected 0 or 1"));
        }
        Ok(self)
    }
}

/// Why one input line was not accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordErrorKind {
    Malformed(String),
    MissingField(&'static str),
    Invalid(String),
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    /// 1-based line number in the source stream.
    pub line: usize,
    pub kind: RecordErrorKind,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            RecordErrorKind::Malformed(e) => write!(f, "line {}: malformed record: {e}", self.line),
            RecordErrorKind::MissingField(field) => {
                write!(f, "line {}: missing field {field:?}", self.line)
            }
            RecordErrorKind::Invalid(e) => write!(f, "line {}: {e}", self.line),
            RecordErrorKind::DuplicateId(id) => {
                write!(f, "line {}: duplicate id {id:?}", self.line)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub accepted: usize,
    pub errors: Vec<RecordError>,
}

impl IngestReport {
    pub fn duplicate_ids(&self) -> Vec<&str> {
        self.errors
            .iter()
            .filter_map(|e| match &e.kind {
                RecordErrorKind::DuplicateId(id) => Some(id.as_str()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Deserialize)]
struct RawClaim {
    id: Option<serde_json::Value>,
    text: Option<serde_json::Value>,
    #[serde(default)]
    metrics: Option<SocialMetrics>,
    #[serde(default)]
    gold_labels: Option<BTreeMap<String, serde_json::Value>>,
}

fn parse_record(line: &str) -> Result<Claim, RecordErrorKind> {
    let raw: RawClaim = serde_json::from_str(line).map_err(|e| RecordErrorKind::Malformed(e.to_string()))?;
    let id = match raw.id {
        None | Some(serde_json::Value::Null) => return Err(RecordErrorKind::MissingField("id")),
        Some(serde_json::Value::String(s)) => s,
        Some(serde_json::Value::Number(n)) => n.to_string(),
        Some(other) => return Err(RecordErrorKind::Invalid(format!("id must be a string, got {other}"))),
    };
    let text = match raw.text {
        None | Some(serde_json::Value::Null) => return Err(RecordErrorKind::MissingField("text")),
        Some(serde_json::Value::String(s)) => s,
        Some(other) => return Err(RecordErrorKind::Invalid(format!("text must be a string, got {other}"))),
    };
    let mut gold_labels = BTreeMap::new();
    for (key, value) in raw.gold_labels.unwrap_or_default() {
        match value.as_u64() {
            Some(v @ (0 | 1)) => {
                gold_labels.insert(key, v as u8);
            }
            _ => {
                return Err(RecordErrorKind::Invalid(format!(
                    "label {key:?} has value {value}, expected 0 or 1"
                )))
            }
        }
    }
    Claim {
        id,
        text,
        metrics: raw.metrics.unwrap_or_default(),
        gold_labels,
    }
    .canonicalize()
    .map_err(RecordErrorKind::Invalid)
}

/// In-memory claim corpus with an id index.
///
/// Mutation goes through `&mut self`; after loading, wrap the store in an
/// `Arc` to share it read-only across request handlers.
#[derive(Debug, Clone, Default)]
pub struct ClaimStore {
    claims: Vec<Claim>,
    index: HashMap<String, usize>,
}

impl ClaimStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_claims(claims: impl IntoIterator<Item = Claim>) -> Result<Self, StoreError> {
        let mut store = Self::new();
        for claim in claims {
            store.insert(claim)?;
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    /// Claims in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &Claim> {
        self.claims.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.claims.iter().map(|c| c.id.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Result<&Claim, StoreError> {
        self.index
            .get(id)
            .map(|&i| &self.claims[i])
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    /// Validates, canonicalizes and stores one claim.
    pub fn insert(&mut self, claim: Claim) -> Result<(), StoreError> {
        let claim = claim.canonicalize().map_err(StoreError::InvalidClaim)?;
        if self.index.contains_key(&claim.id) {
            return Err(StoreError::DuplicateId(claim.id));
        }
        self.index.insert(claim.id.clone(), self.claims.len());
        self.claims.push(claim);
        Ok(())
    }

    /// Reads line-delimited claim records. Invalid lines and duplicate ids are
    /// reported per line; valid lines are stored. Blank lines are skipped.
    pub fn ingest_jsonl<R: BufRead>(&mut self, reader: R) -> Result<IngestReport, StoreError> {
        let mut report = IngestReport::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            match parse_record(&line) {
                Ok(claim) if self.index.contains_key(&claim.id) => report.errors.push(RecordError {
                    line: line_no,
                    kind: RecordErrorKind::DuplicateId(claim.id),
                }),
                Ok(claim) => {
                    self.index.insert(claim.id.clone(), self.claims.len());
                    self.claims.push(claim);
                    report.accepted += 1;
                }
                Err(kind) => report.errors.push(RecordError { line: line_no, kind }),
            }
        }
        Ok(report)
    }

    /// Writes the canonical form of every claim, one per line, in insertion order.
    pub fn export_jsonl<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for claim in &self.claims {
            serde_json::to_writer(&mut writer, claim)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let file = File::create(path)?;
        let mut writer = BufWriter::new(file);
        self.export_jsonl(&mut writer)?;
        writer.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        Ok(())
    }

    /// Loads a store written by [`ClaimStore::save`]. Any bad line is fatal.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let mut store = Self::new();
        let report = store.ingest_jsonl(BufReader::new(File::open(path)?))?;
        if let Some(err) = report.errors.first() {
            return Err(StoreError::Corrupt {
                line: err.line,
                reason: err.to_string(),
            });
        }
        Ok(store)
    }

    /// Uniform random subset of `n` claims (all claims when `n >= len`),
    /// kept in original order.
    pub fn sample(&self, n: usize, seed: u64) -> ClaimStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, self.len(), n.min(self.len())).into_vec();
        picked.sort_unstable();
        let claims: Vec<Claim> = picked.into_iter().map(|i| self.claims[i].clone()).collect();
        let index = claims.iter().enumerate().map(|(i, c)| (c.id.clone(), i)).collect();
        ClaimStore { claims, index }
    }

    pub fn labeled_ids(&self) -> Vec<&str> {
        self.claims
            .iter()
            .filter(|c| c.is_labeled())
            .map(|c| c.id.as_str())
            .collect()
    }
}

/// Disjoint train/test assignment of the labeled claims.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
    pub ratio: (u32, u32),
    pub seed: u64,
}

/// Number of training claims for `n` labeled claims: `round(train·n / (train+test))`,
/// halves rounded up.
pub fn train_size(n: usize, ratio: (u32, u32)) -> usize {
    let (a, b) = (ratio.0 as usize, ratio.1 as usize);
    (2 * a * n + (a + b)) / (2 * (a + b))
}

/// Shuffles the labeled claims with a seeded generator and assigns the first
/// `train_size` of them to training.
pub fn split_corpus(store: &ClaimStore, ratio: (u32, u32), seed: u64) -> Result<CorpusSplit, StoreError> {
    if ratio.0 == 0 || ratio.1 == 0 {
        return Err(StoreError::InvalidRatio(ratio.0, ratio.1));
    }
    let mut labeled = store.labeled_ids();
    if labeled.len() < 3 {
        return Err(StoreError::SplitInfeasible { labeled: labeled.len() });
    }
    labeled.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labeled.shuffle(&mut rng);
    let n_train = train_size(labeled.len(), ratio).clamp(1, labeled.len() - 1);
    let (train, test) = labeled.split_at(n_train);
    Ok(CorpusSplit {
        train_ids: train.iter().map(|s| s.to_string()).collect(),
        test_ids: test.iter().map(|s| s.to_string()).collect(),
        ratio,
        seed,
    })
}
