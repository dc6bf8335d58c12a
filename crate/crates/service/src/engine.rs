//! Session state and the operations behind the HTTP API.
//!
//! Handlers in [`crate::api`] only translate between HTTP and these calls, so
//! everything here can be driven directly from tests and examples.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use claimtriage::clock::Clock;
use claimtriage::embed::{EmbeddingIndex, EmbeddingProvider};
use claimtriage::llm::{
    score_facet, CompletionProvider, FacetDefinition, FacetScores, FlaggedClaim, Progress, ProviderError,
    ScoringOptions, YesNoResponse,
};
use claimtriage::rank::{quantize_weight, rank, ScoringMode, WeightProfile, DEFAULT_WEIGHT};
use claimtriage::telemetry::{
    export_events, metrics, metrics_by_phase, step_series, BehavioralMetrics, EventLog, EventPayload, PhaseBreakdown,
    SessionEvent, FINAL_SELECTION_SIZE,
};
use claimtriage::{ClaimStore, FacetKey, ScoreMap, SocialMetrics};
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::error::{ApiError, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceMode {
    /// One checkworthiness slider plus query similarity.
    Unidimensional,
    /// The four checkworthiness dimensions plus query similarity.
    Multidimensional,
}

impl InterfaceMode {
    pub fn base_facets(self) -> Vec<FacetKey> {
        match self {
            Self::Unidimensional => vec![FacetKey::needs_verification(), FacetKey::query_similarity()],
            Self::Multidimensional => {
                let mut keys = FacetKey::multidimensional_presets().to_vec();
                keys.push(FacetKey::query_similarity());
                keys
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobStatus {
    Scoring { done: usize, total: usize },
    Ready { total: usize, flagged: Vec<FlaggedClaim> },
    Failed { error: String },
}

/// Background scoring of one custom facet. Scores become visible only once
/// the whole corpus is done.
#[derive(Debug)]
pub struct FacetJob {
    state: Mutex<JobState>,
}

#[derive(Debug)]
enum JobState {
    Scoring(Progress),
    Ready(Arc<FacetScores>),
    Failed(String),
}

impl FacetJob {
    fn new(total: usize) -> Self {
        Self {
            state: Mutex::new(JobState::Scoring(Progress { done: 0, total })),
        }
    }

    fn lock(&self) -> MutexGuard<'_, JobState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn status(&self) -> JobStatus {
        match &*self.lock() {
            JobState::Scoring(p) => JobStatus::Scoring {
                done: p.done,
                total: p.total,
            },
            JobState::Ready(s) => JobStatus::Ready {
                total: s.scores.len(),
                flagged: s.flagged.clone(),
            },
            JobState::Failed(e) => JobStatus::Failed { error: e.clone() },
        }
    }

    pub fn is_ready(&self) -> bool {
        matches!(&*self.lock(), JobState::Ready(_))
    }
}

#[derive(Debug)]
struct CustomFacet {
    definition: FacetDefinition,
    job: Arc<FacetJob>,
}

#[derive(Debug)]
struct Session {
    mode: InterfaceMode,
    weights: WeightProfile,
    query: String,
    query_scores: Arc<ScoreMap>,
    selected: BTreeSet<String>,
    final_ids: Option<Vec<String>>,
    custom: BTreeMap<FacetKey, CustomFacet>,
}

impl Session {
    fn facet_keys(&self) -> BTreeSet<FacetKey> {
        self.mode
            .base_facets()
            .into_iter()
            .chain(self.custom.keys().cloned())
            .collect()
    }
}

/// Caps provider calls in flight across every scoring job.
struct BoundedProvider {
    inner: Arc<dyn CompletionProvider>,
    free: Mutex<usize>,
    cv: Condvar,
}

impl BoundedProvider {
    fn new(inner: Arc<dyn CompletionProvider>, limit: usize) -> Self {
        Self {
            inner,
            free: Mutex::new(limit.max(1)),
            cv: Condvar::new(),
        }
    }
}

impl CompletionProvider for BoundedProvider {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn supports_top_logprobs(&self) -> bool {
        self.inner.supports_top_logprobs()
    }

    fn complete(&self, prompt: &str) -> Result<YesNoResponse, ProviderError> {
        {
            let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
            while *free == 0 {
                free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
            }
            *free -= 1;
        }
        let out = self.inner.complete(prompt);
        *self.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.cv.notify_one();
        out
    }
}

// Request and response bodies.

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankRequest {
    /// Weights to change; facets left out keep their current weight.
    pub weights: BTreeMap<String, f64>,
    /// Replaces the current query when present; `""` clears it.
    pub query: Option<String>,
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedClaim {
    pub claim_id: String,
    pub text: String,
    pub score: f64,
    pub facet_scores: BTreeMap<FacetKey, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResponse {
    pub mode: ScoringMode,
    pub total: usize,
    pub offset: usize,
    pub query: String,
    pub weights: WeightProfile,
    pub claims: Vec<RankedClaim>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub mode: InterfaceMode,
    pub facets: Vec<FacetKey>,
    pub weights: WeightProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimPreview {
    pub id: String,
    pub text: String,
    pub metrics: SocialMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FacetCreated {
    pub key: FacetKey,
    pub definition: FacetDefinition,
    pub weights: WeightProfile,
    pub job: JobStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FacetStatus {
    pub key: FacetKey,
    #[serde(flatten)]
    pub job: JobStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionState {
    pub selected: Vec<String>,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: BehavioralMetrics,
    pub phases: PhaseBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub claim_ids: Vec<String>,
    pub metrics: BehavioralMetrics,
}

/// Everything the engine is built from.
pub struct EngineParts {
    pub store: ClaimStore,
    /// Probability maps for the five preset facets.
    pub presets: BTreeMap<FacetKey, ScoreMap>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub provider: Arc<dyn CompletionProvider>,
    pub config: ServiceConfig,
    pub clock: Arc<dyn Clock>,
    pub events: EventLog,
}

pub struct Engine {
    store: ClaimStore,
    embedder: Arc<dyn EmbeddingProvider>,
    index: EmbeddingIndex,
    presets: BTreeMap<FacetKey, Arc<ScoreMap>>,
    zero_query: Arc<ScoreMap>,
    provider: Arc<dyn CompletionProvider>,
    config: ServiceConfig,
    clock: Arc<dyn Clock>,
    sessions: Mutex<BTreeMap<String, Arc<Mutex<Session>>>>,
    next_session: AtomicU64,
    events: Mutex<EventLog>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::Internal(e.to_string())
}

impl Engine {
    pub fn new(parts: EngineParts) -> Result<Self, ServiceError> {
        parts.config.validate()?;
        let mut presets = BTreeMap::new();
        for key in FacetKey::all_presets() {
            let map = parts.presets.get(&key).ok_or_else(|| ServiceError::MissingScores {
                facet: key.to_string(),
                detail: "no score map".into(),
            })?;
            if let Some(id) = parts.store.ids().find(|id| !map.contains_key(*id)) {
                return Err(ServiceError::MissingScores {
                    facet: key.to_string(),
                    detail: format!("claim {id} has no score"),
                });
            }
            presets.insert(key, Arc::new(map.clone()));
        }
        let index = EmbeddingIndex::build(&parts.store, parts.embedder.as_ref())?;
        let zero_query = Arc::new(index.query_similarity_scores(parts.embedder.as_ref(), "")?);
        let provider: Arc<dyn CompletionProvider> =
            Arc::new(BoundedProvider::new(parts.provider, parts.config.concurrency_limit));
        Ok(Self {
            store: parts.store,
            embedder: parts.embedder,
            index,
            presets,
            zero_query,
            provider,
            config: parts.config,
            clock: parts.clock,
            sessions: Mutex::new(BTreeMap::new()),
            next_session: AtomicU64::new(1),
            events: Mutex::new(parts.events),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &ClaimStore {
        &self.store
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no session {id}")))
    }

    fn record(&self, session_id: &str, payload: EventPayload) -> Result<u64, ApiError> {
        lock(&self.events).record(session_id, payload).map_err(internal)
    }

    pub fn create_session(&self, mode: InterfaceMode) -> SessionInfo {
        let id = format!("s{}", self.next_session.fetch_add(1, Ordering::SeqCst));
        let weights = WeightProfile::with_defaults(mode.base_facets());
        let session = Session {
            mode,
            weights: weights.clone(),
            query: String::new(),
            query_scores: Arc::clone(&self.zero_query),
            selected: BTreeSet::new(),
            final_ids: None,
            custom: BTreeMap::new(),
        };
        lock(&self.sessions).insert(id.clone(), Arc::new(Mutex::new(session)));
        SessionInfo {
            session_id: id,
            mode,
            facets: mode.base_facets(),
            weights,
        }
    }

    pub fn claim(&self, id: &str) -> Result<ClaimPreview, ApiError> {
        let c = self.store.get(id).map_err(|e| ApiError::NotFound(e.to_string()))?;
        Ok(ClaimPreview {
            id: c.id.clone(),
            text: c.text.clone(),
            metrics: c.metrics,
        })
    }

    /// Applies weight and query changes, logs one event per change, and
    /// returns a page of the full ranking.
    pub fn rank(&self, session_id: &str, req: &RankRequest) -> Result<RankResponse, ApiError> {
        let session = self.session(session_id)?;
        let mut s = lock(&session);
        let keys = s.facet_keys();

        let mut changes = Vec::new();
        for (key, w) in &req.weights {
            let facet = FacetKey::from(key.as_str());
            if !keys.contains(&facet) {
                return Err(ApiError::unknown_facet(key));
            }
            if !w.is_finite() || !(0.0..=1.0).contains(w) {
                return Err(ApiError::BadRequest {
                    message: format!("weight {w} for {key} is outside [0, 1]"),
                    key: Some(key.clone()),
                });
            }
            let new = quantize_weight(*w);
            let old = s.weights.get(&facet).unwrap_or(DEFAULT_WEIGHT);
            if new != old {
                changes.push((facet, old, new));
            }
        }

        let mut custom_scores = Vec::new();
        for (key, facet) in &s.custom {
            match &*facet.job.lock() {
                JobState::Ready(scores) => custom_scores.push((key.clone(), Arc::clone(scores))),
                JobState::Scoring(progress) => {
                    return Err(ApiError::Busy {
                        facet: key.to_string(),
                        progress: *progress,
                    })
                }
                JobState::Failed(e) => return Err(ApiError::Conflict(format!("facet {key} failed to score: {e}"))),
            }
        }

        let new_query = req.query.as_ref().filter(|q| **q != s.query).cloned();
        let new_query_scores = match &new_query {
            Some(q) => Some(Arc::new(
                self.index
                    .query_similarity_scores(self.embedder.as_ref(), q)
                    .map_err(internal)?,
            )),
            None => None,
        };

        if let (Some(q), Some(scores)) = (new_query, new_query_scores) {
            self.record(session_id, EventPayload::QuerySubmitted { query: q.clone() })?;
            s.query = q;
            s.query_scores = scores;
        }
        for (facet, old, new) in changes {
            self.record(
                session_id,
                EventPayload::WeightChanged {
                    facet: facet.clone(),
                    old,
                    new,
                },
            )?;
            s.weights.set(facet, new).map_err(internal)?;
        }

        let mut maps: BTreeMap<FacetKey, &ScoreMap> = BTreeMap::new();
        for (k, m) in &self.presets {
            maps.insert(k.clone(), m.as_ref());
        }
        maps.insert(FacetKey::query_similarity(), s.query_scores.as_ref());
        for (k, scores) in &custom_scores {
            maps.insert(k.clone(), &scores.scores);
        }
        let ranked = rank(self.store.ids(), &maps, &s.weights, self.config.scoring_mode).map_err(internal)?;

        let offset = req.offset.unwrap_or(0);
        let limit = req.limit.unwrap_or(self.config.page_size);
        let claims = ranked
            .page(offset, limit)
            .iter()
            .map(|e| RankedClaim {
                claim_id: e.claim_id.clone(),
                text: self.store.get(&e.claim_id).map(|c| c.text.clone()).unwrap_or_default(),
                score: e.score,
                facet_scores: s
                    .weights
                    .keys()
                    .map(|k| (k.clone(), maps[k].get(&e.claim_id).copied().unwrap_or_default()))
                    .collect(),
            })
            .collect();
        Ok(RankResponse {
            mode: self.config.scoring_mode,
            total: ranked.len(),
            offset,
            query: s.query.clone(),
            weights: s.weights.clone(),
            claims,
        })
    }

    /// Registers a custom facet, resets every weight to the default and
    /// returns the job to run with [`Engine::run_facet_job`].
    pub fn create_facet(
        &self,
        session_id: &str,
        name: &str,
        context: &str,
    ) -> Result<(FacetCreated, FacetDefinition, Arc<FacetJob>), ApiError> {
        let session = self.session(session_id)?;
        let mut s = lock(&session);
        let definition = FacetDefinition::custom(name, context, self.clock.now_ms())
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        if s.custom.contains_key(&definition.key)
            || s.custom
                .values()
                .any(|f| f.definition.name.trim().eq_ignore_ascii_case(name.trim()))
        {
            return Err(ApiError::Conflict(format!(
                "facet {:?} already exists in this session",
                name.trim()
            )));
        }
        self.record(
            session_id,
            EventPayload::FacetCreated {
                facet: definition.clone(),
            },
        )?;
        let job = Arc::new(FacetJob::new(self.store.len()));
        s.custom.insert(
            definition.key.clone(),
            CustomFacet {
                definition: definition.clone(),
                job: Arc::clone(&job),
            },
        );
        s.weights.reset_all(DEFAULT_WEIGHT);
        s.weights
            .set(definition.key.clone(), DEFAULT_WEIGHT)
            .map_err(internal)?;
        Ok((
            FacetCreated {
                key: definition.key.clone(),
                definition: definition.clone(),
                weights: s.weights.clone(),
                job: job.status(),
            },
            definition,
            job,
        ))
    }

    /// Scores the corpus for a custom facet and publishes the result. Blocks.
    pub fn run_facet_job(&self, definition: &FacetDefinition, job: &FacetJob) {
        let options = ScoringOptions {
            concurrency_limit: self.config.concurrency_limit,
            ..ScoringOptions::default()
        };
        let result = score_facet(definition, &self.store, self.provider.as_ref(), &options, &|p| {
            let mut state = job.lock();
            if let JobState::Scoring(current) = &mut *state {
                *current = p;
            }
        });
        *job.lock() = match result {
            Ok(scores) => JobState::Ready(Arc::new(scores)),
            Err(e) => JobState::Failed(e.to_string()),
        };
    }

    pub fn facet_status(&self, session_id: &str, key: &str) -> Result<FacetStatus, ApiError> {
        let session = self.session(session_id)?;
        let s = lock(&session);
        let facet = FacetKey::from(key);
        if let Some(custom) = s.custom.get(&facet) {
            return Ok(FacetStatus {
                key: facet,
                job: custom.job.status(),
            });
        }
        if s.mode.base_facets().contains(&facet) {
            return Ok(FacetStatus {
                key: facet,
                job: JobStatus::Ready {
                    total: self.store.len(),
                    flagged: Vec::new(),
                },
            });
        }
        Err(ApiError::NotFound(format!("no facet {key} in session {session_id}")))
    }

    pub fn select(&self, session_id: &str, claim_id: &str, selected: bool) -> Result<SelectionState, ApiError> {
        let session = self.session(session_id)?;
        let mut s = lock(&session);
        if !self.store.contains(claim_id) {
            return Err(ApiError::NotFound(format!("no claim {claim_id}")));
        }
        let changed = s.selected.contains(claim_id) != selected;
        if changed {
            let payload = if selected {
                EventPayload::ClaimSelected {
                    claim_id: claim_id.to_string(),
                }
            } else {
                EventPayload::ClaimUnselected {
                    claim_id: claim_id.to_string(),
                }
            };
            self.record(session_id, payload)?;
            if selected {
                s.selected.insert(claim_id.to_string());
            } else {
                s.selected.remove(claim_id);
            }
        }
        Ok(SelectionState {
            selected: s.selected.iter().cloned().collect(),
            changed,
        })
    }

    pub fn finalize(&self, session_id: &str, claim_ids: &[String]) -> Result<FinalizeResponse, ApiError> {
        let session = self.session(session_id)?;
        let mut s = lock(&session);
        if s.final_ids.is_some() {
            return Err(ApiError::Conflict(format!("session {session_id} is already finalized")));
        }
        if claim_ids.len() != FINAL_SELECTION_SIZE {
            return Err(ApiError::bad_request(format!(
                "expected {FINAL_SELECTION_SIZE} claim ids, got {}",
                claim_ids.len()
            )));
        }
        if claim_ids.iter().collect::<BTreeSet<_>>().len() != claim_ids.len() {
            return Err(ApiError::bad_request("duplicate claim id"));
        }
        if let Some(id) = claim_ids.iter().find(|id| !s.selected.contains(*id)) {
            return Err(ApiError::bad_request(format!("claim {id} is not selected")));
        }
        self.record(
            session_id,
            EventPayload::FinalSelection {
                claim_ids: claim_ids.to_vec(),
            },
        )?;
        s.final_ids = Some(claim_ids.to_vec());
        drop(s);
        Ok(FinalizeResponse {
            claim_ids: claim_ids.to_vec(),
            metrics: metrics(&self.events(session_id)?),
        })
    }

    pub fn events(&self, session_id: &str) -> Result<Vec<SessionEvent>, ApiError> {
        self.session(session_id)?;
        Ok(lock(&self.events).events(session_id).to_vec())
    }

    /// The session's events, one JSON record per line.
    pub fn export_events(&self, session_id: &str) -> Result<Vec<u8>, ApiError> {
        let events = self.events(session_id)?;
        let mut out = Vec::new();
        export_events(&events, &mut out).map_err(internal)?;
        Ok(out)
    }

    pub fn metrics(&self, session_id: &str) -> Result<MetricsReport, ApiError> {
        let events = self.events(session_id)?;
        Ok(MetricsReport {
            overall: metrics(&events),
            phases: metrics_by_phase(&events),
        })
    }

    pub fn step_series_csv(&self, session_id: &str) -> Result<String, ApiError> {
        let session = self.session(session_id)?;
        let mode = lock(&session).mode;
        let events = self.events(session_id)?;
        Ok(step_series(&events, &mode.base_facets()).to_csv())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use claimtriage::clock::TickClock;
    use claimtriage::embed::HashingEmbedder;
    use claimtriage::llm::MockProvider;
    use claimtriage::Claim;

    fn engine() -> Engine {
        let store = ClaimStore::from_claims(
            (0..6).map(|i| Claim::new(format!("c{i}"), format!("claim number {i} about deaths"))),
        )
        .unwrap();
        let presets = FacetKey::all_presets()
            .into_iter()
            .enumerate()
            .map(|(j, k)| {
                (
                    k,
                    store
                        .ids()
                        .enumerate()
                        .map(|(i, id)| (id.to_string(), ((i + j) % 6) as f64 / 5.0))
                        .collect(),
                )
            })
            .collect();
        let clock: Arc<dyn Clock> = Arc::new(TickClock::new(0, 1));
        Engine::new(EngineParts {
            store,
            presets,
            embedder: Arc::new(HashingEmbedder::default()),
            provider: Arc::new(MockProvider::keyword("3", 0.9)),
            config: ServiceConfig::default(),
            clock: Arc::clone(&clock),
            events: EventLog::in_memory(clock),
        })
        .unwrap()
    }

    #[test]
    fn unidimensional_sessions_reject_multidimensional_keys() {
        let e = engine();
        let s = e.create_session(InterfaceMode::Unidimensional);
        let req = RankRequest {
            weights: [("verifiable".to_string(), 0.5)].into(),
            ..RankRequest::default()
        };
        assert_eq!(e.rank(&s.session_id, &req), Err(ApiError::unknown_facet("verifiable")));
        assert!(e.events(&s.session_id).unwrap().is_empty());
    }

    #[test]
    fn unchanged_weights_emit_nothing() {
        let e = engine();
        let s = e.create_session(InterfaceMode::Multidimensional);
        let req = RankRequest {
            weights: [("verifiable".to_string(), 0.104)].into(),
            ..RankRequest::default()
        };
        let out = e.rank(&s.session_id, &req).unwrap();
        assert_eq!(out.total, 6);
        assert!(e.events(&s.session_id).unwrap().is_empty());
    }

    #[test]
    fn busy_facet_blocks_ranking_until_published() {
        let e = engine();
        let s = e.create_session(InterfaceMode::Multidimensional);
        let (created, def, job) = e
            .create_facet(&s.session_id, "Numbers", "Mentions the digit three.")
            .unwrap();
        assert!(created.weights.iter().all(|(_, w)| w == DEFAULT_WEIGHT));
        assert!(matches!(
            e.rank(&s.session_id, &RankRequest::default()),
            Err(ApiError::Busy { .. })
        ));
        e.run_facet_job(&def, &job);
        let out = e.rank(&s.session_id, &RankRequest::default()).unwrap();
        assert!(out.claims[0].facet_scores.contains_key(&created.key));
        assert!(matches!(
            e.create_facet(&s.session_id, "numbers", "again"),
            Err(ApiError::Conflict(_))
        ));
    }

    #[test]
    fn bounded_provider_limits_in_flight_calls() {
        use std::sync::atomic::AtomicUsize;
        struct Slow {
            now: AtomicUsize,
            max: AtomicUsize,
        }
        impl CompletionProvider for Slow {
            fn name(&self) -> &str {
                "slow"
            }
            fn complete(&self, _: &str) -> Result<YesNoResponse, ProviderError> {
                let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
                self.max.fetch_max(n, Ordering::SeqCst);
                std::thread::sleep(std::time::Duration::from_millis(2));
                self.now.fetch_sub(1, Ordering::SeqCst);
                Ok(YesNoResponse::single("yes", 0.5))
            }
        }
        let slow = Arc::new(Slow {
            now: AtomicUsize::new(0),
            max: AtomicUsize::new(0),
        });
        let bounded = BoundedProvider::new(slow.clone(), 2);
        std::thread::scope(|scope| {
            for _ in 0..6 {
                scope.spawn(|| {
                    for _ in 0..5 {
                        bounded.complete("p").unwrap();
                    }
                });
            }
        });
        assert!(slow.max.load(Ordering::SeqCst) <= 2);
    }
}
