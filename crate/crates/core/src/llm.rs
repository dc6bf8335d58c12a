//! User-authored facets scored by a completion model.
//!
//! A custom facet is a name plus a free-text description. Every claim is sent
//! to the provider through a fixed yes/no prompt and the answer's top token
//! log-probabilities are turned into a probability that the claim fits the
//! facet.

use std::collections::HashMap;
use std::env;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::facet::{FacetKey, FacetKind, ScoreMap};
use crate::rank::DEFAULT_WEIGHT;
use crate::store::{Claim, ClaimStore};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid facet: {0}")]
    InvalidFacet(String),
    #[error("unparseable response: {0}")]
    Unparseable(String),
    #[error("provider configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    /// Network or server-side failure; worth retrying.
    #[error("transport: {0}")]
    Transport(String),
    /// The provider answered but the answer cannot be used.
    #[error("protocol: {0}")]
    Protocol(String),
}

/// A rankable dimension and where its scores come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetDefinition {
    pub key: FacetKey,
    pub name: String,
    pub context: String,
    pub created_at_ms: u64,
    pub kind: FacetKind,
}

impl FacetDefinition {
    /// A user-authored facet; name and context must be non-blank.
    pub fn custom(name: &str, context: &str, created_at_ms: u64) -> Result<Self, LlmError> {
        let (name, context) = (name.trim(), context.trim());
        if name.is_empty() {
            return Err(LlmError::InvalidFacet("name is empty".into()));
        }
        if context.is_empty() {
            return Err(LlmError::InvalidFacet("context is empty".into()));
        }
        Ok(Self {
            key: FacetKey::custom_from_name(name),
            name: name.to_string(),
            context: context.to_string(),
            created_at_ms,
            kind: FacetKind::LlmCustom,
        })
    }

    pub fn preset(key: FacetKey) -> Self {
        Self {
            name: key.to_string(),
            key,
            context: String::new(),
            created_at_ms: 0,
            kind: FacetKind::Pretrained,
        }
    }
}

/// Emitted when a custom facet is created: every slider returns to `value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightsReset {
    pub value: f64,
}

/// Validates a new custom facet and returns it with the weight reset that
/// must accompany it.
pub fn create_facet(
    name: &str,
    context: &str,
    created_at_ms: u64,
) -> Result<(FacetDefinition, WeightsReset), LlmError> {
    Ok((
        FacetDefinition::custom(name, context, created_at_ms)?,
        WeightsReset { value: DEFAULT_WEIGHT },
    ))
}

pub const PROMPT_TEMPLATE: &str =
    "Based on the new [NAME] and [CONTEXT]. Identify whether the [INPUT] follows the [CONTEXT] and output yes or no.";

/// Instantiates [`PROMPT_TEMPLATE`] in one left-to-right pass: placeholders
/// appearing inside substituted text are left alone.
pub fn build_prompt(facet: &FacetDefinition, claim: &Claim) -> Result<String, LlmError> {
    if facet.kind != FacetKind::LlmCustom {
        return Err(LlmError::InvalidFacet(format!("{} is not a custom facet", facet.key)));
    }
    if facet.context.trim().is_empty() {
        return Err(LlmError::InvalidFacet("context is empty".into()));
    }
    let mut out = String::with_capacity(PROMPT_TEMPLATE.len() + facet.context.len() * 2 + claim.text.len());
    let mut rest = PROMPT_TEMPLATE;
    while let Some(start) = rest.find('[') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let (value, len) = if tail.starts_with("[NAME]") {
            (facet.name.as_str(), "[NAME]".len())
        } else if tail.starts_with("[CONTEXT]") {
            (facet.context.as_str(), "[CONTEXT]".len())
        } else if tail.starts_with("[INPUT]") {
            (claim.text.as_str(), "[INPUT]".len())
        } else {
            ("[", 1)
        };
        out.push_str(value);
        rest = &tail[len..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

/// The top candidate tokens for the first generated position.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct YesNoResponse {
    pub top_tokens: Vec<TokenLogprob>,
}

impl YesNoResponse {
    pub fn single(token: &str, probability: f64) -> Self {
        Self {
            top_tokens: vec![TokenLogprob {
                token: token.to_string(),
                logprob: probability.ln(),
            }],
        }
    }
}

/// Probability assigned to a token absent from the top list.
pub const MISSING_TOKEN_FLOOR: f64 = 1e-6;

fn fold_token(token: &str) -> String {
    token
        .trim()
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// `(p_yes, p_no)` normalized over the two answers; they sum to 1.
///
/// Tokens are case-folded with punctuation and whitespace stripped, so
/// `" Yes."` counts as `yes`; several variants of the same answer add up.
pub fn yes_no_probabilities(resp: &YesNoResponse) -> Result<(f64, f64), LlmError> {
    let (mut yes, mut no) = (None::<f64>, None::<f64>);
    for t in &resp.top_tokens {
        let p = t.logprob.exp();
        match fold_token(&t.token).as_str() {
            "yes" => *yes.get_or_insert(0.0) += p,
            "no" => *no.get_or_insert(0.0) += p,
            _ => {}
        }
    }
    if yes.is_none() && no.is_none() {
        let seen: Vec<&str> = resp.top_tokens.iter().map(|t| t.token.as_str()).collect();
        return Err(LlmError::Unparseable(format!("no yes/no token among {seen:?}")));
    }
    let yes = yes.unwrap_or(MISSING_TOKEN_FLOOR);
    let no = no.unwrap_or(MISSING_TOKEN_FLOOR);
    let p_yes = yes / (yes + no);
    Ok((p_yes, 1.0 - p_yes))
}

pub fn yes_probability(resp: &YesNoResponse) -> Result<f64, LlmError> {
    yes_no_probabilities(resp).map(|(y, _)| y)
}

/// Completion backend returning first-token log-probabilities.
///
/// Implementations are called with temperature 0 semantics and must be safe
/// to call from several threads.
pub trait CompletionProvider: Send + Sync {
    fn name(&self) -> &str;

    fn supports_top_logprobs(&self) -> bool {
        true
    }

    fn complete(&self, prompt: &str) -> Result<YesNoResponse, ProviderError>;
}

/// One line of a mock rules file.
#[derive(Debug, Clone, PartialEq)]
pub struct MockRule {
    pub substring: String,
    pub token: String,
    pub probability: f64,
}

/// Deterministic rule-based provider for tests and offline runs.
///
/// Rules file lines are `<substring>\t<token>\t<probability>`; `<token>` is
/// normally `yes` or `no`. The first rule whose substring occurs in the claim
/// part of the prompt (case-insensitive) answers; the last line is the
/// fallback and matches everything. The answer is a single token with log-probability `ln(p)`.
#[derive(Debug, Clone)]
pub struct MockProvider {
    rules: Vec<MockRule>,
}

impl MockProvider {
    pub fn new(rules: Vec<MockRule>) -> Result<Self, LlmError> {
        if rules.is_empty() {
            return Err(LlmError::Config("mock provider needs at least one rule".into()));
        }
        if let Some(r) = rules.iter().find(|r| !(r.probability > 0.0 && r.probability <= 1.0)) {
            return Err(LlmError::Config(format!(
                "probability {} for {:?} must be in (0, 1]",
                r.probability, r.substring
            )));
        }
        Ok(Self { rules })
    }

    pub fn parse(rules: &str) -> Result<Self, LlmError> {
        let mut parsed = Vec::new();
        for (i, line) in rules.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [substring, token, probability] = fields[..] else {
                return Err(LlmError::Config(format!(
                    "rules line {}: expected 3 tab-separated fields",
                    i + 1
                )));
            };
            let probability = probability
                .trim()
                .parse()
                .map_err(|e| LlmError::Config(format!("rules line {}: {e}", i + 1)))?;
            parsed.push(MockRule {
                substring: substring.to_string(),
                token: token.trim().to_string(),
                probability,
            });
        }
        Self::new(parsed)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Convenience: `yes@p` when the prompt contains `substring`, else `no@p`.
    pub fn keyword(substring: &str, probability: f64) -> Self {
        Self::new(vec![
            MockRule {
                substring: substring.to_string(),
                token: "yes".into(),
                probability,
            },
            MockRule {
                substring: "*".into(),
                token: "no".into(),
                probability,
            },
        ])
        .expect("valid keyword rules")
    }
}

/// The `[INPUT]` slot of a prompt built from [`PROMPT_TEMPLATE`], so that the
/// facet context cannot trigger rules. Other text is returned whole.
fn prompt_input(prompt: &str) -> &str {
    const START: &str = ". Identify whether the ";
    const END: &str = " follows the ";
    match prompt.find(START) {
        Some(i) => {
            let rest = &prompt[i + START.len()..];
            rest.rfind(END).map_or(rest, |j| &rest[..j])
        }
        None => prompt,
    }
}

impl CompletionProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str) -> Result<YesNoResponse, ProviderError> {
        let haystack = prompt_input(prompt).to_lowercase();
        let (fallback, rules) = self.rules.split_last().expect("non-empty rules");
        let rule = rules
            .iter()
            .find(|r| haystack.contains(&r.substring.to_lowercase()))
            .unwrap_or(fallback);
        Ok(YesNoResponse::single(&rule.token, rule.probability))
    }
}

/// Chat-completions endpoint that returns `top_logprobs` (OpenAI-compatible).
pub struct HttpCompletionProvider {
    endpoint: String,
    api_key: Option<String>,
    model: String,
    top_logprobs: u32,
    agent: ureq::Agent,
}

pub const ENV_ENDPOINT: &str = "CLAIMTRIAGE_LLM_ENDPOINT";
pub const ENV_API_KEY_VAR: &str = "CLAIMTRIAGE_LLM_API_KEY_VAR";
pub const ENV_MODEL: &str = "CLAIMTRIAGE_LLM_MODEL";
pub const ENV_MOCK_RULES: &str = "CLAIMTRIAGE_LLM_MOCK_RULES";

impl HttpCompletionProvider {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, model: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            api_key,
            model: model.into(),
            top_logprobs: 5,
            agent,
        }
    }

    /// Reads the endpoint, the name of the variable holding the API key, and
    /// the model identifier from the environment.
    pub fn from_env() -> Result<Self, LlmError> {
        let endpoint = env::var(ENV_ENDPOINT).map_err(|_| LlmError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let key_var = env::var(ENV_API_KEY_VAR).unwrap_or_else(|_| "OPENAI_API_KEY".into());
        let model = env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-3.5-turbo".into());
        Ok(Self::new(endpoint, env::var(key_var).ok(), model))
    }

    fn request_body(&self, prompt: &str) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "max_tokens": 1,
            "logprobs": true,
            "top_logprobs": self.top_logprobs,
        })
    }
}

/// Extracts the first position's `top_logprobs` from a chat-completions
/// response body.
pub fn parse_chat_logprobs(body: &serde_json::Value) -> Result<YesNoResponse, ProviderError> {
    let first = body
        .pointer("/choices/0/logprobs/content/0")
        .ok_or_else(|| ProviderError::Protocol("response has no choices[0].logprobs.content[0]".into()))?;
    let mut top_tokens = Vec::new();
    if let Some(list) = first.get("top_logprobs").and_then(|v| v.as_array()) {
        for entry in list {
            if let (Some(token), Some(logprob)) = (
                entry.get("token").and_then(|t| t.as_str()),
                entry.get("logprob").and_then(|l| l.as_f64()),
            ) {
                top_tokens.push(TokenLogprob {
                    token: token.to_string(),
                    logprob,
                });
            }
        }
    }
    if top_tokens.is_empty() {
        // Fall back to the sampled token itself.
        if let (Some(token), Some(logprob)) = (
            first.get("token").and_then(|t| t.as_str()),
            first.get("logprob").and_then(|l| l.as_f64()),
        ) {
            top_tokens.push(TokenLogprob {
                token: token.to_string(),
                logprob,
            });
        }
    }
    if top_tokens.is_empty() {
        return Err(ProviderError::Protocol("no logprobs in response".into()));
    }
    Ok(YesNoResponse { top_tokens })
}

impl CompletionProvider for HttpCompletionProvider {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &str) -> Result<YesNoResponse, ProviderError> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(self.request_body(prompt))
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(ProviderError::Transport(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err(ProviderError::Protocol(format!("HTTP {status}")));
        }
        let body: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Protocol(e.to_string()))?;
        parse_chat_logprobs(&body)
    }
}

/// Builds the provider selected by the environment: the mock when
/// `CLAIMTRIAGE_LLM_MOCK_RULES` names a rules file, otherwise the HTTP client.
pub fn provider_from_env() -> Result<Arc<dyn CompletionProvider>, LlmError> {
    if let Ok(path) = env::var(ENV_MOCK_RULES) {
        return Ok(Arc::new(MockProvider::load(path)?));
    }
    Ok(Arc::new(HttpCompletionProvider::from_env()?))
}

/// Memoizes successful responses by prompt. Since the prompt is a function of
/// the facet definition and the claim text, entries stay valid until the
/// facet is edited.
pub struct CachingProvider {
    inner: Arc<dyn CompletionProvider>,
    cache: Mutex<HashMap<String, YesNoResponse>>,
}

impl CachingProvider {
    pub fn new(inner: Arc<dyn CompletionProvider>) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

impl CompletionProvider for CachingProvider {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn supports_top_logprobs(&self) -> bool {
        self.inner.supports_top_logprobs()
    }

    fn complete(&self, prompt: &str) -> Result<YesNoResponse, ProviderError> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(prompt) {
            return Ok(hit.clone());
        }
        let resp = self.inner.complete(prompt)?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert(prompt.to_string(), resp.clone());
        Ok(resp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Delay before retry `k` (0-based) is `base_delay * 2^k`.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringOptions {
    /// Maximum provider calls in flight.
    pub concurrency_limit: usize,
    pub retry: RetryPolicy,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self {
            concurrency_limit: 4,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum FlagReason {
    Unparseable,
    ProviderError(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedClaim {
    pub claim_id: String,
    #[serde(flatten)]
    pub reason: FlagReason,
}

/// Score assigned to claims whose response could not be used.
pub const NEUTRAL_SCORE: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FacetScores {
    pub scores: ScoreMap,
    /// Claims scored [`NEUTRAL_SCORE`] because of a bad or missing response,
    /// in corpus order.
    pub flagged: Vec<FlaggedClaim>,
}

fn complete_with_retry(
    provider: &dyn CompletionProvider,
    prompt: &str,
    retry: RetryPolicy,
) -> Result<YesNoResponse, ProviderError> {
    let mut attempt = 0;
    loop {
        match provider.complete(prompt) {
            Err(ProviderError::Transport(_)) if attempt < retry.max_retries => {
                thread::sleep(retry.base_delay * 2u32.pow(attempt));
                attempt += 1;
            }
            other => return other,
        }
    }
}

type Scored = (f64, Option<FlagReason>);

fn score_one(
    facet: &FacetDefinition,
    claim: &Claim,
    provider: &dyn CompletionProvider,
    retry: RetryPolicy,
) -> Result<Scored, LlmError> {
    let prompt = build_prompt(facet, claim)?;
    Ok(match complete_with_retry(provider, &prompt, retry) {
        Ok(resp) => match yes_probability(&resp) {
            Ok(p) => (p, None),
            Err(_) => (NEUTRAL_SCORE, Some(FlagReason::Unparseable)),
        },
        Err(e) => (NEUTRAL_SCORE, Some(FlagReason::ProviderError(e.to_string()))),
    })
}

/// Scores every claim in `store` against a custom facet.
///
/// At most `concurrency_limit` provider calls run at once. `progress` is
/// called once per finished claim with strictly increasing `done` counts.
/// The returned map is complete; nothing is published before every claim has
/// been scored.
pub fn score_facet(
    facet: &FacetDefinition,
    store: &ClaimStore,
    provider: &dyn CompletionProvider,
    options: &ScoringOptions,
    progress: &(dyn Fn(Progress) + Sync),
) -> Result<FacetScores, LlmError> {
    if facet.kind != FacetKind::LlmCustom {
        return Err(LlmError::InvalidFacet(format!("{} is not a custom facet", facet.key)));
    }
    if facet.context.trim().is_empty() {
        return Err(LlmError::InvalidFacet("context is empty".into()));
    }
    let claims: Vec<&Claim> = store.iter().collect();
    let total = claims.len();
    let slots: Mutex<Vec<Option<Scored>>> = Mutex::new(vec![None; total]);
    let next = AtomicUsize::new(0);
    let done = Mutex::new(0usize);
    let workers = options.concurrency_limit.max(1).min(total.max(1));

    thread::scope(|scope| -> Result<(), LlmError> {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| -> Result<(), LlmError> {
                    loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= total {
                            return Ok(());
                        }
                        let result = score_one(facet, claims[i], provider, options.retry)?;
                        slots.lock().expect("slots lock")[i] = Some(result);
                        let mut d = done.lock().expect("progress lock");
                        *d += 1;
                        progress(Progress { done: *d, total });
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().expect("scoring worker panicked")?;
        }
        Ok(())
    })?;

    let mut out = FacetScores::default();
    for (claim, slot) in claims.iter().zip(slots.into_inner().expect("slots lock")) {
        let (score, flag) = slot.expect("every claim scored");
        out.scores.insert(claim.id.clone(), score);
        if let Some(reason) = flag {
            out.flagged.push(FlaggedClaim {
                claim_id: claim.id.clone(),
                reason,
            });
        }
    }
    Ok(out)
}
