#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use claimtriage::clock::{Clock, TickClock};
use claimtriage::embed::HashingEmbedder;
use claimtriage::llm::{CompletionProvider, MockProvider};
use claimtriage::telemetry::EventLog;
use claimtriage::{Claim, ClaimStore, FacetKey, ScoreMap, SocialMetrics};
use claimtriage_service::{api, Engine, EngineParts, ServiceConfig};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tower::ServiceExt;

const SUBJECTS: &[&str] = &[
    "The governor",
    "A viral post",
    "The health ministry",
    "City officials",
    "A senator",
    "The campaign",
    "A local paper",
    "The school board",
];
const CLAIMS: &[&str] = &[
    "said vaccine deaths doubled this year",
    "claimed unemployment fell to 3 percent",
    "reported that hospital beds are full",
    "stated crime rose 40 percent since 2019",
    "insisted the election was rigged",
    "announced new funding for rural clinics",
    "warned that tap water contains poison",
    "said masks reduce transmission by half",
    "claimed the bridge will close next week",
    "denied that taxes went up",
];

pub fn synthetic_store(n: usize, seed: u64) -> ClaimStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ClaimStore::from_claims((0..n).map(|i| {
        let s = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
        let c = CLAIMS[rng.random_range(0..CLAIMS.len())];
        Claim::new(format!("c{i:05}"), format!("{s} {c} (post {i})")).with_metrics(SocialMetrics {
            reposts: rng.random_range(0..500),
            quotes: rng.random_range(0..50),
            likes: rng.random_range(0..5000),
        })
    }))
    .unwrap()
}

pub fn preset_scores(store: &ClaimStore, seed: u64) -> BTreeMap<FacetKey, ScoreMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FacetKey::all_presets()
        .into_iter()
        .map(|k| {
            (
                k,
                store
                    .ids()
                    .map(|id| (id.to_string(), rng.random_range(0.0..1.0)))
                    .collect(),
            )
        })
        .collect()
}

pub const MOCK_RULES: &str = "percent\tyes\t0.9\ndeaths\tyes\t0.8\nrigged\tmaybe\t0.7\n*\tno\t0.9\n";

pub fn engine_with(store: ClaimStore, provider: Arc<dyn CompletionProvider>) -> Arc<Engine> {
    let presets = preset_scores(&store, 7);
    let clock: Arc<dyn Clock> = Arc::new(TickClock::new(1_700_000_000_000, 1_000));
    Arc::new(
        Engine::new(EngineParts {
            store,
            presets,
            embedder: Arc::new(HashingEmbedder::default()),
            provider,
            config: ServiceConfig::default(),
            clock: Arc::clone(&clock),
            events: EventLog::in_memory(clock),
        })
        .unwrap(),
    )
}

pub fn engine(n: usize) -> Arc<Engine> {
    engine_with(
        synthetic_store(n, 1),
        Arc::new(MockProvider::parse(MOCK_RULES).unwrap()),
    )
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let content_type = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string());
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        content_type,
        body,
    }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    call(app, Method::POST, uri, Some(body)).await
}

/// Polls a facet until its job leaves the scoring state.
pub async fn wait_ready(app: &Router, session: &str, key: &str) -> Value {
    for _ in 0..2_000 {
        let status = get(app, &format!("/sessions/{session}/facets/{key}/status"))
            .await
            .json();
        if status["status"] != "scoring" {
            return status;
        }
        tokio::time::sleep(std::time::Duration::from_millis(5)).await;
    }
    panic!("facet {key} never finished scoring");
}

pub fn router(engine: &Arc<Engine>) -> Router {
    api::router(Arc::clone(engine))
}
