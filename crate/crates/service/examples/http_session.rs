//! Drive a full triage session through the HTTP API in process: rank, add a
//! custom facet, wait for it, select claims, finalize, and read the metrics.
//!
//! ```text
//! cargo run -p claimtriage-service --example http_session
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request};
use axum::Router;
use claimtriage::clock::SystemClock;
use claimtriage::embed::HashingEmbedder;
use claimtriage::llm::MockProvider;
use claimtriage::telemetry::EventLog;
use claimtriage::{Claim, ClaimStore, FacetKey, ScoreMap};
use claimtriage_service::{api, Engine, EngineParts, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const TEXTS: &[&str] = &[
    "Vaccine deaths doubled this year, a viral post says.",
    "Unemployment fell to 3 percent, the governor claimed.",
    "Hospital beds are full across the region.",
    "Crime rose 40 percent since 2019.",
    "The election was rigged, the campaign insisted.",
    "New funding for rural clinics was announced.",
    "Tap water contains poison, a forum post warned.",
    "Masks reduce transmission by half, a study found.",
];

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Value {
    let req = Request::builder()
        .method(&method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |v| Body::from(v.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value =
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    println!("{method} {uri} -> {status}");
    value
}

fn top(ranking: &Value, n: usize) -> Vec<String> {
    ranking["claims"]
        .as_array()
        .unwrap()
        .iter()
        .take(n)
        .map(|c| {
            format!(
                "{} {:.3}",
                c["claim_id"].as_str().unwrap(),
                c["score"].as_f64().unwrap()
            )
        })
        .collect()
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = ClaimStore::from_claims(TEXTS.iter().enumerate().map(|(i, t)| Claim::new(format!("c{i}"), *t)))?;
    // Stand-in classifier outputs; `claimtriage score` produces these from trained models.
    let presets: BTreeMap<FacetKey, ScoreMap> = FacetKey::all_presets()
        .into_iter()
        .enumerate()
        .map(|(k, key)| {
            let map = store
                .ids()
                .enumerate()
                .map(|(i, id)| (id.to_string(), ((i * 7 + k * 3) % 10) as f64 / 10.0))
                .collect();
            (key, map)
        })
        .collect();
    let clock = Arc::new(SystemClock);
    let engine = Engine::new(EngineParts {
        store,
        presets,
        embedder: Arc::new(HashingEmbedder::default()),
        provider: Arc::new(MockProvider::parse("percent\tyes\t0.9\n*\tno\t0.8\n")?),
        config: ServiceConfig::default(),
        clock: clock.clone(),
        events: EventLog::in_memory(clock),
    })?;
    let app = api::router(Arc::new(engine));

    let session = call(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({ "mode": "multidimensional" })),
    )
    .await;
    let sid = session["session_id"].as_str().unwrap().to_string();
    let rank = format!("/sessions/{sid}/rank");

    let r = call(
        &app,
        Method::POST,
        &rank,
        Some(json!({ "query": "vaccine deaths", "weights": { "query_similarity": 0.9 } })),
    )
    .await;
    println!("  top: {:?}", top(&r, 3));

    let facet = call(
        &app,
        Method::POST,
        &format!("/sessions/{sid}/facets"),
        Some(json!({
            "name": "Statistics",
            "context": "Claims made about numbers or percentages."
        })),
    )
    .await;
    let key = facet["key"].as_str().unwrap().to_string();
    loop {
        let status = call(&app, Method::GET, &format!("/sessions/{sid}/facets/{key}/status"), None).await;
        if status["status"] != "scoring" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }

    let r = call(
        &app,
        Method::POST,
        &rank,
        Some(json!({ "weights": { key.as_str(): 1.0 } })),
    )
    .await;
    let picks: Vec<String> = r["claims"]
        .as_array()
        .unwrap()
        .iter()
        .take(3)
        .map(|c| c["claim_id"].as_str().unwrap().to_string())
        .collect();
    println!("  top: {:?}", top(&r, 3));
    for id in &picks {
        call(
            &app,
            Method::POST,
            &format!("/sessions/{sid}/selection"),
            Some(json!({ "claim_id": id, "selected": true })),
        )
        .await;
    }
    call(
        &app,
        Method::POST,
        &format!("/sessions/{sid}/finalize"),
        Some(json!({ "claim_ids": picks })),
    )
    .await;

    let metrics = call(&app, Method::GET, &format!("/sessions/{sid}/metrics"), None).await;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    let series = call(&app, Method::GET, &format!("/sessions/{sid}/step-series"), None).await;
    print!("{}", series.as_str().unwrap_or_default());
    Ok(())
}
