mod common;

use std::sync::{Arc, Condvar, Mutex};

use axum::http::StatusCode;
use claimtriage::llm::{CompletionProvider, ProviderError, YesNoResponse};
use common::*;
use serde_json::{json, Value};

async fn new_session(app: &axum::Router, mode: &str) -> String {
    let r = post(app, "/sessions", json!({ "mode": mode })).await;
    assert_eq!(r.status, StatusCode::CREATED);
    r.json()["session_id"].as_str().unwrap().to_string()
}

fn ids(v: &Value) -> Vec<String> {
    v["claims"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["claim_id"].as_str().unwrap().to_string())
        .collect()
}

async fn event_kinds(app: &axum::Router, s: &str) -> Vec<String> {
    get(app, &format!("/sessions/{s}/events"))
        .await
        .text()
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["kind"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect()
}

#[tokio::test]
async fn health_and_claim_preview() {
    let app = router(&engine(30));
    let h = get(&app, "/health").await;
    assert_eq!(h.status, StatusCode::OK);
    assert_eq!(h.json()["claims"], 30);
    let c = get(&app, "/claims/c00003").await;
    assert_eq!(c.status, StatusCode::OK);
    let body = c.json();
    assert!(body["metrics"]["likes"].is_u64());
    assert!(body["metrics"]["reposts"].is_u64() && body["metrics"]["quotes"].is_u64());
    assert_eq!(get(&app, "/claims/nope").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn sessions_expose_the_mode_facet_set() {
    let app = router(&engine(10));
    let uni = post(&app, "/sessions", json!({ "mode": "unidimensional" }))
        .await
        .json();
    assert_eq!(uni["facets"], json!(["needs_verification", "query_similarity"]));
    let multi = post(&app, "/sessions", json!({ "mode": "multidimensional" }))
        .await
        .json();
    assert_eq!(multi["facets"].as_array().unwrap().len(), 5);
    assert_ne!(uni["session_id"], multi["session_id"]);
    assert!(multi["weights"].as_object().unwrap().values().all(|w| w == 0.1));
    assert!(post(&app, "/sessions", json!({ "mode": "tri" }))
        .await
        .status
        .is_client_error());
}

#[tokio::test]
async fn fresh_rank_returns_a_deterministic_full_ranking() {
    let app = router(&engine(120));
    let s = new_session(&app, "multidimensional").await;
    let a = post(&app, &format!("/sessions/{s}/rank"), json!({})).await.json();
    assert_eq!(a["total"], 120);
    assert_eq!(a["claims"].as_array().unwrap().len(), 50);
    assert_eq!(a["mode"], "squared");
    let b = post(&app, &format!("/sessions/{s}/rank"), json!({})).await.json();
    assert_eq!(a, b);
    let page = post(
        &app,
        &format!("/sessions/{s}/rank"),
        json!({ "offset": 100, "limit": 50 }),
    )
    .await
    .json();
    assert_eq!(page["claims"].as_array().unwrap().len(), 20);
    assert!(get(&app, &format!("/sessions/{s}/events")).await.body.is_empty());
}

#[tokio::test]
async fn weight_change_reorders_and_is_logged() {
    let app = router(&engine(80));
    let s = new_session(&app, "multidimensional").await;
    let before = post(&app, &format!("/sessions/{s}/rank"), json!({})).await.json();
    let after = post(
        &app,
        &format!("/sessions/{s}/rank"),
        json!({ "weights": { "likely_false": 1.0 } }),
    )
    .await
    .json();
    assert_ne!(ids(&before), ids(&after));
    let top = &after["claims"][0];
    let best = after["claims"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["facet_scores"]["likely_false"].as_f64().unwrap())
        .fold(0.0, f64::max);
    assert_eq!(top["facet_scores"]["likely_false"].as_f64().unwrap(), best);
    assert_eq!(event_kinds(&app, &s).await, vec!["weight_changed"]);
    let line = get(&app, &format!("/sessions/{s}/events")).await.text();
    let ev: Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(
        (ev["facet"].as_str(), ev["old"].as_f64(), ev["new"].as_f64()),
        (Some("likely_false"), Some(0.1), Some(1.0))
    );
}

#[tokio::test]
async fn query_moves_matching_claims_up() {
    let app = router(&engine(60));
    let s = new_session(&app, "unidimensional").await;
    let r = post(
        &app,
        &format!("/sessions/{s}/rank"),
        json!({ "query": "vaccine deaths doubled", "weights": { "query_similarity": 1.0, "needs_verification": 0.0 } }),
    )
    .await
    .json();
    assert!(r["claims"][0]["text"].as_str().unwrap().contains("vaccine deaths"));
    assert_eq!(
        event_kinds(&app, &s).await,
        vec!["query_submitted", "weight_changed", "weight_changed"]
    );
    // Same query again: nothing new to log.
    post(
        &app,
        &format!("/sessions/{s}/rank"),
        json!({ "query": "vaccine deaths doubled" }),
    )
    .await;
    assert_eq!(event_kinds(&app, &s).await.len(), 3);
}

#[tokio::test]
async fn unknown_or_out_of_mode_keys_are_rejected_by_name() {
    let app = router(&engine(10));
    let s = new_session(&app, "unidimensional").await;
    let r = post(
        &app,
        &format!("/sessions/{s}/rank"),
        json!({ "weights": { "verifiable": 0.5 } }),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["key"], "verifiable");
    let r = post(
        &app,
        &format!("/sessions/{s}/rank"),
        json!({ "weights": { "needs_verification": 1.5 } }),
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(
        post(&app, "/sessions/zzz/rank", json!({})).await.status,
        StatusCode::NOT_FOUND
    );
    assert!(event_kinds(&app, &s).await.is_empty());
}

/// Blocks every completion until opened.
struct Gate {
    open: Mutex<bool>,
    cv: Condvar,
}

impl Gate {
    fn release(&self) {
        *self.open.lock().unwrap() = true;
        self.cv.notify_all();
    }
}

impl CompletionProvider for Gate {
    fn name(&self) -> &str {
        "gate"
    }

    fn complete(&self, _: &str) -> Result<YesNoResponse, ProviderError> {
        let mut open = self.open.lock().unwrap();
        while !*open {
            open = self.cv.wait(open).unwrap();
        }
        Ok(YesNoResponse::single("yes", 0.75))
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn custom_facet_lifecycle() {
    let gate = Arc::new(Gate {
        open: Mutex::new(false),
        cv: Condvar::new(),
    });
    let app = router(&engine_with(synthetic_store(40, 3), gate.clone()));
    let s = new_session(&app, "multidimensional").await;
    post(
        &app,
        &format!("/sessions/{s}/rank"),
        json!({ "weights": { "verifiable": 0.9 } }),
    )
    .await;

    let empty = post(
        &app,
        &format!("/sessions/{s}/facets"),
        json!({ "name": "Statistics", "context": " " }),
    )
    .await;
    assert_eq!(empty.status, StatusCode::BAD_REQUEST);

    let created = post(
        &app,
        &format!("/sessions/{s}/facets"),
        json!({ "name": "Statistics", "context": "Claims made about numbers or percentages." }),
    )
    .await;
    assert_eq!(created.status, StatusCode::ACCEPTED);
    let body = created.json();
    let key = body["key"].as_str().unwrap().to_string();
    assert_eq!(key, "llm_statistics");
    assert_eq!(body["job"]["status"], "scoring");
    assert_eq!(body["weights"].as_object().unwrap().len(), 6);
    assert!(body["weights"].as_object().unwrap().values().all(|w| w == 0.1));

    let busy = post(
        &app,
        &format!("/sessions/{s}/rank"),
        json!({ "weights": { "verifiable": 0.2 } }),
    )
    .await;
    assert_eq!(busy.status, StatusCode::CONFLICT);
    let b = busy.json();
    assert_eq!(
        (b["busy"].as_bool(), b["facet"].as_str()),
        (Some(true), Some("llm_statistics"))
    );
    assert_eq!(b["progress"]["total"], 40);

    let dup = post(
        &app,
        &format!("/sessions/{s}/facets"),
        json!({ "name": "statistics", "context": "x" }),
    )
    .await;
    assert_eq!(dup.status, StatusCode::CONFLICT);

    gate.release();
    let status = wait_ready(&app, &s, &key).await;
    assert_eq!(status["status"], "ready");
    assert_eq!(status["total"], 40);

    let r = post(
        &app,
        &format!("/sessions/{s}/rank"),
        json!({ "weights": { "llm_statistics": 1.0 } }),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    let p = r.json()["claims"][0]["facet_scores"]["llm_statistics"]
        .as_f64()
        .unwrap();
    assert!((p - 0.75 / (0.75 + 1e-6)).abs() < 1e-12);

    assert_eq!(
        event_kinds(&app, &s).await,
        vec!["weight_changed", "facet_created", "weight_changed"]
    );
    let csv = get(&app, &format!("/sessions/{s}/step-series")).await;
    assert_eq!(csv.content_type.as_deref(), Some("text/csv"));
    let text = csv.text();
    assert!(text.starts_with("seq,facet,weight\n"));
    assert!(text.contains("\n1,verifiable,0.9\n"));
    assert!(text.contains("\n2,llm_statistics,0.1\n") && text.contains("\n2,verifiable,0.1\n"));
    assert!(text.contains("\n3,llm_statistics,1\n"));
    assert_eq!(
        get(&app, &format!("/sessions/{s}/facets/verifiable/status"))
            .await
            .json()["status"],
        "ready"
    );
    assert_eq!(
        get(&app, &format!("/sessions/{s}/facets/bogus/status")).await.status,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn selection_and_finalize_protocol() {
    let app = router(&engine(20));
    let s = new_session(&app, "multidimensional").await;
    let sel = |id: &str, on: bool| json!({ "claim_id": id, "selected": on });
    let uri = format!("/sessions/{s}/selection");

    let r = post(&app, &uri, sel("c00001", true)).await.json();
    assert_eq!(r["selected"], json!(["c00001"]));
    let r = post(&app, &uri, sel("c00001", false)).await.json();
    assert_eq!(r["selected"], json!([]));
    assert_eq!(event_kinds(&app, &s).await, vec!["claim_selected", "claim_unselected"]);
    assert_eq!(
        post(&app, &uri, sel("missing", true)).await.status,
        StatusCode::NOT_FOUND
    );

    for id in ["c00001", "c00002", "c00003", "c00004", "c00005"] {
        post(&app, &uri, sel(id, true)).await;
    }
    let fin = format!("/sessions/{s}/finalize");
    assert_eq!(
        post(&app, &fin, json!({ "claim_ids": ["c00001", "c00002"] }))
            .await
            .status,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        post(&app, &fin, json!({ "claim_ids": ["c00001", "c00002", "c00009"] }))
            .await
            .status,
        StatusCode::BAD_REQUEST
    );
    let ok = post(&app, &fin, json!({ "claim_ids": ["c00001", "c00003", "c00005"] })).await;
    assert_eq!(ok.status, StatusCode::OK);
    assert_eq!(ok.json()["metrics"]["conversion_rate"], 0.6);
    assert_eq!(
        post(&app, &fin, json!({ "claim_ids": ["c00001", "c00003", "c00005"] }))
            .await
            .status,
        StatusCode::CONFLICT
    );

    let m = get(&app, &format!("/sessions/{s}/metrics")).await.json();
    assert_eq!(m["overall"]["n_selected_claims"], 5);
    assert_eq!(m["overall"]["n_final_claims_found_checkworthy"], 3);
    assert_eq!(m["phases"]["standard"]["conversion_rate"], 0.6);
    assert_eq!(m["phases"]["customized"]["conversion_rate"], Value::Null);

    let events = get(&app, &format!("/sessions/{s}/events")).await;
    assert_eq!(events.content_type.as_deref(), Some("application/x-ndjson"));
    assert_eq!(events.text().lines().count(), 8);
}

#[tokio::test]
async fn each_mutating_call_adds_exactly_one_event() {
    let app = router(&engine(20));
    let s = new_session(&app, "multidimensional").await;
    let calls = [
        ("rank", json!({ "weights": { "verifiable": 0.3 } })),
        ("rank", json!({ "query": "taxes" })),
        ("selection", json!({ "claim_id": "c00002", "selected": true })),
        (
            "facets",
            json!({ "name": "Health", "context": "Claims about hospitals or disease." }),
        ),
        ("selection", json!({ "claim_id": "c00002", "selected": false })),
    ];
    let mut expected = 0;
    for (path, body) in calls {
        let r = post(&app, &format!("/sessions/{s}/{path}"), body).await;
        assert!(r.status.is_success(), "{path}: {}", r.text());
        expected += 1;
        assert_eq!(event_kinds(&app, &s).await.len(), expected);
    }
}
