use std::io::Write;

use claimtriage::embed::{EmbeddingIndex, HashingEmbedder};
use claimtriage::store::{split_corpus, train_size, ClaimStore, RecordErrorKind};

const JSONL: &str = r#"{"id":"a1","text":"Vaccines caused 500 deaths last month","metrics":{"reposts":12,"quotes":3,"likes":40},"gold_labels":{"verifiable":1}}
{"id":"a2","text":"The mayor loves dogs","gold_labels":{"verifiable":0}}
not json at all
{"id":"a3","text":"Unemployment hit 9 percent in March","gold_labels":{"verifiable":1}}
{"id":"a2","text":"duplicate id"}
{"id":"a4"}

{"id":"a5","text":"Hospital beds are full across the state","gold_labels":{"verifiable":0}}
{"id":"a6","text":"Vaccine deaths were underreported, officials say"}
"#;

#[test]
fn ingest_reports_bad_lines_and_keeps_the_rest() {
    let mut store = ClaimStore::new();
    let report = store.ingest_jsonl(JSONL.as_bytes()).unwrap();
    assert_eq!(report.accepted, 5);
    assert_eq!(report.duplicate_ids(), vec!["a2"]);
    let kinds: Vec<(usize, &RecordErrorKind)> = report.errors.iter().map(|e| (e.line, &e.kind)).collect();
    assert!(matches!(kinds[0], (3, RecordErrorKind::Malformed(_))));
    assert!(matches!(kinds[2], (6, RecordErrorKind::MissingField("text"))));
    assert_eq!(store.get("a1").unwrap().metrics.likes, 40);
}

#[test]
fn save_load_and_split() {
    let mut store = ClaimStore::new();
    store.ingest_jsonl(JSONL.as_bytes()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("claims.jsonl");
    store.save(&path).unwrap();
    let loaded = ClaimStore::load(&path).unwrap();
    assert_eq!(loaded.ids().collect::<Vec<_>>(), store.ids().collect::<Vec<_>>());

    let split = split_corpus(&loaded, (2, 1), 7).unwrap();
    assert_eq!(split.train_ids.len(), train_size(4, (2, 1)));
    assert!(split.train_ids.is_disjoint(&split.test_ids));
    assert!(!split.train_ids.contains("a6") && !split.test_ids.contains("a6"));
    assert_eq!(split, split_corpus(&loaded, (2, 1), 7).unwrap());

    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    writeln!(f, "{{broken").unwrap();
    assert!(ClaimStore::load(&path).is_err());
}

#[test]
fn query_similarity_prefers_related_claims() {
    let mut store = ClaimStore::new();
    store.ingest_jsonl(JSONL.as_bytes()).unwrap();
    let embedder = HashingEmbedder::default();
    let index = EmbeddingIndex::build(&store, &embedder).unwrap();
    let scores = index.query_similarity_scores(&embedder, "vaccine deaths").unwrap();
    assert_eq!(scores.len(), store.len());
    assert!(scores.values().all(|s| (0.0..=1.0).contains(s)));
    assert!(scores["a6"] > scores["a2"]);
    assert!(scores["a1"] > scores["a5"]);
    let empty = index.query_similarity_scores(&embedder, "   ").unwrap();
    assert!(empty.values().all(|s| *s == 0.0));
    assert!(index.query_similarity_scores(&HashingEmbedder::new(64), "x").is_err());
}
