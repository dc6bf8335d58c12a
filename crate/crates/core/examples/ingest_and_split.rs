//! Ingest a JSONL corpus with a few bad lines, then make a 2:1 train/test split.
//!
//! ```text
//! cargo run -p claimtriage --example ingest_and_split
//! ```

use claimtriage::store::split_corpus;
use claimtriage::ClaimStore;

const INPUT: &str = r#"{"id": "a1", "text": "Unemployment fell to 3.4 percent last month.", "gold_labels": {"verifiable": 1}}
{"id": "a2", "text": "Nobody trusts the new mayor.", "gold_labels": {"verifiable": 0}}
{"id": "a3", "text": "The bridge cost twice its original budget.", "gold_labels": {"verifiable": 1}}
not json at all
{"id": "a4"}
{"id": "a2", "text": "A duplicate id is rejected."}
{"id": "a5", "text": "Crime doubled in the city since 2019.", "gold_labels": {"verifiable": 1}}
{"id": "a6", "text": "This is the best summer ever.", "gold_labels": {"verifiable": 0}}
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut store = ClaimStore::new();
    let report = store.ingest_jsonl(INPUT.as_bytes())?;
    println!("accepted {} claims", report.accepted);
    for err in &report.errors {
        println!("  rejected {err}");
    }

    let split = split_corpus(&store, (2, 1), 42)?;
    println!("train: {:?}", split.train_ids);
    println!("test:  {:?}", split.test_ids);

    let dir = std::env::temp_dir().join("claimtriage-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("claims.jsonl");
    store.save(&path)?;
    let reloaded = ClaimStore::load(&path)?;
    assert_eq!(reloaded.len(), store.len());
    println!("saved and reloaded {} claims from {}", reloaded.len(), path.display());
    Ok(())
}
