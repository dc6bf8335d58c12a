//! Score a corpus against free-text queries with the built-in hashing embedder.

use claimtriage::embed::{EmbeddingIndex, HashingEmbedder};
use claimtriage::{Claim, ClaimStore};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = ClaimStore::from_claims([
        Claim::new("c1", "Hospital beds in the region are almost full."),
        Claim::new("c2", "The vaccine caused thousands of deaths, officials hid it."),
        Claim::new("c3", "Gas prices went up 40 cents in a single week."),
        Claim::new("c4", "Vaccination rates among children dropped last year."),
        Claim::new("c5", "The stadium will be finished by next spring."),
    ])?;
    let embedder = HashingEmbedder::new(256);
    let index = EmbeddingIndex::build(&store, &embedder)?;

    for query in ["vaccine deaths", "hospital capacity", ""] {
        let scores = index.query_similarity_scores(&embedder, query)?;
        let mut ranked: Vec<_> = scores.iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)));
        println!("query {query:?}");
        for (id, s) in ranked.iter().take(3) {
            println!("  {s:.3}  {id}  {}", store.get(id)?.text);
        }
    }
    Ok(())
}
