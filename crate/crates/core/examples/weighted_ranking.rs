//! Rank claims under one weight profile in both aggregation modes and show
//! where the squared mode departs from the linear one.

use std::collections::BTreeMap;

use claimtriage::rank::{rank, sensitivity_gap, ScoringMode, WeightProfile};
use claimtriage::{FacetKey, ScoreMap};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = [
        ("c1", 0.95, 0.20, 0.30),
        ("c2", 0.60, 0.70, 0.60),
        ("c3", 0.40, 0.90, 0.10),
        ("c4", 0.55, 0.55, 0.95),
    ];
    let facets = [
        FacetKey::verifiable(),
        FacetKey::likely_false(),
        FacetKey::public_interest(),
    ];
    let mut scores: BTreeMap<FacetKey, ScoreMap> = BTreeMap::new();
    for (k, facet) in facets.iter().enumerate() {
        let map = table
            .iter()
            .map(|row| (row.0.to_string(), [row.1, row.2, row.3][k]))
            .collect();
        scores.insert(facet.clone(), map);
    }
    let profile = WeightProfile::from_pairs([
        (FacetKey::verifiable(), 0.9),
        (FacetKey::likely_false(), 0.4),
        (FacetKey::public_interest(), 0.4),
    ])?;

    for mode in [ScoringMode::Linear, ScoringMode::Squared] {
        let ranked = rank(table.iter().map(|r| r.0), &scores, &profile, mode)?;
        let line: Vec<String> = ranked
            .entries
            .iter()
            .map(|e| format!("{} ({:.3})", e.claim_id, e.score))
            .collect();
        println!("{mode:?}: {}", line.join(", "));
    }

    // d/dW of each term: the squared form is steeper once W > 1/(2P).
    for (w, p) in [(0.3, 0.9), (0.9, 0.9), (0.9, 0.4)] {
        let (sq, lin) = sensitivity_gap(w, p);
        println!("W={w} P={p}: squared slope {sq:.3}, linear slope {lin:.3}");
    }
    Ok(())
}
