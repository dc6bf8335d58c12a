//! Record a short triage session, then derive behavioral metrics, the
//! per-phase split around the first custom facet, and a weight step series.

use std::sync::Arc;

use claimtriage::clock::TickClock;
use claimtriage::llm::FacetDefinition;
use claimtriage::telemetry::{metrics, metrics_by_phase, step_series, EventLog, EventPayload};
use claimtriage::FacetKey;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut log = EventLog::in_memory(Arc::new(TickClock::new(1_700_000_000_000, 1_000)));
    let facet = FacetDefinition::custom("Statistics", "Claims made about numbers or percentages.", 0)?;
    let custom_key = facet.key.clone();
    let script = vec![
        EventPayload::QuerySubmitted {
            query: "school funding".into(),
        },
        EventPayload::WeightChanged {
            facet: FacetKey::verifiable(),
            old: 0.10,
            new: 0.70,
        },
        EventPayload::ClaimSelected { claim_id: "c12".into() },
        EventPayload::ClaimSelected { claim_id: "c40".into() },
        EventPayload::FacetCreated { facet },
        EventPayload::WeightChanged {
            facet: custom_key.clone(),
            old: 0.10,
            new: 0.90,
        },
        EventPayload::QuerySubmitted {
            query: "teacher salaries percent".into(),
        },
        EventPayload::ClaimSelected { claim_id: "c07".into() },
        EventPayload::ClaimUnselected { claim_id: "c40".into() },
        EventPayload::ClaimSelected { claim_id: "c33".into() },
        EventPayload::FinalSelection {
            claim_ids: vec!["c12".into(), "c07".into(), "c33".into()],
        },
    ];
    for payload in script {
        log.record("s1", payload)?;
    }
    let events = log.events("s1");

    println!("overall: {:?}", metrics(events));
    let phases = metrics_by_phase(events);
    println!("before the custom facet: {:?}", phases.standard);
    println!("after the custom facet:  {:?}", phases.customized);

    let initial = FacetKey::multidimensional_presets();
    let mut initial: Vec<FacetKey> = initial.into_iter().collect();
    initial.push(FacetKey::query_similarity());
    print!("{}", step_series(events, &initial).to_csv());

    let mut exported = Vec::new();
    log.export_all(&mut exported)?;
    println!("{} bytes of NDJSON", exported.len());
    Ok(())
}
