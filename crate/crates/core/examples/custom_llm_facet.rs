//! Define a custom facet in plain language and score a corpus with a
//! completion model.
//!
//! With `CLAIMTRIAGE_LLM_ENDPOINT` set, the configured endpoint is used.
//! Otherwise a keyword mock stands in for the model.

use std::sync::Arc;

use claimtriage::llm::{
    build_prompt, create_facet, provider_from_env, score_facet, CompletionProvider, MockProvider, ScoringOptions,
};
use claimtriage::{Claim, ClaimStore};

const RULES: &str = "percent\tyes\t0.92\nmillion\tyes\t0.85\nrigged\tperhaps\t0.6\n*\tno\t0.9\n";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = ClaimStore::from_claims([
        Claim::new("c1", "Turnout was 71 percent, the highest in decades."),
        Claim::new("c2", "The stadium cost 900 million dollars."),
        Claim::new("c3", "The election was rigged from the start."),
        Claim::new("c4", "Our governor does not care about farmers."),
    ])?;
    let (facet, reset) = create_facet("Statistics", "Claims made about numbers or percentages.", 0)?;
    println!("facet key {}, all weights reset to {:.2}", facet.key, reset.value);
    println!("prompt: {}", build_prompt(&facet, store.get("c1")?)?);

    let provider: Arc<dyn CompletionProvider> = if std::env::var_os("CLAIMTRIAGE_LLM_ENDPOINT").is_some() {
        provider_from_env()?
    } else {
        Arc::new(MockProvider::parse(RULES)?)
    };
    let progress = |p: claimtriage::llm::Progress| eprintln!("scored {}/{}", p.done, p.total);
    let scored = score_facet(&facet, &store, provider.as_ref(), &ScoringOptions::default(), &progress)?;
    for (id, p) in &scored.scores {
        println!("{p:.3}  {}", store.get(id)?.text);
    }
    for flag in &scored.flagged {
        println!("flagged {}: {:?}", flag.claim_id, flag.reason);
    }
    Ok(())
}
