//! Claim triage engine.
//!
//! Ranks a corpus of short claims by a user-weighted combination of facet
//! probabilities: query similarity, pretrained checkworthiness classifiers,
//! and custom facets scored by a completion model with a yes/no prompt.
//! Every interaction can be logged and replayed into behavioral measures,
//! and the nonparametric tests used to compare conditions are included.
//!
//! Module map:
//!
//! - [`store`]: claim corpus ingestion, persistence, train/test split.
//! - [`embed`]: embedding providers, cosine similarity, query scoring.
//! - [`classifier`]: n-gram logistic regression facets with undersampling.
//! - [`llm`]: custom facets scored through yes/no token log-probabilities.
//! - [`rank`]: linear and squared weighted aggregation, soft-filter ranking.
//! - [`telemetry`]: session event log, step series, behavioral metrics.
//! - [`stats`]: Friedman and Wilcoxon signed-rank tests.

pub mod classifier;
pub mod clock;
pub mod embed;
pub mod facet;
pub mod llm;
pub mod rank;
pub mod stats;
pub mod store;
pub mod telemetry;

pub use facet::{FacetKey, FacetKind, ScoreMap};
pub use store::{Claim, ClaimStore, SocialMetrics};
