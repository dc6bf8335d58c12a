//! Facet identifiers shared by the classifiers, the LLM facets and the ranker.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Per-claim probabilities for one facet, keyed by claim id.
pub type ScoreMap = BTreeMap<String, f64>;

/// Name of one rankable dimension.
///
/// The preset keys correspond to the annotated checkworthiness dimensions;
/// custom facets get keys derived from their user-facing name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FacetKey(String);

impl FacetKey {
    pub const VERIFIABLE: &'static str = "verifiable";
    pub const LIKELY_FALSE: &'static str = "likely_false";
    pub const LIKELY_HARMFUL: &'static str = "likely_harmful";
    pub const PUBLIC_INTEREST: &'static str = "public_interest";
    pub const NEEDS_VERIFICATION: &'static str = "needs_verification";
    pub const QUERY_SIMILARITY: &'static str = "query_similarity";

    /// Prefix given to every user-authored facet key.
    pub const CUSTOM_PREFIX: &'static str = "llm_";

    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn verifiable() -> Self {
        Self::new(Self::VERIFIABLE)
    }

    pub fn likely_false() -> Self {
        Self::new(Self::LIKELY_FALSE)
    }

    pub fn likely_harmful() -> Self {
        Self::new(Self::LIKELY_HARMFUL)
    }

    pub fn public_interest() -> Self {
        Self::new(Self::PUBLIC_INTEREST)
    }

    pub fn needs_verification() -> Self {
        Self::new(Self::NEEDS_VERIFICATION)
    }

    pub fn query_similarity() -> Self {
        Self::new(Self::QUERY_SIMILARITY)
    }

    /// The four dimensions exposed by the multidimensional interface.
    pub fn multidimensional_presets() -> [FacetKey; 4] {
        [
            Self::verifiable(),
            Self::likely_false(),
            Self::likely_harmful(),
            Self::public_interest(),
        ]
    }

    /// Every classifier-backed key, including the unidimensional baseline.
    pub fn all_presets() -> [FacetKey; 5] {
        [
            Self::verifiable(),
            Self::likely_false(),
            Self::likely_harmful(),
            Self::public_interest(),
            Self::needs_verification(),
        ]
    }

    /// Derives a custom facet key from a user-entered name.
    ///
    /// `"Covid and vaccine deaths"` becomes `llm_covid_and_vaccine_deaths`.
    pub fn custom_from_name(name: &str) -> Self {
        let mut slug = String::new();
        for c in name.trim().chars().flat_map(char::to_lowercase) {
            if c.is_alphanumeric() {
                slug.push(c);
            } else if !slug.ends_with('_') && !slug.is_empty() {
                slug.push('_');
            }
        }
        while slug.ends_with('_') {
            slug.pop();
        }
        if slug.is_empty() {
            slug.push_str("facet");
        }
        Self(format!("{}{}", Self::CUSTOM_PREFIX, slug))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_preset(&self) -> bool {
        Self::all_presets().iter().any(|k| k == self)
    }

    pub fn is_query_similarity(&self) -> bool {
        self.0 == Self::QUERY_SIMILARITY
    }

    pub fn is_custom(&self) -> bool {
        self.0.starts_with(Self::CUSTOM_PREFIX)
    }
}

impl fmt::Display for FacetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FacetKey {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

impl AsRef<str> for FacetKey {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Where a facet's per-claim probabilities come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacetKind {
    Pretrained,
    LlmCustom,
    QuerySimilarity,
}
