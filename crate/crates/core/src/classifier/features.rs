//! Word n-gram features with a frequency-capped vocabulary, optionally
//! extended with dense embedding features.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// Feature extraction settings shared by every preset facet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Inclusive word n-gram orders, `1 <= lo <= hi <= 3`.
    pub ngram_range: (usize, usize),
    pub vocab_cap: usize,
    pub use_embeddings: bool,
    pub lowercase: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            ngram_range: (1, 2),
            vocab_cap: 20_000,
            use_embeddings: false,
            lowercase: true,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let (lo, hi) = self.ngram_range;
        if !(1 <= lo && lo <= hi && hi <= 3) {
            return Err(ClassifierError::InvalidSpec(format!(
                "ngram_range ({lo}, {hi}) must satisfy 1 <= lo <= hi <= 3"
            )));
        }
        if self.vocab_cap == 0 {
            return Err(ClassifierError::InvalidSpec("vocab_cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Splits on anything that is not alphanumeric.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

/// Distinct n-grams of the given orders, space-joined.
pub fn ngrams(tokens: &[String], lo: usize, hi: usize) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for n in lo..=hi {
        for window in tokens.windows(n) {
            out.insert(window.join(" "));
        }
    }
    out
}

/// Sparse row: `(feature index, value)` pairs sorted by index.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps the `cap` most frequent n-grams over `texts`; frequency ties are
    /// broken lexicographically.
    pub fn fit<'a>(spec: &FeatureSpec, texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let (lo, hi) = spec.ngram_range;
        for text in texts {
            let tokens = tokenize(text, spec.lowercase);
            for gram in ngrams(&tokens, lo, hi) {
                *counts.entry(gram).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(spec.vocab_cap);
        Self::from_terms(ranked.into_iter().map(|(t, _)| t).collect())
    }

    pub fn from_terms(terms: Vec<String>) -> Self {
        let lookup = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { terms, lookup }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Binary presence of in-vocabulary n-grams, scaled to unit L2 norm.
    /// Out-of-vocabulary n-grams are ignored.
    pub fn transform(&self, spec: &FeatureSpec, text: &str) -> SparseRow {
        let tokens = tokenize(text, spec.lowercase);
        let (lo, hi) = spec.ngram_range;
        let mut idx: Vec<usize> = ngrams(&tokens, lo, hi)
            .iter()
            .filter_map(|g| self.lookup.get(g).copied())
            .collect();
        idx.sort_unstable();
        if idx.is_empty() {
            return Vec::new();
        }
        let v = 1.0 / (idx.len() as f64).sqrt();
        idx.into_iter().map(|i| (i, v)).collect()
    }
}
