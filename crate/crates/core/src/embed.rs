//! Text embeddings and cosine similarity for semantic query search.
//!
//! Two providers ship with the crate: [`HashingEmbedder`], which hashes
//! character 3-5-grams into a fixed number of buckets and needs no external
//! assets, and [`PrecomputedEmbeddings`], which serves vectors produced
//! offline by a sentence encoder.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use crate::facet::ScoreMap;
use crate::store::{Claim, ClaimStore};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("no precomputed vector for key {0:?}")]
    UnknownKey(String),
    #[error("embedding file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A unit-length dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Scales `values` to unit L2 norm. Zero or non-finite input is rejected.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::InvalidInput("empty vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::InvalidInput("non-finite component".into()));
        }
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Err(EmbedError::InvalidInput("zero vector".into()));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self { values })
    }

    /// Wraps raw values without normalizing.
    pub fn raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Maps text to fixed-dimension unit vectors. Must be deterministic.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    /// Vector used for a stored claim. Defaults to embedding the claim text.
    fn embed_claim(&self, claim: &Claim) -> Result<EmbeddingVector, EmbedError> {
        self.embed(&claim.text)
    }
}

/// Character n-gram feature hashing.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    name: String,
    dim: usize,
    min_n: usize,
    max_n: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            name: format!("hashing-char3-5-d{dim}"),
            dim,
            min_n: 3,
            max_n: 5,
        }
    }
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
        if words.is_empty() {
            return Err(EmbedError::InvalidInput("empty text".into()));
        }
        // Space padding gives word boundaries their own grams, and makes
        // single-character texts produce at least one 3-gram.
        let padded: Vec<char> = format!(" {} ", words.join(" ")).chars().collect();
        let mut values = vec![0.0; self.dim];
        let mut buf = String::new();
        for n in self.min_n..=self.max_n {
            for gram in padded.windows(n) {
                buf.clear();
                buf.extend(gram);
                values[(fnv1a(buf.as_bytes()) % self.dim as u64) as usize] += 1.0;
            }
        }
        EmbeddingVector::normalized(values)
    }
}

/// Vectors loaded from a file, keyed by claim id.
///
/// File layout: a `dim=<N>` header, then `<key>\t<v1> <v2> ... <vN>` per line.
/// Rows are normalized on load.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbeddings {
    name: String,
    dim: usize,
    rows: HashMap<String, EmbeddingVector>,
}

impl PrecomputedEmbeddings {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let name = format!("precomputed:{}", path.as_ref().display());
        Self::from_reader(name, BufReader::new(File::open(path)?))
    }

    pub fn from_reader<R: BufRead>(name: impl Into<String>, reader: R) -> Result<Self, EmbedError> {
        let mut lines = reader.lines().enumerate();
        let dim = loop {
            let Some((i, line)) = lines.next() else {
                return Err(EmbedError::Parse {
                    line: 1,
                    reason: "missing dim header".into(),
                });
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let dim = line
                .trim()
                .strip_prefix("dim=")
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|d| *d > 0)
                .ok_or_else(|| EmbedError::Parse {
                    line: i + 1,
                    reason: format!("expected `dim=<N>` header, got {line:?}"),
                })?;
            break dim;
        };
        let mut rows = HashMap::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |reason: String| EmbedError::Parse { line: i + 1, reason };
            let (key, rest) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `<key>\\t<values>`".into()))?;
            let values = rest
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| parse_err(e.to_string()))?;
            if values.len() != dim {
                return Err(parse_err(format!("expected {dim} values, got {}", values.len())));
            }
            let vector = EmbeddingVector::normalized(values).map_err(|e| parse_err(e.to_string()))?;
            if rows.insert(key.to_string(), vector).is_some() {
                return Err(parse_err(format!("duplicate key {key:?}")));
            }
        }
        Ok(Self {
            name: name.into(),
            dim,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl EmbeddingProvider for PrecomputedEmbeddings {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::InvalidInput("empty text".into()));
        }
        self.rows
            .get(text)
            .cloned()
            .ok_or_else(|| EmbedError::UnknownKey(text.to_string()))
    }

    fn embed_claim(&self, claim: &Claim) -> Result<EmbeddingVector, EmbedError> {
        self.embed(&claim.id)
    }
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::InvalidInput("zero vector".into()));
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Affine map from cosine in [-1, 1] to a score in [0, 1].
pub fn similarity_score(cos: f64) -> f64 {
    ((cos + 1.0) / 2.0).clamp(0.0, 1.0)
}

/// Claim vectors computed once by a single provider.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    provider: String,
    dim: usize,
    entries: Vec<(String, EmbeddingVector)>,
}

impl EmbeddingIndex {
    pub fn build(store: &ClaimStore, provider: &dyn EmbeddingProvider) -> Result<Self, EmbedError> {
        let entries = store
            .iter()
            .map(|c| provider.embed_claim(c).map(|v| (c.id.clone(), v)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            provider: provider.name().to_string(),
            dim: provider.dim(),
            entries,
        })
    }

    pub fn provider_name(&self) -> &str {
        &self.provider
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Query similarity for every indexed claim, as `(cosine + 1) / 2`.
    /// A blank query scores every claim 0.
    pub fn query_similarity_scores(
        &self,
        provider: &dyn EmbeddingProvider,
        query: &str,
    ) -> Result<ScoreMap, EmbedError> {
        if provider.name() != self.provider || provider.dim() != self.dim {
            return Err(EmbedError::InvalidState(format!(
                "index built with {} (dim {}), queried with {} (dim {})",
                self.provider,
                self.dim,
                provider.name(),
                provider.dim()
            )));
        }
        if query.trim().is_empty() {
            return Ok(self.entries.iter().map(|(id, _)| (id.clone(), 0.0)).collect());
        }
        let q = provider.embed(query)?;
        self.entries
            .iter()
            .map(|(id, v)| Ok((id.clone(), similarity_score(cosine(&q, v)?))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn hashing_embedder_is_deterministic_and_normalized() {
        let e = HashingEmbedder::default();
        let a = e.embed("covid vaccine").unwrap();
        assert_eq!(a, e.embed("covid vaccine").unwrap());
        assert_eq!(a.dim(), 256);
        for text in ["covid vaccine", "x", "A much longer tweet about 5G towers!!", "ünïcödé"] {
            assert!((e.embed(text).unwrap().norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn hashing_embedder_rejects_blank_text() {
        let e = HashingEmbedder::default();
        assert!(matches!(e.embed(""), Err(EmbedError::InvalidInput(_))));
        assert!(matches!(e.embed(" \t"), Err(EmbedError::InvalidInput(_))));
    }

    #[test]
    fn cosine_hand_values() {
        let v = EmbeddingVector::raw(vec![0.3, -0.2, 0.9]);
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        let x = EmbeddingVector::raw(vec![1.0, 0.0]);
        let y = EmbeddingVector::raw(vec![0.0, 1.0]);
        assert_eq!(cosine(&x, &y).unwrap(), 0.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = EmbeddingVector::raw(vec![s, s]);
        assert!((cosine(&d, &x).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        let x = EmbeddingVector::raw(vec![1.0, 0.0]);
        let z = EmbeddingVector::raw(vec![0.0, 0.0]);
        let w = EmbeddingVector::raw(vec![1.0, 0.0, 0.0]);
        assert!(matches!(cosine(&x, &z), Err(EmbedError::InvalidInput(_))));
        assert!(matches!(cosine(&x, &w), Err(EmbedError::InvalidInput(_))));
    }

    #[test]
    fn orthogonal_query_scores_half() {
        assert_eq!(similarity_score(0.0), 0.5);
        assert_eq!(similarity_score(1.0), 1.0);
        assert_eq!(similarity_score(-1.0), 0.0);
    }

    #[test]
    fn precomputed_file_lookup() {
        let file = "dim=3\na\t1 0 0\nb\t0 0.6 0.8\n";
        let p = PrecomputedEmbeddings::from_reader("test", Cursor::new(file)).unwrap();
        assert_eq!(p.dim(), 3);
        assert_eq!(p.embed("b").unwrap().values(), &[0.0, 0.6, 0.8]);
        assert!(matches!(p.embed("zzz"), Err(EmbedError::UnknownKey(_))));
    }

    #[test]
    fn precomputed_file_errors() {
        for (bad, line) in [
            ("a\t1 0\n", 1),
            ("dim=2\na\t1 0 0\n", 2),
            ("dim=2\na 1 0\n", 2),
            ("dim=2\na\t0 0\n", 2),
            ("dim=2\na\t1 0\na\t0 1\n", 3),
        ] {
            match PrecomputedEmbeddings::from_reader("t", Cursor::new(bad)) {
                Err(EmbedError::Parse { line: l, .. }) => assert_eq!(l, line, "{bad:?}"),
                other => panic!("{bad:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn precomputed_index_keys_by_claim_id() {
        let store = ClaimStore::from_claims([Claim::new("a", "alpha"), Claim::new("b", "beta")]).unwrap();
        let p = PrecomputedEmbeddings::from_reader("t", Cursor::new("dim=2\na\t1 0\nb\t0 1\n")).unwrap();
        let index = EmbeddingIndex::build(&store, &p).unwrap();
        let scores = index.query_similarity_scores(&p, "a").unwrap();
        assert!((scores["a"] - 1.0).abs() < 1e-12);
        assert!((scores["b"] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn query_scores_self_similarity_and_blank_query() {
        let store = ClaimStore::from_claims([
            Claim::new("a", "Vaccines cause autism"),
            Claim::new("b", "5G towers spread the virus"),
        ])
        .unwrap();
        let e = HashingEmbedder::default();
        let index = EmbeddingIndex::build(&store, &e).unwrap();
        let scores = index.query_similarity_scores(&e, "Vaccines cause autism").unwrap();
        assert!((scores["a"] - 1.0).abs() < 1e-6);
        assert!(scores.values().all(|s| (0.0..=1.0).contains(s)));
        let blank = index.query_similarity_scores(&e, "").unwrap();
        assert_eq!(blank.len(), 2);
        assert!(blank.values().all(|s| *s == 0.0));
    }

    #[test]
    fn provider_mismatch_is_invalid_state() {
        let store = ClaimStore::from_claims([Claim::new("a", "text")]).unwrap();
        let index = EmbeddingIndex::build(&store, &HashingEmbedder::new(256)).unwrap();
        assert!(matches!(
            index.query_similarity_scores(&HashingEmbedder::new(128), "text"),
            Err(EmbedError::InvalidState(_))
        ));
    }
}
