//! Per-facet checkworthiness classifiers.
//!
//! Each preset facet is a binary logistic regression over word n-gram
//! features (optionally extended with embedding features). The training side
//! of the corpus split is balanced by random undersampling before fitting;
//! accuracy is measured on the untouched test side.

mod features;
mod objective;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingProvider;
use crate::facet::{FacetKey, ScoreMap};
use crate::store::{Claim, ClaimStore, CorpusSplit};

pub use features::{ngrams, tokenize, FeatureSpec, SparseRow, Vocabulary};
pub use objective::{sigmoid, GradientDescent, LogisticObjective, Solution};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid feature spec: {0}")]
    InvalidSpec(String),
    #[error("cannot balance: {positives} positive / {negatives} negative examples")]
    CannotBalance { positives: usize, negatives: usize },
    #[error("cannot train facet {facet}: {reason}")]
    CannotTrain { facet: FacetKey, reason: String },
    #[error(
        "no convergence after {iterations} iterations \
         (loss {loss:.6e}, last delta {last_delta:.3e}, |grad| {gradient_norm:.3e}, step {step:.3e})"
    )]
    ConvergenceFailure {
        iterations: usize,
        loss: f64,
        last_delta: f64,
        gradient_norm: f64,
        step: f64,
    },
    #[error("embedding provider mismatch: {0}")]
    EmbeddingMismatch(String),
    #[error("model file: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Randomly drops majority-class items until both classes have the minority
/// count. The result keeps the input order and is a subset of `items`.
pub fn undersample<T: Clone>(
    items: &[T],
    is_positive: impl Fn(&T) -> bool,
    seed: u64,
) -> Result<Vec<T>, ClassifierError> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..items.len()).partition(|&i| is_positive(&items[i]));
    if pos.is_empty() || neg.is_empty() {
        return Err(ClassifierError::CannotBalance {
            positives: pos.len(),
            negatives: neg.len(),
        });
    }
    let (minority, majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = rand::seq::index::sample(&mut rng, majority.len(), minority.len())
        .into_iter()
        .map(|j| majority[j])
        .chain(minority)
        .collect();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| items[i].clone()).collect())
}

/// Training summary stored alongside the coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Accuracy at the 0.5 threshold on the labeled test claims; `None` if the
    /// test side has no labels for this facet.
    pub test_accuracy: Option<f64>,
    pub test_size: usize,
    pub train_positives: usize,
    pub train_negatives: usize,
    pub balanced_positives: usize,
    pub balanced_negatives: usize,
    pub iterations: usize,
    pub final_loss: f64,
}

/// Identifies the embedding provider whose vectors were appended as features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingBinding {
    pub provider: String,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    facet: FacetKey,
    feature_spec: FeatureSpec,
    vocabulary: Vec<String>,
    embedding: Option<EmbeddingBinding>,
    coefficients: Vec<f64>,
    bias: f64,
    train_report: TrainReport,
}

/// A trained facet classifier. Immutable once built.
#[derive(Clone)]
pub struct LogisticModel {
    facet: FacetKey,
    spec: FeatureSpec,
    vocabulary: Vocabulary,
    embedding: Option<(EmbeddingBinding, Arc<dyn EmbeddingProvider>)>,
    coefficients: Vec<f64>,
    bias: f64,
    report: TrainReport,
}

impl fmt::Debug for LogisticModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LogisticModel")
            .field("facet", &self.facet)
            .field("spec", &self.spec)
            .field("vocabulary", &self.vocabulary.len())
            .field("embedding", &self.embedding.as_ref().map(|(b, _)| b))
            .field("bias", &self.bias)
            .field("report", &self.report)
            .finish()
    }
}

impl LogisticModel {
    pub fn facet(&self) -> &FacetKey {
        &self.facet
    }

    pub fn feature_spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn train_report(&self) -> &TrainReport {
        &self.report
    }

    pub fn feature_dim(&self) -> usize {
        self.vocabulary.len() + self.embedding.as_ref().map_or(0, |(b, _)| b.dim)
    }

    fn features(&self, claim: &Claim) -> SparseRow {
        feature_row(
            &self.spec,
            &self.vocabulary,
            self.embedding.as_ref().map(|(_, p)| p.as_ref()),
            claim,
        )
    }

    /// Linear score `w·x + b` before the sigmoid.
    pub fn decision_value(&self, claim: &Claim) -> f64 {
        self.features(claim)
            .iter()
            .map(|&(i, v)| self.coefficients[i] * v)
            .sum::<f64>()
            + self.bias
    }

    pub fn predict_proba(&self, claim: &Claim) -> f64 {
        sigmoid(self.decision_value(claim))
    }

    /// One probability per stored claim.
    pub fn score_corpus(&self, store: &ClaimStore) -> ScoreMap {
        let claims: Vec<&Claim> = store.iter().collect();
        claims
            .par_iter()
            .map(|c| (c.id.clone(), self.predict_proba(c)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    }

    pub fn to_json(&self) -> Result<String, ClassifierError> {
        let file = ModelFile {
            facet: self.facet.clone(),
            feature_spec: self.spec.clone(),
            vocabulary: self.vocabulary.terms().to_vec(),
            embedding: self.embedding.as_ref().map(|(b, _)| b.clone()),
            coefficients: self.coefficients.clone(),
            bias: self.bias,
            train_report: self.report.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses a model document. Models trained with embedding features need
    /// the same provider passed back in.
    pub fn from_json(json: &str, embedder: Option<Arc<dyn EmbeddingProvider>>) -> Result<Self, ClassifierError> {
        let file: ModelFile = serde_json::from_str(json)?;
        file.feature_spec.validate()?;
        let embedding = match (file.embedding, embedder) {
            (None, _) => None,
            (Some(binding), Some(p)) if p.name() == binding.provider && p.dim() == binding.dim => Some((binding, p)),
            (Some(binding), Some(p)) => {
                return Err(ClassifierError::EmbeddingMismatch(format!(
                    "model expects {} (dim {}), got {} (dim {})",
                    binding.provider,
                    binding.dim,
                    p.name(),
                    p.dim()
                )))
            }
            (Some(binding), None) => {
                return Err(ClassifierError::EmbeddingMismatch(format!(
                    "model expects provider {}, none given",
                    binding.provider
                )))
            }
        };
        let model = Self {
            facet: file.facet,
            spec: file.feature_spec,
            vocabulary: Vocabulary::from_terms(file.vocabulary),
            embedding,
            coefficients: file.coefficients,
            bias: file.bias,
            report: file.train_report,
        };
        if model.coefficients.len() != model.feature_dim() {
            return Err(ClassifierError::InvalidSpec(format!(
                "{} coefficients for {} features",
                model.coefficients.len(),
                model.feature_dim()
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, embedder: Option<Arc<dyn EmbeddingProvider>>) -> Result<Self, ClassifierError> {
        Self::from_json(&fs::read_to_string(path)?, embedder)
    }
}

fn feature_row(
    spec: &FeatureSpec,
    vocabulary: &Vocabulary,
    embedder: Option<&dyn EmbeddingProvider>,
    claim: &Claim,
) -> SparseRow {
    let mut row = vocabulary.transform(spec, &claim.text);
    if let Some(provider) = embedder {
        // A claim the provider cannot embed contributes no dense features.
        if let Ok(v) = provider.embed_claim(claim) {
            let offset = vocabulary.len();
            row.extend(v.values().iter().enumerate().map(|(i, x)| (offset + i, *x)));
        }
    }
    row
}

/// Everything needed to fit one facet.
#[derive(Clone, Default)]
pub struct TrainConfig {
    pub spec: FeatureSpec,
    pub optimizer: GradientDescent,
    pub seed: u64,
    /// Required when `spec.use_embeddings` is set.
    pub embedder: Option<Arc<dyn EmbeddingProvider>>,
}

fn labeled<'a>(
    store: &'a ClaimStore,
    ids: impl Iterator<Item = &'a String>,
    facet: &FacetKey,
) -> Vec<(&'a Claim, bool)> {
    ids.filter_map(|id| store.get(id).ok())
        .filter_map(|c| c.label(facet.as_str()).map(|l| (c, l)))
        .collect()
}

/// Fits a facet classifier on the training side of `split` and reports its
/// accuracy on the test side. Claims without a label for `facet` are skipped.
pub fn train(
    facet: &FacetKey,
    store: &ClaimStore,
    split: &CorpusSplit,
    config: &TrainConfig,
) -> Result<LogisticModel, ClassifierError> {
    config.spec.validate()?;
    let embedding = match (&config.embedder, config.spec.use_embeddings) {
        (Some(p), true) => Some((
            EmbeddingBinding {
                provider: p.name().to_string(),
                dim: p.dim(),
            },
            Arc::clone(p),
        )),
        (None, true) => {
            return Err(ClassifierError::InvalidSpec(
                "use_embeddings is set but no embedding provider was configured".into(),
            ))
        }
        (_, false) => None,
    };

    let train_side = labeled(store, split.train_ids.iter(), facet);
    let train_positives = train_side.iter().filter(|(_, l)| *l).count();
    let train_negatives = train_side.len() - train_positives;
    let balanced = undersample(&train_side, |(_, l)| *l, config.seed).map_err(|_| ClassifierError::CannotTrain {
        facet: facet.clone(),
        reason: format!("training labels have {train_positives} positive / {train_negatives} negative"),
    })?;

    let vocabulary = Vocabulary::fit(&config.spec, train_side.iter().map(|(c, _)| c.text.as_str()));
    let embedder = embedding.as_ref().map(|(_, p)| p.as_ref());
    let rows: Vec<SparseRow> = balanced
        .iter()
        .map(|(c, _)| feature_row(&config.spec, &vocabulary, embedder, c))
        .collect();
    let labels: Vec<f64> = balanced.iter().map(|(_, l)| if *l { 1.0 } else { 0.0 }).collect();
    let dim = vocabulary.len() + embedding.as_ref().map_or(0, |(b, _)| b.dim);
    let objective = LogisticObjective::new(&rows, &labels, dim, config.optimizer.l2);
    let solution = config.optimizer.minimize(&objective)?;

    let mut coefficients = solution.params;
    let bias = coefficients.pop().unwrap_or_default();
    let balanced_positives = balanced.iter().filter(|(_, l)| *l).count();
    let mut model = LogisticModel {
        facet: facet.clone(),
        spec: config.spec.clone(),
        vocabulary,
        embedding,
        coefficients,
        bias,
        report: TrainReport {
            test_accuracy: None,
            test_size: 0,
            train_positives,
            train_negatives,
            balanced_positives,
            balanced_negatives: balanced.len() - balanced_positives,
            iterations: solution.iterations,
            final_loss: solution.loss,
        },
    };

    let test_side = labeled(store, split.test_ids.iter(), facet);
    let correct = test_side
        .iter()
        .filter(|(c, l)| (model.predict_proba(c) >= 0.5) == *l)
        .count();
    model.report.test_size = test_side.len();
    model.report.test_accuracy = (!test_side.is_empty()).then(|| correct as f64 / test_side.len() as f64);
    Ok(model)
}

/// Trains every preset facet that has labels on both sides of the split.
/// Facets lacking one class on the training side are returned as errors.
pub fn train_presets(
    store: &ClaimStore,
    split: &CorpusSplit,
    config: &TrainConfig,
) -> BTreeMap<FacetKey, Result<LogisticModel, ClassifierError>> {
    FacetKey::all_presets()
        .into_iter()
        .map(|facet| {
            let model = train(&facet, store, split, config);
            (facet, model)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::split_corpus;

    #[test]
    fn undersample_to_minority_count() {
        let items: Vec<(u32, bool)> = (0..40).map(|i| (i, i < 30)).collect();
        let out = undersample(&items, |x| x.1, 1).unwrap();
        assert_eq!(out.iter().filter(|x| x.1).count(), 10);
        assert_eq!(out.iter().filter(|x| !x.1).count(), 10);
        assert!(out.iter().all(|x| items.contains(x)));
        assert_eq!(out, undersample(&items, |x| x.1, 1).unwrap());
    }

    #[test]
    fn undersample_balanced_input_is_unchanged() {
        let items: Vec<(u32, bool)> = (0..20).map(|i| (i, i % 2 == 0)).collect();
        assert_eq!(undersample(&items, |x| x.1, 9).unwrap(), items);
    }

    #[test]
    fn undersample_single_class_fails() {
        let items = vec![true, true];
        assert!(matches!(
            undersample(&items, |x| *x, 0),
            Err(ClassifierError::CannotBalance {
                positives: 2,
                negatives: 0
            })
        ));
    }

    fn corpus() -> ClaimStore {
        ClaimStore::from_claims((0..30).map(|i| {
            let text = if i % 3 == 0 {
                format!("officials report deaths in region {i}")
            } else {
                format!("officials report vaccines in region {i}")
            };
            Claim::new(format!("c{i:02}"), text).with_label("likely_false", u8::from(i % 3 == 0))
        }))
        .unwrap()
    }

    #[test]
    fn zero_features_zero_bias_predicts_half() {
        let model = LogisticModel::from_json(
            r#"{"facet":"verifiable","feature_spec":{"ngram_range":[1,1],"vocab_cap":5,"use_embeddings":false,"lowercase":true},
                "vocabulary":["deaths"],"embedding":null,"coefficients":[3.0],"bias":0.0,
                "train_report":{"test_accuracy":null,"test_size":0,"train_positives":0,"train_negatives":0,
                "balanced_positives":0,"balanced_negatives":0,"iterations":0,"final_loss":0.0}}"#,
            None,
        )
        .unwrap();
        assert_eq!(model.predict_proba(&Claim::new("x", "nothing known here")), 0.5);
        assert!(model.predict_proba(&Claim::new("y", "deaths")) > 0.5);
    }

    #[test]
    fn single_class_training_labels_fail() {
        let store = ClaimStore::from_claims(
            (0..6).map(|i| Claim::new(format!("c{i}"), "same text").with_label("verifiable", 1)),
        )
        .unwrap();
        let split = split_corpus(&store, (2, 1), 0).unwrap();
        let err = train(&FacetKey::verifiable(), &store, &split, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, ClassifierError::CannotTrain { .. }));
    }

    #[test]
    fn model_json_roundtrip_preserves_predictions() {
        let store = corpus();
        let split = split_corpus(&store, (2, 1), 5).unwrap();
        let model = train(&FacetKey::likely_false(), &store, &split, &TrainConfig::default()).unwrap();
        assert_eq!(model.coefficients().len(), model.feature_dim());
        let back = LogisticModel::from_json(&model.to_json().unwrap(), None).unwrap();
        assert_eq!(model.score_corpus(&store), back.score_corpus(&store));
    }

    #[test]
    fn embedding_models_require_the_same_provider() {
        use crate::embed::HashingEmbedder;
        let store = corpus();
        let split = split_corpus(&store, (2, 1), 5).unwrap();
        let embedder: Arc<dyn EmbeddingProvider> = Arc::new(HashingEmbedder::new(32));
        let config = TrainConfig {
            spec: FeatureSpec {
                use_embeddings: true,
                ..FeatureSpec::default()
            },
            embedder: Some(Arc::clone(&embedder)),
            ..TrainConfig::default()
        };
        let model = train(&FacetKey::likely_false(), &store, &split, &config).unwrap();
        assert_eq!(model.feature_dim(), model.vocabulary().len() + 32);
        let json = model.to_json().unwrap();
        assert!(matches!(
            LogisticModel::from_json(&json, None),
            Err(ClassifierError::EmbeddingMismatch(_))
        ));
        let other: Arc<dyn EmbeddingProvider> = Arc::new(HashingEmbedder::new(16));
        assert!(LogisticModel::from_json(&json, Some(other)).is_err());
        let back = LogisticModel::from_json(&json, Some(embedder)).unwrap();
        assert_eq!(back.score_corpus(&store), model.score_corpus(&store));

        let missing = TrainConfig {
            embedder: None,
            ..config
        };
        assert!(matches!(
            train(&FacetKey::likely_false(), &store, &split, &missing),
            Err(ClassifierError::InvalidSpec(_))
        ));
    }
}
