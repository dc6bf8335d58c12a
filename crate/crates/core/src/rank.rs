//! Weighted aggregation of facet probabilities and soft-filter ranking.
//!
//! Each claim's total score combines its facet probabilities `P_i` with the
//! user's slider weights `W_i`, either linearly (`Σ W_i·P_i`) or squared
//! (`Σ W_i²·P_i²`). The squared form reacts more strongly to weight changes
//! for claims a facet predicts positive (`W_i > 1/(2·P_i)`) and less strongly
//! otherwise; no correction is applied for the latter.
//!
//! Ranking never drops claims: every claim is returned, ordered by total
//! score descending with ties broken by ascending claim id.

use std::borrow::Borrow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::facet::{FacetKey, ScoreMap};

/// Slider position at session start and after a custom facet is created.
pub const DEFAULT_WEIGHT: f64 = 0.10;

/// Slider resolution.
pub const WEIGHT_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("facet {facet} has no score for claim {claim_id}")]
    IncompleteScores { facet: FacetKey, claim_id: String },
    #[error("no scores published for facet {0}")]
    MissingFacet(FacetKey),
}

/// Snaps a weight to the nearest slider position in [0, 1].
pub fn quantize_weight(w: f64) -> f64 {
    (w.clamp(0.0, 1.0) / WEIGHT_STEP).round() * WEIGHT_STEP
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    Linear,
    #[default]
    Squared,
}

impl ScoringMode {
    #[inline]
    pub fn term(self, weight: f64, probability: f64) -> f64 {
        match self {
            ScoringMode::Linear => weight * probability,
            ScoringMode::Squared => weight * weight * probability * probability,
        }
    }
}

impl std::str::FromStr for ScoringMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Self::Linear),
            "squared" => Ok(Self::Squared),
            other => Err(format!("unknown scoring mode {other:?} (expected linear or squared)")),
        }
    }
}

fn check_unit(what: &str, key: &FacetKey, v: f64) -> Result<(), RankError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(RankError::InvalidInput(format!(
            "{what} for {key} is {v}, outside [0, 1]"
        )))
    }
}

/// Slider weights per active facet.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightProfile {
    weights: BTreeMap<FacetKey, f64>,
}

impl WeightProfile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every key at [`DEFAULT_WEIGHT`].
    pub fn with_defaults(keys: impl IntoIterator<Item = FacetKey>) -> Self {
        Self {
            weights: keys.into_iter().map(|k| (k, DEFAULT_WEIGHT)).collect(),
        }
    }

    pub fn from_pairs<K: Into<FacetKey>>(pairs: impl IntoIterator<Item = (K, f64)>) -> Result<Self, RankError> {
        let mut profile = Self::new();
        for (k, w) in pairs {
            profile.set(k.into(), w)?;
        }
        Ok(profile)
    }

    /// Returns the previous weight, if any.
    pub fn set(&mut self, key: FacetKey, weight: f64) -> Result<Option<f64>, RankError> {
        check_unit("weight", &key, weight)?;
        Ok(self.weights.insert(key, weight))
    }

    pub fn get(&self, key: &FacetKey) -> Option<f64> {
        self.weights.get(key).copied()
    }

    pub fn remove(&mut self, key: &FacetKey) -> Option<f64> {
        self.weights.remove(key)
    }

    pub fn reset_all(&mut self, value: f64) {
        self.weights.values_mut().for_each(|w| *w = value);
    }

    pub fn keys(&self) -> impl Iterator<Item = &FacetKey> {
        self.weights.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FacetKey, f64)> {
        self.weights.iter().map(|(k, w)| (k, *w))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Facet probabilities for one claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub claim_id: String,
    pub scores: BTreeMap<FacetKey, f64>,
}

impl ScoreVector {
    pub fn new<K: Into<FacetKey>>(
        claim_id: impl Into<String>,
        scores: impl IntoIterator<Item = (K, f64)>,
    ) -> Result<Self, RankError> {
        let scores: BTreeMap<FacetKey, f64> = scores.into_iter().map(|(k, p)| (k.into(), p)).collect();
        for (k, p) in &scores {
            check_unit("probability", k, *p)?;
        }
        Ok(Self {
            claim_id: claim_id.into(),
            scores,
        })
    }
}

/// Total score of one claim; keys of `profile` and `sv` must coincide.
pub fn score(mode: ScoringMode, profile: &WeightProfile, sv: &ScoreVector) -> Result<f64, RankError> {
    if profile.len() != sv.scores.len() || profile.keys().zip(sv.scores.keys()).any(|(a, b)| a != b) {
        return Err(RankError::InvalidInput(format!(
            "weight keys {:?} differ from score keys {:?}",
            profile.keys().map(FacetKey::as_str).collect::<Vec<_>>(),
            sv.scores.keys().map(FacetKey::as_str).collect::<Vec<_>>()
        )));
    }
    Ok(profile
        .iter()
        .zip(sv.scores.values())
        .map(|((_, w), p)| mode.term(w, *p))
        .sum())
}

/// `Σ W_i·P_i`
pub fn score_linear(profile: &WeightProfile, sv: &ScoreVector) -> Result<f64, RankError> {
    score(ScoringMode::Linear, profile, sv)
}

/// `Σ W_i²·P_i²`
pub fn score_squared(profile: &WeightProfile, sv: &ScoreVector) -> Result<f64, RankError> {
    score(ScoringMode::Squared, profile, sv)
}

/// Partial derivatives of one facet's contribution with respect to its weight:
/// `(∂S_squared/∂W, ∂S_linear/∂W) = (2·W·P², P)`.
pub fn sensitivity_gap(weight: f64, probability: f64) -> (f64, f64) {
    (2.0 * weight * probability * probability, probability)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub claim_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub mode: ScoringMode,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.claim_id.as_str())
    }

    /// 0-based position of a claim.
    pub fn position(&self, claim_id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.claim_id == claim_id)
    }

    pub fn page(&self, offset: usize, limit: usize) -> &[RankedEntry] {
        let start = offset.min(self.entries.len());
        let end = start.saturating_add(limit).min(self.entries.len());
        &self.entries[start..end]
    }
}

/// Ranks every claim by its weighted total over the profile's facets.
///
/// Each facet in `profile` needs a score map covering all `claim_ids`; facets
/// present in `scores` but absent from the profile are ignored.
pub fn rank<'a, M: Borrow<ScoreMap>>(
    claim_ids: impl IntoIterator<Item = &'a str>,
    scores: &BTreeMap<FacetKey, M>,
    profile: &WeightProfile,
    mode: ScoringMode,
) -> Result<RankedList, RankError> {
    let active: Vec<(&FacetKey, f64, &ScoreMap)> = profile
        .iter()
        .map(|(k, w)| {
            scores
                .get(k)
                .map(|m| (k, w, m.borrow()))
                .ok_or_else(|| RankError::MissingFacet(k.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut entries = Vec::new();
    for id in claim_ids {
        let mut total = 0.0;
        for (key, weight, map) in &active {
            let p = map.get(id).ok_or_else(|| RankError::IncompleteScores {
                facet: (*key).clone(),
                claim_id: id.to_string(),
            })?;
            total += mode.term(*weight, *p);
        }
        entries.push(RankedEntry {
            claim_id: id.to_string(),
            score: total,
        });
    }
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.claim_id.cmp(&b.claim_id)));
    Ok(RankedList { mode, entries })
}
