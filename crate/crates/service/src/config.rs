use std::path::Path;

use claimtriage::rank::ScoringMode;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Server settings, usually read from a TOML file:
///
/// ```toml
/// scoring_mode = "squared"
/// page_size = 50
/// concurrency_limit = 4
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub scoring_mode: ScoringMode,
    pub page_size: usize,
    /// Provider calls in flight across all facet-scoring jobs.
    pub concurrency_limit: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            scoring_mode: ScoringMode::Squared,
            page_size: 50,
            concurrency_limit: 4,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.page_size == 0 {
            return Err(ServiceError::Config("page_size must be positive".into()));
        }
        if self.concurrency_limit == 0 {
            return Err(ServiceError::Config("concurrency_limit must be positive".into()));
        }
        Ok(())
    }
}
