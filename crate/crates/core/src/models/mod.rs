//! The six survival predictors. Every fitter returns a [`FittedModel`]
//! exposing per-subject survival curves and scalar mortality risks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, RiskScore, SurvivalCurve};

pub mod aalen;
pub mod cox;
pub mod deepsurv;
pub mod gbc;
pub mod partial;
pub mod rsf;
pub mod tree;
pub mod weibull;

pub use aalen::{fit_aalen, AalenConfig, AalenModel};
pub use cox::{fit_cox, CoxConfig, CoxModel};
pub use deepsurv::{fit_deepsurv, DeepSurvConfig, DeepSurvModel};
pub use gbc::{fit_gbc, GbcConfig, GbcModel};
pub use partial::BaselineHazard;
pub use rsf::{fit_rsf, RsfConfig, RsfModel};
pub use weibull::{fit_weibull_aft, WeibullAftConfig, WeibullAftModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("did not converge within {max_iter} iterations")]
    NonConvergence { max_iter: usize },
    #[error("monotone likelihood: coefficient {coefficient} diverges")]
    SeparationDetected { coefficient: usize },
    #[error("at-risk design matrix is singular at t = {time}")]
    SingularDesign { time: f64 },
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("row {row}: observed time {time} must be > 0")]
    NonPositiveTime { row: usize, time: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} covariates, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training data has no covariates")]
    NoCovariates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cox,
    Gbc,
    Rsf,
    WeibullAft,
    Aalen,
    #[serde(rename = "deepsurv")]
    DeepSurv,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Cox,
        ModelKind::Gbc,
        ModelKind::Rsf,
        ModelKind::WeibullAft,
        ModelKind::Aalen,
        ModelKind::DeepSurv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cox => "cox",
            ModelKind::Gbc => "gbc",
            ModelKind::Rsf => "rsf",
            ModelKind::WeibullAft => "weibull_aft",
            ModelKind::Aalen => "aalen",
            ModelKind::DeepSurv => "deepsurv",
        }
    }

    pub fn default_config(self) -> ModelConfig {
        match self {
            ModelKind::Cox => ModelConfig::Cox(CoxConfig::default()),
            ModelKind::Gbc => ModelConfig::Gbc(GbcConfig::default()),
            ModelKind::Rsf => ModelConfig::Rsf(RsfConfig::default()),
            ModelKind::WeibullAft => ModelConfig::WeibullAft(WeibullAftConfig::default()),
            ModelKind::Aalen => ModelConfig::Aalen(AalenConfig::default()),
            ModelKind::DeepSurv => ModelConfig::DeepSurv(DeepSurvConfig::default()),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown model kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Cox(CoxConfig),
    Gbc(GbcConfig),
    Rsf(RsfConfig),
    WeibullAft(WeibullAftConfig),
    Aalen(AalenConfig),
    #[serde(rename = "deepsurv")]
    DeepSurv(DeepSurvConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Cox(_) => ModelKind::Cox,
            ModelConfig::Gbc(_) => ModelKind::Gbc,
            ModelConfig::Rsf(_) => ModelKind::Rsf,
            ModelConfig::WeibullAft(_) => ModelKind::WeibullAft,
            ModelConfig::Aalen(_) => ModelKind::Aalen,
            ModelConfig::DeepSurv(_) => ModelKind::DeepSurv,
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        match self {
            ModelConfig::Cox(c) => c.validate(),
            ModelConfig::Gbc(c) => c.validate(),
            ModelConfig::Rsf(c) => c.validate(),
            ModelConfig::WeibullAft(c) => c.validate(),
            ModelConfig::Aalen(c) => c.validate(),
            ModelConfig::DeepSurv(c) => c.validate(),
        }
    }

    /// Replaces the seed of stochastic fitters; a no-op for the others.
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            ModelConfig::Rsf(c) => ModelConfig::Rsf(RsfConfig { seed, ..c.clone() }),
            ModelConfig::DeepSurv(c) => ModelConfig::DeepSurv(DeepSurvConfig { seed, ..c.clone() }),
            other => other.clone(),
        }
    }
}

/// Common prediction contract.
pub trait SurvivalModel {
    /// Covariate dimension seen at fit time.
    fn dim(&self) -> usize;

    fn predict_survival(&self, x: &[f64]) -> Result<SurvivalCurve, FitError>;

    fn predict_risk(&self, x: &[f64]) -> Result<RiskScore, FitError>;
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<(), FitError> {
    if x.len() != expected {
        return Err(FitError::DimensionMismatch {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Cox(CoxModel),
    Gbc(GbcModel),
    Rsf(RsfModel),
    WeibullAft(WeibullAftModel),
    Aalen(AalenModel),
    #[serde(rename = "deepsurv")]
    DeepSurv(DeepSurvModel),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Cox(_) => ModelKind::Cox,
            FittedModel::Gbc(_) => ModelKind::Gbc,
            FittedModel::Rsf(_) => ModelKind::Rsf,
            FittedModel::WeibullAft(_) => ModelKind::WeibullAft,
            FittedModel::Aalen(_) => ModelKind::Aalen,
            FittedModel::DeepSurv(_) => ModelKind::DeepSurv,
        }
    }

    fn inner(&self) -> &(dyn SurvivalModel + Sync) {
        match self {
            FittedModel::Cox(m) => m,
            FittedModel::Gbc(m) => m,
            FittedModel::Rsf(m) => m,
            FittedModel::WeibullAft(m) => m,
            FittedModel::Aalen(m) => m,
            FittedModel::DeepSurv(m) => m,
        }
    }

    /// Event-time grid the predicted curves live on.
    pub fn training_grid(&self) -> &[f64] {
        match self {
            FittedModel::Cox(m) => &m.baseline.times,
            FittedModel::Gbc(m) => &m.baseline.times,
            FittedModel::Rsf(m) => &m.grid,
            FittedModel::WeibullAft(m) => &m.grid,
            FittedModel::Aalen(m) => &m.times,
            FittedModel::DeepSurv(m) => &m.baseline.times,
        }
    }

    pub fn predict_survival_batch(&self, dataset: &Dataset) -> Result<Vec<SurvivalCurve>, FitError> {
        dataset
            .subjects()
            .iter()
            .map(|s| self.predict_survival(&s.covariates))
            .collect()
    }

    pub fn predict_risk_batch(&self, dataset: &Dataset) -> Result<Vec<RiskScore>, FitError> {
        dataset
            .subjects()
            .iter()
            .map(|s| self.predict_risk(&s.covariates))
            .collect()
    }
}

impl SurvivalModel for FittedModel {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn predict_survival(&self, x: &[f64]) -> Result<SurvivalCurve, FitError> {
        self.inner().predict_survival(x)
    }

    fn predict_risk(&self, x: &[f64]) -> Result<RiskScore, FitError> {
        self.inner().predict_risk(x)
    }
}

/// Fits whichever model `config` describes.
pub fn fit(dataset: &Dataset, config: &ModelConfig) -> Result<FittedModel, FitError> {
    Ok(match config {
        ModelConfig::Cox(c) => FittedModel::Cox(fit_cox(dataset, c)?),
        ModelConfig::Gbc(c) => FittedModel::Gbc(fit_gbc(dataset, c)?),
        ModelConfig::Rsf(c) => FittedModel::Rsf(fit_rsf(dataset, c)?),
        ModelConfig::WeibullAft(c) => FittedModel::WeibullAft(fit_weibull_aft(dataset, c)?),
        ModelConfig::Aalen(c) => FittedModel::Aalen(fit_aalen(dataset, c)?),
        ModelConfig::DeepSurv(c) => FittedModel::DeepSurv(fit_deepsurv(dataset, c)?),
    })
}

/// Row-major covariate matrix.
pub(crate) fn design(dataset: &Dataset) -> Vec<Vec<f64>> {
    dataset.subjects().iter().map(|s| s.covariates.clone()).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
