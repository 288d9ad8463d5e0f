//! TOML configuration for `bench run` and `bench simulate`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use survens::ensemble::EnsembleConfig;
use survens::models::{
    AalenConfig, CoxConfig, DeepSurvConfig, GbcConfig, ModelConfig, ModelKind, RsfConfig, WeibullAftConfig,
};
use survens::simulate::{GeneratorSpec, Metric, ModelSpec, ScenarioSpec};

use crate::error::BenchError;
use crate::ingest::DatasetManifest;
use crate::search::SearchSpace;

/// A dataset read from disk or drawn from a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    File(DatasetManifest),
    Synthetic { name: String, generator: GeneratorSpec },
}

impl DatasetSource {
    pub fn name(&self) -> &str {
        match self {
            DatasetSource::File(m) => &m.name,
            DatasetSource::Synthetic { name, .. } => name,
        }
    }
}

/// Per-model settings used for the unstarred variants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDefaults {
    pub cox: CoxConfig,
    pub gbc: GbcConfig,
    pub rsf: RsfConfig,
    pub weibull_aft: WeibullAftConfig,
    pub aalen: AalenConfig,
    pub deepsurv: DeepSurvConfig,
}

impl ModelDefaults {
    pub fn config(&self, kind: ModelKind) -> ModelConfig {
        match kind {
            ModelKind::Cox => ModelConfig::Cox(self.cox.clone()),
            ModelKind::Gbc => ModelConfig::Gbc(self.gbc.clone()),
            ModelKind::Rsf => ModelConfig::Rsf(self.rsf.clone()),
            ModelKind::WeibullAft => ModelConfig::WeibullAft(self.weibull_aft.clone()),
            ModelKind::Aalen => ModelConfig::Aalen(self.aalen.clone()),
            ModelKind::DeepSurv => ModelConfig::DeepSurv(self.deepsurv.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSettings {
    /// Adds a tuned `name*` variant of every model.
    pub enabled: bool,
    #[serde(flatten)]
    pub space: SearchSpace,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            space: SearchSpace::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleSettings {
    pub enabled: bool,
    /// Folds of the weight-fitting rotation on the training split.
    pub folds: usize,
    /// Variant labels combined; empty means every unstarred model.
    pub components: Vec<String>,
    /// Keep every `trace_stride`-th objective value of each fold's trace.
    pub trace_stride: usize,
    #[serde(flatten)]
    pub optimizer: EnsembleConfig,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            folds: 5,
            components: Vec::new(),
            trace_stride: 100,
            optimizer: EnsembleConfig::default(),
        }
    }
}

fn default_splits() -> usize {
    25
}

fn default_fraction() -> f64 {
    0.8
}

fn default_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Concordance, Metric::Ibs]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_splits")]
    pub n_splits: usize,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    /// Standardize with whole-dataset statistics instead of per-split
    /// training statistics.
    #[serde(default)]
    pub full_data_standardization: bool,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub defaults: ModelDefaults,
    #[serde(default)]
    pub search: SearchSettings,
    #[serde(default)]
    pub ensemble: EnsembleSettings,
    pub datasets: Vec<DatasetSource>,
    /// Report path; relative paths resolve against the config file.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.n_splits == 0 {
            return Err(BenchError::Config("n_splits must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(BenchError::Config("train_fraction must lie in (0, 1)".into()));
        }
        if self.datasets.is_empty() {
            return Err(BenchError::Config("at least one dataset is required".into()));
        }
        if self.models.is_empty() || self.metrics.is_empty() {
            return Err(BenchError::Config("models and metrics must be nonempty".into()));
        }
        let mut names: Vec<&str> = self.datasets.iter().map(DatasetSource::name).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(BenchError::Config("dataset names must be unique".into()));
        }
        for kind in &self.models {
            self.defaults.config(*kind).validate()?;
        }
        if self.search.enabled {
            self.search.space.validate()?;
        }
        if self.ensemble.enabled {
            if self.ensemble.folds < 2 {
                return Err(BenchError::Config("ensemble.folds must be >= 2".into()));
            }
            if self.ensemble.trace_stride == 0 {
                return Err(BenchError::Config("ensemble.trace_stride must be >= 1".into()));
            }
            self.ensemble.optimizer.validate()?;
            let labels = self.ensemble_components();
            if labels.len() < 2 {
                return Err(BenchError::Config("the ensemble needs at least two components".into()));
            }
            for label in &labels {
                if !self.variant_labels().contains(label) {
                    return Err(BenchError::Config(format!("unknown ensemble component `{label}`")));
                }
            }
        }
        Ok(())
    }

    /// Labels of every fitted variant: `name` and, with search, `name*`.
    pub fn variant_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.models.iter().map(|k| k.name().to_string()).collect();
        if self.search.enabled {
            labels.extend(self.models.iter().map(|k| format!("{}*", k.name())));
        }
        labels
    }

    pub fn ensemble_components(&self) -> Vec<String> {
        if self.ensemble.components.is_empty() {
            self.models.iter().map(|k| k.name().to_string()).collect()
        } else {
            self.ensemble.components.clone()
        }
    }
}

fn default_scenario_models() -> Vec<ModelSpec> {
    ModelSpec::defaults()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub scenario: ScenarioSpec,
    pub generator: GeneratorSpec,
    #[serde(default = "default_scenario_models")]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl SimulateConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.scenario.validate()?;
        for m in &cfg.models {
            m.config.validate()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml(&text)
    }
}
