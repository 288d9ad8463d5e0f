//! Sweep scenarios: vary one of sample count, feature count or censored
//! fraction over a grid, fit every model on fresh replications and collect
//! mean and standard deviation of the test-split scores.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate, GeneratorKind, GeneratorSpec, SimulateError};
use crate::data::Dataset;
use crate::models::{fit, ModelConfig};
use crate::scoring::{concordance_index, default_horizon, integrated_brier_score, km_censoring};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Samples,
    Features,
    Censorship,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Concordance,
    Ibs,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Concordance => "concordance",
            Metric::Ibs => "ibs",
        }
    }

    /// Whether larger values are better.
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Concordance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedSettings {
    pub n: usize,
    pub d: usize,
    pub censor: f64,
}

impl Default for FixedSettings {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 12,
            censor: 0.5,
        }
    }
}

fn default_replications() -> usize {
    100
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Concordance, Metric::Ibs]
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub axis: Axis,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub fixed: FixedSettings,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SimulateError> {
        let ascending = self.grid.windows(2).all(|w| w[0] < w[1]);
        let descending = self.grid.windows(2).all(|w| w[0] > w[1]);
        if self.grid.is_empty() || !(ascending || descending) {
            return Err(SimulateError::InvalidSpec("grid must be nonempty and strictly monotone".into()));
        }
        if self.replications == 0 {
            return Err(SimulateError::InvalidSpec("replications must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(SimulateError::InvalidSpec("train_fraction must lie in (0, 1)".into()));
        }
        let integral = |v: f64| v >= 0.0 && v.fract() == 0.0;
        match self.axis {
            Axis::Samples | Axis::Features if !self.grid.iter().all(|&v| integral(v)) => Err(
                SimulateError::InvalidSpec("sample and feature grids must hold whole numbers".into()),
            ),
            Axis::Censorship if !self.grid.iter().all(|v| (0.0..1.0).contains(v)) => Err(
                SimulateError::InvalidSpec("censorship grid must lie in [0, 1)".into()),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub label: String,
    pub config: ModelConfig,
}

impl ModelSpec {
    pub fn new(label: impl Into<String>, config: ModelConfig) -> Self {
        Self {
            label: label.into(),
            config,
        }
    }

    /// One entry per model family with default settings.
    pub fn defaults() -> Vec<Self> {
        crate::models::ModelKind::ALL
            .iter()
            .map(|k| Self::new(k.name(), k.default_config()))
            .collect()
    }
}

/// Serializes NaN as `null` and reads `null` back as NaN, so summaries of
/// fully failed cells survive a JSON round trip.
pub mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCell {
    pub grid_value: f64,
    pub model: String,
    pub metric: Metric,
    #[serde(with = "nan_as_null")]
    pub mean: f64,
    #[serde(with = "nan_as_null")]
    pub sd: f64,
    /// Replications that contributed.
    pub replications: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub grid_value: f64,
    pub replication: usize,
    pub model: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub axis: Axis,
    pub generator: GeneratorKind,
    pub grid: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub cells: Vec<ScenarioCell>,
    pub failures: Vec<FailureRecord>,
}

impl ScenarioResult {
    pub fn cell(&self, grid_value: f64, model: &str, metric: Metric) -> Option<&ScenarioCell> {
        self.cells
            .iter()
            .find(|c| c.grid_value == grid_value && c.model == model && c.metric == metric)
    }

    /// Means of one model and metric along the grid.
    pub fn series(&self, model: &str, metric: Metric) -> Vec<f64> {
        self.grid
            .iter()
            .map(|&g| self.cell(g, model, metric).map_or(f64::NAN, |c| c.mean))
            .collect()
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `stream` of replication `replication` under `master`.
///
/// Replication `r` generates its data with `derive_seed(master, r, 0)`, splits
/// with stream 1 and seeds the model fitted at position `m` with stream
/// `2 + m`. The seed does not depend on the grid point, so replications are
/// paired across the sweep.
pub fn derive_seed(master: u64, replication: u64, stream: u64) -> u64 {
    mix(mix(master ^ mix(replication)) ^ stream)
}

type ReplicationOutcome = Vec<Result<Vec<f64>, String>>;

pub fn run_scenario(
    scenario: &ScenarioSpec,
    generator: &GeneratorSpec,
    models: &[ModelSpec],
) -> Result<ScenarioResult, SimulateError> {
    scenario.validate()?;
    let jobs: Vec<(usize, usize)> = (0..scenario.grid.len())
        .flat_map(|g| (0..scenario.replications).map(move |r| (g, r)))
        .collect();
    let outcomes: Vec<ReplicationOutcome> = jobs
        .par_iter()
        .map(|&(g, r)| run_replication(scenario, generator, models, scenario.grid[g], r))
        .collect();

    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for (g, &grid_value) in scenario.grid.iter().enumerate() {
        let block = &outcomes[g * scenario.replications..(g + 1) * scenario.replications];
        for (m, spec) in models.iter().enumerate() {
            let mut ok: Vec<&Vec<f64>> = Vec::new();
            for (r, outcome) in block.iter().enumerate() {
                match &outcome[m] {
                    Ok(scores) => ok.push(scores),
                    Err(error) => {
                        log::warn!(
                            "{} at {:?} = {grid_value}, replication {r}: {error}; excluded",
                            spec.label,
                            scenario.axis
                        );
                        failures.push(FailureRecord {
                            grid_value,
                            replication: r,
                            model: spec.label.clone(),
                            error: error.clone(),
                        });
                    }
                }
            }
            for (k, &metric) in scenario.metrics.iter().enumerate() {
                let values: Vec<f64> = ok.iter().map(|s| s[k]).collect();
                let (mean, sd) = mean_sd(&values);
                cells.push(ScenarioCell {
                    grid_value,
                    model: spec.label.clone(),
                    metric,
                    mean,
                    sd,
                    replications: values.len(),
                    failed: scenario.replications - values.len(),
                });
            }
        }
    }
    Ok(ScenarioResult {
        axis: scenario.axis,
        generator: generator.kind,
        grid: scenario.grid.clone(),
        replications: scenario.replications,
        seed: scenario.seed,
        cells,
        failures,
    })
}

/// Mean and sample standard deviation; NaN when empty.
pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn run_replication(
    scenario: &ScenarioSpec,
    generator: &GeneratorSpec,
    models: &[ModelSpec],
    grid_value: f64,
    replication: usize,
) -> ReplicationOutcome {
    let fail_all = |e: String| vec![Err(e); models.len()];
    let r = replication as u64;
    let mut spec = generator.clone();
    spec.n = scenario.fixed.n;
    spec.d = scenario.fixed.d;
    spec.censor_target = scenario.fixed.censor;
    spec.seed = derive_seed(scenario.seed, r, 0);
    let mut keep_features = None;
    match scenario.axis {
        Axis::Samples => spec.n = grid_value as usize,
        Axis::Censorship => spec.censor_target = grid_value,
        Axis::Features => {
            // generate the widest design once per replication and hide
            // trailing features
            let widest = scenario.grid.iter().copied().fold(0.0, f64::max) as usize;
            spec.d = widest;
            keep_features = Some(grid_value as usize);
        }
    }
    let simulated = match generate(&spec) {
        Ok(s) => s,
        Err(e) => return fail_all(format!("generation failed: {e}")),
    };
    let data = match keep_features {
        Some(k) => simulated.dataset.with_leading_features(k),
        None => simulated.dataset,
    };
    let (train_idx, test_idx) = data.stratified_split(scenario.train_fraction, derive_seed(scenario.seed, r, 1));
    let (train, test) = match (data.subset(&train_idx), data.subset(&test_idx)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return fail_all(format!("split failed: {e}")),
    };
    let (shift, scale) = train.column_moments();
    let train = train.standardized_with(&shift, &scale);
    let test = test.standardized_with(&shift, &scale);
    models
        .iter()
        .enumerate()
        .map(|(m, model)| {
            let config = model.config.with_seed(derive_seed(scenario.seed, r, 2 + m as u64));
            score_model(&config, &train, &test, &scenario.metrics)
        })
        .collect()
}

/// Fits on `train` and scores on `test`; IBS uses the test split's own
/// censoring estimate and horizon.
pub fn score_model(
    config: &ModelConfig,
    train: &Dataset,
    test: &Dataset,
    metrics: &[Metric],
) -> Result<Vec<f64>, String> {
    let model = fit(train, config).map_err(|e| format!("fit failed: {e}"))?;
    metrics
        .iter()
        .map(|metric| match metric {
            Metric::Concordance => {
                let risks = model.predict_risk_batch(test).map_err(|e| e.to_string())?;
                concordance_index(&risks, test)
                    .map(|s| s.value)
                    .map_err(|e| e.to_string())
            }
            Metric::Ibs => {
                let curves = model.predict_survival_batch(test).map_err(|e| e.to_string())?;
                integrated_brier_score(&curves, test, default_horizon(test), &km_censoring(test))
                    .map(|s| s.value)
                    .map_err(|e| e.to_string())
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CoxConfig, ModelKind};

    #[test]
    fn seeds_differ_across_streams_and_replications() {
        let a = derive_seed(7, 0, 0);
        assert_ne!(a, derive_seed(7, 0, 1));
        assert_ne!(a, derive_seed(7, 1, 0));
        assert_ne!(a, derive_seed(8, 0, 0));
        assert_eq!(a, derive_seed(7, 0, 0));
    }

    #[test]
    fn small_scenario_is_deterministic_and_complete() {
        let scenario = ScenarioSpec {
            axis: Axis::Samples,
            grid: vec![60.0, 120.0],
            fixed: FixedSettings {
                n: 0,
                d: 3,
                censor: 0.3,
            },
            replications: 3,
            metrics: default_metrics(),
            train_fraction: 0.8,
            seed: 5,
        };
        let gen = GeneratorSpec::new(GeneratorKind::CoxStyle, 2, 3, 0.3, 0);
        let models = vec![
            ModelSpec::new("cox", ModelConfig::Cox(CoxConfig::default())),
            ModelSpec::new("aalen", ModelKind::Aalen.default_config()),
        ];
        let a = run_scenario(&scenario, &gen, &models).unwrap();
        let b = run_scenario(&scenario, &gen, &models).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 2 * 2 * 2);
        for c in &a.cells {
            assert_eq!(c.replications + c.failed, 3);
        }
    }
}
