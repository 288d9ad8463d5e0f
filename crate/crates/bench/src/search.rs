//! Randomized hyperparameter search scored by stratified k-fold
//! cross-validation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use survens::data::Dataset;
use survens::models::{
    AalenConfig, CoxConfig, DeepSurvConfig, GbcConfig, ModelConfig, ModelKind, RsfConfig, WeibullAftConfig,
};
use survens::simulate::{derive_seed, score_model, Metric};

use crate::error::BenchError;
use crate::ingest::{fold_split, stratified_folds};

/// Log-uniform real range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRange {
    pub lo: f64,
    pub hi: f64,
}

impl LogRange {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        (rng.gen_range(self.lo.ln()..=self.hi.ln())).exp()
    }

    fn valid(&self) -> bool {
        self.lo > 0.0 && self.hi >= self.lo && self.hi.is_finite()
    }
}

/// Uniform real range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloatRange {
    pub lo: f64,
    pub hi: f64,
}

impl FloatRange {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        rng.gen_range(self.lo..=self.hi)
    }

    fn valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.hi >= self.lo
    }
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntRange {
    pub lo: usize,
    pub hi: usize,
}

impl IntRange {
    pub fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(self.lo..=self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxSpace {
    pub ridge_alpha: LogRange,
}

impl Default for CoxSpace {
    fn default() -> Self {
        Self {
            ridge_alpha: LogRange::new(1e-4, 10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbcSpace {
    pub n_estimators: IntRange,
    pub learning_rate: LogRange,
    pub max_depth: IntRange,
    pub min_samples_leaf: IntRange,
}

impl Default for GbcSpace {
    fn default() -> Self {
        Self {
            n_estimators: IntRange::new(50, 200),
            learning_rate: LogRange::new(0.01, 0.3),
            max_depth: IntRange::new(1, 5),
            min_samples_leaf: IntRange::new(1, 20),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RsfSpace {
    pub n_trees: IntRange,
    /// Fraction of the features tried per node.
    pub max_features: FloatRange,
    pub min_samples_leaf: IntRange,
    pub max_depth: IntRange,
}

impl Default for RsfSpace {
    fn default() -> Self {
        Self {
            n_trees: IntRange::new(50, 200),
            max_features: FloatRange::new(0.2, 1.0),
            min_samples_leaf: IntRange::new(3, 30),
            max_depth: IntRange::new(3, 20),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeibullSpace {
    pub penalizer: LogRange,
    pub l1_ratio: FloatRange,
}

impl Default for WeibullSpace {
    fn default() -> Self {
        Self {
            penalizer: LogRange::new(1e-4, 1.0),
            l1_ratio: FloatRange::new(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AalenSpace {
    pub penalizer: LogRange,
}

impl Default for AalenSpace {
    fn default() -> Self {
        Self {
            penalizer: LogRange::new(1e-3, 100.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeepSurvSpace {
    pub l2: LogRange,
    pub learning_rate: LogRange,
    pub epochs: IntRange,
    /// Candidate hidden-layer width lists.
    pub hidden: Vec<Vec<usize>>,
}

impl Default for DeepSurvSpace {
    fn default() -> Self {
        Self {
            l2: LogRange::new(1e-5, 1e-2),
            learning_rate: LogRange::new(1e-4, 1e-2),
            epochs: IntRange::new(100, 500),
            hidden: vec![vec![60, 10], vec![32], vec![64, 32]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    /// Configurations drawn per model.
    pub budget: usize,
    pub folds: usize,
    pub metric: Metric,
    pub cox: CoxSpace,
    pub gbc: GbcSpace,
    pub rsf: RsfSpace,
    pub weibull_aft: WeibullSpace,
    pub aalen: AalenSpace,
    pub deepsurv: DeepSurvSpace,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            budget: 25,
            folds: 5,
            metric: Metric::Ibs,
            cox: CoxSpace::default(),
            gbc: GbcSpace::default(),
            rsf: RsfSpace::default(),
            weibull_aft: WeibullSpace::default(),
            aalen: AalenSpace::default(),
            deepsurv: DeepSurvSpace::default(),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |what: &str| Err(BenchError::Config(format!("search space: invalid {what}")));
        if self.budget == 0 {
            return bad("budget (must be >= 1)");
        }
        if self.folds < 2 {
            return bad("folds (must be >= 2)");
        }
        let logs = [
            self.cox.ridge_alpha,
            self.gbc.learning_rate,
            self.weibull_aft.penalizer,
            self.aalen.penalizer,
            self.deepsurv.l2,
            self.deepsurv.learning_rate,
        ];
        if logs.iter().any(|r| !r.valid()) {
            return bad("log range (need 0 < lo <= hi)");
        }
        if !self.weibull_aft.l1_ratio.valid()
            || self.weibull_aft.l1_ratio.lo < 0.0
            || self.weibull_aft.l1_ratio.hi > 1.0
        {
            return bad("l1_ratio range");
        }
        if !self.rsf.max_features.valid() || self.rsf.max_features.lo <= 0.0 || self.rsf.max_features.hi > 1.0 {
            return bad("max_features fraction range");
        }
        let ints = [
            self.gbc.n_estimators,
            self.gbc.max_depth,
            self.gbc.min_samples_leaf,
            self.rsf.n_trees,
            self.rsf.min_samples_leaf,
            self.rsf.max_depth,
            self.deepsurv.epochs,
        ];
        if ints.iter().any(|r| r.lo == 0 || r.hi < r.lo) {
            return bad("integer range (need 1 <= lo <= hi)");
        }
        if self.deepsurv.hidden.is_empty() || self.deepsurv.hidden.iter().flatten().any(|&w| w == 0) {
            return bad("hidden widths");
        }
        Ok(())
    }

    /// Draws one configuration of `kind` for data with `d` features.
    pub fn sample(&self, kind: ModelKind, d: usize, rng: &mut ChaCha8Rng) -> ModelConfig {
        match kind {
            ModelKind::Cox => ModelConfig::Cox(CoxConfig {
                ridge_alpha: self.cox.ridge_alpha.sample(rng),
                ..CoxConfig::default()
            }),
            ModelKind::Gbc => ModelConfig::Gbc(GbcConfig {
                n_estimators: self.gbc.n_estimators.sample(rng),
                learning_rate: self.gbc.learning_rate.sample(rng),
                max_depth: self.gbc.max_depth.sample(rng),
                min_samples_leaf: self.gbc.min_samples_leaf.sample(rng),
            }),
            ModelKind::Rsf => {
                let frac = self.rsf.max_features.sample(rng);
                ModelConfig::Rsf(RsfConfig {
                    n_trees: self.rsf.n_trees.sample(rng),
                    max_features: Some(((frac * d as f64).ceil() as usize).max(1)),
                    min_samples_leaf: self.rsf.min_samples_leaf.sample(rng),
                    max_depth: Some(self.rsf.max_depth.sample(rng)),
                    ..RsfConfig::default()
                })
            }
            ModelKind::WeibullAft => ModelConfig::WeibullAft(WeibullAftConfig {
                penalizer: self.weibull_aft.penalizer.sample(rng),
                l1_ratio: self.weibull_aft.l1_ratio.sample(rng),
                ..WeibullAftConfig::default()
            }),
            ModelKind::Aalen => ModelConfig::Aalen(AalenConfig {
                penalizer: self.aalen.penalizer.sample(rng),
            }),
            ModelKind::DeepSurv => {
                let pick = rng.gen_range(0..self.deepsurv.hidden.len());
                ModelConfig::DeepSurv(DeepSurvConfig {
                    hidden: self.deepsurv.hidden[pick].clone(),
                    l2: self.deepsurv.l2.sample(rng),
                    learning_rate: self.deepsurv.learning_rate.sample(rng),
                    epochs: self.deepsurv.epochs.sample(rng),
                    ..DeepSurvConfig::default()
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: ModelConfig,
    pub best_score: f64,
    /// Cross-validated score of every sampled configuration, in draw order.
    pub scores: Vec<f64>,
}

fn worst(metric: Metric) -> f64 {
    if metric.higher_is_better() {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    }
}

fn better(metric: Metric, a: f64, b: f64) -> bool {
    if metric.higher_is_better() {
        a > b
    } else {
        a < b
    }
}

/// Mean held-out score of `config` over stratified folds.
pub fn cross_validate(
    config: &ModelConfig,
    train: &Dataset,
    metric: Metric,
    folds: usize,
    seed: u64,
) -> f64 {
    let labels = stratified_folds(train, folds, seed);
    let mut total = 0.0;
    for f in 0..folds {
        let score = fold_split(train, &labels, f)
            .map_err(|e| e.to_string())
            .and_then(|(fit_part, held)| score_model(config, &fit_part, &held, &[metric]));
        match score {
            Ok(s) if s[0].is_finite() => total += s[0],
            Ok(_) | Err(_) => return worst(metric),
        }
    }
    total / folds as f64
}

/// Samples `space.budget` configurations and keeps the best by k-fold CV;
/// ties keep the earlier draw and failed fits score worst.
pub fn random_search(
    kind: ModelKind,
    space: &SearchSpace,
    train: &Dataset,
    seed: u64,
) -> Result<SearchOutcome, BenchError> {
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs: Vec<ModelConfig> = (0..space.budget)
        .map(|b| space.sample(kind, train.dim(), &mut rng).with_seed(derive_seed(seed, b as u64, 2)))
        .collect();
    evaluate_candidates(configs, space.metric, space.folds, train, seed)
}

/// Cross-validates a fixed candidate list on shared folds.
pub fn evaluate_candidates(
    configs: Vec<ModelConfig>,
    metric: Metric,
    folds: usize,
    train: &Dataset,
    seed: u64,
) -> Result<SearchOutcome, BenchError> {
    if configs.is_empty() {
        return Err(BenchError::Config("no candidate configurations".into()));
    }
    let fold_seed = derive_seed(seed, 0, 1);
    let scores: Vec<f64> = configs
        .iter()
        .map(|c| cross_validate(c, train, metric, folds, fold_seed))
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if better(metric, s, scores[best]) {
            best = i;
        }
    }
    Ok(SearchOutcome {
        best: configs[best].clone(),
        best_score: scores[best],
        scores,
    })
}
