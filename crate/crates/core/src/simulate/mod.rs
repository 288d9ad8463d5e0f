//! Synthetic right-censored data: a proportional-hazards generator, a
//! Weibull accelerated-failure-time generator and a three-mode competing
//! Weibull generator, each with uniform censoring calibrated to a target
//! censored fraction.

mod scenario;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, Subject};

pub use scenario::{
    derive_seed, nan_as_null, run_scenario, score_model, Axis, FailureRecord, FixedSettings, Metric, ModelSpec, ScenarioCell,
    ScenarioResult, ScenarioSpec,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulateError {
    #[error("multimode generator needs at least 3 features, got {d}")]
    InsufficientFeatures { d: usize },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    CoxStyle,
    AftStyle,
    MultimodeWeibull,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::CoxStyle => "cox_style",
            GeneratorKind::AftStyle => "aft_style",
            GeneratorKind::MultimodeWeibull => "multimode_weibull",
        }
    }
}

/// Baseline hazard of the proportional-hazards generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Baseline {
    /// `H0(t) = (t / scale)^shape`.
    Weibull { shape: f64, scale: f64 },
    /// `H0(t) = scale * (exp(rate t) - 1)`.
    Gompertz { rate: f64, scale: f64 },
}

impl Default for Baseline {
    fn default() -> Self {
        Baseline::Weibull {
            shape: 1.5,
            scale: 1.0,
        }
    }
}

impl Baseline {
    /// Inverse of `H0`.
    pub fn inverse_cumhaz(&self, h: f64) -> f64 {
        match *self {
            Baseline::Weibull { shape, scale } => scale * h.powf(1.0 / shape),
            Baseline::Gompertz { rate, scale } => (h / scale).ln_1p() / rate,
        }
    }

    pub fn cumhaz(&self, t: f64) -> f64 {
        match *self {
            Baseline::Weibull { shape, scale } => (t / scale).powf(shape),
            Baseline::Gompertz { rate, scale } => scale * (rate * t).exp_m1(),
        }
    }

    fn validate(&self) -> Result<(), SimulateError> {
        let (a, b) = match *self {
            Baseline::Weibull { shape, scale } => (shape, scale),
            Baseline::Gompertz { rate, scale } => (rate, scale),
        };
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(SimulateError::InvalidSpec("baseline parameters must be > 0".into()));
        }
        Ok(())
    }
}

/// Generator-specific ground truth. Unset coefficients are drawn from
/// `N(0, coefficient_sd^2)` with the generator seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Truth {
    pub coefficients: Option<Vec<f64>>,
    pub coefficient_sd: f64,
    /// AFT log-scale intercept.
    pub intercept: f64,
    /// AFT Weibull shape.
    pub shape: f64,
    pub baseline: Baseline,
}

impl Default for Truth {
    fn default() -> Self {
        Self {
            coefficients: None,
            coefficient_sd: 0.5,
            intercept: 0.0,
            shape: 2.0,
            baseline: Baseline::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default)]
    pub censor_target: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub truth: Truth,
}

fn default_n() -> usize {
    1000
}

fn default_d() -> usize {
    12
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, n: usize, d: usize, censor_target: f64, seed: u64) -> Self {
        Self {
            kind,
            n,
            d,
            censor_target,
            seed,
            truth: Truth::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        if self.n < 2 {
            return Err(SimulateError::InvalidSpec("n must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.censor_target) {
            return Err(SimulateError::InvalidSpec("censor_target must lie in [0, 1)".into()));
        }
        if !(self.truth.coefficient_sd >= 0.0 && self.truth.coefficient_sd.is_finite()) {
            return Err(SimulateError::InvalidSpec("coefficient_sd must be >= 0".into()));
        }
        if !(self.truth.shape > 0.0 && self.truth.shape.is_finite()) {
            return Err(SimulateError::InvalidSpec("shape must be > 0".into()));
        }
        self.truth.baseline.validate()?;
        if let Some(c) = &self.truth.coefficients {
            let expected = self.d;
            if c.len() != expected {
                return Err(SimulateError::InvalidSpec(format!(
                    "expected {expected} coefficients, got {}",
                    c.len()
                )));
            }
        }
        if self.kind == GeneratorKind::MultimodeWeibull && self.d < 3 {
            return Err(SimulateError::InsufficientFeatures { d: self.d });
        }
        Ok(())
    }
}

/// What was actually used to generate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub kind: GeneratorKind,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub shape: f64,
    pub baseline: Option<Baseline>,
    /// Multimode only: per-mode shape, base log-scale and feature block.
    pub modes: Vec<ModeRecord>,
    /// Upper end `L` of the censoring distribution `U(0, L)`; `None` when
    /// uncensored.
    pub censor_length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub shape: f64,
    pub log_scale: f64,
    pub features: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulated {
    pub dataset: Dataset,
    pub truth: TruthRecord,
    /// Uncensored event times `T_i`.
    pub event_times: Vec<f64>,
    /// Multimode only: the three candidate times per subject.
    pub mode_times: Vec<[f64; 3]>,
}

pub fn generate(spec: &GeneratorSpec) -> Result<Simulated, SimulateError> {
    match spec.kind {
        GeneratorKind::CoxStyle => gen_cox_style(spec),
        GeneratorKind::AftStyle => gen_aft_style(spec),
        GeneratorKind::MultimodeWeibull => gen_multimode_weibull(spec),
    }
}

fn coefficients(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match &spec.truth.coefficients {
        Some(c) => c.clone(),
        None => {
            let normal = Normal::new(0.0, spec.truth.coefficient_sd).expect("valid sd");
            (0..spec.d).map(|_| normal.sample(rng)).collect()
        }
    }
}

fn standard_normal_rows(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("valid sd");
    (0..n).map(|_| (0..d).map(|_| normal.sample(rng)).collect()).collect()
}

/// `E ~ Exp(1)` by inversion.
fn unit_exponential(rng: &mut ChaCha8Rng) -> f64 {
    -(1.0 - rng.gen::<f64>()).ln()
}

fn feature_names(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|j| format!("{prefix}{j}")).collect()
}

/// Covariates standard normal, `T = H0^{-1}(E exp(-beta.x))` with `E ~ Exp(1)`.
pub fn gen_cox_style(spec: &GeneratorSpec) -> Result<Simulated, SimulateError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let beta = coefficients(spec, &mut rng);
    let x = standard_normal_rows(spec.n, spec.d, &mut rng);
    let baseline = spec.truth.baseline;
    let times: Vec<f64> = x
        .iter()
        .map(|xi| {
            let eta: f64 = xi.iter().zip(&beta).map(|(a, b)| a * b).sum();
            baseline.inverse_cumhaz(unit_exponential(&mut rng) * (-eta).exp())
        })
        .collect();
    let (dataset, censor_length) = censor(x, &times, spec.censor_target, &mut rng, feature_names("x", spec.d))?;
    Ok(Simulated {
        dataset,
        truth: TruthRecord {
            kind: spec.kind,
            coefficients: beta,
            intercept: 0.0,
            shape: 0.0,
            baseline: Some(baseline),
            modes: Vec::new(),
            censor_length,
        },
        event_times: times,
        mode_times: Vec::new(),
    })
}

/// Covariates standard normal, `T ~ Weibull(shape, exp(b0 + beta.x))`.
pub fn gen_aft_style(spec: &GeneratorSpec) -> Result<Simulated, SimulateError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let beta = coefficients(spec, &mut rng);
    let x = standard_normal_rows(spec.n, spec.d, &mut rng);
    let shape = spec.truth.shape;
    let b0 = spec.truth.intercept;
    let times: Vec<f64> = x
        .iter()
        .map(|xi| {
            let eta: f64 = b0 + xi.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
            eta.exp() * unit_exponential(&mut rng).powf(1.0 / shape)
        })
        .collect();
    let (dataset, censor_length) = censor(x, &times, spec.censor_target, &mut rng, feature_names("x", spec.d))?;
    Ok(Simulated {
        dataset,
        truth: TruthRecord {
            kind: spec.kind,
            coefficients: beta,
            intercept: b0,
            shape,
            baseline: None,
            modes: Vec::new(),
            censor_length,
        },
        event_times: times,
        mode_times: Vec::new(),
    })
}

/// Shapes of the three failure modes: one decreasing hazard and two
/// increasing ones.
pub const MODE_SHAPES: [f64; 3] = [0.003, 3.0, 6.0];

/// Smallest reported event time.
pub const MIN_TIME: f64 = 1e-3;

/// Share of subjects the decreasing-hazard mode should fail before `t = 1`
/// at zero covariate effect.
const EARLY_FAILURE_SHARE: f64 = 0.1;

/// Base log-scale of a Weibull mode with `P(T < 1) = p`.
fn log_scale_for_early_share(shape: f64, p: f64) -> f64 {
    -(-(1.0 - p).ln()).ln() / shape
}

/// Family of feature `j`: round-robin over `N(1, 0.3)`, `U(0, 1)` and a
/// three-level categorical.
fn draw_feature(j: usize, rng: &mut ChaCha8Rng) -> f64 {
    match j % 3 {
        0 => 1.0 + 0.3 * Normal::new(0.0, 1.0).expect("valid sd").sample(rng),
        1 => rng.gen::<f64>(),
        _ => rng.gen_range(0..3) as f64,
    }
}

fn feature_mean(j: usize) -> f64 {
    match j % 3 {
        0 => 1.0,
        1 => 0.5,
        _ => 1.0,
    }
}

/// Features in `[lo, hi)` drive mode `m`: the feature set is cut into three
/// contiguous blocks.
fn mode_block(m: usize, d: usize) -> (usize, usize) {
    (m * d / 3, (m + 1) * d / 3)
}

pub fn gen_multimode_weibull(spec: &GeneratorSpec) -> Result<Simulated, SimulateError> {
    spec.validate()?;
    let d = spec.d;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let beta = coefficients(spec, &mut rng);
    let modes: Vec<ModeRecord> = (0..3)
        .map(|m| ModeRecord {
            shape: MODE_SHAPES[m],
            log_scale: if m == 0 {
                log_scale_for_early_share(MODE_SHAPES[0], EARLY_FAILURE_SHARE)
            } else {
                0.0
            },
            features: mode_block(m, d),
        })
        .collect();
    let x: Vec<Vec<f64>> = (0..spec.n)
        .map(|_| (0..d).map(|j| draw_feature(j, &mut rng)).collect())
        .collect();
    let mut mode_times = Vec::with_capacity(spec.n);
    let mut times = Vec::with_capacity(spec.n);
    for xi in &x {
        let mut candidates = [0.0; 3];
        for (m, mode) in modes.iter().enumerate() {
            let (lo, hi) = mode.features;
            let shift: f64 = (lo..hi).map(|j| beta[j] * (xi[j] - feature_mean(j))).sum();
            // log-domain draw: the decreasing-hazard mode spans hundreds of
            // orders of magnitude
            let log_t = mode.log_scale + shift + unit_exponential(&mut rng).ln() / mode.shape;
            candidates[m] = log_t.exp().max(MIN_TIME);
        }
        times.push(candidates.iter().copied().fold(f64::INFINITY, f64::min));
        mode_times.push(candidates);
    }
    let names = (0..d)
        .map(|j| match j % 3 {
            0 => format!("norm{j}"),
            1 => format!("unif{j}"),
            _ => format!("cat{j}"),
        })
        .collect();
    let (dataset, censor_length) = censor(x, &times, spec.censor_target, &mut rng, names)?;
    Ok(Simulated {
        dataset,
        truth: TruthRecord {
            kind: spec.kind,
            coefficients: beta,
            intercept: 0.0,
            shape: 0.0,
            baseline: None,
            modes,
            censor_length,
        },
        event_times: times,
        mode_times,
    })
}

const CALIBRATION_STEPS: usize = 30;

/// Expected censored fraction under `C ~ U(0, L)` given the event times:
/// `P(C < T) = mean(min(T, L) / L)`.
pub fn expected_censoring(times: &[f64], length: f64) -> f64 {
    times.iter().map(|&t| t.min(length) / length).sum::<f64>() / times.len() as f64
}

/// Bisection on `log L` so that the expected censored fraction matches `target`.
pub fn calibrate_censor_length(times: &[f64], target: f64) -> f64 {
    let min_t = times.iter().copied().fold(f64::INFINITY, f64::min);
    let max_t = times.iter().copied().fold(0.0, f64::max);
    let mean_t = times.iter().sum::<f64>() / times.len() as f64;
    // f(L) = 1 for L <= min T and f(L) = mean T / L for L >= max T
    let mut lo = min_t.ln();
    let mut hi = max_t.max(mean_t / target).ln();
    for _ in 0..CALIBRATION_STEPS {
        let mid = 0.5 * (lo + hi);
        if expected_censoring(times, mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn censor(
    x: Vec<Vec<f64>>,
    times: &[f64],
    target: f64,
    rng: &mut ChaCha8Rng,
    names: Vec<String>,
) -> Result<(Dataset, Option<f64>), SimulateError> {
    let length = (target > 0.0).then(|| calibrate_censor_length(times, target));
    let subjects = x
        .into_iter()
        .zip(times)
        .map(|(xi, &t)| match length {
            Some(l) => {
                let c = l * rng.gen::<f64>();
                if t <= c {
                    Subject::new(xi, t, true)
                } else {
                    Subject::new(xi, c, false)
                }
            }
            None => Subject::new(xi, t, true),
        })
        .collect();
    Ok((Dataset::new(subjects, names)?, length))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_censoring_target_means_all_events() {
        for kind in [GeneratorKind::CoxStyle, GeneratorKind::AftStyle, GeneratorKind::MultimodeWeibull] {
            let s = generate(&GeneratorSpec::new(kind, 200, 6, 0.0, 4)).unwrap();
            assert!(s.dataset.events().iter().all(|&e| e));
            assert!(s.truth.censor_length.is_none());
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        for kind in [GeneratorKind::CoxStyle, GeneratorKind::AftStyle, GeneratorKind::MultimodeWeibull] {
            let spec = GeneratorSpec::new(kind, 100, 6, 0.3, 11);
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        }
    }

    #[test]
    fn multimode_needs_three_features() {
        let spec = GeneratorSpec::new(GeneratorKind::MultimodeWeibull, 100, 2, 0.3, 1);
        assert_eq!(generate(&spec).unwrap_err(), SimulateError::InsufficientFeatures { d: 2 });
    }

    #[test]
    fn multimode_takes_the_earliest_mode() {
        let s = generate(&GeneratorSpec::new(GeneratorKind::MultimodeWeibull, 500, 9, 0.0, 2)).unwrap();
        for (subj, modes) in s.dataset.subjects().iter().zip(&s.mode_times) {
            assert_eq!(subj.time, modes.iter().copied().fold(f64::INFINITY, f64::min));
        }
        let early = s.mode_times.iter().filter(|m| m[0] < m[1].min(m[2])).count();
        assert!(early > 0 && early < 250);
    }

    #[test]
    fn calibration_matches_expected_fraction() {
        let times: Vec<f64> = (1..=1000).map(|i| i as f64 / 100.0).collect();
        for target in [0.1, 0.5, 0.8] {
            let l = calibrate_censor_length(&times, target);
            assert!((expected_censoring(&times, l) - target).abs() < 1e-6);
        }
    }

    #[test]
    fn gompertz_inverse_roundtrip() {
        let b = Baseline::Gompertz { rate: 0.7, scale: 0.2 };
        for t in [0.1, 1.0, 4.0] {
            assert!((b.inverse_cumhaz(b.cumhaz(t)) - t).abs() < 1e-12);
        }
    }
}
