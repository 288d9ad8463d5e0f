//! Convex aggregation of fitted survival models. Weights live on the
//! probability simplex and are trained by exponentiated gradient descent on
//! the integrated Brier score of the combined curve.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, RiskScore, SurvivalCurve};
use crate::models::{FitError, FittedModel, SurvivalModel};
use crate::scoring::{default_horizon, km_censoring, BrierGrid, CensoringEstimate, ScoreError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("prediction grid mismatch: expected {expected} values, found {found}")]
    GridMismatch { expected: usize, found: usize },
    #[error("non-finite gradient component {component}")]
    NonFiniteGradient { component: usize },
    #[error("objective increased for {streak} consecutive iterations (ending at {iteration}); learning rate too large")]
    DivergedObjective { iteration: usize, streak: usize },
    #[error("ensemble needs at least two components, got {0}")]
    TooFewComponents(usize),
    #[error("invalid ensemble config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    lambda: Vec<f64>,
}

impl EnsembleWeights {
    pub fn uniform(k: usize) -> Self {
        Self {
            lambda: vec![1.0 / k as f64; k],
        }
    }

    pub fn vertex(k: usize, j: usize) -> Self {
        let mut lambda = vec![0.0; k];
        lambda[j] = 1.0;
        Self { lambda }
    }

    pub fn new(lambda: Vec<f64>) -> Result<Self, EnsembleError> {
        let sum: f64 = lambda.iter().sum();
        if lambda.is_empty()
            || lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0))
            || (sum - 1.0).abs() > SIMPLEX_TOL
        {
            return Err(EnsembleError::InvalidConfig(format!(
                "weights {lambda:?} are not on the simplex"
            )));
        }
        Ok(Self { lambda })
    }

    /// Componentwise mean of several weight vectors, renormalized.
    pub fn mean(all: &[EnsembleWeights]) -> Result<Self, EnsembleError> {
        let k = all.first().map_or(0, EnsembleWeights::len);
        if k == 0 || all.iter().any(|w| w.len() != k) {
            return Err(EnsembleError::InvalidConfig("cannot average weight vectors".into()));
        }
        let mut lambda = vec![0.0; k];
        for w in all {
            for (acc, l) in lambda.iter_mut().zip(&w.lambda) {
                *acc += l;
            }
        }
        Ok(Self::normalized(lambda))
    }

    fn normalized(mut lambda: Vec<f64>) -> Self {
        let z: f64 = lambda.iter().sum();
        lambda.iter_mut().for_each(|l| *l /= z);
        Self { lambda }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }
}

/// Survival values of `K` components for `n` subjects on a shared grid.
/// Each row is read as a right-continuous step function with knots on the
/// grid and value 1 before the first knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentPredictions {
    grid: Vec<f64>,
    n: usize,
    /// `values[k]` is row-major `n x grid.len()`.
    values: Vec<Vec<f64>>,
}

impl ComponentPredictions {
    pub fn new(grid: Vec<f64>, n: usize, values: Vec<Vec<f64>>) -> Result<Self, EnsembleError> {
        let expected = n * grid.len();
        for row in &values {
            if row.len() != expected {
                return Err(EnsembleError::GridMismatch {
                    expected,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(EnsembleError::InvalidConfig(
                    "component survival values must lie in [0, 1]".into(),
                ));
            }
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EnsembleError::InvalidConfig("grid must be strictly increasing".into()));
        }
        Ok(Self { grid, n, values })
    }

    /// Evaluates `curves[k][i]` (component `k`, subject `i`) on `grid`.
    pub fn from_curves(curves: &[Vec<SurvivalCurve>], grid: Vec<f64>) -> Result<Self, EnsembleError> {
        let n = curves.first().map_or(0, Vec::len);
        let values = curves
            .iter()
            .map(|per_subject| {
                per_subject
                    .iter()
                    .flat_map(|c| c.evaluate_sorted(&grid))
                    .collect()
            })
            .collect();
        Self::new(grid, n, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_components(&self) -> usize {
        self.values.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.n
    }

    pub fn value(&self, component: usize, subject: usize, k: usize) -> f64 {
        self.values[component][subject * self.grid.len() + k]
    }

    /// Step-function value at an arbitrary time.
    fn value_at(&self, component: usize, subject: usize, t: f64) -> f64 {
        match self.grid.partition_point(|&g| g <= t) {
            0 => 1.0,
            idx => self.value(component, subject, idx - 1),
        }
    }

    /// Combined curve of one subject as a `SurvivalCurve`.
    pub fn combine(&self, weights: &EnsembleWeights, subject: usize) -> SurvivalCurve {
        let values = (0..self.grid.len())
            .map(|k| {
                weights
                    .as_slice()
                    .iter()
                    .enumerate()
                    .map(|(j, l)| l * self.value(j, subject, k))
                    .sum()
            })
            .collect();
        SurvivalCurve::from_values_clamped(self.grid.clone(), values)
    }
}

/// `IBS(lambda) = c - 2 b.lambda + lambda' A lambda` on a fixed integration grid.
#[derive(Debug, Clone)]
pub struct IbsQuadratic {
    k: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
}

impl IbsQuadratic {
    pub fn new(
        preds: &ComponentPredictions,
        dataset: &Dataset,
        censor: &CensoringEstimate,
        tau: f64,
    ) -> Result<Self, EnsembleError> {
        if preds.n_subjects() != dataset.len() {
            return Err(EnsembleError::GridMismatch {
                expected: dataset.len(),
                found: preds.n_subjects(),
            });
        }
        if preds.n_components() == 0 {
            return Err(EnsembleError::TooFewComponents(0));
        }
        let bg = BrierGrid::new(dataset, censor, tau, preds.grid())?;
        let k = preds.n_components();
        let scale = tau * dataset.len() as f64;
        let partial = (0..dataset.len())
            .into_par_iter()
            .map(|i| {
                let mut a = vec![0.0; k * k];
                let mut b = vec![0.0; k];
                let mut c = 0.0;
                let mut s = vec![0.0; k];
                for (g, &t) in bg.grid().iter().enumerate() {
                    let w = bg.widths()[g] * bg.weight(i, g);
                    if w == 0.0 {
                        continue;
                    }
                    let alive = bg.alive(i, g);
                    for (j, sj) in s.iter_mut().enumerate() {
                        *sj = preds.value_at(j, i, t);
                    }
                    c += w * alive * alive;
                    for p in 0..k {
                        b[p] += w * alive * s[p];
                        for q in 0..k {
                            a[p * k + q] += w * s[p] * s[q];
                        }
                    }
                }
                (a, b, c)
            })
            .collect::<Vec<_>>();
        let mut a = vec![0.0; k * k];
        let mut b = vec![0.0; k];
        let mut c = 0.0;
        for (pa, pb, pc) in partial {
            a.iter_mut().zip(&pa).for_each(|(x, y)| *x += y / scale);
            b.iter_mut().zip(&pb).for_each(|(x, y)| *x += y / scale);
            c += pc / scale;
        }
        Ok(Self { k, a, b, c })
    }

    pub fn value(&self, lambda: &[f64]) -> f64 {
        let mut v = self.c;
        for p in 0..self.k {
            v -= 2.0 * self.b[p] * lambda[p];
            for q in 0..self.k {
                v += lambda[p] * self.a[p * self.k + q] * lambda[q];
            }
        }
        v
    }

    pub fn gradient(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|p| {
                let row = &self.a[p * self.k..(p + 1) * self.k];
                2.0 * row.iter().zip(lambda).map(|(a, l)| a * l).sum::<f64>() - 2.0 * self.b[p]
            })
            .collect()
    }
}

/// `dIBS/dlambda_j = (1/(tau n)) sum_i int_0^tau W_i(t) 2 (1{y_i > t} - S(t|x_i)) (-S_j(t|x_i)) dt`
/// with `S = sum_k lambda_k S_k`, integrated exactly over the step functions.
pub fn ibs_gradient(
    weights: &EnsembleWeights,
    preds: &ComponentPredictions,
    dataset: &Dataset,
    censor: &CensoringEstimate,
    tau: f64,
) -> Result<Vec<f64>, EnsembleError> {
    if weights.len() != preds.n_components() {
        return Err(EnsembleError::GridMismatch {
            expected: preds.n_components(),
            found: weights.len(),
        });
    }
    let q = IbsQuadratic::new(preds, dataset, censor, tau)?;
    Ok(q.gradient(weights.as_slice()))
}

/// `lambda_k <- lambda_k exp(-eta Df_k) / Z`.
pub fn eg_step(weights: &EnsembleWeights, gradient: &[f64], eta: f64) -> Result<EnsembleWeights, EnsembleError> {
    if gradient.len() != weights.len() {
        return Err(EnsembleError::GridMismatch {
            expected: weights.len(),
            found: gradient.len(),
        });
    }
    if let Some(component) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(EnsembleError::NonFiniteGradient { component });
    }
    // Shifting the exponent by a constant cancels in Z and avoids overflow.
    let shift = gradient.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = weights
        .as_slice()
        .iter()
        .zip(gradient)
        .map(|(l, g)| l * (-eta * (g - shift)).exp())
        .collect();
    Ok(EnsembleWeights::normalized(raw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub learning_rate: f64,
    pub max_iter: usize,
    pub stop_tol: f64,
    /// Integration horizon; the 95th percentile of observed times when unset.
    pub horizon: Option<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_iter: 10_000,
            stop_tol: 1e-8,
            horizon: None,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EnsembleError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(EnsembleError::InvalidConfig("stop_tol must be >= 0".into()));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(EnsembleError::InvalidConfig("horizon must be > 0".into()));
            }
        }
        Ok(())
    }
}

const DIVERGENCE_STREAK: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFit {
    pub weights: EnsembleWeights,
    /// Objective at `lambda(0)` followed by the objective after each step.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Runs exponentiated gradient descent from the uniform weights.
pub fn fit_weights(quadratic: &IbsQuadratic, config: &EnsembleConfig) -> Result<WeightFit, EnsembleError> {
    config.validate()?;
    let mut weights = EnsembleWeights::uniform(quadratic.k);
    let mut trace = vec![quadratic.value(weights.as_slice())];
    let mut streak = 0;
    let mut iterations = 0;
    for it in 0..config.max_iter {
        let grad = quadratic.gradient(weights.as_slice());
        let next = eg_step(&weights, &grad, config.learning_rate)?;
        let moved = next
            .as_slice()
            .iter()
            .zip(weights.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        weights = next;
        iterations = it + 1;
        let value = quadratic.value(weights.as_slice());
        streak = if value > trace[trace.len() - 1] { streak + 1 } else { 0 };
        trace.push(value);
        if streak >= DIVERGENCE_STREAK {
            return Err(EnsembleError::DivergedObjective {
                iteration: it,
                streak,
            });
        }
        if moved < config.stop_tol {
            break;
        }
    }
    Ok(WeightFit {
        weights,
        trace,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub components: Vec<FittedModel>,
    pub weights: EnsembleWeights,
    pub trace: Vec<f64>,
}

/// Union of component training grids restricted to `[0, tau]`.
pub fn shared_grid(components: &[FittedModel], tau: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = components
        .iter()
        .flat_map(|m| m.training_grid().iter().copied())
        .filter(|&t| (0.0..=tau).contains(&t))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Component survival predictions for `dataset` on the shared grid.
pub fn component_predictions(
    components: &[FittedModel],
    dataset: &Dataset,
    tau: f64,
) -> Result<ComponentPredictions, EnsembleError> {
    let grid = shared_grid(components, tau);
    let curves = components
        .iter()
        .map(|m| m.predict_survival_batch(dataset))
        .collect::<Result<Vec<_>, _>>()?;
    ComponentPredictions::from_curves(&curves, grid)
}

/// Fits simplex weights for already-fitted components on `dataset`, the
/// aggregation split.
pub fn fit_ensemble(
    components: Vec<FittedModel>,
    dataset: &Dataset,
    config: &EnsembleConfig,
) -> Result<EnsembleModel, EnsembleError> {
    config.validate()?;
    if components.len() < 2 {
        return Err(EnsembleError::TooFewComponents(components.len()));
    }
    let tau = config.horizon.unwrap_or_else(|| default_horizon(dataset));
    let censor = km_censoring(dataset);
    let preds = component_predictions(&components, dataset, tau)?;
    let quadratic = IbsQuadratic::new(&preds, dataset, &censor, tau)?;
    let fit = fit_weights(&quadratic, config)?;
    Ok(EnsembleModel {
        components,
        weights: fit.weights,
        trace: fit.trace,
    })
}

impl EnsembleModel {
    pub fn with_weights(components: Vec<FittedModel>, weights: EnsembleWeights) -> Result<Self, EnsembleError> {
        if components.len() != weights.len() {
            return Err(EnsembleError::GridMismatch {
                expected: components.len(),
                found: weights.len(),
            });
        }
        Ok(Self {
            components,
            weights,
            trace: Vec::new(),
        })
    }

    pub fn predict_survival_batch(&self, dataset: &Dataset) -> Result<Vec<SurvivalCurve>, EnsembleError> {
        dataset
            .subjects()
            .iter()
            .map(|s| predict_ensemble(self, &s.covariates))
            .collect()
    }

    /// Last time point of any component training grid.
    pub fn horizon(&self) -> f64 {
        self.components
            .iter()
            .filter_map(|m| m.training_grid().last().copied())
            .fold(0.0, f64::max)
    }

    /// Negated restricted mean lifetime of the combined curve up to
    /// [`EnsembleModel::horizon`].
    pub fn predict_risk(&self, x: &[f64]) -> Result<RiskScore, EnsembleError> {
        let curve = predict_ensemble(self, x)?;
        Ok(RiskScore(-curve.restricted_mean(self.horizon())))
    }

    pub fn predict_risk_batch(&self, dataset: &Dataset) -> Result<Vec<RiskScore>, EnsembleError> {
        dataset
            .subjects()
            .iter()
            .map(|s| self.predict_risk(&s.covariates))
            .collect()
    }
}

/// Pointwise convex combination of the component curves on the union of
/// their knots.
pub fn predict_ensemble(model: &EnsembleModel, x: &[f64]) -> Result<SurvivalCurve, EnsembleError> {
    let curves = model
        .components
        .iter()
        .map(|m| m.predict_survival(x))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(combine_curves(&curves, &model.weights))
}

pub fn combine_curves(curves: &[SurvivalCurve], weights: &EnsembleWeights) -> SurvivalCurve {
    let mut grid: Vec<f64> = curves.iter().flat_map(|c| c.times().iter().copied()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut values = vec![0.0; grid.len()];
    for (c, &l) in curves.iter().zip(weights.as_slice()) {
        for (v, s) in values.iter_mut().zip(c.evaluate_sorted(&grid)) {
            *v += l * s;
        }
    }
    SurvivalCurve::from_values_clamped(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;

    #[test]
    fn eg_step_hand_example() {
        let w = EnsembleWeights::uniform(2);
        let out = eg_step(&w, &[0.0, 4f64.ln()], 1.0).unwrap();
        assert!((out.as_slice()[0] - 0.8).abs() < 1e-15);
        assert!((out.as_slice()[1] - 0.2).abs() < 1e-15);
        let same = eg_step(&w, &[0.0, 0.0], 3.0).unwrap();
        assert_eq!(same, w);
        assert!(matches!(
            eg_step(&w, &[f64::NAN, 0.0], 1.0),
            Err(EnsembleError::NonFiniteGradient { component: 0 })
        ));
    }

    #[test]
    fn single_subject_gradient_vanishes() {
        let d = Dataset::new(vec![Subject::new(vec![], 2.0, true)], vec![]).unwrap();
        let censor = km_censoring(&d);
        let preds = ComponentPredictions::new(vec![0.0], 1, vec![vec![0.5]]).unwrap();
        let g = ibs_gradient(&EnsembleWeights::uniform(1), &preds, &d, &censor, 4.0).unwrap();
        assert!(g[0].abs() < 1e-15);
    }

    #[test]
    fn combine_constants() {
        let one = SurvivalCurve::new(vec![0.0], vec![1.0]).unwrap();
        let zero = SurvivalCurve::new(vec![0.0], vec![0.0]).unwrap();
        let w = EnsembleWeights::new(vec![0.3, 0.7]).unwrap();
        let c = combine_curves(&[one, zero], &w);
        assert!((c.survival_at(5.0) - 0.3).abs() < 1e-15);
    }
}
