//! Cox proportional hazards fitted by Newton-Raphson on the ridge-penalized
//! Breslow partial likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::partial::{BaselineHazard, TimeGroups};
use super::{check_dim, dot, FitError, SurvivalModel};
use crate::data::{Dataset, RiskScore, SurvivalCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxConfig {
    pub ridge_alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for CoxConfig {
    fn default() -> Self {
        Self {
            ridge_alpha: 0.0,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

impl CoxConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.ridge_alpha >= 0.0 && self.ridge_alpha.is_finite()) {
            return Err(FitError::InvalidConfig("ridge_alpha must be >= 0".into()));
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(FitError::InvalidConfig("max_iter and tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub beta: Vec<f64>,
    pub baseline: BaselineHazard,
    pub ridge_alpha: f64,
    pub iterations: usize,
}

impl CoxModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        dot(&self.beta, x)
    }
}

impl SurvivalModel for CoxModel {
    fn dim(&self) -> usize {
        self.beta.len()
    }

    fn predict_survival(&self, x: &[f64]) -> Result<SurvivalCurve, FitError> {
        check_dim(self.beta.len(), x)?;
        Ok(self.baseline.curve(self.linear_predictor(x)))
    }

    fn predict_risk(&self, x: &[f64]) -> Result<RiskScore, FitError> {
        check_dim(self.beta.len(), x)?;
        Ok(RiskScore(self.linear_predictor(x)))
    }
}

/// Value, gradient and Hessian of the penalized log partial likelihood.
pub(crate) struct CoxObjective<'a> {
    x: &'a [Vec<f64>],
    events: Vec<bool>,
    groups: TimeGroups,
    alpha: f64,
}

pub(crate) struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl<'a> CoxObjective<'a> {
    pub fn new(dataset: &Dataset, x: &'a [Vec<f64>], alpha: f64) -> Self {
        Self {
            x,
            events: dataset.events(),
            groups: TimeGroups::from_dataset(dataset),
            alpha,
        }
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        let eta: Vec<f64> = self.x.iter().map(|xi| dot(beta, xi)).collect();
        self.groups.log_partial_likelihood(&eta, &self.events)
            - 0.5 * self.alpha * beta.iter().map(|b| b * b).sum::<f64>()
    }

    pub fn evaluate(&self, beta: &[f64]) -> Evaluation {
        let d = beta.len();
        let eta: Vec<f64> = self.x.iter().map(|xi| dot(beta, xi)).collect();
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; d];
        let mut s2 = DMatrix::<f64>::zeros(d, d);
        let mut value = 0.0;
        let mut gradient = DVector::<f64>::zeros(d);
        let mut hessian = DMatrix::<f64>::zeros(d, d);
        for &(start, end, deaths) in self.groups.groups.iter().rev() {
            for &i in &self.groups.order[start..end] {
                let w = (eta[i] - shift).exp();
                let xi = &self.x[i];
                s0 += w;
                for a in 0..d {
                    let wa = w * xi[a];
                    s1[a] += wa;
                    for b in 0..=a {
                        s2[(a, b)] += wa * xi[b];
                    }
                }
            }
            if deaths == 0 {
                continue;
            }
            let dd = deaths as f64;
            for &i in &self.groups.order[start..end] {
                if self.events[i] {
                    value += eta[i] - shift;
                    for a in 0..d {
                        gradient[a] += self.x[i][a];
                    }
                }
            }
            value -= dd * s0.ln();
            for a in 0..d {
                let ma = s1[a] / s0;
                gradient[a] -= dd * ma;
                for b in 0..=a {
                    let h = dd * (s2[(a, b)] / s0 - ma * s1[b] / s0);
                    hessian[(a, b)] -= h;
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                hessian[(b, a)] = hessian[(a, b)];
            }
            value -= 0.5 * self.alpha * beta[a] * beta[a];
            gradient[a] -= self.alpha * beta[a];
            hessian[(a, a)] -= self.alpha;
        }
        Evaluation {
            value,
            gradient,
            hessian,
        }
    }
}

const SEPARATION_SE: f64 = 100.0;
const MAX_COEFFICIENT: f64 = 1e3;

/// A coefficient whose curvature has vanished at the optimum is drifting to
/// infinity (monotone likelihood). Reports the first such non-constant column.
fn diverging_coefficient(hessian: &DMatrix<f64>, dataset: &Dataset) -> Option<usize> {
    let (_, scale) = dataset.column_moments();
    let constant: Vec<bool> = {
        let first = &dataset.subjects()[0].covariates;
        (0..dataset.dim())
            .map(|j| dataset.subjects().iter().all(|s| s.covariates[j] == first[j]))
            .collect()
    };
    let eig = (-hessian).symmetric_eigen();
    let top = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    (0..dataset.dim()).filter(|&j| !constant[j]).find(|&j| {
        let var: f64 = (0..eig.eigenvalues.len())
            .map(|k| {
                let v = eig.eigenvectors[(j, k)];
                if v * v < 1e-12 {
                    0.0
                } else {
                    v * v / eig.eigenvalues[k].max(top * 1e-300)
                }
            })
            .sum();
        var.sqrt() * scale[j] > SEPARATION_SE
    })
}

pub fn fit_cox(dataset: &Dataset, config: &CoxConfig) -> Result<CoxModel, FitError> {
    config.validate()?;
    let d = dataset.dim();
    if d == 0 {
        return Err(FitError::NoCovariates);
    }
    let x = super::design(dataset);
    let objective = CoxObjective::new(dataset, &x, config.ridge_alpha);
    let mut beta = vec![0.0; d];
    let mut eval = objective.evaluate(&beta);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        if eval.gradient.amax() <= config.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let neg_h = -&eval.hessian;
        let step = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&eval.gradient),
            None => {
                // Flat directions: fall back to a damped system.
                let damped = neg_h + DMatrix::identity(d, d) * (1e-8 + eval.hessian.amax() * 1e-6);
                match damped.lu().solve(&eval.gradient) {
                    Some(s) => s,
                    None => eval.gradient.clone(),
                }
            }
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let value = objective.value(&candidate);
            if value.is_finite() && value >= eval.value - 1e-12 * eval.value.abs().max(1.0) {
                accepted = Some(candidate);
                break;
            }
            t *= 0.5;
        }
        let Some(candidate) = accepted else {
            // No ascent possible along the Newton direction: stationary up to rounding.
            converged = eval.gradient.amax() <= config.tol.max(1e-6);
            break;
        };
        beta = candidate;
        if let Some(j) = beta.iter().position(|b| b.abs() > MAX_COEFFICIENT || !b.is_finite()) {
            return Err(FitError::SeparationDetected { coefficient: j });
        }
        eval = objective.evaluate(&beta);
    }
    if !converged && eval.gradient.amax() > config.tol {
        return Err(FitError::NonConvergence {
            max_iter: config.max_iter,
        });
    }
    if let Some(j) = diverging_coefficient(&eval.hessian, dataset) {
        return Err(FitError::SeparationDetected { coefficient: j });
    }
    let eta: Vec<f64> = x.iter().map(|xi| dot(&beta, xi)).collect();
    let baseline = BaselineHazard::breslow(&objective.groups, &eta);
    Ok(CoxModel {
        beta,
        baseline,
        ridge_alpha: config.ridge_alpha,
        iterations,
    })
}
