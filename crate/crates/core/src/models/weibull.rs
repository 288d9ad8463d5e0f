//! Weibull accelerated failure time model
//! `S(t | x) = exp(-(t / rho(x))^k)`, `rho(x) = exp(b0 + beta . x)`,
//! fitted by damped Newton on the elastic-net penalized mean log-likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::{check_dim, dot, FitError, SurvivalModel};
use crate::data::{Dataset, RiskScore, SurvivalCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeibullAftConfig {
    pub penalizer: f64,
    pub l1_ratio: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for WeibullAftConfig {
    fn default() -> Self {
        Self {
            penalizer: 0.0,
            l1_ratio: 0.0,
            max_iter: 200,
            tol: 1e-9,
        }
    }
}

impl WeibullAftConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.penalizer >= 0.0 && self.penalizer.is_finite()) {
            return Err(FitError::InvalidConfig("penalizer must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(FitError::InvalidConfig("l1_ratio must lie in [0, 1]".into()));
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(FitError::InvalidConfig("max_iter and tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullAftModel {
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub shape: f64,
    pub grid: Vec<f64>,
    pub iterations: usize,
}

impl WeibullAftModel {
    pub fn scale(&self, x: &[f64]) -> f64 {
        (self.intercept + dot(&self.beta, x)).exp()
    }

    pub fn survival(&self, x: &[f64], t: f64) -> f64 {
        (-(t / self.scale(x)).powf(self.shape)).exp()
    }

    pub fn hazard(&self, x: &[f64], t: f64) -> f64 {
        let rho = self.scale(x);
        self.shape / rho * (t / rho).powf(self.shape - 1.0)
    }

    /// `E[T | x] = rho(x) Gamma(1 + 1/k)`.
    pub fn mean_lifetime(&self, x: &[f64]) -> f64 {
        self.scale(x) * gamma(1.0 + 1.0 / self.shape)
    }
}

impl SurvivalModel for WeibullAftModel {
    fn dim(&self) -> usize {
        self.beta.len()
    }

    fn predict_survival(&self, x: &[f64]) -> Result<SurvivalCurve, FitError> {
        check_dim(self.beta.len(), x)?;
        let values = self.grid.iter().map(|&t| self.survival(x, t)).collect();
        Ok(SurvivalCurve::from_values_clamped(self.grid.clone(), values))
    }

    /// Negated expected lifetime, so larger means earlier failure.
    fn predict_risk(&self, x: &[f64]) -> Result<RiskScore, FitError> {
        check_dim(self.beta.len(), x)?;
        Ok(RiskScore(-self.mean_lifetime(x)))
    }
}

const SOFT_ABS_EPS: f64 = 1e-6;

struct Objective<'a> {
    x: &'a [Vec<f64>],
    log_t: Vec<f64>,
    events: Vec<bool>,
    penalizer: f64,
    l1_ratio: f64,
}

impl Objective<'_> {
    /// Parameter layout: `[b0, beta_1..beta_d, log k]`.
    fn value(&self, theta: &[f64]) -> f64 {
        let d = self.x[0].len();
        let s = theta[d + 1];
        let k = s.exp();
        let n = self.x.len() as f64;
        let mut ll = 0.0;
        for ((xi, &lt), &ev) in self.x.iter().zip(&self.log_t).zip(&self.events) {
            let mu = theta[0] + dot(&theta[1..=d], xi);
            let z = k * (lt - mu);
            let ez = z.exp();
            ll += if ev { s - lt + z - ez } else { -ez };
        }
        -ll / n + self.penalty(&theta[1..=d])
    }

    fn penalty(&self, beta: &[f64]) -> f64 {
        beta.iter()
            .map(|b| {
                self.penalizer
                    * (self.l1_ratio * (b * b + SOFT_ABS_EPS).sqrt()
                        + 0.5 * (1.0 - self.l1_ratio) * b * b)
            })
            .sum()
    }

    fn gradient_hessian(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.x[0].len();
        let p = d + 2;
        let k = theta[d + 1].exp();
        let n = self.x.len() as f64;
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);
        let mut row = vec![0.0; p];
        for ((xi, &lt), &ev) in self.x.iter().zip(&self.log_t).zip(&self.events) {
            let delta = if ev { 1.0 } else { 0.0 };
            let mu = theta[0] + dot(&theta[1..=d], xi);
            let z = k * (lt - mu);
            let ez = z.exp();
            let g_mu = k * (ez - delta);
            let g_s = delta * (1.0 + z) - z * ez;
            let h_mumu = -k * k * ez;
            let h_mus = k * (ez - delta) + k * z * ez;
            let h_ss = delta * z - z * ez * (z + 1.0);
            row[0] = 1.0;
            row[1..=d].copy_from_slice(xi);
            for a in 0..=d {
                g[a] -= g_mu * row[a] / n;
                for b in 0..=a {
                    h[(a, b)] -= h_mumu * row[a] * row[b] / n;
                }
                h[(d + 1, a)] -= h_mus * row[a] / n;
            }
            g[d + 1] -= g_s / n;
            h[(d + 1, d + 1)] -= h_ss / n;
        }
        for j in 1..=d {
            let b = theta[j];
            let r = (b * b + SOFT_ABS_EPS).sqrt();
            g[j] += self.penalizer * (self.l1_ratio * b / r + (1.0 - self.l1_ratio) * b);
            h[(j, j)] += self.penalizer
                * (self.l1_ratio * SOFT_ABS_EPS / (r * r * r) + (1.0 - self.l1_ratio));
        }
        for a in 0..p {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        (g, h)
    }
}

pub fn fit_weibull_aft(
    dataset: &Dataset,
    config: &WeibullAftConfig,
) -> Result<WeibullAftModel, FitError> {
    config.validate()?;
    if let Some((row, s)) = dataset
        .subjects()
        .iter()
        .enumerate()
        .find(|(_, s)| !(s.time > 0.0))
    {
        return Err(FitError::NonPositiveTime { row, time: s.time });
    }
    let d = dataset.dim();
    let x = super::design(dataset);
    let x = if d == 0 { vec![Vec::new(); dataset.len()] } else { x };
    let log_t: Vec<f64> = dataset.times().iter().map(|t| t.ln()).collect();
    let objective = Objective {
        x: &x,
        log_t: log_t.clone(),
        events: dataset.events(),
        penalizer: config.penalizer,
        l1_ratio: config.l1_ratio,
    };
    let mut theta = vec![0.0; d + 2];
    theta[0] = log_t.iter().sum::<f64>() / log_t.len() as f64;
    let mut value = objective.value(&theta);
    let mut iterations = 0;
    loop {
        let (g, h) = objective.gradient_hessian(&theta);
        if g.amax() <= config.tol {
            break;
        }
        if iterations >= config.max_iter {
            return Err(FitError::NonConvergence {
                max_iter: config.max_iter,
            });
        }
        iterations += 1;
        let step = newton_direction(&g, &h);
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let candidate: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let v = objective.value(&candidate);
            if v.is_finite() && v < value && v <= value - 1e-4 * t * slope {
                theta = candidate;
                value = v;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // Rounding floor: no further decrease is representable.
            if g.amax() <= config.tol.max(1e-6) {
                break;
            }
            return Err(FitError::NonConvergence {
                max_iter: config.max_iter,
            });
        }
    }
    Ok(WeibullAftModel {
        intercept: theta[0],
        beta: theta[1..=d].to_vec(),
        shape: theta[d + 1].exp(),
        grid: dataset.event_times(),
        iterations,
    })
}

/// Solves `H s = g`, adding a Levenberg shift until `H` is positive definite.
fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> DVector<f64> {
    let p = g.len();
    let mut shift = 0.0;
    for _ in 0..30 {
        let m = h + DMatrix::identity(p, p) * shift;
        if let Some(ch) = m.cholesky() {
            return ch.solve(g);
        }
        shift = if shift == 0.0 { 1e-8 * (1.0 + h.amax()) } else { shift * 10.0 };
    }
    g.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;

    fn small() -> Dataset {
        let subjects = vec![
            Subject::new(vec![0.5], 1.2, true),
            Subject::new(vec![-0.4], 2.5, true),
            Subject::new(vec![1.0], 0.7, false),
            Subject::new(vec![0.0], 3.1, true),
            Subject::new(vec![-1.2], 4.0, false),
            Subject::new(vec![0.3], 1.9, true),
        ];
        Dataset::new(subjects, vec!["x".into()]).unwrap()
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let d = small();
        let x = crate::models::design(&d);
        let obj = Objective {
            x: &x,
            log_t: d.times().iter().map(|t| t.ln()).collect(),
            events: d.events(),
            penalizer: 0.3,
            l1_ratio: 0.4,
        };
        let theta = [0.4, -0.3, 0.2];
        let (g, h) = obj.gradient_hessian(&theta);
        let eps = 1e-6;
        for j in 0..3 {
            let mut up = theta;
            let mut dn = theta;
            up[j] += eps;
            dn[j] -= eps;
            let fd = (obj.value(&up) - obj.value(&dn)) / (2.0 * eps);
            assert!((fd - g[j]).abs() < 1e-7, "grad {j}");
            let (gu, _) = obj.gradient_hessian(&up);
            let (gd, _) = obj.gradient_hessian(&dn);
            for i in 0..3 {
                let fd2 = (gu[i] - gd[i]) / (2.0 * eps);
                assert!((fd2 - h[(i, j)]).abs() < 1e-5, "hess {i},{j}");
            }
        }
    }

    #[test]
    fn survival_starts_at_one_and_hits_exp_minus_one_at_scale() {
        let m = fit_weibull_aft(&small(), &WeibullAftConfig::default()).unwrap();
        let x = [0.2];
        assert!((m.survival(&x, 0.0) - 1.0).abs() < 1e-15);
        assert!((m.survival(&x, m.scale(&x)) - (-1.0f64).exp()).abs() < 1e-12);
        let c = m.predict_survival(&x).unwrap();
        assert_eq!(c.survival_at(0.0), 1.0);
    }

    #[test]
    fn rejects_zero_times() {
        let subjects = vec![Subject::new(vec![0.0], 0.0, true), Subject::new(vec![1.0], 1.0, true)];
        let d = Dataset::new(subjects, vec!["x".into()]).unwrap();
        assert!(matches!(
            fit_weibull_aft(&d, &WeibullAftConfig::default()),
            Err(FitError::NonPositiveTime { row: 0, .. })
        ));
    }

    #[test]
    fn hazard_monotonicity_follows_shape() {
        let mut m = fit_weibull_aft(&small(), &WeibullAftConfig::default()).unwrap();
        for shape in [0.5, 1.7] {
            m.shape = shape;
            let a = m.hazard(&[0.0], 0.5);
            let b = m.hazard(&[0.0], 1.5);
            assert_eq!(b > a, shape > 1.0);
        }
    }
}
