//! Aalen's additive hazards model `h(t | x) = b0(t) + b(t) . x`, estimated by
//! ridge least squares on the at-risk design at each event time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::partial::TimeGroups;
use super::{check_dim, dot, FitError, SurvivalModel};
use crate::data::{Dataset, RiskScore, SurvivalCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AalenConfig {
    /// Ridge penalty on the covariate increments (the intercept is free).
    pub penalizer: f64,
}

impl Default for AalenConfig {
    fn default() -> Self {
        Self { penalizer: 0.0 }
    }
}

impl AalenConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.penalizer >= 0.0 && self.penalizer.is_finite()) {
            return Err(FitError::InvalidConfig("penalizer must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AalenModel {
    /// Distinct training event times.
    pub times: Vec<f64>,
    /// Cumulative intercept `B0(t)` on `times`.
    pub baseline: Vec<f64>,
    /// Cumulative coefficients, `coefficients[k][j] = B_j(t_k)`.
    pub coefficients: Vec<Vec<f64>>,
    /// Event times past this index had a singular at-risk design; the
    /// cumulative coefficients are held flat there.
    pub estimable_until: usize,
}

impl AalenModel {
    pub fn cumulative_hazard(&self, x: &[f64]) -> Vec<f64> {
        self.baseline
            .iter()
            .zip(&self.coefficients)
            .map(|(b0, b)| b0 + dot(b, x))
            .collect()
    }
}

impl SurvivalModel for AalenModel {
    fn dim(&self) -> usize {
        self.coefficients.first().map_or(0, |c| c.len())
    }

    fn predict_survival(&self, x: &[f64]) -> Result<SurvivalCurve, FitError> {
        check_dim(self.dim(), x)?;
        let h = self.cumulative_hazard(x);
        Ok(SurvivalCurve::from_cumulative_hazard(self.times.clone(), &h))
    }

    /// Negated restricted mean lifetime over the training grid.
    fn predict_risk(&self, x: &[f64]) -> Result<RiskScore, FitError> {
        let curve = self.predict_survival(x)?;
        let horizon = self.times.last().copied().unwrap_or(0.0);
        Ok(RiskScore(-curve.restricted_mean(horizon)))
    }
}

/// Nelson-Aalen cumulative hazard on `dataset.event_times()`.
pub fn nelson_aalen(dataset: &Dataset) -> Vec<f64> {
    let groups = TimeGroups::from_dataset(dataset);
    let n = dataset.len();
    let mut acc = 0.0;
    let mut out = Vec::new();
    for &(start, _, deaths) in &groups.groups {
        if deaths > 0 {
            acc += deaths as f64 / (n - start) as f64;
            out.push(acc);
        }
    }
    out
}

const RANK_TOL: f64 = 1e-10;

pub fn fit_aalen(dataset: &Dataset, config: &AalenConfig) -> Result<AalenModel, FitError> {
    config.validate()?;
    let d = dataset.dim();
    let p = d + 1;
    let groups = TimeGroups::from_dataset(dataset);
    let subjects = dataset.subjects();
    let z = |i: usize| -> Vec<f64> {
        let mut row = Vec::with_capacity(p);
        row.push(1.0);
        row.extend_from_slice(&subjects[i].covariates);
        row
    };

    // Walk event times from the latest backwards so the Gram matrix of the
    // at-risk set only ever gains rows.
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut increments: Vec<Option<DVector<f64>>> = Vec::new();
    let mut times = Vec::new();
    for (g, &(start, end, deaths)) in groups.groups.iter().enumerate().rev() {
        for &i in &groups.order[start..end] {
            let zi = z(i);
            for a in 0..p {
                for b in 0..p {
                    gram[(a, b)] += zi[a] * zi[b];
                }
            }
        }
        if deaths == 0 {
            continue;
        }
        let mut rhs = DVector::<f64>::zeros(p);
        for &i in &groups.order[start..end] {
            if subjects[i].event {
                let zi = z(i);
                for a in 0..p {
                    rhs[a] += zi[a];
                }
            }
        }
        times.push(groups.times[g]);
        increments.push(solve_increment(&gram, &rhs, config.penalizer));
    }
    times.reverse();
    increments.reverse();

    let estimable_until = increments.iter().position(Option::is_none).unwrap_or(increments.len());
    if estimable_until == 0 {
        return Err(FitError::SingularDesign {
            time: times.first().copied().unwrap_or(0.0),
        });
    }
    let mut baseline = Vec::with_capacity(times.len());
    let mut coefficients = Vec::with_capacity(times.len());
    let mut acc = DVector::<f64>::zeros(p);
    for inc in &increments {
        if let Some(inc) = inc.as_ref().filter(|_| baseline.len() < estimable_until) {
            acc += inc;
        }
        baseline.push(acc[0]);
        coefficients.push(acc.iter().skip(1).copied().collect());
    }
    Ok(AalenModel {
        times,
        baseline,
        coefficients,
        estimable_until,
    })
}

/// `(Z'Z + penalizer * diag(0, 1, ..., 1))^{-1} Z' dN`, or `None` when the
/// system is numerically singular.
fn solve_increment(gram: &DMatrix<f64>, rhs: &DVector<f64>, penalizer: f64) -> Option<DVector<f64>> {
    let p = gram.nrows();
    if p == 1 {
        return (gram[(0, 0)] > 0.0).then(|| DVector::from_element(1, rhs[0] / gram[(0, 0)]));
    }
    let mut m = gram.clone();
    for j in 1..p {
        m[(j, j)] += penalizer;
    }
    let ch = m.clone().cholesky()?;
    let l = ch.l_dirty();
    if (0..p).any(|j| l[(j, j)] * l[(j, j)] <= RANK_TOL * m[(j, j)]) {
        return None;
    }
    Some(ch.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;

    fn data(d: usize) -> Dataset {
        let subjects = (0..20)
            .map(|i| {
                let x = (0..d).map(|j| ((i * (j + 3)) % 7) as f64 - 3.0).collect();
                Subject::new(x, 1.0 + (i % 9) as f64 * 0.7, i % 4 != 1)
            })
            .collect();
        Dataset::new(subjects, (0..d).map(|j| format!("x{j}")).collect()).unwrap()
    }

    #[test]
    fn intercept_only_is_nelson_aalen() {
        let d = data(0);
        let m = fit_aalen(&d, &AalenConfig::default()).unwrap();
        assert_eq!(m.baseline, nelson_aalen(&d));
        assert_eq!(m.times, d.event_times());
    }

    #[test]
    fn single_event_jumps_by_one_over_n() {
        let subjects = (0..5)
            .map(|i| Subject::new(vec![], 1.0 + i as f64, i == 0))
            .collect();
        let d = Dataset::new(subjects, vec![]).unwrap();
        let m = fit_aalen(&d, &AalenConfig::default()).unwrap();
        assert_eq!(m.times, vec![1.0]);
        assert!((m.baseline[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn huge_penalty_kills_covariate_effects() {
        let d = data(2);
        let m = fit_aalen(&d, &AalenConfig { penalizer: 1e12 }).unwrap();
        let na = nelson_aalen(&data(0));
        for (k, c) in m.coefficients.iter().enumerate() {
            assert!(c.iter().all(|b| b.abs() < 1e-8));
            assert!((m.baseline[k] - na[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn singular_tail_is_held_flat() {
        let d = data(3);
        let m = fit_aalen(&d, &AalenConfig::default()).unwrap();
        assert!(m.estimable_until > 0);
        for k in m.estimable_until..m.times.len() {
            assert_eq!(m.baseline[k], m.baseline[m.estimable_until - 1]);
        }
        let c = m.predict_survival(&[0.0, 1.0, -1.0]).unwrap();
        assert!(c.values().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn constant_column_without_penalty_is_singular() {
        let subjects = (0..6)
            .map(|i| Subject::new(vec![1.0], 1.0 + i as f64, true))
            .collect();
        let d = Dataset::new(subjects, vec!["c".into()]).unwrap();
        assert!(matches!(
            fit_aalen(&d, &AalenConfig::default()),
            Err(FitError::SingularDesign { .. })
        ));
        assert!(fit_aalen(&d, &AalenConfig { penalizer: 1.0 }).is_ok());
    }
}
