//! Censoring-aware scores: Kaplan-Meier censoring estimate, Harrell's
//! concordance index, the IPCW Brier score and its time integral.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, RiskScore, SurvivalCurve};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("no eligible pairs for the concordance index")]
    NoEligiblePairs,
    #[error("censoring survival estimate is zero at t = {time}; horizon beyond identifiable range")]
    ZeroCensoringProbability { time: f64 },
    #[error("expected {expected} predictions, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid horizon {0}")]
    InvalidHorizon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Concordance,
    Brier,
    Ibs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreValue {
    pub value: f64,
    pub kind: ScoreKind,
    /// Evaluation time for `Brier`, integration horizon for `Ibs`.
    pub horizon: Option<f64>,
}

/// Covariate-free Kaplan-Meier estimate of the censoring survival `S_C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringEstimate {
    pub curve: SurvivalCurve,
}

impl CensoringEstimate {
    pub fn at(&self, t: f64) -> f64 {
        self.curve.survival_at(t)
    }

    /// Left limit `S_C(t-)`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let times = self.curve.times();
        let idx = times.partition_point(|&g| g < t);
        if idx == 0 {
            1.0
        } else {
            self.curve.values()[idx - 1]
        }
    }
}

/// Product-limit estimator with censorings treated as the events of interest.
pub fn km_censoring(dataset: &Dataset) -> CensoringEstimate {
    let mut obs: Vec<(f64, bool)> = dataset.subjects().iter().map(|s| (s.time, s.event)).collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = obs.len();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut surv = 1.0;
    let mut i = 0;
    while i < n {
        let t = obs[i].0;
        let at_risk = (n - i) as f64;
        let mut censored = 0usize;
        let mut j = i;
        while j < n && obs[j].0 == t {
            if !obs[j].1 {
                censored += 1;
            }
            j += 1;
        }
        if censored > 0 {
            surv *= 1.0 - censored as f64 / at_risk;
            times.push(t);
            values.push(surv);
        }
        i = j;
    }
    CensoringEstimate {
        curve: SurvivalCurve::from_values_clamped(times, values),
    }
}

/// Exact pair counts behind a concordance index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConcordanceCounts {
    pub concordant: u64,
    pub tied_risk: u64,
    pub discordant: u64,
}

impl ConcordanceCounts {
    pub fn pairs(&self) -> u64 {
        self.concordant + self.tied_risk + self.discordant
    }

    pub fn index(&self) -> f64 {
        (self.concordant as f64 + 0.5 * self.tied_risk as f64) / self.pairs() as f64
    }
}

/// Counts every unordered pair with distinct times whose earlier member had
/// an observed event.
pub fn concordance_counts(
    risks: &[RiskScore],
    dataset: &Dataset,
) -> Result<ConcordanceCounts, ScoreError> {
    if risks.len() != dataset.len() {
        return Err(ScoreError::LengthMismatch {
            expected: dataset.len(),
            found: risks.len(),
        });
    }
    let subjects = dataset.subjects();
    let mut order: Vec<usize> = (0..subjects.len()).collect();
    order.sort_by(|&a, &b| subjects[a].time.total_cmp(&subjects[b].time));
    let mut counts = ConcordanceCounts {
        concordant: 0,
        tied_risk: 0,
        discordant: 0,
    };
    for (pos, &i) in order.iter().enumerate() {
        let si = &subjects[i];
        if !si.event {
            continue;
        }
        let ri = risks[i].0;
        for &j in &order[pos + 1..] {
            if subjects[j].time == si.time {
                continue;
            }
            let rj = risks[j].0;
            if ri > rj {
                counts.concordant += 1;
            } else if ri == rj {
                counts.tied_risk += 1;
            } else {
                counts.discordant += 1;
            }
        }
    }
    if counts.pairs() == 0 {
        return Err(ScoreError::NoEligiblePairs);
    }
    Ok(counts)
}

pub fn concordance_index(risks: &[RiskScore], dataset: &Dataset) -> Result<ScoreValue, ScoreError> {
    let counts = concordance_counts(risks, dataset)?;
    Ok(ScoreValue {
        value: counts.index(),
        kind: ScoreKind::Concordance,
        horizon: None,
    })
}

/// IPCW weight `W_i(t)`; zero for subjects censored at or before `t`.
fn ipcw_weight(
    time: f64,
    event: bool,
    t: f64,
    censor: &CensoringEstimate,
) -> Result<f64, ScoreError> {
    if time > t {
        let g = censor.at(t);
        if g <= 0.0 {
            return Err(ScoreError::ZeroCensoringProbability { time: t });
        }
        Ok(1.0 / g)
    } else if event {
        let g = censor.left_limit(time);
        if g <= 0.0 {
            return Err(ScoreError::ZeroCensoringProbability { time });
        }
        Ok(1.0 / g)
    } else {
        Ok(0.0)
    }
}

pub fn brier_score(
    predictions: &[SurvivalCurve],
    dataset: &Dataset,
    t: f64,
    censor: &CensoringEstimate,
) -> Result<ScoreValue, ScoreError> {
    if predictions.len() != dataset.len() {
        return Err(ScoreError::LengthMismatch {
            expected: dataset.len(),
            found: predictions.len(),
        });
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(ScoreError::InvalidHorizon(t));
    }
    let mut total = 0.0;
    for (s, curve) in dataset.subjects().iter().zip(predictions) {
        let w = ipcw_weight(s.time, s.event, t, censor)?;
        if w == 0.0 {
            continue;
        }
        let alive = if s.time > t { 1.0 } else { 0.0 };
        total += w * (alive - curve.survival_at(t)).powi(2);
    }
    Ok(ScoreValue {
        value: total / dataset.len() as f64,
        kind: ScoreKind::Brier,
        horizon: Some(t),
    })
}

/// Precomputed IPCW weights and survival-status indicators on an
/// integration grid over `[0, tau]`.
///
/// The Brier score is a right-continuous step function of `t` whose jumps
/// lie in the grid, so `sum_k BS(g_k) (g_{k+1} - g_k)` is its exact integral.
#[derive(Debug, Clone)]
pub struct BrierGrid {
    tau: f64,
    grid: Vec<f64>,
    widths: Vec<f64>,
    n: usize,
    /// Row-major `n x grid.len()`.
    weights: Vec<f64>,
    alive: Vec<f64>,
}

impl BrierGrid {
    /// Grid = sorted union of `{0, tau}`, every observed time and `knots`,
    /// restricted to `[0, tau]`.
    pub fn new(
        dataset: &Dataset,
        censor: &CensoringEstimate,
        tau: f64,
        knots: &[f64],
    ) -> Result<Self, ScoreError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(ScoreError::InvalidHorizon(tau));
        }
        let mut grid: Vec<f64> = vec![0.0, tau];
        grid.extend(dataset.subjects().iter().map(|s| s.time));
        grid.extend(censor.curve.times().iter().copied());
        grid.extend(knots.iter().copied());
        grid.retain(|&t| (0.0..=tau).contains(&t));
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let widths: Vec<f64> = grid
            .windows(2)
            .map(|w| w[1] - w[0])
            .chain(std::iter::once(0.0))
            .collect();
        let n = dataset.len();
        let m = grid.len();
        let mut weights = vec![0.0; n * m];
        let mut alive = vec![0.0; n * m];
        for (i, s) in dataset.subjects().iter().enumerate() {
            for (k, &t) in grid.iter().enumerate() {
                if widths[k] == 0.0 {
                    continue;
                }
                weights[i * m + k] = ipcw_weight(s.time, s.event, t, censor)?;
                alive[i * m + k] = if s.time > t { 1.0 } else { 0.0 };
            }
        }
        Ok(Self {
            tau,
            grid,
            widths,
            n,
            weights,
            alive,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn n_subjects(&self) -> usize {
        self.n
    }

    pub fn weight(&self, subject: usize, k: usize) -> f64 {
        self.weights[subject * self.grid.len() + k]
    }

    pub fn alive(&self, subject: usize, k: usize) -> f64 {
        self.alive[subject * self.grid.len() + k]
    }

    /// Evaluates each subject's curve on the grid, row-major `n x m`.
    pub fn evaluate(&self, predictions: &[SurvivalCurve]) -> Vec<f64> {
        predictions
            .iter()
            .flat_map(|c| c.evaluate_sorted(&self.grid))
            .collect()
    }

    /// IBS for predictions already evaluated on the grid (row-major `n x m`).
    pub fn ibs_from_values(&self, values: &[f64]) -> f64 {
        let m = self.grid.len();
        let mut total = 0.0;
        for i in 0..self.n {
            let base = i * m;
            for k in 0..m {
                let w = self.widths[k] * self.weights[base + k];
                if w != 0.0 {
                    total += w * (self.alive[base + k] - values[base + k]).powi(2);
                }
            }
        }
        total / (self.tau * self.n as f64)
    }
}

pub fn integrated_brier_score(
    predictions: &[SurvivalCurve],
    dataset: &Dataset,
    tau: f64,
    censor: &CensoringEstimate,
) -> Result<ScoreValue, ScoreError> {
    if predictions.len() != dataset.len() {
        return Err(ScoreError::LengthMismatch {
            expected: dataset.len(),
            found: predictions.len(),
        });
    }
    let mut knots: Vec<f64> = predictions
        .iter()
        .flat_map(|c| c.times().iter().copied())
        .filter(|&t| t <= tau)
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let grid = BrierGrid::new(dataset, censor, tau, &knots)?;
    let values = grid.evaluate(predictions);
    Ok(ScoreValue {
        value: grid.ibs_from_values(&values),
        kind: ScoreKind::Ibs,
        horizon: Some(tau),
    })
}

/// Linear-interpolation quantile of the observed times.
pub fn time_quantile(dataset: &Dataset, q: f64) -> f64 {
    let mut times = dataset.times();
    times.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (times.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    times[lo] + (times[hi] - times[lo]) * (pos - lo as f64)
}

/// Default integration horizon: 95th percentile of the observed times.
pub fn default_horizon(dataset: &Dataset) -> f64 {
    time_quantile(dataset, 0.95)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RawRow, Subject};

    fn dataset(rows: &[(f64, bool)]) -> Dataset {
        Dataset::from_rows(
            rows.iter()
                .map(|&(time, event)| RawRow {
                    covariates: vec![],
                    time,
                    event,
                })
                .collect(),
            None,
        )
        .unwrap()
    }

    fn risks(v: &[f64]) -> Vec<RiskScore> {
        v.iter().map(|&r| RiskScore(r)).collect()
    }

    fn constant(v: f64) -> SurvivalCurve {
        SurvivalCurve::new(vec![0.0], vec![v]).unwrap()
    }

    #[test]
    fn km_without_censoring_is_one() {
        let d = dataset(&[(1.0, true), (2.0, true)]);
        let km = km_censoring(&d);
        assert_eq!(km.at(0.0), 1.0);
        assert_eq!(km.at(10.0), 1.0);
    }

    #[test]
    fn km_hand_products() {
        let km = km_censoring(&dataset(&[(1.0, false), (2.0, true)]));
        assert_eq!(km.at(0.5), 1.0);
        assert!((km.at(1.0) - 0.5).abs() < 1e-12);
        assert!((km.at(5.0) - 0.5).abs() < 1e-12);

        let km = km_censoring(&dataset(&[(1.0, false), (2.0, false), (3.0, true)]));
        assert_eq!(km.at(0.9), 1.0);
        assert!((km.at(1.0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((km.at(2.0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((km.at(3.5) - 1.0 / 3.0).abs() < 1e-12);
        assert!((km.left_limit(2.0) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn concordance_worked_examples() {
        let d = dataset(&[(1.0, true), (2.0, true), (3.0, true)]);
        let c = concordance_counts(&risks(&[3.0, 2.0, 1.0]), &d).unwrap();
        assert_eq!((c.concordant, c.pairs()), (3, 3));
        let c = concordance_counts(&risks(&[1.0, 1.0, 1.0]), &d).unwrap();
        assert_eq!(c.index(), 0.5);
        let c = concordance_counts(&risks(&[3.0, 1.0, 2.0]), &d).unwrap();
        assert_eq!((c.concordant, c.discordant, c.pairs()), (2, 1, 3));
    }

    #[test]
    fn concordance_without_pairs() {
        let d = dataset(&[(1.0, true), (1.0, true)]);
        assert_eq!(
            concordance_index(&risks(&[1.0, 2.0]), &d).unwrap_err(),
            ScoreError::NoEligiblePairs
        );
        let d = dataset(&[(1.0, false), (2.0, true)]);
        assert_eq!(
            concordance_index(&risks(&[1.0, 2.0]), &d).unwrap_err(),
            ScoreError::NoEligiblePairs
        );
    }

    #[test]
    fn brier_worked_examples() {
        let d = dataset(&[(2.0, true), (3.0, true)]);
        let km = km_censoring(&d);
        let ones = vec![constant(1.0), constant(1.0)];
        assert_eq!(brier_score(&ones, &d, 1.0, &km).unwrap().value, 0.0);

        let d = dataset(&[(2.0, true)]);
        let km = km_censoring(&d);
        let half = vec![constant(0.5)];
        assert!((brier_score(&half, &d, 1.0, &km).unwrap().value - 0.25).abs() < 1e-12);
        assert!((brier_score(&half, &d, 3.0, &km).unwrap().value - 0.25).abs() < 1e-12);
        let ibs = integrated_brier_score(&half, &d, 4.0, &km).unwrap().value;
        assert!((ibs - 0.25).abs() < 1e-12);
    }

    #[test]
    fn censored_before_t_has_no_weight() {
        let d = Dataset::new(
            vec![
                Subject::new(vec![], 1.0, false),
                Subject::new(vec![], 5.0, true),
            ],
            vec![],
        )
        .unwrap();
        let km = km_censoring(&d);
        let preds = vec![constant(0.3), constant(0.0)];
        // Subject 0 is censored at 1 <= 2 and contributes nothing; subject 1
        // is alive with weight 1 / S_C(2) = 1 / 0.5 and error (1 - 0)^2.
        let bs = brier_score(&preds, &d, 2.0, &km).unwrap().value;
        assert!((bs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ibs_zero_for_perfect_prediction() {
        let d = dataset(&[(2.0, true), (3.0, true)]);
        let km = km_censoring(&d);
        let ones = vec![constant(1.0), constant(1.0)];
        assert_eq!(integrated_brier_score(&ones, &d, 1.5, &km).unwrap().value, 0.0);
    }

    #[test]
    fn zero_censoring_probability_is_reported() {
        let train = dataset(&[(1.0, false), (0.5, true)]);
        let km = km_censoring(&train);
        assert_eq!(km.at(1.0), 0.0);
        let test = dataset(&[(3.0, true)]);
        let err = brier_score(&[constant(0.5)], &test, 2.0, &km).unwrap_err();
        assert!(matches!(err, ScoreError::ZeroCensoringProbability { .. }));
    }

    #[test]
    fn horizon_quantile() {
        let d = dataset(&[(1.0, true), (2.0, true), (3.0, true), (4.0, true), (5.0, true)]);
        assert!((default_horizon(&d) - 4.8).abs() < 1e-12);
    }
}
