//! Right-censored survival data and step-function survival curves.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("row {row}: non-finite value in field `{field}`")]
    NonFiniteValue { row: usize, field: String },
    #[error("row {row}: negative observed time {time}")]
    NegativeTime { row: usize, time: f64 },
    #[error("row {row}: expected {expected} covariates, found {found}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("every subject is censored; at least one observed event is required")]
    AllCensored,
    #[error("dataset has no subjects")]
    Empty,
    #[error("invalid survival curve: {0}")]
    InvalidCurve(String),
}

/// One observation `(x, y, delta)`: covariates, observed time `min(T, C)` and
/// the event indicator `T <= C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub covariates: Vec<f64>,
    pub time: f64,
    pub event: bool,
}

impl Subject {
    pub fn new(covariates: Vec<f64>, time: f64, event: bool) -> Self {
        Self {
            covariates,
            time,
            event,
        }
    }
}

/// An unvalidated row as produced by ingestion or a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub covariates: Vec<f64>,
    pub time: f64,
    pub event: bool,
}

/// A validated, immutable collection of subjects sharing one covariate
/// dimension and containing at least one observed event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    subjects: Vec<Subject>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Validates `rows` and builds a dataset. Feature names default to
    /// `x0, x1, ...` when `feature_names` is `None`.
    pub fn from_rows(
        rows: Vec<RawRow>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self, DataError> {
        validate_dataset(rows, feature_names)
    }

    pub fn new(subjects: Vec<Subject>, feature_names: Vec<String>) -> Result<Self, DataError> {
        let rows = subjects
            .into_iter()
            .map(|s| RawRow {
                covariates: s.covariates,
                time: s.time,
                event: s.event,
            })
            .collect();
        validate_dataset(rows, Some(feature_names))
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.subjects.iter().map(|s| s.event).collect()
    }

    pub fn n_events(&self) -> usize {
        self.subjects.iter().filter(|s| s.event).count()
    }

    pub fn censored_fraction(&self) -> f64 {
        1.0 - self.n_events() as f64 / self.len() as f64
    }

    /// Indices `{i : y_i > t}`.
    pub fn risk_set(&self, t: f64) -> Vec<usize> {
        risk_set(self, t)
    }

    /// Sorted, deduplicated times at which at least one event was observed.
    pub fn event_times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .subjects
            .iter()
            .filter(|s| s.event)
            .map(|s| s.time)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }

    /// Builds the sub-dataset at `indices` (in the given order, duplicates
    /// allowed). Fails with `AllCensored` if the subset has no event.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, DataError> {
        if indices.is_empty() {
            return Err(DataError::Empty);
        }
        let subjects: Vec<Subject> = indices.iter().map(|&i| self.subjects[i].clone()).collect();
        if !subjects.iter().any(|s| s.event) {
            return Err(DataError::AllCensored);
        }
        Ok(Self {
            subjects,
            feature_names: self.feature_names.clone(),
        })
    }

    /// Keeps only the first `k` covariates of every subject.
    pub fn with_leading_features(&self, k: usize) -> Self {
        let k = k.min(self.dim());
        Self {
            subjects: self
                .subjects
                .iter()
                .map(|s| Subject::new(s.covariates[..k].to_vec(), s.time, s.event))
                .collect(),
            feature_names: self.feature_names[..k].to_vec(),
        }
    }

    /// Returns a copy whose covariates are transformed column-wise by
    /// `(x - shift) / scale`.
    pub fn standardized_with(&self, shift: &[f64], scale: &[f64]) -> Self {
        Self {
            subjects: self
                .subjects
                .iter()
                .map(|s| {
                    let x = s
                        .covariates
                        .iter()
                        .zip(shift.iter().zip(scale))
                        .map(|(v, (m, sd))| (v - m) / sd)
                        .collect();
                    Subject::new(x, s.time, s.event)
                })
                .collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Random partition stratified on the event indicator: a `fraction` share
    /// of the events and of the censored subjects goes to the first side.
    /// Both index lists are sorted.
    pub fn stratified_split(&self, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut first = Vec::new();
        let mut second = Vec::new();
        for event in [true, false] {
            let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.subjects[i].event == event).collect();
            idx.shuffle(&mut rng);
            let take = (fraction * idx.len() as f64).round() as usize;
            first.extend_from_slice(&idx[..take]);
            second.extend_from_slice(&idx[take..]);
        }
        first.sort_unstable();
        second.sort_unstable();
        (first, second)
    }

    /// Column means and standard deviations (population). Constant columns
    /// get a unit scale.
    pub fn column_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let n = self.len() as f64;
        let mut mean = vec![0.0; d];
        for s in &self.subjects {
            for (m, v) in mean.iter_mut().zip(&s.covariates) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for s in &self.subjects {
            for ((acc, v), m) in var.iter_mut().zip(&s.covariates).zip(&mean) {
                *acc += (v - m).powi(2) / n;
            }
        }
        let sd = var
            .into_iter()
            .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
            .collect();
        (mean, sd)
    }
}

/// Builds a [`Dataset`] from raw rows, reporting the first offending row.
pub fn validate_dataset(
    rows: Vec<RawRow>,
    feature_names: Option<Vec<String>>,
) -> Result<Dataset, DataError> {
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    let d = match &feature_names {
        Some(names) => names.len(),
        None => rows[0].covariates.len(),
    };
    for (row, r) in rows.iter().enumerate() {
        if r.covariates.len() != d {
            return Err(DataError::DimensionMismatch {
                row,
                expected: d,
                found: r.covariates.len(),
            });
        }
        if !r.time.is_finite() {
            return Err(DataError::NonFiniteValue {
                row,
                field: "time".into(),
            });
        }
        if r.time < 0.0 {
            return Err(DataError::NegativeTime { row, time: r.time });
        }
        if let Some(j) = r.covariates.iter().position(|v| !v.is_finite()) {
            let field = feature_names
                .as_ref()
                .map(|n| n[j].clone())
                .unwrap_or_else(|| format!("x{j}"));
            return Err(DataError::NonFiniteValue { row, field });
        }
    }
    if !rows.iter().any(|r| r.event) {
        return Err(DataError::AllCensored);
    }
    let feature_names = feature_names.unwrap_or_else(|| (0..d).map(|j| format!("x{j}")).collect());
    let subjects = rows
        .into_iter()
        .map(|r| Subject::new(r.covariates, r.time, r.event))
        .collect();
    Ok(Dataset {
        subjects,
        feature_names,
    })
}

/// Indices of subjects still at risk strictly after `t`.
pub fn risk_set(dataset: &Dataset, t: f64) -> Vec<usize> {
    dataset
        .subjects
        .iter()
        .enumerate()
        .filter(|(_, s)| s.time > t)
        .map(|(i, _)| i)
        .collect()
}

/// Right-continuous step function `t -> S(t)` on a strictly increasing grid.
///
/// Evaluates to 1 before the first grid time and stays flat after the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    times: Vec<f64>,
    values: Vec<f64>,
}

const CURVE_SLACK: f64 = 1e-12;

impl SurvivalCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, DataError> {
        if times.len() != values.len() {
            return Err(DataError::InvalidCurve(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(DataError::InvalidCurve("times must be finite and >= 0".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::InvalidCurve("times must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DataError::InvalidCurve("values must lie in [0, 1]".into()));
        }
        if values.windows(2).any(|w| w[1] > w[0] + CURVE_SLACK) {
            return Err(DataError::InvalidCurve("values must be non-increasing".into()));
        }
        Ok(Self { times, values })
    }

    /// Builds a curve from arbitrary real values, clamping into `[0, 1]` and
    /// enforcing monotonicity with a running minimum.
    pub fn from_values_clamped(times: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(times.len(), values.len());
        let mut running = 1.0f64;
        let values = values
            .into_iter()
            .map(|v| {
                let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                running = running.min(v);
                running
            })
            .collect();
        Self { times, values }
    }

    /// `S(t) = exp(-H(t))` for a non-decreasing cumulative hazard.
    pub fn from_cumulative_hazard(times: Vec<f64>, cumhaz: &[f64]) -> Self {
        let values = cumhaz.iter().map(|h| (-h.max(0.0)).exp()).collect();
        Self::from_values_clamped(times, values)
    }

    /// The curve that is 1 everywhere.
    pub fn constant_one() -> Self {
        Self {
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn survival_at(&self, t: f64) -> f64 {
        survival_at(self, t)
    }

    /// Evaluates on a sorted grid in one merge pass.
    pub fn evaluate_sorted(&self, grid: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(grid.len());
        let mut k = 0usize;
        let mut current = 1.0;
        for &t in grid {
            while k < self.times.len() && self.times[k] <= t {
                current = self.values[k];
                k += 1;
            }
            out.push(current);
        }
        out
    }

    /// Restricted mean `integral_0^horizon S(t) dt`, exact for the step function.
    pub fn restricted_mean(&self, horizon: f64) -> f64 {
        let mut area = 0.0;
        let mut prev_t = 0.0;
        let mut prev_v = 1.0;
        for (&t, &v) in self.times.iter().zip(&self.values) {
            if t >= horizon {
                break;
            }
            area += prev_v * (t - prev_t);
            prev_t = t;
            prev_v = v;
        }
        area + prev_v * (horizon - prev_t).max(0.0)
    }
}

/// Value at the largest grid time `<= t`; 1 before the grid, flat after it.
pub fn survival_at(curve: &SurvivalCurve, t: f64) -> f64 {
    let idx = curve.times.partition_point(|&g| g <= t);
    if idx == 0 {
        1.0
    } else {
        curve.values[idx - 1]
    }
}

/// Scalar mortality risk; larger means earlier expected failure. Only the
/// ordering across subjects carries meaning.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct RiskScore(pub f64);

impl RiskScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(x: Vec<f64>, time: f64, event: bool) -> RawRow {
        RawRow {
            covariates: x,
            time,
            event,
        }
    }

    fn three_times() -> Dataset {
        Dataset::from_rows(
            vec![
                row(vec![0.0], 1.0, true),
                row(vec![1.0], 2.0, true),
                row(vec![2.0], 3.0, false),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn survival_at_steps() {
        let c = SurvivalCurve::new(vec![1.0, 2.0], vec![0.8, 0.5]).unwrap();
        assert_eq!(c.survival_at(0.5), 1.0);
        assert_eq!(c.survival_at(1.0), 0.8);
        assert_eq!(c.survival_at(1.5), 0.8);
        assert_eq!(c.survival_at(2.0), 0.5);
        assert_eq!(c.survival_at(7.0), 0.5);
        assert_eq!(c.evaluate_sorted(&[0.5, 1.5, 7.0]), vec![1.0, 0.8, 0.5]);
    }

    #[test]
    fn risk_set_is_strict() {
        let d = three_times();
        assert_eq!(d.risk_set(0.0), vec![0, 1, 2]);
        assert_eq!(d.risk_set(2.0), vec![2]);
        assert!(d.risk_set(5.0).is_empty());
    }

    #[test]
    fn validation_errors() {
        assert_eq!(three_times().len(), 3);
        let err = Dataset::from_rows(vec![row(vec![0.0], -1.0, true)], None).unwrap_err();
        assert!(matches!(err, DataError::NegativeTime { row: 0, .. }));
        let err = Dataset::from_rows(
            vec![row(vec![0.0], 1.0, false), row(vec![0.0], 2.0, false)],
            None,
        )
        .unwrap_err();
        assert_eq!(err, DataError::AllCensored);
        let err = Dataset::from_rows(
            vec![row(vec![0.0], 1.0, true), row(vec![0.0, 1.0], 2.0, false)],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, DataError::DimensionMismatch { row: 1, .. }));
        let err = Dataset::from_rows(vec![row(vec![f64::NAN], 1.0, true)], None).unwrap_err();
        assert!(matches!(err, DataError::NonFiniteValue { row: 0, .. }));
    }

    #[test]
    fn curve_rejects_increasing_values() {
        assert!(SurvivalCurve::new(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(SurvivalCurve::new(vec![2.0, 1.0], vec![0.5, 0.4]).is_err());
        assert!(SurvivalCurve::new(vec![1.0], vec![1.5]).is_err());
    }

    #[test]
    fn restricted_mean_of_steps() {
        let c = SurvivalCurve::new(vec![1.0, 2.0], vec![0.8, 0.5]).unwrap();
        // 1*1 + 0.8*1 + 0.5*2
        assert!((c.restricted_mean(4.0) - 2.8).abs() < 1e-12);
        assert!((c.restricted_mean(0.5) - 0.5).abs() < 1e-12);
    }
}
