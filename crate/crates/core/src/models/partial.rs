//! Risk-set bookkeeping for the Cox partial likelihood (Breslow ties) and the
//! Breslow baseline cumulative hazard.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SurvivalCurve};

/// Subjects grouped by distinct observed time, ascending.
#[derive(Debug, Clone)]
pub(crate) struct TimeGroups {
    /// Subject indices sorted by ascending time.
    pub order: Vec<usize>,
    /// `(start, end, events)` ranges into `order`, one per distinct time.
    pub groups: Vec<(usize, usize, usize)>,
    pub times: Vec<f64>,
}

impl TimeGroups {
    pub fn new(times: &[f64], events: &[bool]) -> Self {
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(a.cmp(&b)));
        let mut groups = Vec::new();
        let mut group_times = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let t = times[order[start]];
            let mut end = start;
            let mut d = 0;
            while end < order.len() && times[order[end]] == t {
                if events[order[end]] {
                    d += 1;
                }
                end += 1;
            }
            groups.push((start, end, d));
            group_times.push(t);
            start = end;
        }
        Self {
            order,
            groups,
            times: group_times,
        }
    }

    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self::new(&dataset.times(), &dataset.events())
    }

    /// Risk-set sums `S0(t_g) = sum_{y_j >= t_g} exp(eta_j - shift)` for every
    /// group, plus the shift used.
    pub fn risk_sums(&self, eta: &[f64]) -> (Vec<f64>, f64) {
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = vec![0.0; self.groups.len()];
        let mut acc = 0.0;
        for (g, &(start, end, _)) in self.groups.iter().enumerate().rev() {
            for &i in &self.order[start..end] {
                acc += (eta[i] - shift).exp();
            }
            s0[g] = acc;
        }
        (s0, shift)
    }

    /// Breslow log partial likelihood `sum_events [eta_i - log S0(y_i)]`.
    pub fn log_partial_likelihood(&self, eta: &[f64], events: &[bool]) -> f64 {
        let (s0, shift) = self.risk_sums(eta);
        let mut ll = 0.0;
        for (g, &(start, end, d)) in self.groups.iter().enumerate() {
            if d == 0 {
                continue;
            }
            for &i in &self.order[start..end] {
                if events[i] {
                    ll += eta[i] - shift;
                }
            }
            ll -= d as f64 * s0[g].ln();
        }
        ll
    }

    /// Gradient of the log partial likelihood with respect to each `eta_i`:
    /// `delta_i - exp(eta_i) * sum_{t_g <= y_i} d_g / S0(t_g)`.
    pub fn eta_gradient(&self, eta: &[f64], events: &[bool]) -> Vec<f64> {
        let (s0, shift) = self.risk_sums(eta);
        let mut grad = vec![0.0; eta.len()];
        let mut cum = 0.0;
        for (g, &(start, end, d)) in self.groups.iter().enumerate() {
            if d > 0 {
                cum += d as f64 / s0[g];
            }
            for &i in &self.order[start..end] {
                let delta = if events[i] { 1.0 } else { 0.0 };
                grad[i] = delta - (eta[i] - shift).exp() * cum;
            }
        }
        grad
    }
}

/// Breslow estimate of the baseline cumulative hazard on the distinct event
/// times, for the linear predictor scale of `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    pub times: Vec<f64>,
    pub cumhaz: Vec<f64>,
}

impl BaselineHazard {
    pub(crate) fn breslow(groups: &TimeGroups, eta: &[f64]) -> Self {
        let (s0, shift) = groups.risk_sums(eta);
        let scale = (-shift).exp();
        let mut times = Vec::new();
        let mut cumhaz = Vec::new();
        let mut acc = 0.0;
        for (g, &(_, _, d)) in groups.groups.iter().enumerate() {
            if d == 0 {
                continue;
            }
            acc += d as f64 / s0[g] * scale;
            times.push(groups.times[g]);
            cumhaz.push(acc);
        }
        Self { times, cumhaz }
    }

    /// `S(t | eta) = exp(-Lambda_0(t) exp(eta))` on the event-time grid.
    pub fn curve(&self, eta: f64) -> SurvivalCurve {
        let hr = eta.exp();
        let h: Vec<f64> = self.cumhaz.iter().map(|c| c * hr).collect();
        SurvivalCurve::from_cumulative_hazard(self.times.clone(), &h)
    }
}
