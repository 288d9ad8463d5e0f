//! Random survival forest: bootstrap survival trees split on the log-rank
//! statistic, leaves holding Nelson-Aalen cumulative hazards.
//!
//! For a candidate left child `L` the log-rank numerator is
//! `sum_{i in L} (delta_i - Lambda(y_i))` with `Lambda` the node's
//! Nelson-Aalen estimate, and the variance splits into a part linear in the
//! members of `L` and a quadratic part maintained with two Fenwick trees, so
//! a threshold scan over one feature costs `O(m log m)`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_dim, FitError, SurvivalModel};
use crate::data::{Dataset, RiskScore, SurvivalCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RsfConfig {
    pub n_trees: usize,
    /// Features tried per node; `None` means all of them.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` grows until no split is possible.
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RsfConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: None,
            min_samples_leaf: 3,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl RsfConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.n_trees == 0 {
            return Err(FitError::InvalidConfig("n_trees must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(FitError::InvalidConfig("min_samples_leaf must be >= 1".into()));
        }
        if self.max_features == Some(0) || self.max_depth == Some(0) {
            return Err(FitError::InvalidConfig(
                "max_features and max_depth must be >= 1 when set".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum SurvivalNode {
    /// Nelson-Aalen increments as `(grid index, d_k / Y_k)`.
    Leaf {
        jumps: Vec<(u32, f64)>,
        size: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTree {
    pub nodes: Vec<SurvivalNode>,
}

impl SurvivalTree {
    pub fn leaf(&self, x: &[f64]) -> &[(u32, f64)] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                SurvivalNode::Leaf { jumps, .. } => return jumps,
                SurvivalNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaf_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            SurvivalNode::Leaf { size, .. } => Some(*size),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsfModel {
    pub dim: usize,
    /// Distinct training event times.
    pub grid: Vec<f64>,
    pub trees: Vec<SurvivalTree>,
}

impl RsfModel {
    /// Forest-averaged cumulative hazard on [`RsfModel::grid`].
    pub fn cumulative_hazard(&self, x: &[f64]) -> Vec<f64> {
        let mut jumps = vec![0.0; self.grid.len()];
        for tree in &self.trees {
            for &(k, h) in tree.leaf(x) {
                jumps[k as usize] += h;
            }
        }
        let scale = 1.0 / self.trees.len() as f64;
        let mut acc = 0.0;
        jumps
            .into_iter()
            .map(|j| {
                acc += j * scale;
                acc
            })
            .collect()
    }
}

impl SurvivalModel for RsfModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_survival(&self, x: &[f64]) -> Result<SurvivalCurve, FitError> {
        check_dim(self.dim, x)?;
        let h = self.cumulative_hazard(x);
        Ok(SurvivalCurve::from_cumulative_hazard(self.grid.clone(), &h))
    }

    /// Ensemble mortality: the forest cumulative hazard summed over the grid.
    fn predict_risk(&self, x: &[f64]) -> Result<RiskScore, FitError> {
        check_dim(self.dim, x)?;
        Ok(RiskScore(self.cumulative_hazard(x).iter().sum()))
    }
}

pub fn fit_rsf(dataset: &Dataset, config: &RsfConfig) -> Result<RsfModel, FitError> {
    config.validate()?;
    let d = dataset.dim();
    let grid = dataset.event_times();
    let x = super::design(dataset);
    let times = dataset.times();
    let events = dataset.events();
    let max_features = config.max_features.unwrap_or(d).clamp(1, d.max(1));
    let builder = TreeBuilder {
        x: &x,
        times: &times,
        events: &events,
        grid: &grid,
        max_features,
        min_leaf: config.min_samples_leaf,
        max_depth: config.max_depth.unwrap_or(usize::MAX),
    };
    let n = dataset.len();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let sample: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            builder.build(sample, &mut rng)
        })
        .collect();
    Ok(RsfModel { dim: d, grid, trees })
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    times: &'a [f64],
    events: &'a [bool],
    grid: &'a [f64],
    max_features: usize,
    min_leaf: usize,
    max_depth: usize,
}

/// Node-local risk-set summary over the node's distinct event times.
struct NodeStats {
    /// Number of node event times `<= y_i`, per member (aligned with members).
    pos: Vec<usize>,
    /// `Lambda(t_k)` prefix, index 0 = 0.
    cumhaz: Vec<f64>,
    /// Prefix sums of `w_k / Y_k`, index 0 = 0.
    linear: Vec<f64>,
    /// Prefix sums of `w_k / Y_k^2`, index 0 = 0.
    quad: Vec<f64>,
    event_times: Vec<f64>,
    increments: Vec<f64>,
}

impl NodeStats {
    fn new(members: &[usize], times: &[f64], events: &[bool]) -> Self {
        let mut event_times: Vec<f64> = members
            .iter()
            .filter(|&&i| events[i])
            .map(|&i| times[i])
            .collect();
        event_times.sort_by(f64::total_cmp);
        event_times.dedup();
        let m = event_times.len();
        let pos: Vec<usize> = members
            .iter()
            .map(|&i| event_times.partition_point(|&t| t <= times[i]))
            .collect();
        let mut at_risk = vec![0usize; m + 2];
        let mut deaths = vec![0usize; m + 1];
        for (&i, &p) in members.iter().zip(&pos) {
            at_risk[p] += 1;
            if events[i] {
                deaths[p] += 1;
            }
        }
        // at_risk[k] = #{pos_i >= k}
        for k in (0..=m).rev() {
            at_risk[k] += at_risk[k + 1];
        }
        let mut cumhaz = vec![0.0; m + 1];
        let mut linear = vec![0.0; m + 1];
        let mut quad = vec![0.0; m + 1];
        let mut increments = Vec::with_capacity(m);
        for k in 1..=m {
            let y = at_risk[k] as f64;
            let dk = deaths[k] as f64;
            let inc = dk / y;
            increments.push(inc);
            let w = if at_risk[k] > 1 {
                dk * (y - dk) / (y - 1.0)
            } else {
                0.0
            };
            cumhaz[k] = cumhaz[k - 1] + inc;
            linear[k] = linear[k - 1] + w / y;
            quad[k] = quad[k - 1] + w / (y * y);
        }
        Self {
            pos,
            cumhaz,
            linear,
            quad,
            event_times,
            increments,
        }
    }
}

struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self {
            tree: vec![0.0; n + 1],
        }
    }

    fn add(&mut self, i: usize, v: f64) {
        let mut i = i + 1;
        while i < self.tree.len() {
            self.tree[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over indices `< i`.
    fn prefix(&self, i: usize) -> f64 {
        let mut i = i;
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

impl TreeBuilder<'_> {
    fn build(&self, sample: Vec<usize>, rng: &mut ChaCha8Rng) -> SurvivalTree {
        let mut tree = SurvivalTree { nodes: Vec::new() };
        self.grow(&mut tree, sample, 0, rng);
        tree
    }

    fn grow(
        &self,
        tree: &mut SurvivalTree,
        members: Vec<usize>,
        depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let stats = NodeStats::new(&members, self.times, self.events);
        let id = tree.nodes.len();
        tree.nodes.push(self.leaf(&stats, members.len()));
        if depth >= self.max_depth
            || members.len() < 2 * self.min_leaf
            || stats.event_times.is_empty()
            || self.x[0].is_empty()
        {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&members, &stats, rng) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = members
            .into_iter()
            .partition(|&i| self.x[i][feature] <= threshold);
        let left = self.grow(tree, left, depth + 1, rng);
        let right = self.grow(tree, right, depth + 1, rng);
        tree.nodes[id] = SurvivalNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn leaf(&self, stats: &NodeStats, size: usize) -> SurvivalNode {
        let jumps = stats
            .event_times
            .iter()
            .zip(&stats.increments)
            .map(|(&t, &h)| (self.grid.partition_point(|&g| g < t) as u32, h))
            .collect();
        SurvivalNode::Leaf { jumps, size }
    }

    fn best_split(
        &self,
        members: &[usize],
        stats: &NodeStats,
        rng: &mut ChaCha8Rng,
    ) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let m = stats.event_times.len();
        let n = members.len();
        let features = sample(rng, d, self.max_features.min(d));
        let mut best_stat = 1e-12;
        let mut best = None;
        let mut order: Vec<usize> = (0..n).collect();
        for f in features.iter() {
            order.sort_by(|&a, &b| self.x[members[a]][f].total_cmp(&self.x[members[b]][f]));
            let mut counts = Fenwick::new(m + 1);
            let mut csums = Fenwick::new(m + 1);
            let mut numerator = 0.0;
            let mut linear = 0.0;
            let mut quad = 0.0;
            for k in 0..n - 1 {
                let a = order[k];
                let i = members[a];
                let p = stats.pos[a];
                let delta = if self.events[i] { 1.0 } else { 0.0 };
                numerator += delta - stats.cumhaz[p];
                linear += stats.linear[p];
                // sum_{k <= p} c_k Y_Lk before adding this member
                let cnt_lt = counts.prefix(p);
                let sum_lt = csums.prefix(p);
                let in_left = k as f64;
                let partial = sum_lt + (in_left - cnt_lt) * stats.quad[p];
                quad += 2.0 * partial + stats.quad[p];
                counts.add(p, 1.0);
                csums.add(p, stats.quad[p]);

                let nl = k + 1;
                if nl < self.min_leaf || n - nl < self.min_leaf {
                    continue;
                }
                let lo = self.x[i][f];
                let hi = self.x[members[order[k + 1]]][f];
                if lo == hi {
                    continue;
                }
                let variance = linear - quad;
                if variance <= 1e-12 {
                    continue;
                }
                let stat = numerator * numerator / variance;
                if stat > best_stat {
                    best_stat = stat;
                    best = Some((f, lo + (hi - lo) / 2.0));
                }
            }
        }
        best
    }
}

/// Plain two-sample log-rank chi-square, used to cross-check the
/// incremental scan.
#[cfg(test)]
pub(crate) fn logrank_statistic(times: &[f64], events: &[bool], left: &[bool]) -> f64 {
    let mut event_times: Vec<f64> = times
        .iter()
        .zip(events)
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let mut num = 0.0;
    let mut var = 0.0;
    for &t in &event_times {
        let mut y = 0.0;
        let mut yl = 0.0;
        let mut dt = 0.0;
        let mut dl = 0.0;
        for i in 0..times.len() {
            if times[i] >= t {
                y += 1.0;
                if left[i] {
                    yl += 1.0;
                }
            }
            if times[i] == t && events[i] {
                dt += 1.0;
                if left[i] {
                    dl += 1.0;
                }
            }
        }
        num += dl - yl * dt / y;
        if y > 1.0 {
            var += yl / y * (1.0 - yl / y) * (y - dt) / (y - 1.0) * dt;
        }
    }
    num * num / var
}
