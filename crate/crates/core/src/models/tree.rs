//! Least-squares regression trees used as base learners by boosting.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl RegressionTree {
    /// Greedy CART fit of `targets` on the rows of `x`.
    pub fn fit(x: &[Vec<f64>], targets: &[f64], params: TreeParams) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        let indices: Vec<usize> = (0..targets.len()).collect();
        tree.grow(x, targets, indices, 0, params);
        tree
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn is_stump(&self) -> bool {
        self.nodes.len() == 1
    }

    fn grow(
        &mut self,
        x: &[Vec<f64>],
        targets: &[f64],
        indices: Vec<usize>,
        depth: usize,
        params: TreeParams,
    ) -> usize {
        let id = self.nodes.len();
        let mean = indices.iter().map(|&i| targets[i]).sum::<f64>() / indices.len() as f64;
        self.nodes.push(Node::Leaf { value: mean });
        if depth >= params.max_depth || indices.len() < 2 * params.min_samples_leaf.max(1) {
            return id;
        }
        let Some((feature, threshold)) = best_split(x, targets, &indices, params.min_samples_leaf)
        else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            indices.into_iter().partition(|&i| x[i][feature] <= threshold);
        let left = self.grow(x, targets, left, depth + 1, params);
        let right = self.grow(x, targets, right, depth + 1, params);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Split maximizing the reduction in squared error, or `None` when no split
/// improves on the parent.
fn best_split(
    x: &[Vec<f64>],
    targets: &[f64],
    indices: &[usize],
    min_leaf: usize,
) -> Option<(usize, f64)> {
    let min_leaf = min_leaf.max(1);
    let n = indices.len();
    let total: f64 = indices.iter().map(|&i| targets[i]).sum();
    let parent = total * total / n as f64;
    let mut best_gain = 1e-12 * (1.0 + parent.abs());
    let mut best = None;
    let d = x[indices[0]].len();
    let mut sorted = indices.to_vec();
    for f in 0..d {
        sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += targets[sorted[k]];
            let nl = k + 1;
            let (lo, hi) = (x[sorted[k]][f], x[sorted[k + 1]][f]);
            if lo == hi || nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / (n - nl) as f64;
            let gain = score - parent;
            if gain > best_gain {
                best_gain = gain;
                best = Some((f, lo + (hi - lo) / 2.0));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_a_step() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 8 { -1.0 } else { 2.0 }).collect();
        let t = RegressionTree::fit(
            &x,
            &y,
            TreeParams {
                max_depth: 3,
                min_samples_leaf: 1,
            },
        );
        for (xi, yi) in x.iter().zip(&y) {
            assert!((t.predict(xi) - yi).abs() < 1e-12);
        }
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn constant_targets_give_a_stump() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let t = RegressionTree::fit(
            &x,
            &[0.5; 10],
            TreeParams {
                max_depth: 3,
                min_samples_leaf: 1,
            },
        );
        assert!(t.is_stump());
        assert_eq!(t.predict(&[100.0]), 0.5);
    }

    #[test]
    fn leaves_respect_min_samples() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i == 0 { 10.0 } else { 0.0 }).collect();
        let t = RegressionTree::fit(
            &x,
            &y,
            TreeParams {
                max_depth: 5,
                min_samples_leaf: 3,
            },
        );
        // The outlier cannot be isolated in a leaf of its own.
        assert!(t.predict(&[0.0]) < 10.0);
    }
}
