//! Gradient boosting with the Cox partial likelihood as loss: regression
//! trees fitted stagewise to the negative gradient with respect to `f(x)`.

use serde::{Deserialize, Serialize};

use super::partial::{BaselineHazard, TimeGroups};
use super::tree::{RegressionTree, TreeParams};
use super::{check_dim, FitError, SurvivalModel};
use crate::data::{Dataset, RiskScore, SurvivalCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbcConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbcConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 1,
        }
    }
}

impl GbcConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(FitError::InvalidConfig("learning_rate must be >= 0".into()));
        }
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(FitError::InvalidConfig(
                "max_depth and min_samples_leaf must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbcModel {
    pub dim: usize,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    pub baseline: BaselineHazard,
    /// Stages whose tree could not split and contributed a constant.
    pub degenerate_stages: usize,
}

impl GbcModel {
    /// The additive score `f(x) = sum_k rho * g_k(x)`.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .map(|t| self.learning_rate * t.predict(x))
            .sum()
    }
}

impl SurvivalModel for GbcModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_survival(&self, x: &[f64]) -> Result<SurvivalCurve, FitError> {
        check_dim(self.dim, x)?;
        Ok(self.baseline.curve(self.score(x)))
    }

    fn predict_risk(&self, x: &[f64]) -> Result<RiskScore, FitError> {
        check_dim(self.dim, x)?;
        Ok(RiskScore(self.score(x)))
    }
}

pub fn fit_gbc(dataset: &Dataset, config: &GbcConfig) -> Result<GbcModel, FitError> {
    config.validate()?;
    let x = super::design(dataset);
    let events = dataset.events();
    let groups = TimeGroups::from_dataset(dataset);
    let params = TreeParams {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
    };
    let mut f = vec![0.0; dataset.len()];
    let mut trees = Vec::with_capacity(config.n_estimators);
    let mut degenerate_stages = 0;
    if config.learning_rate > 0.0 && dataset.dim() > 0 {
        for _ in 0..config.n_estimators {
            let residuals = groups.eta_gradient(&f, &events);
            let tree = RegressionTree::fit(&x, &residuals, params);
            if tree.is_stump() {
                degenerate_stages += 1;
                log::debug!("boosting stage produced a stump");
            }
            for (fi, xi) in f.iter_mut().zip(&x) {
                *fi += config.learning_rate * tree.predict(xi);
            }
            trees.push(tree);
        }
    }
    let baseline = BaselineHazard::breslow(&groups, &f);
    Ok(GbcModel {
        dim: dataset.dim(),
        learning_rate: config.learning_rate,
        trees,
        baseline,
        degenerate_stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;
    use crate::scoring::concordance_index;

    fn data() -> Dataset {
        let subjects = (0..30)
            .map(|i| {
                let g = (i % 2) as f64;
                let t = if g == 1.0 { 1.0 + i as f64 } else { 5.0 + 2.0 * i as f64 };
                Subject::new(vec![g, (i % 7) as f64], t, i % 5 != 0)
            })
            .collect();
        Dataset::new(subjects, vec!["g".into(), "z".into()]).unwrap()
    }

    #[test]
    fn null_models_are_constant() {
        let d = data();
        for cfg in [
            GbcConfig {
                n_estimators: 0,
                ..Default::default()
            },
            GbcConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
        ] {
            let m = fit_gbc(&d, &cfg).unwrap();
            let risks = m.predict_risk_batch(&d);
            assert!(risks.iter().all(|r| r.0 == 0.0));
            assert_eq!(concordance_index(&risks, &d).unwrap().value, 0.5);
        }
    }

    #[test]
    fn boosting_orders_the_strong_covariate() {
        let d = data();
        let m = fit_gbc(&d, &GbcConfig::default()).unwrap();
        assert!(m.score(&[1.0, 3.0]) > m.score(&[0.0, 3.0]));
    }

    impl GbcModel {
        fn predict_risk_batch(&self, d: &Dataset) -> Vec<RiskScore> {
            d.subjects()
                .iter()
                .map(|s| self.predict_risk(&s.covariates).unwrap())
                .collect()
        }
    }
}
