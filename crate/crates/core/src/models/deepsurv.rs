//! DeepSurv: a multilayer perceptron `r(x)` trained on the negative Cox log
//! partial likelihood with an L2 penalty, by full-batch gradient descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::partial::{BaselineHazard, TimeGroups};
use super::{check_dim, FitError, SurvivalModel};
use crate::data::{Dataset, RiskScore, SurvivalCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain gradient descent with a fixed step.
    Sgd,
    /// Adam with a fixed base step.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeepSurvConfig {
    pub hidden: Vec<usize>,
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for DeepSurvConfig {
    fn default() -> Self {
        Self {
            hidden: vec![60, 10],
            l2: 1e-4,
            learning_rate: 1e-3,
            epochs: 300,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl DeepSurvConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(FitError::InvalidConfig("hidden widths must be >= 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(FitError::InvalidConfig("l2 must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(FitError::InvalidConfig("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Fully connected ReLU network with a single linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// He-uniform hidden layers; the output layer is zero unless
    /// `random_output` is set.
    pub fn init(inputs: usize, hidden: &[usize], seed: u64, random_output: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut fan_in = inputs;
        let widths: Vec<usize> = hidden.iter().copied().chain(std::iter::once(1)).collect();
        for (l, &width) in widths.iter().enumerate() {
            let last = l + 1 == widths.len();
            let bound = (6.0 / fan_in.max(1) as f64).sqrt();
            let weights = (0..width * fan_in)
                .map(|_| {
                    if last && !random_output {
                        0.0
                    } else {
                        rng.gen_range(-bound..bound)
                    }
                })
                .collect();
            let bias = if last && random_output {
                vec![rng.gen_range(-0.1..0.1)]
            } else {
                vec![0.0; width]
            };
            layers.push(Layer {
                inputs: fan_in,
                outputs: width,
                weights,
                bias,
            });
            fan_in = width;
        }
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.bias);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&p[at..at + nb]);
            at += nb;
        }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let mut z = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            layer.apply(&a, &mut z);
            if l + 1 < self.layers.len() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut a, &mut z);
        }
        a[0]
    }

    /// `l(theta) = -(1/L) log PL(r) + l2 * |theta|^2`, `L` = number of events.
    pub fn loss(&self, dataset: &Dataset, l2: f64) -> f64 {
        let scores: Vec<f64> = dataset
            .subjects()
            .iter()
            .map(|s| self.forward(&s.covariates))
            .collect();
        let groups = TimeGroups::from_dataset(dataset);
        let ll = groups.log_partial_likelihood(&scores, &dataset.events());
        let norm: f64 = self.params().iter().map(|p| p * p).sum();
        -ll / dataset.n_events() as f64 + l2 * norm
    }

    /// Loss and its gradient with respect to [`Mlp::params`], by backpropagation.
    pub fn loss_and_gradient(&self, dataset: &Dataset, l2: f64) -> (f64, Vec<f64>) {
        let groups = TimeGroups::from_dataset(dataset);
        let events = dataset.events();
        self.loss_and_gradient_with(dataset, &groups, &events, l2)
    }

    fn loss_and_gradient_with(
        &self,
        dataset: &Dataset,
        groups: &TimeGroups,
        events: &[bool],
        l2: f64,
    ) -> (f64, Vec<f64>) {
        let n_layers = self.layers.len();
        // activations[l][i] is the input of layer l for subject i
        let mut activations: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(dataset.len()); n_layers];
        let mut scores = Vec::with_capacity(dataset.len());
        let mut z = Vec::new();
        for s in dataset.subjects() {
            let mut a = s.covariates.clone();
            for (l, layer) in self.layers.iter().enumerate() {
                layer.apply(&a, &mut z);
                if l + 1 < n_layers {
                    z.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                activations[l].push(std::mem::replace(&mut a, z.clone()));
            }
            scores.push(a[0]);
        }
        let n_events = dataset.n_events() as f64;
        let ll = groups.log_partial_likelihood(&scores, events);
        let d_scores: Vec<f64> = groups
            .eta_gradient(&scores, events)
            .into_iter()
            .map(|g| -g / n_events)
            .collect();

        let params = self.params();
        let norm: f64 = params.iter().map(|p| p * p).sum();
        let loss = -ll / n_events + l2 * norm;

        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
            .collect();
        let mut delta = Vec::new();
        let mut prev = Vec::new();
        for (i, &ds) in d_scores.iter().enumerate() {
            if ds == 0.0 {
                continue;
            }
            delta.clear();
            delta.push(ds);
            for l in (0..n_layers).rev() {
                let layer = &self.layers[l];
                let input = &activations[l][i];
                let (gw, gb) = &mut grads[l];
                for o in 0..layer.outputs {
                    let dv = delta[o];
                    if dv == 0.0 {
                        continue;
                    }
                    gb[o] += dv;
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += dv * x;
                    }
                }
                if l == 0 {
                    break;
                }
                prev.clear();
                prev.resize(layer.inputs, 0.0);
                for o in 0..layer.outputs {
                    let dv = delta[o];
                    if dv == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += dv * w;
                    }
                }
                // ReLU derivative: the stored input of layer l is the
                // post-activation output of layer l - 1.
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut prev);
            }
        }
        let mut gradient = Vec::with_capacity(params.len());
        for (gw, gb) in grads {
            gradient.extend(gw);
            gradient.extend(gb);
        }
        for (g, p) in gradient.iter_mut().zip(&params) {
            *g += 2.0 * l2 * p;
        }
        (loss, gradient)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepSurvModel {
    pub network: Mlp,
    pub baseline: BaselineHazard,
    /// Training loss before each epoch, plus the final loss.
    pub loss_trace: Vec<f64>,
}

impl SurvivalModel for DeepSurvModel {
    fn dim(&self) -> usize {
        self.network.inputs()
    }

    fn predict_survival(&self, x: &[f64]) -> Result<SurvivalCurve, FitError> {
        check_dim(self.dim(), x)?;
        Ok(self.baseline.curve(self.network.forward(x)))
    }

    fn predict_risk(&self, x: &[f64]) -> Result<RiskScore, FitError> {
        check_dim(self.dim(), x)?;
        Ok(RiskScore(self.network.forward(x)))
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

pub fn fit_deepsurv(dataset: &Dataset, config: &DeepSurvConfig) -> Result<DeepSurvModel, FitError> {
    config.validate()?;
    let mut network = Mlp::init(dataset.dim(), &config.hidden, config.seed, false);
    let groups = TimeGroups::from_dataset(dataset);
    let events = dataset.events();
    let mut params = network.params();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut loss_trace = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..config.epochs {
        let (loss, grad) = network.loss_and_gradient_with(dataset, &groups, &events, config.l2);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(FitError::NonFiniteLoss { epoch });
        }
        loss_trace.push(loss);
        match config.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= config.learning_rate * g;
                }
            }
            Optimizer::Adam => {
                let t = (epoch + 1) as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for k in 0..params.len() {
                    m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * grad[k];
                    v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
                    params[k] -= config.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
        network.set_params(&params);
    }
    let final_loss = network.loss(dataset, config.l2);
    if !final_loss.is_finite() {
        return Err(FitError::NonFiniteLoss {
            epoch: config.epochs,
        });
    }
    loss_trace.push(final_loss);
    let scores: Vec<f64> = dataset
        .subjects()
        .iter()
        .map(|s| network.forward(&s.covariates))
        .collect();
    let baseline = BaselineHazard::breslow(&groups, &scores);
    Ok(DeepSurvModel {
        network,
        baseline,
        loss_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;

    fn tiny() -> Dataset {
        let subjects = vec![
            Subject::new(vec![0.5, -1.0, 0.2], 1.0, true),
            Subject::new(vec![-0.3, 0.2, 1.1], 2.0, true),
            Subject::new(vec![1.2, 0.4, -0.6], 2.0, false),
            Subject::new(vec![0.0, 1.0, 0.3], 3.5, true),
            Subject::new(vec![-1.0, -0.5, -0.2], 4.0, true),
        ];
        Dataset::new(subjects, vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    #[test]
    fn backprop_matches_central_differences() {
        let d = tiny();
        let net = Mlp::init(3, &[6, 4], 3, true);
        let (loss, grad) = net.loss_and_gradient(&d, 0.01);
        assert!((loss - net.loss(&d, 0.01)).abs() < 1e-12);
        let p0 = net.params();
        let h = 1e-6;
        for k in 0..p0.len() {
            let mut up = net.clone();
            let mut dn = net.clone();
            let mut p = p0.clone();
            p[k] += h;
            up.set_params(&p);
            p[k] -= 2.0 * h;
            dn.set_params(&p);
            let fd = (up.loss(&d, 0.01) - dn.loss(&d, 0.01)) / (2.0 * h);
            assert!(
                (fd - grad[k]).abs() <= 1e-6 + 1e-4 * fd.abs(),
                "param {k}: {fd} vs {}",
                grad[k]
            );
        }
    }

    #[test]
    fn untrained_network_is_a_constant_scorer() {
        let cfg = DeepSurvConfig {
            epochs: 0,
            ..Default::default()
        };
        let m = fit_deepsurv(&tiny(), &cfg).unwrap();
        let r: Vec<f64> = tiny()
            .subjects()
            .iter()
            .map(|s| m.predict_risk(&s.covariates).unwrap().0)
            .collect();
        assert!(r.iter().all(|&v| v == r[0]));
    }

    #[test]
    fn exploding_learning_rate_is_reported() {
        let cfg = DeepSurvConfig {
            learning_rate: 1e200,
            optimizer: Optimizer::Sgd,
            epochs: 50,
            ..Default::default()
        };
        assert!(matches!(
            fit_deepsurv(&tiny(), &cfg),
            Err(FitError::NonFiniteLoss { .. })
        ));
    }
}
