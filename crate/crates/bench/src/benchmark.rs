//! The comparison protocol: repeated stratified train/validation splits,
//! default and tuned variants of every model, the fold-averaged ensemble and
//! the per-dataset and cross-dataset aggregates.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use survens::data::{Dataset, RiskScore, SurvivalCurve};
use survens::ensemble::{fit_ensemble, EnsembleModel, EnsembleWeights};
use survens::models::{fit, FittedModel, ModelConfig};
use survens::scoring::{concordance_index, default_horizon, integrated_brier_score, km_censoring};
use survens::simulate::{derive_seed, generate, nan_as_null, Metric};

use crate::config::{BenchConfig, DatasetSource};
use crate::error::BenchError;
use crate::ingest::{fold_split, ingest, split, stratified_folds, Standardize};
use crate::search::random_search;

pub const ENSEMBLE_LABEL: &str = "ensemble";
pub const OVERALL: &str = "overall";
pub const RANK_LABELS: [&str; 3] = ["First", "Second", "Third"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub censored_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub master_seed: u64,
    pub n_splits: usize,
    pub train_fraction: f64,
    /// `train_split` or `full_data`.
    pub standardization: String,
    pub search_budget: Option<usize>,
    pub search_folds: Option<usize>,
    pub ensemble_folds: Option<usize>,
    pub variants: Vec<String>,
    pub datasets: Vec<DatasetSummary>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub dataset: String,
    pub model: String,
    pub split: usize,
    pub metric: Metric,
    pub value: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// A dataset name or `overall`.
    pub dataset: String,
    /// A variant label, `ensemble`, or a rank label (`First`, ...).
    pub model: String,
    pub metric: Metric,
    #[serde(with = "nan_as_null")]
    pub mean: f64,
    #[serde(with = "nan_as_null")]
    pub sd: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub dataset: String,
    pub split: usize,
    pub components: Vec<String>,
    pub weights: Vec<f64>,
    pub fold_weights: Vec<Vec<f64>>,
    /// Strided objective traces, one per fold.
    pub fold_traces: Vec<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedConfig {
    pub dataset: String,
    pub split: usize,
    pub model: String,
    pub config: ModelConfig,
    pub cv_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub meta: ReportMeta,
    pub cells: Vec<Cell>,
    pub aggregates: Vec<Aggregate>,
    pub ensembles: Vec<EnsembleRecord>,
    pub selected: Vec<SelectedConfig>,
}

impl BenchReport {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    pub fn aggregate(&self, dataset: &str, model: &str, metric: Metric) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.dataset == dataset && a.model == model && a.metric == metric)
    }
}

/// Loads every dataset of the config, resolving paths against `base`.
pub fn load_datasets(config: &BenchConfig, base: &Path) -> Result<Vec<(String, Dataset)>, BenchError> {
    let standardize = if config.full_data_standardization {
        Standardize::FullData
    } else {
        Standardize::None
    };
    config
        .datasets
        .iter()
        .map(|src| {
            let data = match src {
                DatasetSource::File(m) => ingest(m, base, standardize)?,
                DatasetSource::Synthetic { generator, .. } => {
                    let d = generate(generator)?.dataset;
                    match standardize {
                        Standardize::FullData => {
                            let (m, s) = d.column_moments();
                            d.standardized_with(&m, &s)
                        }
                        Standardize::None => d,
                    }
                }
            };
            Ok((src.name().to_string(), data))
        })
        .collect()
}

pub fn run_benchmark(config: &BenchConfig, base: &Path) -> Result<BenchReport, BenchError> {
    config.validate()?;
    let datasets = load_datasets(config, base)?;
    Ok(run_on_datasets(config, &datasets))
}

struct SplitOutcome {
    cells: Vec<Cell>,
    ensemble: Option<EnsembleRecord>,
    selected: Vec<SelectedConfig>,
}

pub fn run_on_datasets(config: &BenchConfig, datasets: &[(String, Dataset)]) -> BenchReport {
    let jobs: Vec<(usize, usize)> = (0..datasets.len())
        .flat_map(|d| (0..config.n_splits).map(move |s| (d, s)))
        .collect();
    let outcomes: Vec<SplitOutcome> = jobs
        .par_iter()
        .map(|&(d, s)| run_split(config, &datasets[d].0, &datasets[d].1, d, s))
        .collect();
    let mut cells = Vec::new();
    let mut ensembles = Vec::new();
    let mut selected = Vec::new();
    for o in outcomes {
        cells.extend(o.cells);
        ensembles.extend(o.ensemble);
        selected.extend(o.selected);
    }
    let mut labels = config.variant_labels();
    if config.ensemble.enabled {
        labels.push(ENSEMBLE_LABEL.to_string());
    }
    let names: Vec<String> = datasets.iter().map(|(n, _)| n.clone()).collect();
    let aggregates = aggregate(&cells, &names, &labels, &config.metrics);
    BenchReport {
        meta: ReportMeta {
            master_seed: config.master_seed,
            n_splits: config.n_splits,
            train_fraction: config.train_fraction,
            standardization: if config.full_data_standardization { "full_data" } else { "train_split" }.into(),
            search_budget: config.search.enabled.then_some(config.search.space.budget),
            search_folds: config.search.enabled.then_some(config.search.space.folds),
            ensemble_folds: config.ensemble.enabled.then_some(config.ensemble.folds),
            variants: labels,
            datasets: datasets
                .iter()
                .map(|(name, d)| DatasetSummary {
                    name: name.clone(),
                    n: d.len(),
                    d: d.dim(),
                    censored_fraction: d.censored_fraction(),
                })
                .collect(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        cells,
        aggregates,
        ensembles,
        selected,
    }
}

/// Seed of `stream` for split `split` of dataset number `dataset`.
fn split_seed(master: u64, dataset: usize, split: usize, stream: u64) -> u64 {
    derive_seed(master, ((dataset as u64) << 32) | split as u64, stream)
}

const SPLIT_STREAM: u64 = 1;
const ENSEMBLE_FOLD_STREAM: u64 = 2;
const MODEL_STREAM: u64 = 16;
const SEARCH_STREAM: u64 = 64;

/// Predictions of one fitted variant on the validation split.
struct Scored {
    label: String,
    model: FittedModel,
}

fn evaluate(
    curves: Result<Vec<SurvivalCurve>, String>,
    risks: Result<Vec<RiskScore>, String>,
    validation: &Dataset,
    metric: Metric,
) -> Result<f64, String> {
    match metric {
        Metric::Concordance => concordance_index(&risks?, validation)
            .map(|s| s.value)
            .map_err(|e| e.to_string()),
        Metric::Ibs => integrated_brier_score(
            &curves?,
            validation,
            default_horizon(validation),
            &km_censoring(validation),
        )
        .map(|s| s.value)
        .map_err(|e| e.to_string()),
    }
}

fn run_split(config: &BenchConfig, name: &str, data: &Dataset, d: usize, s: usize) -> SplitOutcome {
    let seed = |stream| split_seed(config.master_seed, d, s, stream);
    let mut labels = config.variant_labels();
    if config.ensemble.enabled {
        labels.push(ENSEMBLE_LABEL.to_string());
    }
    let cell = |model: &str, metric: Metric, r: Result<f64, String>| Cell {
        dataset: name.to_string(),
        model: model.to_string(),
        split: s,
        metric,
        value: r.as_ref().ok().copied(),
        error: r.err(),
    };
    let (train, validation) = match split(data, config.train_fraction, seed(SPLIT_STREAM)) {
        Ok(parts) => parts,
        Err(e) => {
            let cells = labels
                .iter()
                .flat_map(|l| config.metrics.iter().map(move |&m| (l, m)))
                .map(|(l, m)| cell(l, m, Err(format!("split failed: {e}"))))
                .collect();
            return SplitOutcome {
                cells,
                ensemble: None,
                selected: Vec::new(),
            };
        }
    };
    let (train, validation) = if config.full_data_standardization {
        (train, validation)
    } else {
        let (shift, scale) = train.column_moments();
        (train.standardized_with(&shift, &scale), validation.standardized_with(&shift, &scale))
    };

    // Resolve the configuration of every variant.
    let mut variants: Vec<(String, Result<ModelConfig, String>)> = Vec::new();
    let mut selected = Vec::new();
    for (m, kind) in config.models.iter().enumerate() {
        let cfg = config.defaults.config(*kind).with_seed(seed(MODEL_STREAM + m as u64));
        variants.push((kind.name().to_string(), Ok(cfg)));
    }
    if config.search.enabled {
        for (m, kind) in config.models.iter().enumerate() {
            let label = format!("{}*", kind.name());
            let outcome = random_search(*kind, &config.search.space, &train, seed(SEARCH_STREAM + m as u64));
            match outcome {
                Ok(o) => {
                    selected.push(SelectedConfig {
                        dataset: name.to_string(),
                        split: s,
                        model: label.clone(),
                        config: o.best.clone(),
                        cv_score: o.best_score,
                    });
                    variants.push((label, Ok(o.best)));
                }
                Err(e) => variants.push((label, Err(format!("search failed: {e}")))),
            }
        }
    }

    let mut cells = Vec::new();
    let mut fitted: Vec<Scored> = Vec::new();
    for (label, cfg) in &variants {
        let model = cfg
            .clone()
            .and_then(|c| fit(&train, &c).map_err(|e| format!("fit failed: {e}")));
        let model = match model {
            Ok(m) => m,
            Err(e) => {
                for &metric in &config.metrics {
                    cells.push(cell(label, metric, Err(e.clone())));
                }
                continue;
            }
        };
        let curves = model.predict_survival_batch(&validation).map_err(|e| e.to_string());
        let risks = model.predict_risk_batch(&validation).map_err(|e| e.to_string());
        for &metric in &config.metrics {
            cells.push(cell(label, metric, evaluate(curves.clone(), risks.clone(), &validation, metric)));
        }
        fitted.push(Scored {
            label: label.clone(),
            model,
        });
    }

    let ensemble = config.ensemble.enabled.then(|| {
        let components = config.ensemble_components();
        let outcome = fit_fold_ensemble(config, &components, &variants, &fitted, &train, seed(ENSEMBLE_FOLD_STREAM));
        let mut record = EnsembleRecord {
            dataset: name.to_string(),
            split: s,
            components: components.clone(),
            weights: Vec::new(),
            fold_weights: Vec::new(),
            fold_traces: Vec::new(),
            error: None,
        };
        match outcome {
            Ok((model, fold_weights, fold_traces)) => {
                let curves = model.predict_survival_batch(&validation).map_err(|e| e.to_string());
                let risks = model.predict_risk_batch(&validation).map_err(|e| e.to_string());
                for &metric in &config.metrics {
                    cells.push(cell(
                        ENSEMBLE_LABEL,
                        metric,
                        evaluate(curves.clone(), risks.clone(), &validation, metric),
                    ));
                }
                record.weights = model.weights.as_slice().to_vec();
                record.fold_weights = fold_weights;
                record.fold_traces = fold_traces;
            }
            Err(e) => {
                for &metric in &config.metrics {
                    cells.push(cell(ENSEMBLE_LABEL, metric, Err(e.clone())));
                }
                record.error = Some(e);
            }
        }
        record
    });
    SplitOutcome {
        cells,
        ensemble,
        selected,
    }
}

type FoldEnsemble = (EnsembleModel, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Weights fitted on each held-out fold of `train` with components fitted on
/// the remaining folds, averaged, then attached to the components fitted on
/// the whole training split.
fn fit_fold_ensemble(
    config: &BenchConfig,
    components: &[String],
    variants: &[(String, Result<ModelConfig, String>)],
    fitted: &[Scored],
    train: &Dataset,
    seed: u64,
) -> Result<FoldEnsemble, String> {
    let configs: Vec<ModelConfig> = components
        .iter()
        .map(|label| match variants.iter().find(|(l, _)| l == label) {
            Some((_, Ok(c))) => Ok(c.clone()),
            Some((_, Err(e))) => Err(format!("component {label}: {e}")),
            None => Err(format!("unknown component {label}")),
        })
        .collect::<Result<_, _>>()?;
    let full: Vec<FittedModel> = components
        .iter()
        .map(|label| {
            fitted
                .iter()
                .find(|f| &f.label == label)
                .map(|f| f.model.clone())
                .ok_or_else(|| format!("component {label} failed to fit"))
        })
        .collect::<Result<_, _>>()?;
    let k = config.ensemble.folds;
    let labels = stratified_folds(train, k, seed);
    let mut fold_weights = Vec::with_capacity(k);
    let mut fold_traces = Vec::with_capacity(k);
    for f in 0..k {
        let (fit_part, held) = fold_split(train, &labels, f).map_err(|e| format!("fold {f}: {e}"))?;
        let models: Vec<FittedModel> = configs
            .iter()
            .map(|c| fit(&fit_part, c))
            .collect::<Result<_, _>>()
            .map_err(|e| format!("fold {f}: fit failed: {e}"))?;
        let ens = fit_ensemble(models, &held, &config.ensemble.optimizer).map_err(|e| format!("fold {f}: {e}"))?;
        let stride = config.ensemble.trace_stride;
        let last = ens.trace.len().saturating_sub(1);
        let trace = ens
            .trace
            .iter()
            .enumerate()
            .filter(|(i, _)| i % stride == 0 || *i == last)
            .map(|(_, v)| *v)
            .collect();
        fold_weights.push(ens.weights);
        fold_traces.push(trace);
    }
    let weights = EnsembleWeights::mean(&fold_weights).map_err(|e| e.to_string())?;
    let model = EnsembleModel::with_weights(full, weights).map_err(|e| e.to_string())?;
    let fold_weights = fold_weights.iter().map(|w| w.as_slice().to_vec()).collect();
    Ok((model, fold_weights, fold_traces))
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn is_better(metric: Metric, a: f64, b: f64) -> bool {
    if metric.higher_is_better() {
        a > b
    } else {
        a < b
    }
}

/// Per-dataset mean/sd of each variant, the cross-dataset mean of the
/// per-dataset means, and the `First`/`Second`/`Third` aggregates: the k-th
/// best method per dataset (each method at its best variant), averaged
/// across datasets.
pub fn aggregate(cells: &[Cell], datasets: &[String], labels: &[String], metrics: &[Metric]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for &metric in metrics {
        let mut per_dataset: Vec<Vec<(String, f64)>> = Vec::new();
        for ds in datasets {
            let mut means = Vec::new();
            for label in labels {
                let values: Vec<f64> = cells
                    .iter()
                    .filter(|c| &c.dataset == ds && &c.model == label && c.metric == metric)
                    .filter_map(|c| c.value)
                    .collect();
                let (mean, sd) = mean_sd(&values);
                out.push(Aggregate {
                    dataset: ds.clone(),
                    model: label.clone(),
                    metric,
                    mean,
                    sd,
                    n: values.len(),
                });
                means.push((label.clone(), mean));
            }
            per_dataset.push(means);
        }
        for (j, label) in labels.iter().enumerate() {
            let values: Vec<f64> = per_dataset.iter().map(|m| m[j].1).filter(|v| v.is_finite()).collect();
            let (mean, sd) = if values.len() == datasets.len() {
                mean_sd(&values)
            } else {
                (f64::NAN, f64::NAN)
            };
            out.push(Aggregate {
                dataset: OVERALL.into(),
                model: label.clone(),
                metric,
                mean,
                sd,
                n: values.len(),
            });
        }
        let mut ranked: Vec<Vec<f64>> = Vec::new();
        for means in &per_dataset {
            let mut best: Vec<(String, f64)> = Vec::new();
            for (label, v) in means {
                if label == ENSEMBLE_LABEL || !v.is_finite() {
                    continue;
                }
                let method = label.trim_end_matches('*');
                match best.iter_mut().find(|(m, _)| m == method) {
                    Some(entry) => {
                        if is_better(metric, *v, entry.1) {
                            entry.1 = *v;
                        }
                    }
                    None => best.push((method.to_string(), *v)),
                }
            }
            let mut values: Vec<f64> = best.into_iter().map(|(_, v)| v).collect();
            values.sort_by(|a, b| if is_better(metric, *a, *b) { std::cmp::Ordering::Less } else if is_better(metric, *b, *a) { std::cmp::Ordering::Greater } else { std::cmp::Ordering::Equal });
            ranked.push(values);
        }
        for (r, rank) in RANK_LABELS.iter().enumerate() {
            let values: Vec<f64> = ranked.iter().filter_map(|v| v.get(r).copied()).collect();
            let (mean, sd) = if values.len() == datasets.len() {
                mean_sd(&values)
            } else {
                (f64::NAN, f64::NAN)
            };
            out.push(Aggregate {
                dataset: OVERALL.into(),
                model: rank.to_string(),
                metric,
                mean,
                sd,
                n: values.len(),
            });
        }
    }
    out
}
