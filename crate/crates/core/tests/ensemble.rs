use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use survens::data::{Dataset, Subject, SurvivalCurve};
use survens::ensemble::{
    combine_curves, eg_step, fit_ensemble, fit_weights, ibs_gradient, predict_ensemble, ComponentPredictions,
    EnsembleConfig, EnsembleModel, EnsembleWeights, IbsQuadratic,
};
use survens::models::{fit, CoxConfig, ModelConfig, RsfConfig, WeibullAftConfig};
use survens::scoring::{default_horizon, integrated_brier_score, km_censoring, BrierGrid};
use survens::simulate::{generate, GeneratorKind, GeneratorSpec};

struct Instance {
    dataset: Dataset,
    curves: Vec<Vec<SurvivalCurve>>,
    tau: f64,
}

fn random_curve(rng: &mut ChaCha8Rng) -> SurvivalCurve {
    let k = rng.gen_range(1..8);
    let mut times: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..6.0)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut v = 1.0;
    let values = times
        .iter()
        .map(|_| {
            v *= rng.gen_range(0.4..1.0);
            v
        })
        .collect();
    SurvivalCurve::new(times, values).unwrap()
}

fn random_instance(rng: &mut ChaCha8Rng, k: usize, n: usize) -> Instance {
    let subjects = (0..n)
        .map(|_| Subject::new(vec![0.0], rng.gen_range(0.1..5.0), rng.gen_bool(0.7)))
        .collect();
    let dataset = Dataset::new(subjects, vec!["x".into()]).unwrap();
    let curves = (0..k).map(|_| (0..n).map(|_| random_curve(rng)).collect()).collect();
    let tau = default_horizon(&dataset);
    Instance { dataset, curves, tau }
}

fn predictions(inst: &Instance) -> ComponentPredictions {
    let mut grid: Vec<f64> = inst
        .curves
        .iter()
        .flatten()
        .flat_map(|c| c.times().iter().copied())
        .filter(|&t| t <= inst.tau)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    ComponentPredictions::from_curves(&inst.curves, grid).unwrap()
}

/// IBS of `sum_j lambda_j S_j` for unconstrained `lambda`, through the
/// scoring grid rather than the ensemble's quadratic form.
fn raw_ibs(inst: &Instance, lambda: &[f64]) -> f64 {
    let censor = km_censoring(&inst.dataset);
    let knots: Vec<f64> = inst.curves.iter().flatten().flat_map(|c| c.times().to_vec()).collect();
    let grid = BrierGrid::new(&inst.dataset, &censor, inst.tau, &knots).unwrap();
    let m = grid.grid().len();
    let mut values = vec![0.0; inst.dataset.len() * m];
    for (j, comp) in inst.curves.iter().enumerate() {
        for (i, c) in comp.iter().enumerate() {
            for (k, v) in c.evaluate_sorted(grid.grid()).into_iter().enumerate() {
                values[i * m + k] += lambda[j] * v;
            }
        }
    }
    grid.ibs_from_values(&values)
}

fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> EnsembleWeights {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    EnsembleWeights::new(raw.iter().map(|r| r / s).collect()).unwrap()
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 4, 30);
        let w = random_simplex(&mut rng, 4);
        let censor = km_censoring(&inst.dataset);
        let g = ibs_gradient(&w, &predictions(&inst), &inst.dataset, &censor, inst.tau).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..4)
            .map(|j| {
                let mut up = w.as_slice().to_vec();
                let mut down = up.clone();
                up[j] += h;
                down[j] -= h;
                (raw_ibs(&inst, &up) - raw_ibs(&inst, &down)) / (2.0 * h)
            })
            .collect();
        let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let err = g.iter().zip(&fd).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err / scale < 1e-5, "relative error {}", err / scale);
    }
}

#[test]
fn quadratic_value_is_the_ibs_of_the_combination() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, 3, 25);
        let q = IbsQuadratic::new(&predictions(&inst), &inst.dataset, &km_censoring(&inst.dataset), inst.tau).unwrap();
        let w = random_simplex(&mut rng, 3);
        assert!((q.value(w.as_slice()) - raw_ibs(&inst, w.as_slice())).abs() < 1e-12);
    }
}

#[test]
fn identical_components_have_equal_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut inst = random_instance(&mut rng, 1, 20);
    inst.curves.push(inst.curves[0].clone());
    inst.curves.push(inst.curves[0].clone());
    let censor = km_censoring(&inst.dataset);
    let g = ibs_gradient(&EnsembleWeights::uniform(3), &predictions(&inst), &inst.dataset, &censor, inst.tau).unwrap();
    assert!((g[0] - g[1]).abs() < 1e-14 && (g[1] - g[2]).abs() < 1e-14);
}

#[test]
fn single_subject_hand_gradient() {
    let d = Dataset::new(vec![Subject::new(vec![0.0], 2.0, true)], vec!["x".into()]).unwrap();
    let half = SurvivalCurve::new(vec![0.0], vec![0.5]).unwrap();
    let preds = ComponentPredictions::from_curves(&[vec![half]], vec![0.0]).unwrap();
    let g = ibs_gradient(&EnsembleWeights::uniform(1), &preds, &d, &km_censoring(&d), 4.0).unwrap();
    assert!(g[0].abs() < 1e-14);
}

#[test]
fn eg_steps_stay_on_the_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let k = rng.gen_range(2..8);
        let mut w = random_simplex(&mut rng, k);
        for _ in 0..20 {
            let g: Vec<f64> = (0..k).map(|_| rng.gen_range(-50.0..50.0)).collect();
            w = eg_step(&w, &g, rng.gen_range(0.001..2.0)).unwrap();
            assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.as_slice().iter().all(|&v| v >= 0.0));
        }
    }
    let w = EnsembleWeights::new(vec![0.5, 0.5]).unwrap();
    let next = eg_step(&w, &[0.0, 4f64.ln()], 1.0).unwrap();
    assert!((next.as_slice()[0] - 0.8).abs() < 1e-12);
    let same = eg_step(&w, &[0.0, 0.0], 1.0).unwrap();
    assert_eq!(same.as_slice(), w.as_slice());
}

#[test]
fn small_step_trace_is_non_increasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = EnsembleConfig {
        learning_rate: 0.01,
        max_iter: 2000,
        stop_tol: 0.0,
        horizon: None,
    };
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 4, 30);
        let q = IbsQuadratic::new(&predictions(&inst), &inst.dataset, &km_censoring(&inst.dataset), inst.tau).unwrap();
        let fit = fit_weights(&q, &config).unwrap();
        for w in fit.trace[10..].windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn identical_components_keep_uniform_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut inst = random_instance(&mut rng, 1, 20);
    inst.curves.push(inst.curves[0].clone());
    let q = IbsQuadratic::new(&predictions(&inst), &inst.dataset, &km_censoring(&inst.dataset), inst.tau).unwrap();
    let config = EnsembleConfig {
        max_iter: 500,
        ..EnsembleConfig::default()
    };
    let fit = fit_weights(&q, &config).unwrap();
    assert_eq!(fit.weights.as_slice(), &[0.5, 0.5]);
}

#[test]
fn perfect_component_takes_the_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 40;
    let times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..5.0)).collect();
    let subjects = times.iter().map(|&t| Subject::new(vec![0.0], t, true)).collect();
    let dataset = Dataset::new(subjects, vec!["x".into()]).unwrap();
    let perfect: Vec<SurvivalCurve> = times.iter().map(|&t| SurvivalCurve::new(vec![t], vec![0.0]).unwrap()).collect();
    let flat: Vec<SurvivalCurve> = (0..n).map(|_| SurvivalCurve::new(vec![0.0], vec![0.5]).unwrap()).collect();
    let inst = Instance {
        tau: default_horizon(&dataset),
        dataset,
        curves: vec![perfect, flat],
    };
    let q = IbsQuadratic::new(&predictions(&inst), &inst.dataset, &km_censoring(&inst.dataset), inst.tau).unwrap();
    let fit = fit_weights(&q, &EnsembleConfig::default()).unwrap();
    assert!(fit.weights.as_slice()[0] > 0.99);
}

#[test]
fn combination_arithmetic() {
    let one = SurvivalCurve::constant_one();
    let zero = SurvivalCurve::new(vec![0.0], vec![0.0]).unwrap();
    let w = EnsembleWeights::new(vec![0.3, 0.7]).unwrap();
    let c = combine_curves(&[one, zero], &w);
    for t in [0.0, 1.0, 10.0] {
        assert!((c.survival_at(t) - 0.3).abs() < 1e-12);
    }
}

fn split_data(seed: u64) -> (Dataset, Dataset) {
    let sim = generate(&GeneratorSpec::new(GeneratorKind::CoxStyle, 600, 5, 0.4, seed)).unwrap();
    let (a, b) = sim.dataset.stratified_split(0.6, seed);
    (sim.dataset.subset(&a).unwrap(), sim.dataset.subset(&b).unwrap())
}

fn components(train: &Dataset) -> Vec<survens::models::FittedModel> {
    [
        ModelConfig::Cox(CoxConfig::default()),
        ModelConfig::WeibullAft(WeibullAftConfig::default()),
        ModelConfig::Rsf(RsfConfig {
            n_trees: 20,
            ..RsfConfig::default()
        }),
    ]
    .iter()
    .map(|c| fit(train, c).unwrap())
    .collect()
}

#[test]
fn fitted_ensemble_beats_every_component_on_its_split() {
    for seed in 0..3 {
        let (train, agg) = split_data(seed);
        let comps = components(&train);
        let tau = default_horizon(&agg);
        let censor = km_censoring(&agg);
        let best = comps
            .iter()
            .map(|m| integrated_brier_score(&m.predict_survival_batch(&agg).unwrap(), &agg, tau, &censor).unwrap().value)
            .fold(f64::INFINITY, f64::min);
        let model = fit_ensemble(comps, &agg, &EnsembleConfig::default()).unwrap();
        let ens = integrated_brier_score(&model.predict_survival_batch(&agg).unwrap(), &agg, tau, &censor)
            .unwrap()
            .value;
        assert!(ens <= best + 1e-3, "ensemble {ens} vs best component {best}");
        assert!((model.trace.last().unwrap() - ens).abs() < 1e-9);
    }
}

#[test]
fn vertex_weights_reproduce_the_component() {
    let (train, agg) = split_data(9);
    let comps = components(&train);
    let x = &agg.subjects()[0].covariates;
    for j in 0..comps.len() {
        let model = EnsembleModel::with_weights(comps.clone(), EnsembleWeights::vertex(comps.len(), j)).unwrap();
        let got = predict_ensemble(&model, x).unwrap();
        let want = comps[j].predict_survival_batch(&agg).unwrap().remove(0);
        for &t in want.times() {
            assert!((got.survival_at(t) - want.survival_at(t)).abs() < 1e-12);
        }
    }
}
