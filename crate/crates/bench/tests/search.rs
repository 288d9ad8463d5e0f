use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use survens::data::Dataset;
use survens::models::{CoxConfig, ModelConfig, ModelKind, RsfConfig};
use survens::simulate::{derive_seed, generate, GeneratorKind, GeneratorSpec, Metric};
use survens_bench::search::{cross_validate, evaluate_candidates, random_search, SearchSpace};

fn data() -> Dataset {
    generate(&GeneratorSpec::new(GeneratorKind::CoxStyle, 200, 4, 0.4, 1)).unwrap().dataset
}

fn quick_space(budget: usize) -> SearchSpace {
    let mut space = SearchSpace {
        budget,
        folds: 3,
        ..SearchSpace::default()
    };
    space.rsf.n_trees.hi = 20;
    space.rsf.n_trees.lo = 5;
    space.gbc.n_estimators.hi = 30;
    space.gbc.n_estimators.lo = 5;
    space.deepsurv.epochs.hi = 20;
    space.deepsurv.epochs.lo = 5;
    space
}

#[test]
fn every_sampled_configuration_validates() {
    let space = SearchSpace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for kind in ModelKind::ALL {
        for d in [1, 3, 17] {
            for _ in 0..200 {
                let c = space.sample(kind, d, &mut rng);
                assert_eq!(c.kind(), kind);
                c.validate().unwrap();
            }
        }
    }
}

#[test]
fn budget_one_returns_the_single_draw() {
    let d = data();
    for kind in ModelKind::ALL {
        let out = random_search(kind, &quick_space(1), &d, 5).unwrap();
        assert_eq!(out.scores.len(), 1);
        assert_eq!(out.best_score, out.scores[0]);
        assert_eq!(out.best.kind(), kind);
    }
}

#[test]
fn same_seed_same_selection() {
    let d = data();
    let a = random_search(ModelKind::Rsf, &quick_space(4), &d, 11).unwrap();
    let b = random_search(ModelKind::Rsf, &quick_space(4), &d, 11).unwrap();
    assert_eq!(a, b);
}

#[test]
fn selection_is_no_worse_than_the_default_on_the_same_folds() {
    let d = data();
    let default = ModelConfig::Rsf(RsfConfig {
        n_trees: 30,
        ..RsfConfig::default()
    });
    let degenerate = |leaf| {
        ModelConfig::Rsf(RsfConfig {
            n_trees: 1,
            min_samples_leaf: leaf,
            ..RsfConfig::default()
        })
    };
    let candidates = vec![degenerate(1), default.clone(), degenerate(60)];
    for metric in [Metric::Ibs, Metric::Concordance] {
        let out = evaluate_candidates(candidates.clone(), metric, 3, &d, 7).unwrap();
        let default_score = cross_validate(&default, &d, metric, 3, derive_seed(7, 0, 1));
        if metric.higher_is_better() {
            assert!(out.best_score >= default_score - 1e-12);
        } else {
            assert!(out.best_score <= default_score + 1e-12);
        }
        assert_eq!(out.scores[1], default_score);
    }
}

#[test]
fn failing_candidates_score_worst() {
    let d = data();
    let broken = ModelConfig::Cox(CoxConfig {
        max_iter: 0,
        ..CoxConfig::default()
    });
    let good = ModelConfig::Cox(CoxConfig::default());
    let out = evaluate_candidates(vec![broken, good.clone()], Metric::Ibs, 3, &d, 1).unwrap();
    assert_eq!(out.scores[0], f64::INFINITY);
    assert_eq!(out.best, good);
}

#[test]
fn ties_keep_the_first_draw() {
    let d = data();
    let a = ModelConfig::Cox(CoxConfig::default());
    let out = evaluate_candidates(vec![a.clone(), a.clone()], Metric::Concordance, 3, &d, 2).unwrap();
    assert_eq!(out.scores[0], out.scores[1]);
    assert_eq!(out.best, a);
}
