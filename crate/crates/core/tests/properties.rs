use proptest::prelude::*;
use survens::data::{Dataset, RiskScore, Subject, SurvivalCurve};
use survens::ensemble::{combine_curves, EnsembleModel, EnsembleWeights};
use survens::models::{
    fit, AalenConfig, CoxConfig, DeepSurvConfig, FittedModel, GbcConfig, ModelConfig, RsfConfig, WeibullAftConfig,
};
use survens::scoring::{concordance_index, default_horizon, integrated_brier_score, km_censoring};

fn assert_valid(c: &SurvivalCurve) {
    assert!(c.times().windows(2).all(|w| w[0] < w[1]));
    assert!(c.times().iter().all(|t| *t >= 0.0 && t.is_finite()));
    assert!(c.values().iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(c.values().windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(c.survival_at(0.0), 1.0);
}

fn small_configs(seed: u64) -> Vec<ModelConfig> {
    vec![
        ModelConfig::Cox(CoxConfig {
            ridge_alpha: 0.1,
            ..CoxConfig::default()
        }),
        ModelConfig::Gbc(GbcConfig {
            n_estimators: 10,
            ..GbcConfig::default()
        }),
        ModelConfig::Rsf(RsfConfig {
            n_trees: 5,
            seed,
            ..RsfConfig::default()
        }),
        ModelConfig::WeibullAft(WeibullAftConfig {
            penalizer: 0.01,
            ..WeibullAftConfig::default()
        }),
        ModelConfig::Aalen(AalenConfig { penalizer: 0.1 }),
        ModelConfig::DeepSurv(DeepSurvConfig {
            hidden: vec![4],
            epochs: 5,
            seed,
            ..DeepSurvConfig::default()
        }),
    ]
}

prop_compose! {
    fn dataset()(d in 1usize..4, n in 12usize..40)
        (rows in prop::collection::vec(
            (prop::collection::vec(-3.0f64..3.0, d), 0.01f64..20.0, any::<bool>()), n),
         d in Just(d))
        -> Dataset
    {
        let mut subjects: Vec<Subject> = rows.into_iter().map(|(x, t, e)| Subject::new(x, t, e)).collect();
        subjects[0].event = true;
        subjects[1].event = true;
        Dataset::new(subjects, (0..d).map(|j| format!("x{j}")).collect()).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_model_and_the_ensemble_emit_valid_curves(data in dataset(), seed in 0u64..1000, probe in -5.0f64..5.0) {
        let fitted: Vec<FittedModel> = small_configs(seed)
            .iter()
            .filter_map(|c| fit(&data, c).ok())
            .collect();
        prop_assert!(fitted.len() >= 5, "only {} models fitted", fitted.len());
        let x = vec![probe; data.dim()];
        for m in &fitted {
            for c in m.predict_survival_batch(&data).unwrap() {
                assert_valid(&c);
            }
            assert_valid(&survens::models::SurvivalModel::predict_survival(m, &x).unwrap());
        }
        if fitted.len() >= 2 {
            let k = fitted.len();
            let ens = EnsembleModel::with_weights(fitted, EnsembleWeights::uniform(k)).unwrap();
            for c in ens.predict_survival_batch(&data).unwrap() {
                assert_valid(&c);
            }
        }
    }

    #[test]
    fn clamped_construction_is_always_valid(values in prop::collection::vec(-1.0f64..2.0, 1..30)) {
        let times: Vec<f64> = (0..values.len()).map(|k| 0.5 + k as f64).collect();
        assert_valid(&SurvivalCurve::from_values_clamped(times, values));
    }

    #[test]
    fn convex_combinations_stay_valid(
        a in prop::collection::vec(0.0f64..1.0, 1..10),
        b in prop::collection::vec(0.0f64..1.0, 1..10),
        w in 0.0f64..1.0,
    ) {
        let curve = |v: Vec<f64>, offset: f64| {
            let times = (0..v.len()).map(|k| offset + k as f64).collect();
            SurvivalCurve::from_values_clamped(times, v)
        };
        let c = combine_curves(&[curve(a, 0.3), curve(b, 0.7)], &EnsembleWeights::new(vec![w, 1.0 - w]).unwrap());
        assert_valid(&c);
    }

    #[test]
    fn scores_stay_in_range(data in dataset(), risks in prop::collection::vec(-2.0f64..2.0, 40)) {
        let r: Vec<RiskScore> = risks.iter().take(data.len()).map(|&v| RiskScore(v)).collect();
        if let Ok(ci) = concordance_index(&r, &data) {
            prop_assert!((0.0..=1.0).contains(&ci.value));
        }
        let curves: Vec<SurvivalCurve> = risks
            .iter()
            .take(data.len())
            .map(|&v| SurvivalCurve::from_values_clamped(vec![1.0, 5.0], vec![0.5 + 0.2 * v.tanh(), 0.2]))
            .collect();
        if let Ok(ibs) = integrated_brier_score(&curves, &data, default_horizon(&data), &km_censoring(&data)) {
            prop_assert!(ibs.value >= 0.0 && ibs.value.is_finite());
        }
    }
}
