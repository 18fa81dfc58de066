mod common;

use ndarray::Array2;
use rand::Rng;

use concept_risk::backtest::split_70_30;
use concept_risk::data_model::Cohort;
use concept_risk::pipeline::{fit_shared, TrainSettings};
use concept_risk::pu_concepts::{
    concept_posterior, concept_report, estimate_delta, fit_concept, fit_logistic, AnchorSpec, ConceptModel, PuOptions,
};
use concept_risk::synthcohort::{generate_cohort, ConceptGen, GenConfig, GroundTruth};

use common::{logistic_gd, rng};

#[test]
fn logistic_matches_gradient_descent_oracle() {
    let mut r = rng(30);
    for _ in 0..3 {
        let x: Vec<Vec<f64>> = (0..50).map(|_| (0..5).map(|_| r.random::<f64>() * 2.0 - 1.0).collect()).collect();
        let y: Vec<bool> = x.iter().map(|row| r.random::<f64>() < 1.0 / (1.0 + (-(row[0] - row[2])).exp())).collect();
        let arr = Array2::from_shape_vec((50, 5), x.iter().flatten().copied().collect()).unwrap();
        let fit = fit_logistic(arr.view(), &y, 1.0, 100, 1e-12).unwrap();
        let (w, b) = logistic_gd(&x, &y, 1.0);
        for (a, o) in fit.weights.iter().zip(&w) {
            assert!((a - o).abs() < 1e-4, "{a} vs {o}");
        }
        assert!((fit.intercept - b).abs() < 1e-4);
    }
}

#[test]
fn intercept_only_fit_is_the_logit() {
    let y: Vec<bool> = (0..100).map(|i| i < 30).collect();
    let fit = fit_logistic(Array2::zeros((100, 2)).view(), &y, 1.0, 100, 1e-12).unwrap();
    assert!((fit.intercept - (0.3f64 / 0.7).ln()).abs() < 1e-9);
    assert!(fit.weights.iter().all(|w| *w == 0.0));
}

#[test]
fn delta_estimates_by_example() {
    assert!((estimate_delta(&[0.5, 0.7]).unwrap() - 0.6).abs() < 1e-15);
    assert!((estimate_delta(&[0.6; 17]).unwrap() - 0.6).abs() < 1e-15);
    assert!(estimate_delta(&[]).is_err());
}

fn single_concept(delta: f64, seed: u64) -> (Cohort, GroundTruth) {
    generate_cohort(&GenConfig {
        n_patients: 10_000,
        concepts: vec![ConceptGen::new("c", 0.3, delta, 0.0)],
        n_continuous: 0,
        n_regions: 0,
        seed,
        ..GenConfig::default()
    })
    .unwrap()
}

#[test]
fn delta_recovered_on_scar_data() {
    let (cohort, _) = single_concept(0.7, 31);
    let m = fit_concept(&cohort, &AnchorSpec::new("c", &["c_code"]), &PuOptions::default(), 31).unwrap();
    assert!((0.65..=0.75).contains(&m.delta_hat), "{}", m.delta_hat);
}

#[test]
fn two_anchors_are_both_removed_from_inputs() {
    let (cohort, _) = single_concept(0.6, 32);
    let spec = AnchorSpec::new("c", &["c_code", "c_proxy0"]);
    let m = fit_concept(&cohort, &spec, &PuOptions::default(), 32).unwrap();
    assert!(!m.feature_names.iter().any(|f| f == "c_code" || f == "c_proxy0"));
    assert_eq!(m.feature_names.len(), cohort.n_columns() - 2);
}

/// Area under the ROC curve by pair enumeration over a subsample.
fn auroc(score: &[f64], label: &[bool]) -> f64 {
    let pos: Vec<f64> = score.iter().zip(label).filter(|(_, l)| **l).map(|(s, _)| *s).step_by(3).collect();
    let neg: Vec<f64> = score.iter().zip(label).filter(|(_, l)| !**l).map(|(s, _)| *s).step_by(3).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

fn latent_rows(truth: &GroundTruth, concept: &str, cohort: &Cohort) -> Vec<bool> {
    cohort
        .patient_ids()
        .iter()
        .map(|id| truth.latent[concept][id[1..].parse::<usize>().unwrap()])
        .collect()
}

#[test]
fn posteriors_rank_latent_labels_at_default_settings() {
    let cfg = GenConfig {
        seed: 33,
        ..GenConfig::default()
    };
    let (cohort, truth) = generate_cohort(&cfg).unwrap();
    let anchors: Vec<AnchorSpec> = cfg.concepts.iter().map(|c| AnchorSpec::new(&c.name, &[&c.anchor_column()])).collect();
    let shared = fit_shared(&cohort, &anchors, &TrainSettings::default(), true, 33).unwrap();
    assert_eq!(shared.concepts.len(), cfg.concepts.len());
    for m in &shared.concepts {
        let post = m.posteriors(&shared.train).unwrap();
        assert!(post.iter().all(|p| (0.0..=1.0).contains(p)));
        let a = auroc(&post, &latent_rows(&truth, &m.spec.concept_name, &shared.train));
        assert!(a > 0.85, "{}: {a}", m.spec.concept_name);
    }
}

#[test]
fn new_positive_counts_track_hidden_positives() {
    let (mut reported, mut hidden) = (0.0, 0.0);
    for seed in 0..10 {
        let (cohort, truth) = single_concept(0.5, 300 + seed);
        let (train, test) = split_70_30(&cohort, seed).unwrap();
        let anchors = [AnchorSpec::new("c", &["c_code"])];
        let shared = fit_shared(&train, &anchors, &TrainSettings::default(), true, seed).unwrap();
        let test_pp = shared.preprocessor.apply(&test).unwrap();
        let rep = concept_report(&shared.concepts[0], &test_pp, 0.5).unwrap();
        reported += rep.new_positives.count as f64;
        let latent = latent_rows(&truth, "c", &test);
        let anchor = test.column("c_code").unwrap();
        hidden += latent.iter().zip(anchor.iter()).filter(|(y, a)| **y && **a == 0.0).count() as f64;
    }
    let ratio = reported / hidden;
    assert!((0.85..=1.15).contains(&ratio), "reported/hidden = {ratio}");
}

#[test]
fn posterior_rules_hold_for_a_fitted_model() {
    let (cohort, _) = single_concept(0.5, 34);
    let m: ConceptModel = fit_concept(&cohort, &AnchorSpec::new("c", &["c_code"]), &PuOptions::default(), 34).unwrap();
    let mut r = rng(34);
    let mut pairs = Vec::new();
    for _ in 0..200 {
        let row: Vec<f64> = (0..m.feature_names.len()).map(|_| f64::from(u8::from(r.random::<bool>()))).collect();
        assert_eq!(concept_posterior(&m, &row, true).unwrap(), 1.0);
        let g = m.anchor_score(&row).unwrap();
        let p = concept_posterior(&m, &row, false).unwrap();
        assert!((0.0..=1.0).contains(&p));
        pairs.push((g, p));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
    assert!(concept_posterior(&m, &[0.0], false).is_err());
}
