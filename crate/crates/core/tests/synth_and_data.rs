use std::collections::BTreeSet;

use concept_risk::data_model::{load_cohort, write_cohort, write_sidecar, PreprocessConfig, Preprocessor, Schema};
use concept_risk::evaluation::c_index;
use concept_risk::synthcohort::{event_fraction, generate_cohort, ConceptGen, GenConfig};

fn bits(v: impl Iterator<Item = f64>) -> Vec<u64> {
    v.map(f64::to_bits).collect()
}

#[test]
fn written_cohort_reloads_bit_for_bit() {
    let (cohort, _) = generate_cohort(&GenConfig {
        n_patients: 300,
        seed: 40,
        ..GenConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cohort.csv");
    let side = dir.path().join("schema.json");
    write_cohort(&cohort, &csv).unwrap();
    write_sidecar(&cohort, &side).unwrap();
    let back = load_cohort(&csv, &Schema::from_sidecar(&side).unwrap()).unwrap();
    assert_eq!(back.patient_ids(), cohort.patient_ids());
    assert_eq!(back.t0(), cohort.t0());
    assert_eq!(bits(back.time().iter().copied()), bits(cohort.time().iter().copied()));
    assert_eq!(back.event(), cohort.event());
    assert_eq!(back.columns(), cohort.columns());
    assert_eq!(back.categoricals(), cohort.categoricals());
    assert_eq!(bits(back.features().iter().copied()), bits(cohort.features().iter().copied()));
}

#[test]
fn preprocessing_is_deterministic_and_train_only() {
    let (cohort, _) = generate_cohort(&GenConfig {
        n_patients: 800,
        seed: 41,
        ..GenConfig::default()
    })
    .unwrap();
    let train = cohort.select_rows(&(0..600).collect::<Vec<_>>()).unwrap();
    let test = cohort.select_rows(&(600..800).collect::<Vec<_>>()).unwrap();
    let cfg = PreprocessConfig::default();
    let (p1, t1, _) = Preprocessor::fit(&train, &cfg, &BTreeSet::new()).unwrap();
    let (p2, t2, _) = Preprocessor::fit(&train, &cfg, &BTreeSet::new()).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(bits(t1.features().iter().copied()), bits(t2.features().iter().copied()));
    let before = p1.clone();
    let applied = p1.apply(&test).unwrap();
    assert_eq!(p1, before);
    assert_eq!(applied.column_names(), t1.column_names());
    assert!(!applied.has_missing());
    // replaying on the training rows reproduces the fitted matrix
    let replay = p1.apply(&train).unwrap();
    assert_eq!(bits(replay.features().iter().copied()), bits(t1.features().iter().copied()));
}

#[test]
fn full_label_frequency_reveals_latent_labels() {
    let cfg = GenConfig {
        n_patients: 2000,
        concepts: vec![ConceptGen::new("a", 0.3, 1.0, 0.5), ConceptGen::new("b", 0.2, 1.0, 0.5)],
        seed: 42,
        ..GenConfig::default()
    };
    let (cohort, truth) = generate_cohort(&cfg).unwrap();
    for c in &cfg.concepts {
        let col = cohort.column(&c.anchor_column()).unwrap();
        let y = &truth.latent[&c.name];
        assert!(col.iter().zip(y).all(|(a, y)| (*a == 1.0) == *y));
    }
}

#[test]
fn anchor_prevalence_and_label_frequency_concentrate() {
    for (k, delta) in [0.3, 0.6, 0.9].into_iter().enumerate() {
        let cfg = GenConfig {
            n_patients: 10_000,
            concepts: vec![ConceptGen::new("c", 0.3, delta, 0.0)],
            seed: 43 + k as u64,
            ..GenConfig::default()
        };
        let (cohort, truth) = generate_cohort(&cfg).unwrap();
        let anchor = cohort.column("c_code").unwrap();
        let prevalence = anchor.sum() / 10_000.0;
        assert!((prevalence - 0.3 * delta).abs() <= 0.02, "prevalence {prevalence}");
        let latent = &truth.latent["c"];
        let pos = latent.iter().filter(|y| **y).count() as f64;
        let seen = anchor.iter().zip(latent).filter(|(a, y)| **y && **a == 1.0).count() as f64;
        assert!((seen / pos - delta).abs() <= 0.02, "empirical delta {}", seen / pos);
    }
}

/// Pearson chi-square for a 2x2 table.
fn chi_square(t: [[f64; 2]; 2]) -> f64 {
    let n: f64 = t.iter().flatten().sum();
    let rows = [t[0][0] + t[0][1], t[1][0] + t[1][1]];
    let cols = [t[0][0] + t[1][0], t[0][1] + t[1][1]];
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] * cols[j] / n;
            s += (t[i][j] - e).powi(2) / e;
        }
    }
    s
}

#[test]
fn anchors_are_selected_completely_at_random() {
    // among latent positives, anchor presence is independent of each proxy
    const CRIT_1DF_001: f64 = 6.635;
    let mut not_rejected = 0;
    for seed in 0..10 {
        let cfg = GenConfig {
            n_patients: 10_000,
            concepts: vec![ConceptGen::new("c", 0.3, 0.5, 0.0)],
            seed: 500 + seed,
            ..GenConfig::default()
        };
        let (cohort, truth) = generate_cohort(&cfg).unwrap();
        let anchor = cohort.column("c_code").unwrap();
        let proxy = cohort.column("c_proxy0").unwrap();
        let mut t = [[0.0; 2]; 2];
        for (i, y) in truth.latent["c"].iter().enumerate() {
            if *y {
                t[anchor[i] as usize][proxy[i] as usize] += 1.0;
            }
        }
        if chi_square(t) < CRIT_1DF_001 {
            not_rejected += 1;
        }
    }
    assert!(not_rejected > 5, "{not_rejected}/10");
}

#[test]
fn null_hazard_ranks_at_chance() {
    let mut cfg = GenConfig {
        seed: 44,
        lab_beta: 0.0,
        ..GenConfig::default()
    };
    for c in &mut cfg.concepts {
        c.beta = 0.0;
    }
    let (cohort, truth) = generate_cohort(&cfg).unwrap();
    assert!(truth.hazard_multiplier.iter().all(|m| *m == 1.0));
    // rank by the latent-label log-hazard a model would have used with nonzero effects
    let score: Vec<f64> = (0..cohort.n_patients())
        .map(|i| truth.latent.values().map(|y| f64::from(u8::from(y[i]))).sum())
        .collect();
    let c = c_index(cohort.time(), cohort.event(), &score).unwrap();
    assert!((c - 0.5).abs() <= 0.02, "{c}");
}

#[test]
fn event_fraction_limits() {
    let base = GenConfig {
        n_patients: 3000,
        seed: 45,
        ..GenConfig::default()
    };
    let (cohort, _) = generate_cohort(&GenConfig {
        censor_rate: 1e-9,
        ..base.clone()
    })
    .unwrap();
    assert!(event_fraction(&cohort) > 0.999);
    let (cohort, _) = generate_cohort(&GenConfig {
        censor_rate: 1000.0,
        ..base
    })
    .unwrap();
    assert!(event_fraction(&cohort) < 0.01);
}

#[test]
fn same_seed_same_truth_file() {
    let cfg = GenConfig {
        n_patients: 200,
        seed: 46,
        ..GenConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let (_, a) = generate_cohort(&cfg).unwrap();
    let (_, b) = generate_cohort(&cfg).unwrap();
    a.write_json(dir.path().join("a.json")).unwrap();
    b.write_json(dir.path().join("b.json")).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("a.json")).unwrap(),
        std::fs::read(dir.path().join("b.json")).unwrap()
    );
}
