use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};

use concept_risk::backtest::{run_backtest, season_of, split_70_30, split_indices, BacktestConfig, Season, StudyRange};
use concept_risk::pipeline::{FeatureSetVariant, TrainSettings};
use concept_risk::pu_concepts::AnchorSpec;
use concept_risk::synthcohort::{generate_cohort, GenConfig};

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

#[test]
fn season_examples() {
    let w = season_of(d(2020, 7, 1)).unwrap();
    assert_eq!((w.season, w.year, w.label()), (Season::Summer, 2020, "SU 2020".to_string()));
    assert_eq!(season_of(d(2020, 6, 21)).unwrap().label(), "SU 2020");
    assert_eq!(season_of(d(2020, 6, 20)).unwrap().label(), "SP 2020");
    assert_eq!(season_of(d(2021, 1, 15)).unwrap().label(), "W 2020");
}

#[test]
fn windows_tile_the_range() {
    let range = StudyRange::default();
    let windows = range.windows();
    assert_eq!(windows.first().unwrap().start, range.start);
    for pair in windows.windows(2) {
        assert_eq!(pair[0].end, pair[1].start);
    }
    let mut day = range.start;
    while day <= range.end {
        let hits = windows.iter().filter(|w| w.contains(day)).count();
        assert_eq!(hits, 1, "{day}");
        assert!(range.season_of(day).unwrap().contains(day));
        day = day.checked_add_days(Days::new(1)).unwrap();
    }
    assert!(range.season_of(range.end.checked_add_days(Days::new(1)).unwrap()).is_err());
}

#[test]
fn split_examples() {
    let ids: Vec<String> = (0..1000).map(|i| format!("id{i}")).collect();
    let (tr, te) = split_indices(&ids, 5, "SU 2020");
    assert_eq!((tr.len(), te.len()), (700, 300));
    assert_eq!(split_indices(&ids, 5, "SU 2020"), (tr.clone(), te.clone()));
    let all: BTreeSet<usize> = tr.iter().chain(&te).copied().collect();
    assert_eq!(all.len(), 1000);
    assert_ne!(split_indices(&ids, 6, "SU 2020").0, tr);

    // a patient's side depends only on its own id, the seed and the salt
    let fewer: Vec<String> = ids[..500].to_vec();
    let (tr_small, _) = split_indices(&fewer, 5, "SU 2020");
    let moved = tr_small.iter().filter(|i| !tr.contains(i)).count();
    assert!(moved < 60, "{moved}");

    let (cohort, _) = generate_cohort(&GenConfig {
        n_patients: 1000,
        seed: 50,
        ..GenConfig::default()
    })
    .unwrap();
    let (train, test) = split_70_30(&cohort, 50).unwrap();
    assert_eq!((train.n_patients(), test.n_patients()), (700, 300));
}

fn two_seasons(seed: u64, n: usize) -> (concept_risk::data_model::Cohort, Vec<AnchorSpec>, StudyRange) {
    let start = d(2020, 6, 21);
    let end = d(2020, 12, 20);
    let cfg = GenConfig {
        n_patients: n,
        start_date: start,
        end_date: end,
        seed,
        ..GenConfig::default()
    };
    let (cohort, _) = generate_cohort(&cfg).unwrap();
    let anchors = cfg.concepts.iter().map(|c| AnchorSpec::new(&c.name, &[&c.anchor_column()])).collect();
    (cohort, anchors, StudyRange::new(start, end).unwrap())
}

#[test]
fn two_season_matrix_shape() {
    let (cohort, anchors, range) = two_seasons(51, 2000);
    let config = BacktestConfig {
        range,
        bootstrap_replicates: 20,
        ..BacktestConfig::default()
    };
    let m = run_backtest(&cohort, &anchors, &TrainSettings::default(), &config, 51).unwrap();
    assert_eq!(m.season_labels, vec!["SU 2020", "F 2020"]);
    assert_eq!(m.presence(), vec![vec![true, true], vec![false, true], vec![true, true]]);
    assert_eq!(m.leaking_cells(), 0);
    for row in &m.rows {
        for k in 0..2 {
            assert!(row.train_ids().is_disjoint(m.test_ids(k)));
        }
    }
    assert_eq!(m.n_test.iter().sum::<usize>() + m.rows[2].n_train, 2000);
    let dir = tempfile::tempdir().unwrap();
    m.write_csv(&dir.path().join("m.csv")).unwrap();
    let text = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn single_season_is_rejected() {
    let (cohort, anchors, _) = two_seasons(52, 300);
    let config = BacktestConfig {
        range: StudyRange::new(d(2020, 6, 21), d(2020, 12, 20)).unwrap(),
        ..BacktestConfig::default()
    };
    let summer: Vec<usize> = (0..300).filter(|&i| cohort.t0()[i] < d(2020, 9, 22)).collect();
    let only = cohort.select_rows(&summer).unwrap();
    assert!(run_backtest(&only, &anchors, &TrainSettings::default(), &config, 0).is_err());
}

#[test]
fn more_training_seasons_do_not_hurt_on_a_stationary_generator() {
    let mut diff = 0.0;
    for seed in 0..10 {
        let (cohort, anchors, range) = two_seasons(600 + seed, 3000);
        let config = BacktestConfig {
            range,
            variant: FeatureSetVariant::LcOnly,
            bootstrap_replicates: 1,
            ..BacktestConfig::default()
        };
        let m = run_backtest(&cohort, &anchors, &TrainSettings::default(), &config, seed).unwrap();
        let early = m.rows[0].cells[1].as_ref().unwrap().estimate.unwrap();
        let late = m.rows[1].cells[1].as_ref().unwrap().estimate.unwrap();
        diff += (late - early) / 10.0;
    }
    assert!(diff >= -0.02, "mean later-minus-earliest {diff}");
}
