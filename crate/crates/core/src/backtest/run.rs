use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::seasons::{SeasonWindow, StudyRange};
use crate::data_model::Cohort;
use crate::error::{Error, Result};
use crate::evaluation::{c_index_summary, CIndexSummary};
use crate::pipeline::{train_model, FeatureSetVariant, LambdaSelection, TrainSettings};
use crate::pu_concepts::AnchorSpec;
use crate::rng;

/// Fraction of each season assigned to training.
pub const TRAIN_FRACTION: f64 = 0.7;

/// Deterministic 70-30 split of `ids`: rows are ordered by a keyed hash of
/// their id and the first `round(0.7 n)` train. `salt` separates independent
/// splits (one per season).
pub fn split_indices(ids: &[String], seed: u64, salt: &str) -> (Vec<usize>, Vec<usize>) {
    let key = rng::hash_bytes(seed, salt.as_bytes());
    let mut order: Vec<(u64, usize)> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (rng::hash_bytes(key, id.as_bytes()), i))
        .collect();
    order.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| ids[a.1].cmp(&ids[b.1])));
    let n_train = (TRAIN_FRACTION * ids.len() as f64).round() as usize;
    let mut train: Vec<usize> = order[..n_train].iter().map(|p| p.1).collect();
    let mut test: Vec<usize> = order[n_train..].iter().map(|p| p.1).collect();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// 70-30 split of a whole cohort.
pub fn split_70_30(cohort: &Cohort, seed: u64) -> Result<(Cohort, Cohort)> {
    let (train, test) = split_indices(cohort.patient_ids(), seed, "");
    Ok((cohort.select_rows(&train)?, cohort.select_rows(&test)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    pub range: StudyRange,
    pub variant: FeatureSetVariant,
    /// Penalty chosen for roughly this many nonzero coefficients.
    pub target_nnz: usize,
    pub bootstrap_replicates: usize,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            range: StudyRange::default(),
            variant: FeatureSetVariant::LcPlusAll,
            target_nnz: 10,
            bootstrap_replicates: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRow {
    /// `up to <season>` or `aggregate`.
    pub label: String,
    pub n_train: usize,
    pub n_train_events: usize,
    /// One entry per season; `None` where the season precedes the horizon or
    /// the row is absent.
    pub cells: Vec<Option<CIndexSummary>>,
    /// Pooled test C-index (aggregate row only).
    pub pooled: Option<CIndexSummary>,
    pub absent_reason: Option<String>,
    #[serde(skip)]
    train_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestMatrix {
    pub variant: FeatureSetVariant,
    /// Seasons with at least one patient, in time order.
    pub seasons: Vec<SeasonWindow>,
    pub season_labels: Vec<String>,
    pub n_test: Vec<usize>,
    /// Training horizons, then the aggregate row.
    pub rows: Vec<BacktestRow>,
    #[serde(skip)]
    test_ids: Vec<BTreeSet<String>>,
}

impl BacktestRow {
    /// Patients this row's model was trained on.
    pub fn train_ids(&self) -> &BTreeSet<String> {
        &self.train_ids
    }
}

impl BacktestMatrix {
    /// Test patients of season `s`.
    pub fn test_ids(&self, s: usize) -> &BTreeSet<String> {
        &self.test_ids[s]
    }

    /// Number of (row, season) cells whose test patients overlap the row's
    /// training patients.
    pub fn leaking_cells(&self) -> usize {
        let mut leaks = 0;
        for row in &self.rows {
            for (s, cell) in row.cells.iter().enumerate() {
                if cell.is_some() && !row.train_ids.is_disjoint(&self.test_ids[s]) {
                    leaks += 1;
                }
            }
            if row.pooled.is_some() && self.test_ids.iter().any(|t| !row.train_ids.is_disjoint(t)) {
                leaks += 1;
            }
        }
        leaks
    }

    /// Presence pattern, `true` where a cell holds a result.
    pub fn presence(&self) -> Vec<Vec<bool>> {
        self.rows.iter().map(|r| r.cells.iter().map(Option::is_some).collect()).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["trained_up_to".to_string(), "n_train".into()];
        header.extend(self.season_labels.iter().cloned());
        header.push("all".into());
        w.write_record(&header)?;
        let fmt = |c: &Option<CIndexSummary>| {
            c.as_ref()
                .and_then(|c| c.estimate)
                .map(|v| v.to_string())
                .unwrap_or_default()
        };
        for row in &self.rows {
            let mut rec = vec![row.label.clone(), row.n_train.to_string()];
            rec.extend(row.cells.iter().map(fmt));
            rec.push(fmt(&row.pooled));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn ids_of(cohort: &Cohort) -> BTreeSet<String> {
    cohort.patient_ids().iter().cloned().collect()
}

/// Trains on the union of seasonal train splits up to each horizon (and on all
/// of them for the aggregate row) and scores every later season's test split.
pub fn run_backtest(
    cohort: &Cohort,
    anchors: &[AnchorSpec],
    settings: &TrainSettings,
    config: &BacktestConfig,
    seed: u64,
) -> Result<BacktestMatrix> {
    let windows = config.range.windows();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); windows.len()];
    for (i, &d) in cohort.t0().iter().enumerate() {
        let w = config.range.season_of(d)?;
        let k = windows.iter().position(|x| *x == w).expect("window list tiles the range");
        members[k].push(i);
    }
    let used: Vec<usize> = (0..windows.len()).filter(|&k| !members[k].is_empty()).collect();
    if used.len() < 2 {
        return Err(Error::invalid("backtesting needs patients in at least two seasons"));
    }
    let seasons: Vec<SeasonWindow> = used.iter().map(|&k| windows[k].clone()).collect();

    let mut train_rows: Vec<Vec<usize>> = Vec::new();
    let mut tests: Vec<Cohort> = Vec::new();
    for (s, &k) in used.iter().enumerate() {
        let rows = &members[k];
        let ids: Vec<String> = rows.iter().map(|&i| cohort.patient_ids()[i].clone()).collect();
        let (tr, te) = split_indices(&ids, seed, &seasons[s].label());
        train_rows.push(tr.iter().map(|&j| rows[j]).collect());
        tests.push(cohort.select_rows(&te.iter().map(|&j| rows[j]).collect::<Vec<_>>())?);
    }

    let mut settings = settings.clone();
    settings.cox.selection = LambdaSelection::Sparsity;
    settings.cox.target_nnz = config.target_nnz;
    let n_seasons = seasons.len();
    let b = config.bootstrap_replicates;

    // horizon h trains on seasons 0..=h; the last job is the aggregate
    let rows: Vec<BacktestRow> = (0..=n_seasons)
        .into_par_iter()
        .map(|h| -> Result<BacktestRow> {
            let aggregate = h == n_seasons;
            let upto = if aggregate { n_seasons - 1 } else { h };
            let mut idx: Vec<usize> = train_rows[..=upto].iter().flatten().copied().collect();
            idx.sort_unstable();
            let train = cohort.select_rows(&idx)?;
            let label = if aggregate {
                "aggregate".to_string()
            } else {
                format!("up to {}", seasons[h].label())
            };
            let mut row = BacktestRow {
                label,
                n_train: train.n_patients(),
                n_train_events: train.n_events(),
                cells: vec![None; n_seasons],
                pooled: None,
                absent_reason: None,
                train_ids: ids_of(&train),
            };
            if train.n_events() == 0 {
                row.absent_reason = Some("no events in the training data".into());
                return Ok(row);
            }
            let model = match train_model(&train, anchors, config.variant, &settings, seed) {
                Ok(m) => m,
                Err(e) => {
                    row.absent_reason = Some(format!("training failed: {e}"));
                    return Ok(row);
                }
            };
            let first = if aggregate { 0 } else { h };
            let mut pooled = (Vec::new(), Vec::new(), Vec::new());
            for (s, test) in tests.iter().enumerate() {
                if test.n_patients() == 0 {
                    continue;
                }
                let risk = model.risk(test)?;
                if s >= first {
                    let all: Vec<usize> = (0..test.n_patients()).collect();
                    let cell_seed = rng::mix64(seed ^ ((h as u64) << 32 | s as u64));
                    row.cells[s] = Some(c_index_summary(test.time(), test.event(), &risk, &all, b, cell_seed)?);
                }
                if aggregate {
                    pooled.0.extend_from_slice(test.time());
                    pooled.1.extend_from_slice(test.event());
                    pooled.2.extend(risk);
                }
            }
            if aggregate {
                let all: Vec<usize> = (0..pooled.0.len()).collect();
                row.pooled = Some(c_index_summary(&pooled.0, &pooled.1, &pooled.2, &all, b, rng::mix64(!seed))?);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let matrix = BacktestMatrix {
        variant: config.variant,
        season_labels: seasons.iter().map(SeasonWindow::label).collect(),
        n_test: tests.iter().map(Cohort::n_patients).collect(),
        seasons,
        rows,
        test_ids: tests.iter().map(ids_of).collect(),
    };
    if matrix.leaking_cells() > 0 {
        return Err(Error::invalid("a test patient appeared in a training set"));
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_exact_and_deterministic() {
        let ids: Vec<String> = (0..1000).map(|i| format!("p{i}")).collect();
        let (tr, te) = split_indices(&ids, 4, "SP 2020");
        assert_eq!((tr.len(), te.len()), (700, 300));
        assert_eq!(split_indices(&ids, 4, "SP 2020"), (tr.clone(), te.clone()));
        assert_ne!(split_indices(&ids, 4, "SU 2020").0, tr);
        let mut all: Vec<usize> = tr.into_iter().chain(te).collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
    }
}
