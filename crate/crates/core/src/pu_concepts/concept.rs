use std::collections::BTreeSet;

use ndarray::Axis;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::{fit_logistic, sigmoid};
use crate::data_model::Cohort;
use crate::error::{Error, Result};
use crate::rng;

/// Lower bound on the label-frequency estimate.
pub const DELTA_FLOOR: f64 = 1e-3;

/// A concept declared by its positive anchors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSpec {
    #[serde(rename = "concept")]
    pub concept_name: String,
    /// OR-combined into the anchor indicator.
    #[serde(rename = "anchors")]
    pub anchor_columns: Vec<String>,
    /// Removed from the classifier's inputs in addition to the anchors.
    #[serde(rename = "exclude", default)]
    pub excluded_columns: Vec<String>,
}

impl AnchorSpec {
    pub fn new(concept: impl Into<String>, anchors: &[&str]) -> Self {
        AnchorSpec {
            concept_name: concept.into(),
            anchor_columns: anchors.iter().map(|s| s.to_string()).collect(),
            excluded_columns: Vec::new(),
        }
    }

    /// Anchor presence per row (OR over anchor columns).
    pub fn anchor_presence(&self, cohort: &Cohort) -> Result<Vec<bool>> {
        let mut present = vec![false; cohort.n_patients()];
        for name in &self.anchor_columns {
            let col = cohort.column(name).ok_or_else(|| {
                Error::invalid(format!("anchor column `{name}` of concept `{}` not in cohort", self.concept_name))
            })?;
            for (p, v) in present.iter_mut().zip(col.iter()) {
                *p |= *v == 1.0;
            }
        }
        Ok(present)
    }

    fn validate(&self, cohort: &Cohort) -> Result<()> {
        if self.anchor_columns.is_empty() {
            return Err(Error::invalid(format!("concept `{}` has no anchors", self.concept_name)));
        }
        for a in &self.anchor_columns {
            if self.excluded_columns.contains(a) {
                return Err(Error::invalid(format!("`{a}` is both anchor and exclusion")));
            }
            let j = cohort
                .column_index(a)
                .ok_or_else(|| Error::invalid(format!("anchor column `{a}` not in cohort")))?;
            if !cohort.columns()[j].is_binary() {
                return Err(Error::invalid(format!("anchor column `{a}` is not binary")));
            }
        }
        for e in &self.excluded_columns {
            if cohort.column_index(e).is_none() {
                return Err(Error::invalid(format!("excluded column `{e}` not in cohort")));
            }
        }
        Ok(())
    }
}

/// Fitted positive-vs-unlabeled classifier plus its label-frequency estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptModel {
    pub spec: AnchorSpec,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub delta_hat: f64,
    pub feature_names: Vec<String>,
}

impl ConceptModel {
    /// Classifier output `g`: probability that an anchor is present.
    pub fn anchor_score(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.weights.len() {
            return Err(Error::invalid(format!(
                "concept `{}` expects {} features, got {}",
                self.spec.concept_name,
                self.weights.len(),
                row.len()
            )));
        }
        Ok(self.score_unchecked(row.iter()))
    }

    fn score_unchecked<'a>(&self, row: impl Iterator<Item = &'a f64>) -> f64 {
        sigmoid(self.intercept + row.zip(&self.weights).map(|(x, w)| x * w).sum::<f64>())
    }

    fn feature_indices(&self, cohort: &Cohort) -> Result<Vec<usize>> {
        self.feature_names
            .iter()
            .map(|n| {
                cohort.column_index(n).ok_or_else(|| {
                    Error::invalid(format!("concept `{}` needs column `{n}`", self.spec.concept_name))
                })
            })
            .collect()
    }

    /// `g` for every row of `cohort`.
    pub fn anchor_scores(&self, cohort: &Cohort) -> Result<Vec<f64>> {
        let idx = self.feature_indices(cohort)?;
        let x = cohort.features().select(Axis(1), &idx);
        Ok(x.axis_iter(Axis(0)).map(|row| self.score_unchecked(row.iter())).collect())
    }

    /// Concept probability for every row: 1 where an anchor is observed,
    /// `min(1, g / delta_hat)` elsewhere.
    pub fn posteriors(&self, cohort: &Cohort) -> Result<Vec<f64>> {
        let present = self.spec.anchor_presence(cohort)?;
        let g = self.anchor_scores(cohort)?;
        Ok(present
            .iter()
            .zip(g)
            .map(|(&a, g)| if a { 1.0 } else { scale(g, self.delta_hat) })
            .collect())
    }
}

fn scale(g: f64, delta_hat: f64) -> f64 {
    (g / delta_hat).min(1.0)
}

/// Mean classifier output over anchor-positive calibration rows, floored at
/// [`DELTA_FLOOR`].
pub fn estimate_delta(g_on_positives: &[f64]) -> Result<f64> {
    if g_on_positives.is_empty() {
        return Err(Error::invalid("no anchor-positive rows to estimate the label frequency"));
    }
    if g_on_positives.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(Error::invalid("classifier outputs must lie in [0, 1]"));
    }
    let mean = g_on_positives.iter().sum::<f64>() / g_on_positives.len() as f64;
    Ok(mean.max(DELTA_FLOOR))
}

pub fn concept_posterior(model: &ConceptModel, row: &[f64], anchor_present: bool) -> Result<f64> {
    let g = model.anchor_score(row)?;
    Ok(if anchor_present { 1.0 } else { scale(g, model.delta_hat) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuOptions {
    /// Ridge strength on the classifier weights (1.0 matches unit inverse regularization).
    pub l2_strength: f64,
    /// Fraction of training rows held out to estimate the label frequency.
    pub calib_fraction: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PuOptions {
    fn default() -> Self {
        PuOptions {
            l2_strength: 1.0,
            calib_fraction: 0.2,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

/// Fits one concept: OR the anchors into a label, drop anchors and exclusions
/// from the inputs, fit the classifier on the fitting split and estimate the
/// label frequency on the calibration split (stratified by anchor, seeded).
pub fn fit_concept(train: &Cohort, spec: &AnchorSpec, opts: &PuOptions, seed: u64) -> Result<ConceptModel> {
    spec.validate(train)?;
    if train.has_missing() {
        return Err(Error::invalid("concept fitting requires imputed features"));
    }
    if !(opts.calib_fraction > 0.0 && opts.calib_fraction < 1.0) {
        return Err(Error::invalid("calibration fraction must lie in (0, 1)"));
    }
    let labels = spec.anchor_presence(train)?;
    let n_pos = labels.iter().filter(|v| **v).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::invalid(format!(
            "anchor prevalence of concept `{}` is {}; must be strictly between 0 and 1",
            spec.concept_name,
            n_pos as f64 / labels.len().max(1) as f64
        )));
    }

    let dropped: BTreeSet<&str> = spec
        .anchor_columns
        .iter()
        .chain(&spec.excluded_columns)
        .map(String::as_str)
        .collect();
    let feature_idx: Vec<usize> = (0..train.n_columns())
        .filter(|&j| !dropped.contains(train.columns()[j].name.as_str()))
        .collect();
    let feature_names: Vec<String> = feature_idx.iter().map(|&j| train.columns()[j].name.clone()).collect();

    let mut rng = rng::stream(seed, rng::hash_bytes(0, spec.concept_name.as_bytes()));
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let n_cal_pos = (opts.calib_fraction * pos.len() as f64).round() as usize;
    let n_cal_neg = (opts.calib_fraction * neg.len() as f64).round() as usize;
    if n_cal_pos == 0 || n_cal_pos == pos.len() {
        return Err(Error::invalid(format!(
            "concept `{}`: calibration split must hold some, but not all, of the {} anchor-positive rows",
            spec.concept_name,
            pos.len()
        )));
    }
    let cal_pos = &pos[..n_cal_pos];
    let mut fit_rows: Vec<usize> = pos[n_cal_pos..].iter().chain(&neg[n_cal_neg..]).copied().collect();
    fit_rows.sort_unstable();

    let x_fit = train.features().select(Axis(0), &fit_rows).select(Axis(1), &feature_idx);
    let y_fit: Vec<bool> = fit_rows.iter().map(|&i| labels[i]).collect();
    let fit = fit_logistic(x_fit.view(), &y_fit, opts.l2_strength, opts.max_iter, opts.tol)?;

    let mut model = ConceptModel {
        spec: spec.clone(),
        weights: fit.weights,
        intercept: fit.intercept,
        delta_hat: 1.0,
        feature_names,
    };
    let x_cal = train.features().select(Axis(0), cal_pos).select(Axis(1), &feature_idx);
    let g_cal: Vec<f64> = x_cal.axis_iter(Axis(0)).map(|row| model.score_unchecked(row.iter())).collect();
    model.delta_hat = estimate_delta(&g_cal)?;
    Ok(model)
}

/// Fits each spec independently. Results are in spec order and do not depend
/// on scheduling.
pub fn fit_concepts(train: &Cohort, specs: &[AnchorSpec], opts: &PuOptions, seed: u64) -> Vec<Result<ConceptModel>> {
    specs.par_iter().map(|s| fit_concept(train, s, opts, seed)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountFraction {
    pub count: usize,
    pub fraction: f64,
}

/// Per-concept diagnostics on a test cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptReport {
    pub concept_name: String,
    pub n_test: usize,
    /// Anchor-negative rows scored above the threshold.
    pub new_positives: CountFraction,
    /// Anchor-positive rows.
    pub original_positives: CountFraction,
    /// Fraction of anchor-positive rows scored above the threshold with the
    /// anchor masked; `None` when the test set has no anchor positives.
    pub recall: Option<f64>,
    pub recalled: usize,
    pub delta_hat: f64,
}

pub fn concept_report(model: &ConceptModel, test: &Cohort, threshold: f64) -> Result<ConceptReport> {
    let present = model.spec.anchor_presence(test)?;
    let g = model.anchor_scores(test)?;
    let n = test.n_patients();
    let mut new_pos = 0;
    let mut orig = 0;
    let mut recalled = 0;
    for (&a, &gi) in present.iter().zip(&g) {
        let masked = scale(gi, model.delta_hat);
        if a {
            orig += 1;
            if masked > threshold {
                recalled += 1;
            }
        } else if masked > threshold {
            new_pos += 1;
        }
    }
    let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    Ok(ConceptReport {
        concept_name: model.spec.concept_name.clone(),
        n_test: n,
        new_positives: CountFraction { count: new_pos, fraction: frac(new_pos) },
        original_positives: CountFraction { count: orig, fraction: frac(orig) },
        recall: (orig > 0).then(|| recalled as f64 / orig as f64),
        recalled,
        delta_hat: model.delta_hat,
    })
}
