use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::variant::{assemble_columns, FeatureSetVariant};
use crate::data_model::{population_variance, Cohort, PreprocessConfig, Preprocessor};
use crate::error::{Error, Result};
use crate::pu_concepts::{fit_concepts, AnchorSpec, ConceptModel, PuOptions};
use crate::survival::{
    breslow_baseline, default_lambda_grid, lambda_path, predict_survival, select_lambda_cv, select_lambda_sparsity,
    BaselineHazard, CoxFit, CoxOptions, SurvivalData,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSelection {
    /// K-fold cross-validated partial likelihood.
    Cv,
    /// Closest nonzero count to `target_nnz`.
    Sparsity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxSettings {
    /// Ascending penalties; `None` means `{0, 0.001, ..., 0.2}`.
    pub grid: Option<Vec<f64>>,
    pub selection: LambdaSelection,
    pub target_nnz: usize,
    pub folds: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for CoxSettings {
    fn default() -> Self {
        let opts = CoxOptions::default();
        CoxSettings {
            grid: None,
            selection: LambdaSelection::Cv,
            target_nnz: 10,
            folds: 5,
            max_iter: opts.max_iter,
            tol: opts.tol,
        }
    }
}

impl CoxSettings {
    pub fn options(&self) -> CoxOptions {
        CoxOptions {
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        self.grid.clone().unwrap_or_else(default_lambda_grid)
    }
}

/// Everything needed to train one model from a raw cohort.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub preprocess: PreprocessConfig,
    pub pu: PuOptions,
    pub cox: CoxSettings,
}

/// Preprocessing and concept models shared by every feature-set variant.
#[derive(Debug, Clone)]
pub struct SharedStage {
    pub preprocessor: Preprocessor,
    /// Preprocessed training cohort.
    pub train: Cohort,
    /// Anchor specs restricted to columns that survived preprocessing.
    pub anchors: Vec<AnchorSpec>,
    pub concepts: Vec<ConceptModel>,
    pub warnings: Vec<String>,
}

/// Learns preprocessing on `train` and, when `with_concepts`, fits every
/// concept. Concepts whose anchors were all filtered out, or whose classifier
/// cannot be fit, are skipped with a warning.
pub fn fit_shared(
    train: &Cohort,
    anchors: &[AnchorSpec],
    settings: &TrainSettings,
    with_concepts: bool,
    seed: u64,
) -> Result<SharedStage> {
    let protected: BTreeSet<String> = anchors.iter().flat_map(|a| a.anchor_columns.iter().cloned()).collect();
    let (preprocessor, train_pp, mut warnings) = Preprocessor::fit(train, &settings.preprocess, &protected)?;
    let mut kept = Vec::new();
    for spec in anchors {
        let surviving: Vec<String> = spec
            .anchor_columns
            .iter()
            .filter(|a| train_pp.column_index(a).is_some())
            .cloned()
            .collect();
        if surviving.is_empty() {
            warnings.push(format!(
                "concept `{}` skipped: its anchors were removed by preprocessing",
                spec.concept_name
            ));
            continue;
        }
        kept.push(AnchorSpec {
            concept_name: spec.concept_name.clone(),
            anchor_columns: surviving,
            excluded_columns: spec
                .excluded_columns
                .iter()
                .filter(|e| train_pp.column_index(e).is_some())
                .cloned()
                .collect(),
        });
    }
    let mut concepts = Vec::new();
    if with_concepts {
        for (spec, fit) in kept.iter().zip(fit_concepts(&train_pp, &kept, &settings.pu, seed)) {
            match fit {
                Ok(m) => concepts.push(m),
                Err(e) => warnings.push(format!("concept `{}` skipped: {e}", spec.concept_name)),
            }
        }
    }
    Ok(SharedStage {
        preprocessor,
        train: train_pp,
        anchors: kept,
        concepts,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub policy: LambdaSelection,
    pub lambda: f64,
    pub nnz: usize,
    /// Mean held-out log partial likelihood per grid value (cross-validation only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_mean_loglik: Option<Vec<f64>>,
}

/// A fitted model for one feature-set variant, replayable on raw cohorts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub variant: FeatureSetVariant,
    pub preprocessor: Preprocessor,
    pub anchors: Vec<AnchorSpec>,
    pub concepts: Vec<ConceptModel>,
    pub fit: CoxFit,
    pub baseline: BaselineHazard,
    pub selection: SelectionSummary,
    pub warnings: Vec<String>,
}

/// Per-subject outputs used by evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub risk: Vec<f64>,
    pub event_prob_at_horizon: Vec<f64>,
    pub surv_at_time: Vec<f64>,
}

/// Drops design columns whose population variance falls below `threshold`.
fn drop_flat_columns(
    x: Array2<f64>,
    names: Vec<String>,
    threshold: f64,
    warnings: &mut Vec<String>,
) -> (Array2<f64>, Vec<String>) {
    let keep: Vec<usize> = (0..names.len())
        .filter(|&j| {
            let ok = population_variance(x.column(j).iter().copied()) >= threshold;
            if !ok {
                warnings.push(format!("design column `{}` dropped for low variance", names[j]));
            }
            ok
        })
        .collect();
    let names = keep.iter().map(|&j| names[j].clone()).collect();
    (x.select(Axis(1), &keep), names)
}

/// Fits the Cox stage of `variant` on a shared stage.
pub fn fit_variant(
    shared: &SharedStage,
    variant: FeatureSetVariant,
    settings: &TrainSettings,
    seed: u64,
) -> Result<TrainedModel> {
    let mut warnings = shared.warnings.clone();
    let concepts = variant.uses_concepts().then_some(shared.concepts.as_slice());
    let (x, names) = assemble_columns(&shared.train, &shared.anchors, concepts, variant)?;
    let (x, names) = drop_flat_columns(x, names, settings.preprocess.variance_threshold, &mut warnings);
    if names.is_empty() {
        return Err(Error::invalid(format!("feature set `{variant}` has no usable columns")));
    }
    let data = SurvivalData::new(x, shared.train.time().to_vec(), shared.train.event().to_vec(), names)?;
    let grid = settings.cox.grid();
    let opts = settings.cox.options();
    let cv = match settings.cox.selection {
        LambdaSelection::Cv => Some(select_lambda_cv(&data, &grid, settings.cox.folds, seed, &opts)?),
        LambdaSelection::Sparsity => None,
    };
    let path = lambda_path(&data, &grid, &opts)?;
    let lambda = match &cv {
        Some(cv) => cv.lambda,
        None => select_lambda_sparsity(&path, settings.cox.target_nnz),
    };
    let k = grid.iter().position(|&l| l == lambda).expect("selected lambda is on the grid");
    let fit = path.fits[k].clone();
    if !fit.converged {
        warnings.push(format!("Cox fit at lambda {lambda} did not converge in {} sweeps", fit.n_iter));
    }
    let baseline = breslow_baseline(&fit, &data)?;
    Ok(TrainedModel {
        variant,
        preprocessor: shared.preprocessor.clone(),
        anchors: shared.anchors.clone(),
        concepts: if variant.uses_concepts() { shared.concepts.clone() } else { Vec::new() },
        selection: SelectionSummary {
            policy: settings.cox.selection,
            lambda,
            nnz: fit.nnz(),
            cv_mean_loglik: cv.map(|c| c.mean_loglik),
        },
        fit,
        baseline,
        warnings,
    })
}

/// Preprocessing, concepts and Cox fit for one variant in a single call.
pub fn train_model(
    train: &Cohort,
    anchors: &[AnchorSpec],
    variant: FeatureSetVariant,
    settings: &TrainSettings,
    seed: u64,
) -> Result<TrainedModel> {
    let shared = fit_shared(train, anchors, settings, variant.uses_concepts(), seed)?;
    fit_variant(&shared, variant, settings, seed)
}

impl TrainedModel {
    /// Design matrix over the fitted columns for a raw cohort.
    pub fn design(&self, raw: &Cohort) -> Result<Array2<f64>> {
        let pp = self.preprocessor.apply(raw)?;
        let concepts = self.variant.uses_concepts().then_some(self.concepts.as_slice());
        let (x, names) = assemble_columns(&pp, &self.anchors, concepts, self.variant)?;
        let idx: Vec<usize> = self
            .fit
            .feature_names
            .iter()
            .map(|f| {
                names
                    .iter()
                    .position(|n| n == f)
                    .ok_or_else(|| Error::invalid(format!("fitted column `{f}` missing from design")))
            })
            .collect::<Result<_>>()?;
        Ok(x.select(Axis(1), &idx))
    }

    /// Survival data on the fitted columns (needs at least one event).
    pub fn survival_data(&self, raw: &Cohort) -> Result<SurvivalData> {
        SurvivalData::new(
            self.design(raw)?,
            raw.time().to_vec(),
            raw.event().to_vec(),
            self.fit.feature_names.clone(),
        )
    }

    pub fn risk(&self, raw: &Cohort) -> Result<Vec<f64>> {
        let x = self.design(raw)?;
        Ok(x.axis_iter(Axis(0))
            .map(|row| row.iter().zip(&self.fit.beta).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn predict(&self, raw: &Cohort, horizon: f64) -> Result<Predictions> {
        let x = self.design(raw)?;
        let mut out = Predictions {
            risk: Vec::with_capacity(raw.n_patients()),
            event_prob_at_horizon: Vec::with_capacity(raw.n_patients()),
            surv_at_time: Vec::with_capacity(raw.n_patients()),
        };
        for (i, row) in x.axis_iter(Axis(0)).enumerate() {
            let row = row.to_vec();
            out.risk.push(row.iter().zip(&self.fit.beta).map(|(a, b)| a * b).sum());
            out.event_prob_at_horizon
                .push(1.0 - predict_survival(&self.fit, &self.baseline, &row, horizon)?);
            out.surv_at_time
                .push(predict_survival(&self.fit, &self.baseline, &row, raw.time()[i])?);
        }
        Ok(out)
    }
}
