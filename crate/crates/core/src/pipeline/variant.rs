use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data_model::{Cohort, Dtype};
use crate::error::{Error, Result};
use crate::pu_concepts::{AnchorSpec, ConceptModel};
use crate::survival::SurvivalData;

/// Which columns feed the Cox model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSetVariant {
    /// Anchor indicators only.
    RawAnchors,
    /// One posterior column per learned concept.
    LcOnly,
    /// Concepts plus continuous columns.
    LcPlusNumeric,
    /// Concepts plus every preprocessed column.
    LcPlusAll,
    /// Every preprocessed column, no concepts.
    AllFeatures,
}

impl FeatureSetVariant {
    pub const ALL: [FeatureSetVariant; 5] = [
        FeatureSetVariant::RawAnchors,
        FeatureSetVariant::LcOnly,
        FeatureSetVariant::LcPlusNumeric,
        FeatureSetVariant::LcPlusAll,
        FeatureSetVariant::AllFeatures,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSetVariant::RawAnchors => "raw_anchors",
            FeatureSetVariant::LcOnly => "lc_only",
            FeatureSetVariant::LcPlusNumeric => "lc_plus_numeric",
            FeatureSetVariant::LcPlusAll => "lc_plus_all",
            FeatureSetVariant::AllFeatures => "all_features",
        }
    }

    pub fn uses_concepts(self) -> bool {
        matches!(
            self,
            FeatureSetVariant::LcOnly | FeatureSetVariant::LcPlusNumeric | FeatureSetVariant::LcPlusAll
        )
    }
}

impl fmt::Display for FeatureSetVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSetVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSetVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown feature set `{s}`")))
    }
}

/// Name of the design column holding a concept's posterior.
pub fn concept_column(concept: &str) -> String {
    format!("lc:{concept}")
}

/// Design matrix and column names for `variant` on a preprocessed cohort.
/// Concept columns come last.
pub fn assemble_columns(
    cohort: &Cohort,
    anchors: &[AnchorSpec],
    concepts: Option<&[ConceptModel]>,
    variant: FeatureSetVariant,
) -> Result<(Array2<f64>, Vec<String>)> {
    let mut raw: Vec<usize> = match variant {
        FeatureSetVariant::RawAnchors => {
            let mut idx = Vec::new();
            for a in anchors.iter().flat_map(|s| &s.anchor_columns) {
                let j = cohort
                    .column_index(a)
                    .ok_or_else(|| Error::invalid(format!("anchor column `{a}` not in cohort")))?;
                if !idx.contains(&j) {
                    idx.push(j);
                }
            }
            idx
        }
        FeatureSetVariant::LcOnly => Vec::new(),
        FeatureSetVariant::LcPlusNumeric => (0..cohort.n_columns())
            .filter(|&j| cohort.columns()[j].dtype == Dtype::Continuous)
            .collect(),
        FeatureSetVariant::LcPlusAll | FeatureSetVariant::AllFeatures => (0..cohort.n_columns()).collect(),
    };
    raw.sort_unstable();
    let models: &[ConceptModel] = if variant.uses_concepts() {
        concepts.ok_or_else(|| Error::invalid(format!("feature set `{variant}` needs concept models")))?
    } else {
        &[]
    };
    let n = cohort.n_patients();
    let mut x = Array2::zeros((n, raw.len() + models.len()));
    let mut names = Vec::with_capacity(raw.len() + models.len());
    for (k, &j) in raw.iter().enumerate() {
        x.column_mut(k).assign(&cohort.features().column(j));
        names.push(cohort.columns()[j].name.clone());
    }
    for (k, m) in models.iter().enumerate() {
        let post = m.posteriors(cohort)?;
        for (i, p) in post.into_iter().enumerate() {
            x[[i, raw.len() + k]] = p;
        }
        let name = concept_column(&m.spec.concept_name);
        if names.contains(&name) {
            return Err(Error::invalid(format!("concept column `{name}` clashes with a raw column")));
        }
        names.push(name);
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("design matrix has missing values; preprocess first"));
    }
    Ok((x, names))
}

/// Survival data for one feature-set variant of a preprocessed cohort.
pub fn assemble_feature_set(
    cohort: &Cohort,
    anchors: &[AnchorSpec],
    concepts: Option<&[ConceptModel]>,
    variant: FeatureSetVariant,
) -> Result<SurvivalData> {
    let (x, names) = assemble_columns(cohort, anchors, concepts, variant)?;
    SurvivalData::new(x, cohort.time().to_vec(), cohort.event().to_vec(), names)
}
