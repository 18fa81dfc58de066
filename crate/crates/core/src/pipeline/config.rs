use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::TrainSettings;
use super::variant::FeatureSetVariant;
use crate::backtest::BacktestConfig;
use crate::error::{Error, Result};
use crate::evaluation::EvalOptions;
use crate::pu_concepts::AnchorSpec;
use crate::synthcohort::GenConfig;

/// Where the cohort comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortSource {
    /// Generated; the generator seed is replaced by the pipeline seed.
    Synth(GenConfig),
    Csv {
        path: PathBuf,
        #[serde(default)]
        sidecar: Option<PathBuf>,
    },
}

impl Default for CohortSource {
    fn default() -> Self {
        CohortSource::Synth(GenConfig::default())
    }
}

/// Rows where raw column `column` equals `value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSpec {
    pub name: String,
    pub column: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    #[serde(flatten)]
    pub options: EvalOptions,
    pub subgroups: Vec<SubgroupSpec>,
    /// Bootstrap refits behind the hazard-ratio intervals.
    pub hazard_bootstrap: usize,
    /// Score above which an anchor-negative patient counts as a new positive.
    pub concept_threshold: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            options: EvalOptions::default(),
            subgroups: Vec::new(),
            hazard_bootstrap: 100,
            concept_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SankeySettings {
    pub variant: FeatureSetVariant,
    /// Strongest classifier inputs drawn per concept.
    pub top_k: usize,
}

impl Default for SankeySettings {
    fn default() -> Self {
        SankeySettings {
            variant: FeatureSetVariant::LcPlusAll,
            top_k: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub cohort: CohortSource,
    /// Empty with a synthetic cohort means one spec per generated concept.
    pub anchors: Vec<AnchorSpec>,
    pub variants: Vec<FeatureSetVariant>,
    #[serde(flatten)]
    pub train: TrainSettings,
    pub eval: EvalSettings,
    pub backtest: Option<BacktestConfig>,
    pub sankey: SankeySettings,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cohort: CohortSource::default(),
            anchors: Vec::new(),
            variants: FeatureSetVariant::ALL.to_vec(),
            train: TrainSettings::default(),
            eval: EvalSettings::default(),
            backtest: None,
            sankey: SankeySettings::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)?;
        // relative cohort paths are relative to the config file
        if let CohortSource::Csv { path: p, sidecar } = &mut cfg.cohort {
            let base = path.as_ref().parent().unwrap_or(Path::new(""));
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if let Some(s) = sidecar {
                if s.is_relative() {
                    *s = base.join(&*s);
                }
            }
        }
        Ok(cfg)
    }

    /// Anchors in effect: the configured list, or for a synthetic cohort one
    /// spec per generated concept.
    pub fn effective_anchors(&self) -> Vec<AnchorSpec> {
        if !self.anchors.is_empty() {
            return self.anchors.clone();
        }
        match &self.cohort {
            CohortSource::Synth(g) => g
                .concepts
                .iter()
                .map(|c| AnchorSpec::new(c.name.clone(), &[&c.anchor_column()]))
                .collect(),
            CohortSource::Csv { .. } => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::invalid("config lists no feature-set variants"));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(v) = self.variants.iter().find(|v| !seen.insert(**v)) {
            return Err(Error::invalid(format!("variant `{v}` listed twice")));
        }
        if self.effective_anchors().is_empty() && self.variants.iter().any(|v| *v != FeatureSetVariant::AllFeatures) {
            return Err(Error::invalid("no anchors configured"));
        }
        if self.train.cox.folds < 2 {
            return Err(Error::invalid("cross-validation needs at least two folds"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        // serde_json maps are sorted, so this encoding is canonical
        let bytes = serde_json::to_vec(&value)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}
