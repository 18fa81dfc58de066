//! End-to-end orchestration: configuration, the five feature-set variants,
//! model training shared with the backtest, and exports (JSON reports, CSV
//! tables, SVG figures, Sankey graph).

mod config;
mod model;
mod plots;
mod run;
mod sankey;
mod svg;
mod variant;

pub use config::{CohortSource, EvalSettings, PipelineConfig, SankeySettings, SubgroupSpec};
pub use model::{
    fit_shared, fit_variant, train_model, CoxSettings, LambdaSelection, Predictions, SelectionSummary, SharedStage,
    TrainSettings, TrainedModel,
};
pub use plots::{calibration_svg, d_calibration_svg, km_svg};
pub use run::{
    hazard_ratio_table, load_source, run_pipeline, HazardRatio, Manifest, PipelineReport, Stage, VariantReport,
};
pub use sankey::{export_sankey, SankeyEdge, SankeyGraph, SankeyNode, Sign};
pub use variant::{assemble_columns, assemble_feature_set, concept_column, FeatureSetVariant};
