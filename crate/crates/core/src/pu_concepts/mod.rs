//! Anchor-and-learn concept extraction.
//!
//! A concept (e.g. diabetes) is declared through positive anchors: binary
//! columns whose presence implies the concept, but whose absence says little.
//! A logistic classifier `g` learns `P(anchor | other covariates)`; under the
//! selected-completely-at-random assumption `g = delta * P(concept | covariates)`,
//! where `delta` is the anchor's label frequency among true positives. `delta`
//! is estimated as the mean of `g` over anchor-positive rows of a held-out
//! calibration split, and the concept probability is `g / delta` (clipped to 1),
//! or exactly 1 where an anchor is observed.

mod concept;
mod logistic;

pub use concept::{
    concept_posterior, concept_report, estimate_delta, fit_concept, fit_concepts, AnchorSpec, ConceptModel,
    ConceptReport, CountFraction, PuOptions, DELTA_FLOOR,
};
pub use logistic::{fit_logistic, sigmoid, LogisticFit};
