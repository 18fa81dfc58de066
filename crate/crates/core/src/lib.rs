//! Learned clinical concepts and Lasso-Cox risk models.
//!
//! The crate is organised around the stages of a risk-modelling pipeline:
//!
//! - [`data_model`]: cohort representation, CSV ingestion and preprocessing
//!   (frequency capping, indicator expansion, imputation, normalization,
//!   variance filtering).
//! - [`pu_concepts`]: anchor-and-learn concept extraction. A positive-vs-unlabeled
//!   logistic classifier is fit per concept and rescaled by the estimated label
//!   frequency.
//! - [`survival`]: L1-penalized Cox proportional hazards (Efron ties) fit by
//!   coordinate descent along a warm-started penalty path.
//! - [`evaluation`]: Harrell's C-index, bootstrap intervals, Kaplan-Meier,
//!   risk strata, one-calibration and D-calibration.
//! - [`backtest`]: seasonal windows and the train-up-to / evaluate-on matrix.
//! - [`synthcohort`]: a generator with planted concepts and a known hazard model.
//! - [`pipeline`]: configuration, feature-set variants, exports and the
//!   end-to-end runner used by the CLI.

pub mod backtest;
pub mod data_model;
pub mod error;
pub mod evaluation;
mod linalg;
pub mod pipeline;
pub mod pu_concepts;
pub mod rng;
pub mod survival;
pub mod synthcohort;

pub use error::{Error, Result};
