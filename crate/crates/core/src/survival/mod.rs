//! L1-penalized Cox proportional hazards.
//!
//! The objective is `-loglik(beta) / n + lambda * |beta|_1`, where `loglik` is
//! the Efron-approximated partial log-likelihood. It is minimized by cyclic
//! coordinate descent: each coordinate takes a soft-thresholded Newton step on
//! its exact second-order expansion, backtracked until the penalized objective
//! does not increase.

mod baseline;
mod data;
mod lasso;
mod likelihood;
mod selection;

pub use baseline::{breslow_baseline, predict_risk, predict_survival, BaselineHazard};
pub use data::SurvivalData;
pub use lasso::{fit_lasso_cox, fit_lasso_cox_traced, lambda_max, CoxFit, CoxOptions};
pub use likelihood::{cox_neg_partial_loglik, CoxProblem};
pub use selection::{
    default_lambda_grid, lambda_path, select_lambda_cv, select_lambda_sparsity, CvSelection, LambdaPath,
};
