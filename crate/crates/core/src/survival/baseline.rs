use serde::{Deserialize, Serialize};

use super::data::SurvivalData;
use super::lasso::CoxFit;
use super::likelihood::CoxProblem;
use crate::error::{Error, Result};

/// Breslow cumulative baseline hazard, a right-continuous step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    pub event_times: Vec<f64>,
    pub cumulative_hazard: Vec<f64>,
}

impl BaselineHazard {
    /// `H0(t)`: sum of increments at event times `<= t`.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.event_times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative_hazard[k - 1]
        }
    }
}

/// Breslow estimator: increment `d_t / sum_{j in R(t)} exp(x_j beta)` at each
/// distinct event time.
pub fn breslow_baseline(fit: &CoxFit, data: &SurvivalData) -> Result<BaselineHazard> {
    if fit.beta.len() != data.d() {
        return Err(Error::invalid("fit and data have different feature counts"));
    }
    let problem = CoxProblem::new(data);
    let eta = problem.linear_predictor(&fit.beta);
    let (event_times, inc) = problem.breslow_increments(&eta);
    let cumulative_hazard = inc
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    Ok(BaselineHazard {
        event_times,
        cumulative_hazard,
    })
}

/// Linear predictor `x beta`.
pub fn predict_risk(fit: &CoxFit, row: &[f64]) -> Result<f64> {
    if row.len() != fit.beta.len() {
        return Err(Error::invalid(format!("row has {} features, fit has {}", row.len(), fit.beta.len())));
    }
    Ok(row.iter().zip(&fit.beta).map(|(x, b)| x * b).sum())
}

/// `S(t | x) = exp(-H0(t) exp(x beta))`.
pub fn predict_survival(fit: &CoxFit, baseline: &BaselineHazard, row: &[f64], t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("survival requested at negative time {t}")));
    }
    let risk = predict_risk(fit, row)?;
    Ok((-baseline.at(t) * risk.exp()).exp())
}
