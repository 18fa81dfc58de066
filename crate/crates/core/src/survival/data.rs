use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Design matrix with right-censored outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalData {
    x: Array2<f64>,
    time: Vec<f64>,
    event: Vec<bool>,
    feature_names: Vec<String>,
}

impl SurvivalData {
    pub fn new(x: Array2<f64>, time: Vec<f64>, event: Vec<bool>, feature_names: Vec<String>) -> Result<Self> {
        let n = x.nrows();
        if time.len() != n || event.len() != n {
            return Err(Error::invalid("time/event lengths differ from design rows"));
        }
        if feature_names.len() != x.ncols() {
            return Err(Error::invalid("feature name count differs from design columns"));
        }
        if !event.iter().any(|e| *e) {
            return Err(Error::invalid("survival data has no events"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix contains missing or non-finite values"));
        }
        if time.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::invalid("times must be finite and nonnegative"));
        }
        Ok(SurvivalData {
            x,
            time,
            event,
            feature_names,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|e| **e).count()
    }

    pub fn subset(&self, rows: &[usize]) -> Result<SurvivalData> {
        SurvivalData::new(
            self.x.select(Axis(0), rows),
            rows.iter().map(|&i| self.time[i]).collect(),
            rows.iter().map(|&i| self.event[i]).collect(),
            self.feature_names.clone(),
        )
    }

    /// Same covariates with every time shifted by `c`.
    pub fn shift_times(&self, c: f64) -> Result<SurvivalData> {
        SurvivalData::new(
            self.x.clone(),
            self.time.iter().map(|t| t + c).collect(),
            self.event.clone(),
            self.feature_names.clone(),
        )
    }
}
