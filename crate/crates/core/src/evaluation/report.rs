use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_ci, BootstrapCi};
use super::calibration::{d_calibration, one_calibration, CalibrationBins, DCalibrationBins};
use super::concordance::concordance_sorted;
use super::km::{kaplan_meier, risk_strata, RiskStratum, StepFunction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub bootstrap_replicates: usize,
    /// One-calibration horizon in days.
    pub horizon: f64,
    pub n_bins: usize,
    pub high_cut: f64,
    pub medium_cut: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            bootstrap_replicates: 1000,
            horizon: 14.0,
            n_bins: 10,
            high_cut: 0.10,
            medium_cut: 0.25,
        }
    }
}

/// Per-subject model outputs on an evaluation set.
#[derive(Debug, Clone, Copy)]
pub struct EvalInputs<'a> {
    pub time: &'a [f64],
    pub event: &'a [bool],
    /// Linear predictor; larger means earlier expected event.
    pub risk: &'a [f64],
    /// Predicted probability of an event by the horizon.
    pub event_prob_at_horizon: &'a [f64],
    /// Predicted survival at each subject's own observed time.
    pub surv_at_time: &'a [f64],
}

/// Harrell's C with its bootstrap interval; `None` when undefined on the
/// sample (e.g. a subgroup without comparable pairs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CIndexSummary {
    pub n: usize,
    pub n_events: usize,
    pub estimate: Option<f64>,
    pub ci: Option<BootstrapCi>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCurve {
    pub stratum: RiskStratum,
    pub n: usize,
    pub curve: StepFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub c_index: CIndexSummary,
    pub subgroups: BTreeMap<String, CIndexSummary>,
    pub one_calibration: CalibrationBins,
    pub d_calibration: DCalibrationBins,
    pub km_strata: Vec<StratumCurve>,
}

/// C-index on `rows` with a bootstrap over those rows only, so subgroup pairs
/// stay within the subgroup.
pub fn c_index_summary(time: &[f64], event: &[bool], risk: &[f64], rows: &[usize], b: usize, seed: u64) -> Result<CIndexSummary> {
    let pick = |idx: &mut dyn Iterator<Item = usize>| -> (Vec<f64>, Vec<bool>, Vec<f64>) {
        let mut t = Vec::new();
        let mut e = Vec::new();
        let mut r = Vec::new();
        for i in idx {
            t.push(time[i]);
            e.push(event[i]);
            r.push(risk[i]);
        }
        (t, e, r)
    };
    // the sorted count is exact, so it serves every sample size here
    let harrell = |t: &[f64], e: &[bool], r: &[f64]| concordance_sorted(t, e, r).ok().and_then(|c| c.c_index());
    let (t, e, r) = pick(&mut rows.iter().copied());
    let estimate = harrell(&t, &e, &r);
    let ci = if estimate.is_some() && b > 0 {
        Some(bootstrap_ci(rows.len(), b, seed, |idx| {
            let (t, e, r) = pick(&mut idx.iter().map(|&k| rows[k]));
            harrell(&t, &e, &r)
        })?)
    } else {
        None
    };
    Ok(CIndexSummary {
        n: rows.len(),
        n_events: e.iter().filter(|x| **x).count(),
        estimate,
        ci,
    })
}

/// Full evaluation of one model on one dataset. `subgroups` are named row
/// masks.
pub fn evaluate(inputs: &EvalInputs, subgroups: &[(String, Vec<bool>)], opts: &EvalOptions, seed: u64) -> Result<EvalReport> {
    let n = inputs.time.len();
    for len in [inputs.event.len(), inputs.risk.len(), inputs.event_prob_at_horizon.len(), inputs.surv_at_time.len()] {
        if len != n {
            return Err(Error::invalid("evaluation inputs have different lengths"));
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let b = opts.bootstrap_replicates;
    let c = c_index_summary(inputs.time, inputs.event, inputs.risk, &all, b, seed)?;
    if c.estimate.is_none() {
        return Err(Error::invalid("no comparable pairs in the evaluation set"));
    }
    let mut sub = BTreeMap::new();
    for (k, (name, mask)) in subgroups.iter().enumerate() {
        if mask.len() != n {
            return Err(Error::invalid(format!("subgroup `{name}` mask has the wrong length")));
        }
        let rows: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        let s = c_index_summary(inputs.time, inputs.event, inputs.risk, &rows, b, crate::rng::mix64(seed ^ (k as u64 + 1)))?;
        sub.insert(name.clone(), s);
    }
    let strata = risk_strata(inputs.risk, opts.high_cut, opts.medium_cut);
    let mut km_strata = Vec::new();
    for s in RiskStratum::ALL {
        let rows: Vec<usize> = (0..n).filter(|&i| strata[i] == s).collect();
        let t: Vec<f64> = rows.iter().map(|&i| inputs.time[i]).collect();
        let e: Vec<bool> = rows.iter().map(|&i| inputs.event[i]).collect();
        km_strata.push(StratumCurve {
            stratum: s,
            n: rows.len(),
            curve: kaplan_meier(&t, &e)?,
        });
    }
    Ok(EvalReport {
        c_index: c,
        subgroups: sub,
        one_calibration: one_calibration(inputs.event_prob_at_horizon, inputs.time, inputs.event, opts.horizon, opts.n_bins)?,
        d_calibration: d_calibration(inputs.surv_at_time, inputs.event, opts.n_bins)?,
        km_strata,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `stratum,time,survival`, each curve starting at (0, 1).
pub fn write_km_csv(path: &Path, curves: &[StratumCurve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["stratum", "n", "time", "survival"])?;
    for c in curves {
        let n = c.n.to_string();
        w.write_record([c.stratum.as_str(), &n, "0", "1"])?;
        for (t, s) in c.curve.times.iter().zip(&c.curve.values) {
            w.write_record([c.stratum.as_str(), &n, &t.to_string(), &s.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_one_calibration_csv(path: &Path, bins: &CalibrationBins) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin", "lower", "upper", "count", "predicted", "observed"])?;
    for b in 0..bins.count.len() {
        w.write_record([
            b.to_string(),
            opt(Some(bins.lower[b]).filter(|v| v.is_finite())),
            opt(Some(bins.upper[b]).filter(|v| v.is_finite())),
            bins.count[b].to_string(),
            opt(bins.predicted[b]),
            opt(bins.observed[b]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_d_calibration_csv(path: &Path, bins: &DCalibrationBins) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["lower", "upper", "mass"])?;
    for (b, m) in bins.mass.iter().enumerate() {
        w.write_record([bins.edges[b].to_string(), bins.edges[b + 1].to_string(), m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
