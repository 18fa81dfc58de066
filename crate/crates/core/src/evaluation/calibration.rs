use serde::{Deserialize, Serialize};

use super::km::kaplan_meier;
use crate::error::{Error, Result};

/// One-calibration at a horizon: equal-count bins of predicted event
/// probability against within-bin Kaplan-Meier event probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBins {
    pub horizon: f64,
    /// Predicted-probability range of each bin.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub count: Vec<usize>,
    pub predicted: Vec<Option<f64>>,
    /// `None` when nobody in the bin is followed to the horizon and the bin's
    /// KM curve has not reached zero.
    pub observed: Vec<Option<f64>>,
}

impl CalibrationBins {
    /// Largest |predicted - observed| over bins where both are defined.
    pub fn max_gap(&self) -> Option<f64> {
        self.predicted
            .iter()
            .zip(&self.observed)
            .filter_map(|(p, o)| Some((p.as_ref()? - o.as_ref()?).abs()))
            .reduce(f64::max)
    }
}

pub fn one_calibration(
    pred_event_prob: &[f64],
    time: &[f64],
    event: &[bool],
    horizon: f64,
    n_bins: usize,
) -> Result<CalibrationBins> {
    let n = pred_event_prob.len();
    if time.len() != n || event.len() != n {
        return Err(Error::invalid("prediction, time and event lengths differ"));
    }
    if n_bins == 0 {
        return Err(Error::invalid("need at least one calibration bin"));
    }
    if pred_event_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("predicted probabilities must lie in [0, 1]"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pred_event_prob[a].total_cmp(&pred_event_prob[b]).then(a.cmp(&b)));
    let mut out = CalibrationBins {
        horizon,
        lower: Vec::with_capacity(n_bins),
        upper: Vec::with_capacity(n_bins),
        count: Vec::with_capacity(n_bins),
        predicted: Vec::with_capacity(n_bins),
        observed: Vec::with_capacity(n_bins),
    };
    for b in 0..n_bins {
        let rows = &order[b * n / n_bins..(b + 1) * n / n_bins];
        out.count.push(rows.len());
        if rows.is_empty() {
            out.lower.push(f64::NAN);
            out.upper.push(f64::NAN);
            out.predicted.push(None);
            out.observed.push(None);
            continue;
        }
        let p: Vec<f64> = rows.iter().map(|&i| pred_event_prob[i]).collect();
        out.lower.push(p[0]);
        out.upper.push(p[p.len() - 1]);
        out.predicted.push(Some(p.iter().sum::<f64>() / p.len() as f64));
        let t: Vec<f64> = rows.iter().map(|&i| time[i]).collect();
        let e: Vec<bool> = rows.iter().map(|&i| event[i]).collect();
        let km = kaplan_meier(&t, &e)?;
        let s = km.at(horizon);
        let followed = t.iter().any(|&ti| ti >= horizon);
        out.observed.push((followed || s == 0.0).then_some(1.0 - s));
    }
    Ok(out)
}

/// D-calibration histogram over equal-width bins of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DCalibrationBins {
    /// `n_bins + 1` edges from 0 to 1.
    pub edges: Vec<f64>,
    /// Probability mass per bin, normalized by the number of subjects.
    pub mass: Vec<f64>,
}

/// `surv_at_time[i]` is the subject's predicted survival at their own observed
/// time. Events put unit mass in the bin holding that value; a censored
/// subject with value `s` spreads its mass uniformly over `[0, s]`.
pub fn d_calibration(surv_at_time: &[f64], event: &[bool], n_bins: usize) -> Result<DCalibrationBins> {
    let n = surv_at_time.len();
    if event.len() != n {
        return Err(Error::invalid("survival and event lengths differ"));
    }
    if n == 0 || n_bins == 0 {
        return Err(Error::invalid("D-calibration needs subjects and bins"));
    }
    if surv_at_time.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::invalid("survival probabilities must lie in [0, 1]"));
    }
    let edges: Vec<f64> = (0..=n_bins).map(|b| b as f64 / n_bins as f64).collect();
    // the last bin is closed on the right
    let bin_of = |u: f64| (edges[..n_bins].partition_point(|&e| e <= u) - 1).min(n_bins - 1);
    let mut mass = vec![0.0; n_bins];
    for (&s, &e) in surv_at_time.iter().zip(event) {
        let b = bin_of(s);
        if e {
            mass[b] += 1.0;
        } else if s == 0.0 {
            mass[0] += 1.0;
        } else {
            for k in 0..b {
                mass[k] += (edges[k + 1] - edges[k]) / s;
            }
            mass[b] += (s - edges[b]) / s;
        }
    }
    for m in &mut mass {
        *m /= n as f64;
    }
    Ok(DCalibrationBins { edges, mass })
}
