use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-continuous survival step function; `S(t) = 1` before the first time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 1.0,
            k => self.values[k - 1],
        }
    }
}

/// Product-limit estimator over the distinct event times.
pub fn kaplan_meier(time: &[f64], event: &[bool]) -> Result<StepFunction> {
    if time.len() != event.len() {
        return Err(Error::invalid("time and event lengths differ"));
    }
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
    let mut at_risk = time.len();
    let mut s = 1.0;
    let mut out = StepFunction {
        times: Vec::new(),
        values: Vec::new(),
    };
    let mut p = 0;
    while p < order.len() {
        let t = time[order[p]];
        let mut q = p;
        let mut deaths = 0;
        while q < order.len() && time[order[q]] == t {
            deaths += usize::from(event[order[q]]);
            q += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / at_risk as f64;
            out.times.push(t);
            out.values.push(s);
        }
        at_risk -= q - p;
        p = q;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskStratum {
    High,
    Medium,
    Low,
}

impl RiskStratum {
    pub const ALL: [RiskStratum; 3] = [RiskStratum::High, RiskStratum::Medium, RiskStratum::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskStratum::High => "high",
            RiskStratum::Medium => "medium",
            RiskStratum::Low => "low",
        }
    }
}

/// Stratum sizes for `n` rows: high gets `ceil(high_cut n)`, medium
/// `ceil(medium_cut n) - high`, low the rest.
pub fn strata_sizes(n: usize, high_cut: f64, medium_cut: f64) -> (usize, usize, usize) {
    // guard against products like 0.1 * 30 = 3.0000000000000004
    let ceil = |c: f64| ((c * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n);
    let high = ceil(high_cut);
    let medium = ceil(medium_cut).max(high) - high;
    (high, medium, n - high - medium)
}

/// Labels rows by descending risk, ties broken by ascending row index.
pub fn risk_strata(risk: &[f64], high_cut: f64, medium_cut: f64) -> Vec<RiskStratum> {
    let mut order: Vec<usize> = (0..risk.len()).collect();
    order.sort_by(|&a, &b| risk[b].total_cmp(&risk[a]).then(a.cmp(&b)));
    let (high, medium, _) = strata_sizes(risk.len(), high_cut, medium_cut);
    let mut out = vec![RiskStratum::Low; risk.len()];
    for (rank, &i) in order.iter().enumerate() {
        if rank < high {
            out[i] = RiskStratum::High;
        } else if rank < high + medium {
            out[i] = RiskStratum::Medium;
        }
    }
    out
}
