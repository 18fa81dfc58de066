use super::data::SurvivalData;
use crate::error::{Error, Result};

/// Rows sharing one distinct time, as a range of the time-descending order.
#[derive(Debug, Clone, Copy)]
struct TimeGroup {
    start: usize,
    end: usize,
    ev_start: usize,
    ev_end: usize,
}

/// Survival data laid out for risk-set sweeps: rows sorted by descending time
/// so every risk set is a prefix, with columns stored contiguously.
#[derive(Debug, Clone)]
pub struct CoxProblem {
    n: usize,
    d: usize,
    /// Original row index of each sorted position.
    order: Vec<usize>,
    groups: Vec<TimeGroup>,
    /// Sorted positions of events, grouped by `TimeGroup::ev_*`.
    event_pos: Vec<usize>,
    cols: Vec<Vec<f64>>,
    binary: Vec<bool>,
    times: Vec<f64>,
}

impl CoxProblem {
    pub fn new(data: &SurvivalData) -> Self {
        let n = data.n();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| data.time()[b].total_cmp(&data.time()[a]).then(a.cmp(&b)));
        let times: Vec<f64> = order.iter().map(|&i| data.time()[i]).collect();
        let mut groups = Vec::new();
        let mut event_pos = Vec::new();
        let mut p = 0;
        while p < n {
            let t = times[p];
            let start = p;
            let ev_start = event_pos.len();
            while p < n && times[p] == t {
                if data.event()[order[p]] {
                    event_pos.push(p);
                }
                p += 1;
            }
            groups.push(TimeGroup {
                start,
                end: p,
                ev_start,
                ev_end: event_pos.len(),
            });
        }
        let cols: Vec<Vec<f64>> = (0..data.d())
            .map(|j| order.iter().map(|&i| data.x()[[i, j]]).collect())
            .collect();
        let binary = cols.iter().map(|c| c.iter().all(|&v| v == 0.0 || v == 1.0)).collect();
        CoxProblem {
            n,
            d: data.d(),
            order,
            groups,
            event_pos,
            cols,
            binary,
            times,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Linear predictor in sorted order.
    pub(crate) fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        let mut eta = vec![0.0; self.n];
        for (col, &b) in self.cols.iter().zip(beta) {
            if b != 0.0 {
                for (e, x) in eta.iter_mut().zip(col) {
                    *e += b * x;
                }
            }
        }
        eta
    }

    pub(crate) fn column(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    /// Negative Efron log partial likelihood at `eta`; fills `w` with
    /// `exp(eta - max(eta))`.
    pub(crate) fn loss_with_weights(&self, eta: &[f64], w: &mut [f64]) -> Result<f64> {
        let m = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (wi, e) in w.iter_mut().zip(eta) {
            *wi = (e - m).exp();
        }
        self.loss_given_weights(eta, w, m)
    }

    /// As [`Self::loss_with_weights`] for weights already equal to
    /// `exp(eta - m)`.
    pub(crate) fn loss_given_weights(&self, eta: &[f64], w: &[f64], m: f64) -> Result<f64> {
        let mut s0 = 0.0;
        let mut loss = 0.0;
        for g in &self.groups {
            s0 += w[g.start..g.end].iter().sum::<f64>();
            let d = g.ev_end - g.ev_start;
            if d == 0 {
                continue;
            }
            let evs = &self.event_pos[g.ev_start..g.ev_end];
            if d == 1 {
                loss += s0.ln() - (eta[evs[0]] - m);
                continue;
            }
            let s0d: f64 = evs.iter().map(|&p| w[p]).sum();
            loss -= evs.iter().map(|&p| eta[p] - m).sum::<f64>();
            for l in 0..d {
                let f = l as f64 / d as f64;
                loss += (s0 - f * s0d).ln();
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite { context: "Cox partial likelihood" });
        }
        Ok(loss)
    }

    /// Change in the negative log partial likelihood when `exp(eta)` grows by
    /// `u` (in units of the current weights `w`), excluding the linear event
    /// term. Computed with `ln_1p` so tiny steps keep full relative accuracy.
    pub(crate) fn loss_change(&self, w: &[f64], u: &[f64]) -> f64 {
        let (mut s0, mut du) = (0.0, 0.0);
        let mut change = 0.0;
        for g in &self.groups {
            for p in g.start..g.end {
                s0 += w[p];
                du += u[p];
            }
            let nev = g.ev_end - g.ev_start;
            if nev == 0 {
                continue;
            }
            if nev == 1 {
                change += (du / s0).ln_1p();
                continue;
            }
            let evs = &self.event_pos[g.ev_start..g.ev_end];
            let s0d: f64 = evs.iter().map(|&p| w[p]).sum();
            let dud: f64 = evs.iter().map(|&p| u[p]).sum();
            for l in 0..nev {
                let f = l as f64 / nev as f64;
                change += ((du - f * dud) / (s0 - f * s0d)).ln_1p();
            }
        }
        change
    }

    /// Sum of column `j` over event rows.
    pub(crate) fn event_sum(&self, j: usize) -> f64 {
        self.event_pos.iter().map(|&p| self.cols[j][p]).sum()
    }

    /// Whether column `j` only holds 0 and 1.
    pub(crate) fn is_binary(&self, j: usize) -> bool {
        self.binary[j]
    }

    pub(crate) fn loss(&self, eta: &[f64]) -> Result<f64> {
        let mut w = vec![0.0; self.n];
        self.loss_with_weights(eta, &mut w)
    }

    /// Full gradient of the negative log partial likelihood given weights
    /// `w ∝ exp(eta)`.
    pub(crate) fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut grad = vec![0.0; d];
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; d];
        let mut s1d = vec![0.0; d];
        for g in &self.groups {
            for p in g.start..g.end {
                s0 += w[p];
                for j in 0..d {
                    s1[j] += w[p] * self.cols[j][p];
                }
            }
            let nev = g.ev_end - g.ev_start;
            if nev == 0 {
                continue;
            }
            let evs = &self.event_pos[g.ev_start..g.ev_end];
            let s0d: f64 = evs.iter().map(|&p| w[p]).sum();
            for j in 0..d {
                let col = &self.cols[j];
                s1d[j] = evs.iter().map(|&p| w[p] * col[p]).sum();
                grad[j] -= evs.iter().map(|&p| col[p]).sum::<f64>();
            }
            for l in 0..nev {
                let f = l as f64 / nev as f64;
                let den = s0 - f * s0d;
                for j in 0..d {
                    grad[j] += (s1[j] - f * s1d[j]) / den;
                }
            }
        }
        grad
    }

    /// First and second derivative of the negative log partial likelihood
    /// along coordinate `j`.
    pub(crate) fn coordinate_derivatives(&self, j: usize, w: &[f64]) -> (f64, f64) {
        let col = &self.cols[j];
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let (mut g, mut h) = (0.0, 0.0);
        for grp in &self.groups {
            for p in grp.start..grp.end {
                let wx = w[p] * col[p];
                s0 += w[p];
                s1 += wx;
                s2 += wx * col[p];
            }
            let nev = grp.ev_end - grp.ev_start;
            if nev == 0 {
                continue;
            }
            if nev == 1 {
                let mean = s1 / s0;
                g += mean - col[self.event_pos[grp.ev_start]];
                h += s2 / s0 - mean * mean;
                continue;
            }
            let (mut s0d, mut s1d, mut s2d) = (0.0, 0.0, 0.0);
            for &p in &self.event_pos[grp.ev_start..grp.ev_end] {
                let wx = w[p] * col[p];
                s0d += w[p];
                s1d += wx;
                s2d += wx * col[p];
                g -= col[p];
            }
            for l in 0..nev {
                let f = l as f64 / nev as f64;
                let den = s0 - f * s0d;
                let mean = (s1 - f * s1d) / den;
                g += mean;
                h += (s2 - f * s2d) / den - mean * mean;
            }
        }
        (g, h.max(0.0))
    }

    /// Distinct event times (ascending) and Breslow increments
    /// `d_t / sum_{risk set} exp(eta)`.
    pub(crate) fn breslow_increments(&self, eta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut times = Vec::new();
        let mut inc = Vec::new();
        for g in &self.groups {
            s0 += eta[g.start..g.end].iter().map(|e| (e - m).exp()).sum::<f64>();
            let nev = g.ev_end - g.ev_start;
            if nev > 0 {
                times.push(self.times[g.start]);
                inc.push(nev as f64 / s0 * (-m).exp());
            }
        }
        times.reverse();
        inc.reverse();
        (times, inc)
    }

    /// Sorted position -> original row.
    #[allow(dead_code)]
    pub(crate) fn order(&self) -> &[usize] {
        &self.order
    }

    /// Negative log partial likelihood and its gradient at `beta`.
    pub fn value_and_gradient(&self, beta: &[f64]) -> Result<(f64, Vec<f64>)> {
        if beta.len() != self.d {
            return Err(Error::invalid(format!("beta has {} entries, data has {} features", beta.len(), self.d)));
        }
        let eta = self.linear_predictor(beta);
        let mut w = vec![0.0; self.n];
        let value = self.loss_with_weights(&eta, &mut w)?;
        let grad = self.gradient(&w);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { context: "Cox gradient" });
        }
        Ok((value, grad))
    }

    /// Log partial likelihood (not negated) at `beta`.
    pub fn log_likelihood(&self, beta: &[f64]) -> Result<f64> {
        let eta = self.linear_predictor(beta);
        Ok(-self.loss(&eta)?)
    }
}

/// Negative Efron log partial likelihood and its exact gradient.
pub fn cox_neg_partial_loglik(beta: &[f64], data: &SurvivalData) -> Result<(f64, Vec<f64>)> {
    CoxProblem::new(data).value_and_gradient(beta)
}
