use serde::{Deserialize, Serialize};

use super::data::SurvivalData;
use super::likelihood::CoxProblem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub feature_names: Vec<String>,
    pub converged: bool,
    /// Coordinate-descent sweeps performed.
    pub n_iter: usize,
    /// Penalized objective `-loglik/n + lambda |beta|_1` at `beta`.
    pub objective: f64,
}

impl CoxFit {
    pub fn nnz(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }

    pub fn hazard_ratios(&self) -> Vec<f64> {
        self.beta.iter().map(|b| b.exp()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxOptions {
    /// Maximum coordinate-descent sweeps.
    pub max_iter: usize,
    /// Convergence threshold on the largest coefficient change in a sweep.
    pub tol: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            max_iter: 10_000,
            tol: 1e-7,
        }
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Smallest penalty at which the all-zero solution is optimal:
/// `max_j |d(-loglik/n)/d beta_j|` at `beta = 0`.
pub fn lambda_max(data: &SurvivalData) -> Result<f64> {
    let problem = CoxProblem::new(data);
    let (_, grad) = problem.value_and_gradient(&vec![0.0; problem.d()])?;
    Ok(grad.iter().map(|g| g.abs()).fold(0.0, f64::max) / problem.n() as f64)
}

struct Solver<'a> {
    problem: &'a CoxProblem,
    lambda: f64,
    beta: Vec<f64>,
    eta: Vec<f64>,
    /// `exp(eta - shift)`, updated multiplicatively between refreshes.
    w: Vec<f64>,
    loss: f64,
    /// Weight increments of the step under trial.
    u: Vec<f64>,
    event_sums: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(problem: &'a CoxProblem, lambda: f64, beta: Vec<f64>) -> Result<Self> {
        let n = problem.n();
        let mut s = Solver {
            problem,
            lambda,
            eta: problem.linear_predictor(&beta),
            beta,
            w: vec![0.0; n],
            loss: 0.0,
            u: vec![0.0; n],
            event_sums: (0..problem.d()).map(|j| problem.event_sum(j)).collect(),
        };
        s.refresh()?;
        Ok(s)
    }

    /// Recomputes weights and loss from `eta` to shed accumulated rounding.
    fn refresh(&mut self) -> Result<()> {
        self.loss = self.problem.loss_with_weights(&self.eta, &mut self.w)?;
        Ok(())
    }

    fn n(&self) -> f64 {
        self.problem.n() as f64
    }

    fn objective(&self) -> f64 {
        self.loss / self.n() + self.lambda * self.beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Loss change from moving coordinate `j` by `delta`; fills `u`.
    fn trial(&mut self, j: usize, delta: f64) -> f64 {
        let col = self.problem.column(j);
        if self.problem.is_binary(j) {
            let up = delta.exp_m1();
            for ((u, w), &x) in self.u.iter_mut().zip(&self.w).zip(col) {
                *u = if x == 1.0 { w * up } else { 0.0 };
            }
        } else {
            for ((u, w), &x) in self.u.iter_mut().zip(&self.w).zip(col) {
                *u = w * (delta * x).exp_m1();
            }
        }
        self.problem.loss_change(&self.w, &self.u) - delta * self.event_sums[j]
    }

    /// Soft-thresholded Newton target change for coordinate `j`.
    fn newton_delta(&self, j: usize) -> f64 {
        let n = self.n();
        let (g, h) = self.problem.coordinate_derivatives(j, &self.w);
        let (g, h) = (g / n, h / n);
        if !(h > 1e-14) {
            return 0.0;
        }
        let old = self.beta[j];
        soft_threshold(old - g / h, self.lambda / h) - old
    }

    /// Moves coordinate `j` by `delta`, updating `eta` and the weights but not
    /// the loss.
    fn apply(&mut self, j: usize, delta: f64) -> Result<()> {
        self.beta[j] += delta;
        let col = self.problem.column(j);
        let mut wmax: f64 = 0.0;
        if self.problem.is_binary(j) {
            let factor = delta.exp();
            for ((e, w), &x) in self.eta.iter_mut().zip(&mut self.w).zip(col) {
                if x == 1.0 {
                    *e += delta;
                    *w *= factor;
                }
                wmax = wmax.max(*w);
            }
        } else {
            for ((e, w), &x) in self.eta.iter_mut().zip(&mut self.w).zip(col) {
                *e += delta * x;
                *w *= (delta * x).exp();
                wmax = wmax.max(*w);
            }
        }
        if !(1e-100..1e100).contains(&wmax) {
            self.refresh()?;
        }
        Ok(())
    }

    /// One prox-Newton step on coordinate `j`, backtracked until the penalized
    /// objective does not increase; returns the absolute change.
    fn update(&mut self, j: usize) -> Result<f64> {
        let n = self.n();
        let old = self.beta[j];
        let mut delta = self.newton_delta(j);
        if delta == 0.0 {
            return Ok(0.0);
        }
        for _ in 0..40 {
            let dloss = self.trial(j, delta);
            if !dloss.is_finite() {
                return Err(Error::NonFinite { context: "Cox partial likelihood" });
            }
            let change = dloss / n + self.lambda * ((old + delta).abs() - old.abs());
            if change <= 0.0 {
                self.beta[j] = old + delta;
                self.loss += dloss;
                let col = self.problem.column(j);
                let mut wmax: f64 = 0.0;
                for (((e, w), u), &x) in self.eta.iter_mut().zip(&mut self.w).zip(&self.u).zip(col) {
                    *e += delta * x;
                    *w += u;
                    wmax = wmax.max(*w);
                }
                if !(1e-100..1e100).contains(&wmax) {
                    self.refresh()?;
                }
                return Ok(delta.abs());
            }
            delta *= 0.5;
        }
        Ok(0.0)
    }

    /// Full Newton steps on `coords`, checked once at the end. A sweep that
    /// raises the objective beyond rounding is undone and repeated with
    /// per-coordinate backtracking.
    fn sweep(&mut self, coords: &[usize]) -> Result<f64> {
        let before = self.objective();
        let (beta, eta) = (self.beta.clone(), self.eta.clone());
        let mut max_change: f64 = 0.0;
        for &j in coords {
            let delta = self.newton_delta(j);
            if delta != 0.0 {
                self.apply(j, delta)?;
                max_change = max_change.max(delta.abs());
            }
        }
        let ok = match self.refresh() {
            Ok(()) => self.objective() <= before + 1e-13 * before.abs().max(1.0),
            Err(Error::NonFinite { .. }) => false,
            Err(e) => return Err(e),
        };
        if ok {
            return Ok(max_change);
        }
        self.beta = beta;
        self.eta = eta;
        self.refresh()?;
        max_change = 0.0;
        for &j in coords {
            max_change = max_change.max(self.update(j)?);
        }
        self.refresh()?;
        Ok(max_change)
    }
}

impl CoxProblem {
    /// Minimizes `-loglik/n + lambda |beta|_1`, optionally recording the
    /// objective after every sweep.
    pub fn fit(
        &self,
        lambda: f64,
        warm_start: Option<&[f64]>,
        opts: &CoxOptions,
        feature_names: &[String],
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<CoxFit> {
        if !(lambda >= 0.0) {
            return Err(Error::invalid("lambda must be nonnegative"));
        }
        let d = self.d();
        let start = match warm_start {
            Some(b) if b.len() == d => b.to_vec(),
            Some(b) => return Err(Error::invalid(format!("warm start has {} entries, expected {d}", b.len()))),
            None => vec![0.0; d],
        };
        let mut solver = Solver::new(self, lambda, start)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(solver.objective());
        }
        let all: Vec<usize> = (0..d).collect();
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < opts.max_iter {
            let change = solver.sweep(&all)?;
            sweeps += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(solver.objective());
            }
            if change < opts.tol {
                converged = true;
                break;
            }
            // iterate on the active set until it settles, then re-check everything
            while sweeps < opts.max_iter {
                let active: Vec<usize> = (0..d).filter(|&j| solver.beta[j] != 0.0).collect();
                let change = solver.sweep(&active)?;
                sweeps += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(solver.objective());
                }
                if change < opts.tol {
                    break;
                }
            }
        }
        Ok(CoxFit {
            objective: solver.objective(),
            beta: solver.beta,
            lambda,
            feature_names: feature_names.to_vec(),
            converged,
            n_iter: sweeps,
        })
    }
}

/// Lasso-Cox fit at a single penalty. Non-convergence is reported through
/// `CoxFit::converged`, not as an error.
pub fn fit_lasso_cox(data: &SurvivalData, lambda: f64, warm_start: Option<&[f64]>, opts: &CoxOptions) -> Result<CoxFit> {
    CoxProblem::new(data).fit(lambda, warm_start, opts, data.feature_names(), None)
}

/// As [`fit_lasso_cox`], also returning the penalized objective after each sweep
/// (first entry: the starting point).
pub fn fit_lasso_cox_traced(
    data: &SurvivalData,
    lambda: f64,
    warm_start: Option<&[f64]>,
    opts: &CoxOptions,
) -> Result<(CoxFit, Vec<f64>)> {
    let mut trace = Vec::new();
    let fit = CoxProblem::new(data).fit(lambda, warm_start, opts, data.feature_names(), Some(&mut trace))?;
    Ok((fit, trace))
}
