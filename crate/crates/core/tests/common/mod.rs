//! Independent reference implementations used as test oracles.
//!
//! These are deliberately naive: every quantity is recomputed from its
//! definition by explicit enumeration, sharing no code with the library.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Survival instance as plain rows.
#[derive(Debug, Clone)]
pub struct Instance {
    pub x: Vec<Vec<f64>>,
    pub time: Vec<f64>,
    pub event: Vec<bool>,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn d(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn to_data(&self) -> concept_risk::survival::SurvivalData {
        let n = self.n();
        let d = self.d();
        let flat: Vec<f64> = self.x.iter().flatten().copied().collect();
        concept_risk::survival::SurvivalData::new(
            ndarray::Array2::from_shape_vec((n, d), flat).unwrap(),
            self.time.clone(),
            self.event.clone(),
            (0..d).map(|j| format!("f{j}")).collect(),
        )
        .unwrap()
    }
}

/// Random instance with integer times (so ties occur), Gaussian or binary
/// covariates and roughly `censor` censoring. Always has at least one event.
pub fn random_instance(r: &mut ChaCha8Rng, n: usize, d: usize, censor: f64) -> Instance {
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|j| if j % 3 == 2 { f64::from(u8::from(r.random::<f64>() < 0.4)) } else { r.random::<f64>() * 2.0 - 1.0 })
                .collect()
        })
        .collect();
    let time: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(1..=(n as u32 / 2).max(2)))).collect();
    let mut event: Vec<bool> = (0..n).map(|_| r.random::<f64>() >= censor).collect();
    if !event.iter().any(|e| *e) {
        event[0] = true;
    }
    Instance { x, time, event }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Efron negative log partial likelihood, gradient and Hessian, by
/// enumerating each distinct event time's risk set and tied events.
pub fn efron_brute(inst: &Instance, beta: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let n = inst.n();
    let d = inst.d();
    let r: Vec<f64> = inst.x.iter().map(|xi| dot(xi, beta).exp()).collect();
    let mut times: Vec<f64> = (0..n).filter(|&i| inst.event[i]).map(|i| inst.time[i]).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut value = 0.0;
    let mut grad = vec![0.0; d];
    let mut hess = vec![vec![0.0; d]; d];
    for &t in &times {
        let risk: Vec<usize> = (0..n).filter(|&i| inst.time[i] >= t).collect();
        let tied: Vec<usize> = (0..n).filter(|&i| inst.time[i] == t && inst.event[i]).collect();
        let m = tied.len() as f64;
        for &i in &tied {
            value -= dot(&inst.x[i], beta);
            for j in 0..d {
                grad[j] -= inst.x[i][j];
            }
        }
        for l in 0..tied.len() {
            let f = l as f64 / m;
            let w = |i: usize| -> f64 {
                let tied_i = inst.time[i] == t && inst.event[i];
                if tied_i { r[i] * (1.0 - f) } else { r[i] }
            };
            let s0: f64 = risk.iter().map(|&i| w(i)).sum();
            let s1: Vec<f64> = (0..d).map(|j| risk.iter().map(|&i| w(i) * inst.x[i][j]).sum()).collect();
            value += s0.ln();
            for j in 0..d {
                grad[j] += s1[j] / s0;
                for k in 0..d {
                    let s2: f64 = risk.iter().map(|&i| w(i) * inst.x[i][j] * inst.x[i][k]).sum();
                    hess[j][k] += s2 / s0 - s1[j] * s1[k] / (s0 * s0);
                }
            }
        }
    }
    (value, grad, hess)
}

/// Unpenalized Cox maximum likelihood by damped Newton iterations on the
/// brute-force derivatives, solved with nalgebra's Cholesky.
pub fn newton_cox(inst: &Instance) -> Vec<f64> {
    let d = inst.d();
    let mut beta = vec![0.0; d];
    for _ in 0..100 {
        let (v, g, h) = efron_brute(inst, &beta);
        let hm = DMatrix::from_fn(d, d, |i, j| h[i][j]);
        let gv = DVector::from_vec(g.clone());
        let step = hm.cholesky().expect("positive definite Hessian").solve(&gv);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b - t * s).collect();
            if efron_brute(inst, &cand).0 <= v + 1e-14 * v.abs() || t < 1e-8 {
                beta = cand;
                break;
            }
            t *= 0.5;
        }
        if g.iter().map(|x| x.abs()).fold(0.0, f64::max) < 1e-11 * inst.n() as f64 {
            break;
        }
    }
    beta
}

/// Harrell's C over unordered pairs: a pair counts when the shorter time is an
/// event and the times differ.
pub fn c_index_brute(time: &[f64], event: &[bool], risk: &[f64]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..time.len() {
        for j in (i + 1)..time.len() {
            let (a, b) = if time[i] < time[j] {
                (i, j)
            } else if time[j] < time[i] {
                (j, i)
            } else {
                continue;
            };
            if !event[a] {
                continue;
            }
            den += 1.0;
            num += if risk[a] > risk[b] {
                1.0
            } else if risk[a] == risk[b] {
                0.5
            } else {
                0.0
            };
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Product-limit estimate at `t` by direct definition.
pub fn km_brute(time: &[f64], event: &[bool], t: f64) -> f64 {
    let mut ts: Vec<f64> = time.iter().zip(event).filter(|(s, e)| **e && **s <= t).map(|(s, _)| *s).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts.iter()
        .map(|&s| {
            let at_risk = time.iter().filter(|&&u| u >= s).count() as f64;
            let deaths = time.iter().zip(event).filter(|(u, e)| **e && **u == s).count() as f64;
            1.0 - deaths / at_risk
        })
        .product()
}

/// Ridge-penalized logistic regression (intercept unpenalized) by plain
/// gradient descent run to a tight tolerance.
pub fn logistic_gd(x: &[Vec<f64>], y: &[bool], l2: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    let d = x[0].len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let lr = 0.5;
    for _ in 0..200_000 {
        let mut gw: Vec<f64> = w.iter().map(|wj| l2 * wj / n as f64).collect();
        let mut gb = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let p = 1.0 / (1.0 + (-(dot(xi, &w) + b)).exp());
            let r = p - f64::from(u8::from(yi));
            for j in 0..d {
                gw[j] += r * xi[j] / n as f64;
            }
            gb += r / n as f64;
        }
        for j in 0..d {
            w[j] -= lr * gw[j];
        }
        b -= lr * gb;
        if gw.iter().chain(std::iter::once(&gb)).all(|g| g.abs() < 1e-12) {
            break;
        }
    }
    (w, b)
}
