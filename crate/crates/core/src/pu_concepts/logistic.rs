use ndarray::{ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub n_iter: usize,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn objective(x: &ArrayView2<f64>, y: &[bool], w: &[f64], b: f64, l2: f64) -> f64 {
    let mut total = 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (row, &yi) in x.axis_iter(Axis(0)).zip(y) {
        let eta = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        total += softplus(eta) - if yi { eta } else { 0.0 };
    }
    total
}

/// L2-penalized logistic regression by Newton's method (IRLS) with a
/// backtracking line search. The intercept is not penalized. Objective:
/// `sum_i [log(1 + e^eta_i) - y_i eta_i] + l2/2 * |w|^2`.
///
/// Converged when the largest coefficient change falls below `tol`.
pub fn fit_logistic(x: ArrayView2<f64>, y: &[bool], l2_strength: f64, max_iter: usize, tol: f64) -> Result<LogisticFit> {
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(Error::invalid("label vector length differs from row count"));
    }
    if !(l2_strength >= 0.0) {
        return Err(Error::invalid("l2 strength must be nonnegative"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("design matrix contains missing or non-finite values"));
    }
    let positives = y.iter().filter(|v| **v).count();
    if positives == 0 || positives == n {
        return Err(Error::invalid("labels are constant"));
    }
    let base = positives as f64 / n as f64;
    let mut w = vec![0.0; p];
    let mut b = (base / (1.0 - base)).ln();
    let mut obj = objective(&x, y, &w, b, l2_strength);
    let dim = p + 1;
    let mut grad_norm = f64::INFINITY;

    for iter in 1..=max_iter {
        let mut grad = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        for (row, &yi) in x.axis_iter(Axis(0)).zip(y) {
            let eta = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let mu = sigmoid(eta);
            let r = mu - if yi { 1.0 } else { 0.0 };
            let v = mu * (1.0 - mu);
            for j in 0..p {
                let xj = row[j];
                if xj == 0.0 {
                    continue;
                }
                grad[j] += r * xj;
                let vx = v * xj;
                let hrow = &mut hess[j * dim..j * dim + dim];
                for (k, xk) in row.iter().enumerate().take(j + 1) {
                    hrow[k] += vx * xk;
                }
                hrow[p] += vx;
            }
            grad[p] += r;
            hess[p * dim + p] += v;
        }
        for j in 0..p {
            grad[j] += l2_strength * w[j];
            hess[j * dim + j] += l2_strength;
            for k in 0..j {
                hess[k * dim + j] = hess[j * dim + k];
            }
            hess[p * dim + j] = hess[j * dim + p];
        }
        grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();

        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let step = cholesky_solve(&hess, &neg, dim)
            .or_else(|| {
                let mut jittered = hess.clone();
                let scale = (0..dim).map(|i| hess[i * dim + i]).fold(1.0, f64::max);
                for i in 0..dim {
                    jittered[i * dim + i] += 1e-8 * scale;
                }
                cholesky_solve(&jittered, &neg, dim)
            })
            .ok_or(Error::NonFinite { context: "logistic Newton step" })?;

        let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let w_new: Vec<f64> = w.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let b_new = b + t * step[p];
            let o = objective(&x, y, &w_new, b_new, l2_strength);
            if o <= obj + 1e-4 * t * slope || (o - obj).abs() <= 1e-14 * obj.abs().max(1.0) {
                accepted = Some((w_new, b_new, o));
                break;
            }
            t *= 0.5;
        }
        let Some((w_new, b_new, o)) = accepted else {
            return Err(Error::NoConvergence { iterations: iter, gradient_norm: grad_norm });
        };
        let change = step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max);
        w = w_new;
        b = b_new;
        obj = o;
        if change < tol {
            return Ok(LogisticFit { weights: w, intercept: b, n_iter: iter });
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, gradient_norm: grad_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn intercept_only_when_features_are_zero() {
        let x = Array2::zeros((10, 2));
        let y: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let fit = fit_logistic(x.view(), &y, 1.0, 100, 1e-10).unwrap();
        assert!((fit.intercept - (0.3f64 / 0.7).ln()).abs() < 1e-9);
        assert!((fit.intercept + 0.847).abs() < 1e-3);
        assert!(fit.weights.iter().all(|w| w.abs() < 1e-12));
    }

    #[test]
    fn separated_data_stays_finite_with_penalty() {
        let x = Array2::from_shape_vec((6, 1), vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]).unwrap();
        let y = [false, false, false, true, true, true];
        let fit = fit_logistic(x.view(), &y, 1.0, 100, 1e-10).unwrap();
        assert!(fit.weights[0].is_finite() && fit.weights[0] > 0.0);
        let probs: Vec<f64> = x.column(0).iter().map(|v| sigmoid(fit.intercept + fit.weights[0] * v)).collect();
        assert!(probs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn separated_data_without_penalty_fails_to_converge() {
        let x = Array2::from_shape_vec((4, 1), vec![-2.0, -1.0, 1.0, 2.0]).unwrap();
        let y = [false, false, true, true];
        match fit_logistic(x.view(), &y, 0.0, 30, 1e-10) {
            Err(Error::NoConvergence { gradient_norm, .. }) => assert!(gradient_norm.is_finite()),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn constant_labels_rejected() {
        let x = Array2::zeros((3, 1));
        assert!(fit_logistic(x.view(), &[true, true, true], 1.0, 10, 1e-8).is_err());
    }
}
