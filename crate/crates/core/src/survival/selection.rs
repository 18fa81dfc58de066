use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::SurvivalData;
use super::lasso::{CoxFit, CoxOptions};
use super::likelihood::CoxProblem;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    /// Ascending penalties.
    pub grid: Vec<f64>,
    pub fits: Vec<CoxFit>,
    pub nnz: Vec<usize>,
}

/// `{0, 0.001, ..., 0.200}`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=200).map(|i| i as f64 / 1000.0).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("lambda grid is empty"));
    }
    if grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::invalid("lambda grid has negative or NaN entries"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("lambda grid must be ascending"));
    }
    Ok(())
}

fn path_on(problem: &CoxProblem, names: &[String], grid: &[f64], opts: &CoxOptions) -> Result<Vec<CoxFit>> {
    let mut fits = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<f64>> = None;
    for &lambda in grid.iter().rev() {
        let fit = problem
            .fit(lambda, warm.as_deref(), opts, names, None)
            .map_err(|e| Error::AtLambda {
                lambda,
                source: Box::new(e),
            })?;
        warm = Some(fit.beta.clone());
        fits.push(fit);
    }
    fits.reverse();
    Ok(fits)
}

/// Fits every grid penalty, from the largest down, each warm-started from the
/// previous solution.
pub fn lambda_path(data: &SurvivalData, grid: &[f64], opts: &CoxOptions) -> Result<LambdaPath> {
    check_grid(grid)?;
    let fits = path_on(&CoxProblem::new(data), data.feature_names(), grid, opts)?;
    Ok(LambdaPath {
        grid: grid.to_vec(),
        nnz: fits.iter().map(CoxFit::nnz).collect(),
        fits,
    })
}

/// Index of the λ minimizing |nnz - target|; ties go to the larger λ.
pub fn select_lambda_sparsity(path: &LambdaPath, target_nnz: usize) -> f64 {
    let mut best = 0;
    for (i, &k) in path.nnz.iter().enumerate() {
        if k.abs_diff(target_nnz) <= path.nnz[best].abs_diff(target_nnz) {
            best = i;
        }
    }
    path.grid[best]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    pub lambda: f64,
    /// Mean held-out log partial likelihood per grid λ.
    pub mean_loglik: Vec<f64>,
    /// Fold id of every row.
    pub folds: Vec<usize>,
}

fn draw_folds(n: usize, k: usize, seed: u64, attempt: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, attempt));
    let mut folds = vec![0; n];
    for (rank, &i) in perm.iter().enumerate() {
        folds[i] = rank % k;
    }
    folds
}

fn folds_have_events(folds: &[usize], event: &[bool], k: usize) -> bool {
    let mut seen = vec![false; k];
    for (&f, &e) in folds.iter().zip(event) {
        seen[f] |= e;
    }
    seen.iter().all(|s| *s)
}

/// K-fold cross-validation maximizing the mean held-out log partial
/// likelihood; ties go to the larger λ. Folds are redrawn once if any lacks an
/// event.
pub fn select_lambda_cv(
    data: &SurvivalData,
    grid: &[f64],
    k: usize,
    seed: u64,
    opts: &CoxOptions,
) -> Result<CvSelection> {
    check_grid(grid)?;
    if k < 2 || k > data.n() {
        return Err(Error::invalid(format!("cannot make {k} folds from {} rows", data.n())));
    }
    let mut folds = draw_folds(data.n(), k, seed, 0);
    if !folds_have_events(&folds, data.event(), k) {
        folds = draw_folds(data.n(), k, seed, 1);
        if !folds_have_events(&folds, data.event(), k) {
            return Err(Error::invalid(format!("a cross-validation fold has no events after redrawing ({k} folds)")));
        }
    }
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..data.n()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..data.n()).filter(|&i| folds[i] == f).collect();
            let train = data.subset(&train)?;
            let test = CoxProblem::new(&data.subset(&test)?);
            let fits = path_on(&CoxProblem::new(&train), train.feature_names(), grid, opts)?;
            fits.iter().map(|fit| test.log_likelihood(&fit.beta)).collect()
        })
        .collect::<Result<_>>()?;
    let mean_loglik: Vec<f64> = (0..grid.len())
        .map(|g| per_fold.iter().map(|f| f[g]).sum::<f64>() / k as f64)
        .collect();
    let mut best = 0;
    for (i, &v) in mean_loglik.iter().enumerate() {
        if v >= mean_loglik[best] {
            best = i;
        }
    }
    Ok(CvSelection {
        lambda: grid[best],
        mean_loglik,
        folds,
    })
}
