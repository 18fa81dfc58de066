use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
    /// Replicates on which the metric was defined.
    pub n_valid: usize,
    pub n_dropped: usize,
}

/// Linear-interpolation percentile of sorted values, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Resample indices `0..n` with replacement `b` times and summarize `metric`
/// by its 2.5/50/97.5 percentiles. `None` from the metric drops the replicate.
/// Replicate `r` draws from stream `r` under `seed`.
pub fn bootstrap_ci<F>(n: usize, b: usize, seed: u64, metric: F) -> Result<BootstrapCi>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    if b == 0 || n == 0 {
        return Err(Error::invalid("bootstrap needs at least one row and one replicate"));
    }
    let values: Vec<Option<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            metric(&idx).filter(|v| v.is_finite())
        })
        .collect();
    let mut valid: Vec<f64> = values.into_iter().flatten().collect();
    if valid.is_empty() {
        return Err(Error::invalid("metric undefined on every bootstrap replicate"));
    }
    valid.sort_by(f64::total_cmp);
    Ok(BootstrapCi {
        median: percentile(&valid, 0.5),
        lo: percentile(&valid, 0.025),
        hi: percentile(&valid, 0.975),
        n_valid: valid.len(),
        n_dropped: b - valid.len(),
    })
}
