//! Preprocessing: indicator expansion, frequency capping, imputation,
//! normalization and the variance filter.
//!
//! Every step that learns statistics has a learned form (`*Stats`, `*Levels`)
//! so training statistics can be replayed on held-out cohorts without refitting.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::cohort::{Cohort, ColumnKind, ColumnMeta, Dtype};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_LEVELS: usize = 64;

fn prevalence(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    values.filter(|v| !v.is_nan() && *v != 0.0).count() as f64 / n as f64
}

/// Population variance over the non-missing entries.
pub fn population_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (sum, count) = values
        .clone()
        .filter(|v| !v.is_nan())
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        return 0.0;
    }
    let mean = sum / count as f64;
    values
        .filter(|v| !v.is_nan())
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / count as f64
}

fn capped_indices(
    cohort: &Cohort,
    k_default: usize,
    k_overrides: &BTreeMap<ColumnKind, usize>,
    protected: &BTreeSet<String>,
) -> Vec<usize> {
    let n = cohort.n_patients();
    let mut by_kind: BTreeMap<ColumnKind, Vec<(f64, &str, usize)>> = BTreeMap::new();
    let mut keep = vec![false; cohort.n_columns()];
    for (j, meta) in cohort.columns().iter().enumerate() {
        if !meta.is_binary() || protected.contains(&meta.name) {
            keep[j] = true;
            continue;
        }
        let p = prevalence(cohort.features().column(j).iter().copied(), n);
        by_kind.entry(meta.kind).or_default().push((p, &meta.name, j));
    }
    for (kind, mut cols) in by_kind {
        let k = k_overrides.get(&kind).copied().unwrap_or(k_default).max(1);
        cols.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        for (_, _, j) in cols.into_iter().take(k) {
            keep[j] = true;
        }
    }
    (0..keep.len()).filter(|&j| keep[j]).collect()
}

/// Keeps the `k` most prevalent binary columns of each kind. Continuous columns
/// pass through; ties at the cut break toward the lexicographically smaller name.
pub fn cap_features_by_frequency(
    cohort: &Cohort,
    k_default: usize,
    k_overrides: &BTreeMap<ColumnKind, usize>,
) -> Cohort {
    let idx = capped_indices(cohort, k_default, k_overrides, &BTreeSet::new());
    cohort.select_columns(&idx)
}

/// Observed levels of each categorical column.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoricalLevels {
    pub levels: BTreeMap<String, Vec<String>>,
}

impl CategoricalLevels {
    pub fn learn(cohort: &Cohort, max_levels: usize) -> Result<Self> {
        let mut levels = BTreeMap::new();
        for c in cohort.categoricals() {
            let set: BTreeSet<&str> = c.values.iter().flatten().map(String::as_str).collect();
            if set.len() > max_levels {
                return Err(Error::invalid(format!(
                    "categorical column `{}` has {} levels (limit {max_levels})",
                    c.name,
                    set.len()
                )));
            }
            levels.insert(c.name.clone(), set.into_iter().map(str::to_string).collect());
        }
        Ok(CategoricalLevels { levels })
    }

    /// One `<col>=<level>` indicator per learned level. Unseen levels and
    /// missing cells encode as all zeros.
    pub fn apply(&self, cohort: &Cohort) -> Result<Cohort> {
        let n = cohort.n_patients();
        let mut metas = Vec::new();
        let mut blocks: Vec<Vec<f64>> = Vec::new();
        for c in cohort.categoricals() {
            let levels = self
                .levels
                .get(&c.name)
                .ok_or_else(|| Error::invalid(format!("no learned levels for column `{}`", c.name)))?;
            for level in levels {
                metas.push(ColumnMeta::new(format!("{}={}", c.name, level), c.kind, Dtype::Binary));
                blocks.push(
                    c.values
                        .iter()
                        .map(|v| if v.as_deref() == Some(level.as_str()) { 1.0 } else { 0.0 })
                        .collect(),
                );
            }
        }
        let mut extra = Array2::zeros((n, blocks.len()));
        for (j, col) in blocks.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                extra[[i, j]] = *v;
            }
        }
        cohort.without_categoricals().append_columns(extra, metas)
    }
}

/// Replaces every categorical column by indicator columns (at most
/// [`DEFAULT_MAX_LEVELS`] levels per column).
pub fn expand_categoricals(cohort: &Cohort) -> Result<Cohort> {
    CategoricalLevels::learn(cohort, DEFAULT_MAX_LEVELS)?.apply(cohort)
}

/// Mean and population standard deviation of each continuous column.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
    /// Continuous columns with zero spread; left unscaled.
    pub flagged: Vec<String>,
}

/// Z-scores continuous columns. Without `stats` they are computed from this
/// cohort and returned; with `stats` they are applied verbatim.
pub fn normalize_continuous(cohort: &Cohort, stats: Option<&NormStats>) -> Result<(Cohort, NormStats)> {
    let stats = match stats {
        Some(s) => {
            for c in cohort.columns().iter().filter(|c| c.dtype == Dtype::Continuous) {
                if !s.mean.contains_key(&c.name) && !s.flagged.contains(&c.name) {
                    return Err(Error::invalid(format!("normalization stats lack column `{}`", c.name)));
                }
            }
            s.clone()
        }
        None => {
            let mut s = NormStats::default();
            for (j, c) in cohort.columns().iter().enumerate() {
                if c.dtype != Dtype::Continuous {
                    continue;
                }
                let col = cohort.features().column(j);
                let vals: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
                let mean = if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 };
                let std = population_variance(vals.iter().copied()).sqrt();
                if std > 0.0 {
                    s.mean.insert(c.name.clone(), mean);
                    s.std.insert(c.name.clone(), std);
                } else {
                    warn!("column `{}` has zero variance; left unscaled", c.name);
                    s.flagged.push(c.name.clone());
                }
            }
            s
        }
    };
    let mut f = cohort.features().clone();
    for (j, c) in cohort.columns().iter().enumerate() {
        if let (Some(m), Some(sd)) = (stats.mean.get(&c.name), stats.std.get(&c.name)) {
            f.column_mut(j).mapv_inplace(|v| (v - m) / sd);
        }
    }
    Ok((cohort.with_features(f, cohort.columns().to_vec())?, stats))
}

/// Indices of columns whose population variance reaches `threshold`.
fn variance_survivors(cohort: &Cohort, threshold: f64) -> Vec<usize> {
    (0..cohort.n_columns())
        .filter(|&j| population_variance(cohort.features().column(j).iter().copied()) >= threshold)
        .collect()
}

/// Drops columns with population variance below `threshold`, preserving order.
pub fn filter_low_variance(cohort: &Cohort, threshold: f64) -> Result<Cohort> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid("variance threshold must be nonnegative"));
    }
    let keep = variance_survivors(cohort, threshold);
    if keep.is_empty() {
        return Err(Error::invalid(format!("every column has variance below {threshold}")));
    }
    Ok(cohort.select_columns(&keep))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImputePolicy {
    /// Continuous: median plus a `<col>__missing` indicator. Binary: missing is 0.
    #[default]
    MedianWithIndicator,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputeStats {
    pub medians: BTreeMap<String, f64>,
    /// Continuous columns that receive a missingness indicator.
    pub indicators: Vec<String>,
    /// Entirely missing columns, removed.
    pub dropped: Vec<String>,
}

fn median(mut vals: Vec<f64>) -> f64 {
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    }
}

/// Fills missing cells. Without `stats`, medians and the indicator set are
/// learned from this cohort. Returns warnings for dropped columns.
pub fn impute_missing(
    cohort: &Cohort,
    _policy: ImputePolicy,
    stats: Option<&ImputeStats>,
) -> Result<(Cohort, ImputeStats, Vec<String>)> {
    let mut warnings = Vec::new();
    let stats = match stats {
        Some(s) => s.clone(),
        None => {
            let mut s = ImputeStats::default();
            for (j, c) in cohort.columns().iter().enumerate() {
                let col = cohort.features().column(j);
                let observed: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
                if observed.is_empty() && cohort.n_patients() > 0 {
                    s.dropped.push(c.name.clone());
                    continue;
                }
                if c.dtype == Dtype::Continuous {
                    let missing = observed.len() < col.len();
                    s.medians.insert(c.name.clone(), median(observed));
                    if missing {
                        s.indicators.push(c.name.clone());
                    }
                }
            }
            s
        }
    };
    for name in &stats.dropped {
        let msg = format!("column `{name}` is entirely missing; dropped");
        warn!("{msg}");
        warnings.push(msg);
    }

    let n = cohort.n_patients();
    let kept: Vec<usize> = (0..cohort.n_columns())
        .filter(|&j| !stats.dropped.contains(&cohort.columns()[j].name))
        .collect();
    let mut metas: Vec<ColumnMeta> = kept.iter().map(|&j| cohort.columns()[j].clone()).collect();
    let n_ind = stats.indicators.len();
    let mut f = Array2::zeros((n, kept.len() + n_ind));
    for (out, &j) in kept.iter().enumerate() {
        let meta = &cohort.columns()[j];
        let fill = match meta.dtype {
            Dtype::Binary => 0.0,
            Dtype::Continuous => *stats.medians.get(&meta.name).ok_or_else(|| {
                Error::invalid(format!("imputation stats lack column `{}`", meta.name))
            })?,
        };
        for i in 0..n {
            let v = cohort.features()[[i, j]];
            f[[i, out]] = if v.is_nan() { fill } else { v };
        }
    }
    for (k, name) in stats.indicators.iter().enumerate() {
        let j = cohort
            .column_index(name)
            .ok_or_else(|| Error::invalid(format!("column `{name}` missing from cohort")))?;
        let meta = &cohort.columns()[j];
        let out = kept.len() + k;
        for i in 0..n {
            f[[i, out]] = if cohort.features()[[i, j]].is_nan() { 1.0 } else { 0.0 };
        }
        metas.push(ColumnMeta {
            name: format!("{name}__missing"),
            kind: meta.kind,
            dtype: Dtype::Binary,
            missing_indicator_for: Some(name.clone()),
        });
    }
    Ok((cohort.with_features(f, metas)?, stats, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub k_default: usize,
    pub k_overrides: BTreeMap<ColumnKind, usize>,
    pub variance_threshold: f64,
    pub max_levels: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            k_default: 20,
            k_overrides: [(ColumnKind::Lab, 50)].into_iter().collect(),
            variance_threshold: 0.01,
            max_levels: DEFAULT_MAX_LEVELS,
        }
    }
}

/// The full preprocessing chain with training statistics frozen:
/// expand categoricals, cap by frequency, impute, normalize, filter variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub levels: CategoricalLevels,
    pub capped_columns: Vec<String>,
    pub impute: ImputeStats,
    pub norm: NormStats,
    pub final_columns: Vec<String>,
}

impl Preprocessor {
    /// Learns every statistic from `train` and returns the transformed training
    /// cohort. Columns in `protected` are exempt from frequency capping.
    pub fn fit(
        train: &Cohort,
        config: &PreprocessConfig,
        protected: &BTreeSet<String>,
    ) -> Result<(Preprocessor, Cohort, Vec<String>)> {
        let levels = CategoricalLevels::learn(train, config.max_levels)?;
        let expanded = levels.apply(train)?;
        let idx = capped_indices(&expanded, config.k_default, &config.k_overrides, protected);
        let capped = expanded.select_columns(&idx);
        let capped_columns = capped.column_names().into_iter().map(String::from).collect();
        let (imputed, impute, warnings) = impute_missing(&capped, ImputePolicy::MedianWithIndicator, None)?;
        let (normed, norm) = normalize_continuous(&imputed, None)?;
        let filtered = filter_low_variance(&normed, config.variance_threshold)?;
        let final_columns = filtered.column_names().into_iter().map(String::from).collect();
        Ok((
            Preprocessor {
                levels,
                capped_columns,
                impute,
                norm,
                final_columns,
            },
            filtered,
            warnings,
        ))
    }

    pub fn apply(&self, cohort: &Cohort) -> Result<Cohort> {
        let expanded = self.levels.apply(cohort)?;
        let capped = expanded.select_named(&self.capped_columns)?;
        let (imputed, _, _) = impute_missing(&capped, ImputePolicy::MedianWithIndicator, Some(&self.impute))?;
        let (normed, _) = normalize_continuous(&imputed, Some(&self.norm))?;
        normed.select_named(&self.final_columns)
    }
}
