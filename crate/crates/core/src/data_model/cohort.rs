use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Data type family of a feature column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Medication,
    Lab,
    Diagnosis,
    Vaccine,
    Symptom,
    Demographic,
    Location,
    DerivedConcept,
}

impl ColumnKind {
    pub const ALL: [ColumnKind; 8] = [
        ColumnKind::Medication,
        ColumnKind::Lab,
        ColumnKind::Diagnosis,
        ColumnKind::Vaccine,
        ColumnKind::Symptom,
        ColumnKind::Demographic,
        ColumnKind::Location,
        ColumnKind::DerivedConcept,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Medication => "medication",
            ColumnKind::Lab => "lab",
            ColumnKind::Diagnosis => "diagnosis",
            ColumnKind::Vaccine => "vaccine",
            ColumnKind::Symptom => "symptom",
            ColumnKind::Demographic => "demographic",
            ColumnKind::Location => "location",
            ColumnKind::DerivedConcept => "derived-concept",
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ColumnKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown column kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    pub dtype: Dtype,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_indicator_for: Option<String>,
}

impl ColumnMeta {
    pub fn new(name: impl Into<String>, kind: ColumnKind, dtype: Dtype) -> Self {
        ColumnMeta {
            name: name.into(),
            kind,
            dtype,
            missing_indicator_for: None,
        }
    }

    pub fn is_binary(&self) -> bool {
        self.dtype == Dtype::Binary
    }
}

/// String-valued feature column awaiting indicator expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalColumn {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<Option<String>>,
}

/// A patient cohort: outcomes plus a dense feature matrix.
///
/// Missing numeric cells are stored as `NaN`. Cohorts are immutable; every
/// transformation returns a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    patient_ids: Vec<String>,
    t0: Vec<NaiveDate>,
    time: Vec<f64>,
    event: Vec<bool>,
    features: Array2<f64>,
    columns: Vec<ColumnMeta>,
    categoricals: Vec<CategoricalColumn>,
}

impl Cohort {
    pub fn new(
        patient_ids: Vec<String>,
        t0: Vec<NaiveDate>,
        time: Vec<f64>,
        event: Vec<bool>,
        features: Array2<f64>,
        columns: Vec<ColumnMeta>,
    ) -> Result<Self> {
        Self::with_categoricals(patient_ids, t0, time, event, features, columns, Vec::new())
    }

    pub fn with_categoricals(
        patient_ids: Vec<String>,
        t0: Vec<NaiveDate>,
        time: Vec<f64>,
        event: Vec<bool>,
        features: Array2<f64>,
        columns: Vec<ColumnMeta>,
        categoricals: Vec<CategoricalColumn>,
    ) -> Result<Self> {
        let n = patient_ids.len();
        if t0.len() != n || time.len() != n || event.len() != n {
            return Err(Error::invalid(format!(
                "outcome vectors disagree on length: ids {n}, t0 {}, time {}, event {}",
                t0.len(),
                time.len(),
                event.len()
            )));
        }
        if features.nrows() != n || features.ncols() != columns.len() {
            return Err(Error::invalid(format!(
                "feature matrix is {}x{}, expected {n}x{}",
                features.nrows(),
                features.ncols(),
                columns.len()
            )));
        }
        if let Some((i, t)) = time.iter().enumerate().find(|(_, t)| !(**t >= 0.0) || !t.is_finite()) {
            return Err(Error::invalid(format!("patient {} has invalid time {t}", patient_ids[i])));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &patient_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate patient id `{id}`")));
            }
        }
        let mut names = HashSet::new();
        for name in columns.iter().map(|c| &c.name).chain(categoricals.iter().map(|c| &c.name)) {
            if !names.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate column name `{name}`")));
            }
        }
        for c in &categoricals {
            if c.values.len() != n {
                return Err(Error::invalid(format!("categorical column `{}` has wrong length", c.name)));
            }
        }
        for (j, meta) in columns.iter().enumerate() {
            let col = features.column(j);
            let ok = match (meta.dtype, meta.kind) {
                (Dtype::Binary, _) => col.iter().all(|v| v.is_nan() || *v == 0.0 || *v == 1.0),
                (_, ColumnKind::DerivedConcept) => col.iter().all(|v| v.is_nan() || (0.0..=1.0).contains(v)),
                _ => col.iter().all(|v| !v.is_infinite()),
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "column `{}` violates its {:?}/{} declaration",
                    meta.name, meta.dtype, meta.kind
                )));
            }
        }
        Ok(Cohort {
            patient_ids,
            t0,
            time,
            event,
            features,
            columns,
            categoricals,
        })
    }

    pub fn n_patients(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn t0(&self) -> &[NaiveDate] {
        &self.t0
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn categoricals(&self) -> &[CategoricalColumn] {
        &self.categoricals
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<ArrayView1<'_, f64>> {
        self.column_index(name).map(|j| self.features.column(j))
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|e| **e).count()
    }

    pub fn has_missing(&self) -> bool {
        self.features.iter().any(|v| v.is_nan())
    }

    /// Rows in the given order (indices may repeat only if ids stay unique, so
    /// callers pass distinct indices).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Cohort> {
        let pick = |v: &Vec<_>| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Cohort::with_categoricals(
            rows.iter().map(|&i| self.patient_ids[i].clone()).collect(),
            rows.iter().map(|&i| self.t0[i]).collect(),
            pick(&self.time),
            rows.iter().map(|&i| self.event[i]).collect(),
            self.features.select(Axis(0), rows),
            self.columns.clone(),
            self.categoricals
                .iter()
                .map(|c| CategoricalColumn {
                    name: c.name.clone(),
                    kind: c.kind,
                    values: rows.iter().map(|&i| c.values[i].clone()).collect(),
                })
                .collect(),
        )
    }

    /// Numeric columns at `cols`, in that order. Categorical columns are kept.
    pub fn select_columns(&self, cols: &[usize]) -> Cohort {
        Cohort {
            features: self.features.select(Axis(1), cols),
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            ..self.clone()
        }
    }

    /// Numeric columns by name; errors on any unknown name.
    pub fn select_named(&self, names: &[String]) -> Result<Cohort> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::invalid(format!("column `{n}` not present in cohort")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_columns(&idx))
    }

    /// Replaces the numeric block, keeping outcomes and categoricals.
    pub fn with_features(&self, features: Array2<f64>, columns: Vec<ColumnMeta>) -> Result<Cohort> {
        Cohort::with_categoricals(
            self.patient_ids.clone(),
            self.t0.clone(),
            self.time.clone(),
            self.event.clone(),
            features,
            columns,
            self.categoricals.clone(),
        )
    }

    /// Same rows with the categorical columns removed.
    pub fn without_categoricals(&self) -> Cohort {
        Cohort {
            categoricals: Vec::new(),
            ..self.clone()
        }
    }

    /// Appends numeric columns on the right.
    pub fn append_columns(&self, extra: Array2<f64>, metas: Vec<ColumnMeta>) -> Result<Cohort> {
        if extra.nrows() != self.n_patients() {
            return Err(Error::invalid("appended block has the wrong number of rows"));
        }
        let features = ndarray::concatenate(Axis(1), &[self.features.view(), extra.view()])
            .map_err(|e| Error::invalid(e.to_string()))?;
        let mut columns = self.columns.clone();
        columns.extend(metas);
        self.with_features(features, columns)
    }
}
