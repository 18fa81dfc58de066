//! Cohort CSV format.
//!
//! Header: `patient_id,t0,time,event` followed by feature columns named
//! `f:<kind>:<name>`. Empty cells are missing. An optional JSON sidecar keyed
//! by column name overrides the inferred metadata.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::cohort::{CategoricalColumn, Cohort, ColumnKind, ColumnMeta, Dtype};
use crate::error::{Error, Result};

const REQUIRED: [&str; 4] = ["patient_id", "t0", "time", "event"];

/// Per-column metadata override read from the sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ColumnKind>,
    /// `binary`, `continuous` or `categorical`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtype: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_indicator_for: Option<String>,
}

/// Expected column metadata, keyed by column name (without the `f:<kind>:` prefix).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    pub overrides: BTreeMap<String, ColumnOverride>,
}

impl Schema {
    pub fn from_sidecar(path: impl AsRef<Path>) -> Result<Schema> {
        let file = File::open(path.as_ref())?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_cohort(path: impl AsRef<Path>, schema: &Schema) -> Result<Cohort> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)?;
    let header = reader.headers()?.clone();

    let mut required = [usize::MAX; 4];
    let mut feature_cols: Vec<(usize, String, ColumnKind)> = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if let Some(r) = REQUIRED.iter().position(|x| *x == h) {
            required[r] = i;
        } else if let Some(rest) = h.strip_prefix("f:") {
            let (kind, name) = rest
                .split_once(':')
                .ok_or_else(|| parse_err(path, 1, format!("feature column `{h}` is not `f:<kind>:<name>`")))?;
            let kind: ColumnKind = kind
                .parse()
                .map_err(|_| parse_err(path, 1, format!("unknown kind tag `{kind}` in column `{h}`")))?;
            if name.is_empty() {
                return Err(parse_err(path, 1, format!("feature column `{h}` has an empty name")));
            }
            feature_cols.push((i, name.to_string(), kind));
        } else {
            return Err(parse_err(path, 1, format!("unexpected column `{h}`")));
        }
    }
    if let Some(r) = required.iter().position(|&i| i == usize::MAX) {
        return Err(parse_err(path, 1, format!("missing required column `{}`", REQUIRED[r])));
    }

    let mut ids = Vec::new();
    let mut t0 = Vec::new();
    let mut time = Vec::new();
    let mut event = Vec::new();
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); feature_cols.len()];
    let mut lines = Vec::new();
    let mut seen = std::collections::HashSet::new();

    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(row + 2);
        let at = |msg: String| parse_err(path, line, format!("data row {}: {msg}", row + 1));
        if record.len() != header.len() {
            return Err(at(format!("expected {} fields, found {}", header.len(), record.len())));
        }
        let id = record[required[0]].to_string();
        if id.is_empty() {
            return Err(at("empty patient_id".into()));
        }
        if !seen.insert(id.clone()) {
            return Err(at(format!("duplicate patient id `{id}`")));
        }
        let date = NaiveDate::parse_from_str(&record[required[1]], "%Y-%m-%d")
            .map_err(|e| at(format!("bad t0 `{}`: {e}", &record[required[1]])))?;
        let t: f64 = record[required[2]]
            .trim()
            .parse()
            .map_err(|_| at(format!("bad time `{}`", &record[required[2]])))?;
        if !t.is_finite() || t < 0.0 {
            return Err(at(format!("negative or non-finite time {t}")));
        }
        let e = match record[required[3]].trim() {
            "0" => false,
            "1" => true,
            other => return Err(at(format!("event must be 0 or 1, found `{other}`"))),
        };
        ids.push(id);
        t0.push(date);
        time.push(t);
        event.push(e);
        for (k, (i, _, _)) in feature_cols.iter().enumerate() {
            raw[k].push(record[*i].trim().to_string());
        }
        lines.push(line);
    }

    let n = ids.len();
    let mut numeric: Vec<Vec<f64>> = Vec::new();
    let mut metas = Vec::new();
    let mut categoricals = Vec::new();
    for ((_, name, kind), cells) in feature_cols.into_iter().zip(raw) {
        let ov = schema.overrides.get(&name).cloned().unwrap_or_default();
        let kind = ov.kind.unwrap_or(kind);
        let declared = ov.dtype.as_deref();
        let parsed: Option<Vec<f64>> = if declared == Some("categorical") {
            None
        } else {
            let mut vals = Vec::with_capacity(n);
            let mut ok = true;
            for (r, cell) in cells.iter().enumerate() {
                if cell.is_empty() {
                    vals.push(f64::NAN);
                } else if let Ok(v) = cell.parse::<f64>() {
                    if !v.is_finite() {
                        return Err(parse_err(path, lines[r], format!("non-finite value in column `{name}`")));
                    }
                    vals.push(v);
                } else {
                    ok = false;
                    break;
                }
            }
            ok.then_some(vals)
        };
        match parsed {
            Some(vals) => {
                let looks_binary = vals.iter().all(|v| v.is_nan() || *v == 0.0 || *v == 1.0);
                let dtype = match declared {
                    Some("binary") => {
                        if let Some(r) = vals.iter().position(|v| !(v.is_nan() || *v == 0.0 || *v == 1.0)) {
                            return Err(parse_err(path, lines[r], format!("binary column `{name}` holds a non-0/1 value")));
                        }
                        Dtype::Binary
                    }
                    Some("continuous") => Dtype::Continuous,
                    Some(other) if other != "categorical" => {
                        return Err(parse_err(path, 1, format!("unknown dtype override `{other}` for `{name}`")));
                    }
                    _ if looks_binary => Dtype::Binary,
                    _ => Dtype::Continuous,
                };
                metas.push(ColumnMeta {
                    name,
                    kind,
                    dtype,
                    missing_indicator_for: ov.missing_indicator_for,
                });
                numeric.push(vals);
            }
            None => {
                if matches!(declared, Some("binary") | Some("continuous")) {
                    return Err(parse_err(path, 1, format!("column `{name}` declared numeric but holds text")));
                }
                categoricals.push(CategoricalColumn {
                    name,
                    kind,
                    values: cells.into_iter().map(|c| (!c.is_empty()).then_some(c)).collect(),
                });
            }
        }
    }

    let mut features = Array2::<f64>::zeros((n, numeric.len()));
    for (j, col) in numeric.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            features[[i, j]] = *v;
        }
    }
    Cohort::with_categoricals(ids, t0, time, event, features, metas, categoricals)
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Writes the cohort in the CSV format read by [`load_cohort`]. Numeric values
/// use the shortest round-trip representation, so a reload is bit-identical.
pub fn write_cohort(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
    header.extend(cohort.columns().iter().map(|c| format!("f:{}:{}", c.kind, c.name)));
    header.extend(cohort.categoricals().iter().map(|c| format!("f:{}:{}", c.kind, c.name)));
    w.write_record(&header)?;
    let f = cohort.features();
    for i in 0..cohort.n_patients() {
        let mut rec = vec![
            cohort.patient_ids()[i].clone(),
            cohort.t0()[i].format("%Y-%m-%d").to_string(),
            fmt_num(cohort.time()[i]),
            if cohort.event()[i] { "1".into() } else { "0".into() },
        ];
        rec.extend(f.row(i).iter().map(|v| fmt_num(*v)));
        rec.extend(cohort.categoricals().iter().map(|c| c.values[i].clone().unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a sidecar that pins every column's kind and dtype.
pub fn write_sidecar(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let mut schema = Schema::default();
    for c in cohort.columns() {
        schema.overrides.insert(
            c.name.clone(),
            ColumnOverride {
                kind: Some(c.kind),
                dtype: Some(match c.dtype {
                    Dtype::Binary => "binary".into(),
                    Dtype::Continuous => "continuous".into(),
                }),
                missing_indicator_for: c.missing_indicator_for.clone(),
            },
        );
    }
    for c in cohort.categoricals() {
        schema.overrides.insert(
            c.name.clone(),
            ColumnOverride {
                kind: Some(c.kind),
                dtype: Some("categorical".into()),
                missing_indicator_for: None,
            },
        );
    }
    let file = File::create(path.as_ref())?;
    serde_json::to_writer_pretty(file, &schema)?;
    Ok(())
}
