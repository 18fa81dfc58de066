//! Synthetic cohorts with planted concepts and a known hazard model.
//!
//! Each concept has a latent binary label. Its anchor is observed only for a
//! random fraction `delta` of latent positives, independently of everything
//! else, and its proxies are noisy Bernoulli features whose log-odds shift by
//! `proxy_strength` when the label is on. Event times are exponential with
//! log-hazard linear in the latent labels, so the proportional-hazards model
//! holds exactly.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Days, NaiveDate};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{CategoricalColumn, Cohort, ColumnKind, ColumnMeta, Dtype};
use crate::error::{Error, Result};
use crate::pu_concepts::sigmoid;
use crate::rng;
use crate::survival::SurvivalData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptGen {
    pub name: String,
    pub prevalence: f64,
    /// Probability that a latent positive carries the anchor.
    pub delta: f64,
    pub n_proxies: usize,
    /// Log-odds shift of each proxy between latent negatives and positives.
    pub proxy_strength: f64,
    /// Log-hazard ratio of the latent label.
    pub beta: f64,
}

impl ConceptGen {
    pub fn new(name: &str, prevalence: f64, delta: f64, beta: f64) -> Self {
        ConceptGen {
            name: name.to_string(),
            prevalence,
            delta,
            n_proxies: 6,
            proxy_strength: 5.0,
            beta,
        }
    }

    pub fn anchor_column(&self) -> String {
        format!("{}_code", self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_patients: usize,
    pub concepts: Vec<ConceptGen>,
    /// Independent Bernoulli(`noise_rate`) indicator columns.
    pub n_noise_features: usize,
    pub noise_rate: f64,
    /// Continuous lab columns, each shifted by half a unit for one concept.
    pub n_continuous: usize,
    pub lab_missing_rate: f64,
    /// Direct log-hazard effect of each lab's underlying value.
    pub lab_beta: f64,
    /// Levels of a pure-noise categorical `region` column; 0 disables it.
    pub n_regions: usize,
    /// Events per day for a patient with every latent label off.
    pub baseline_rate: f64,
    pub censor_rate: f64,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_patients: 10_000,
            concepts: vec![
                ConceptGen::new("inpatient", 0.40, 0.8, 1.2),
                ConceptGen::new("old_age", 0.30, 0.9, 0.8),
                ConceptGen::new("shortness_of_breath", 0.15, 0.5, 0.7),
                ConceptGen::new("diabetes", 0.15, 0.5, 0.3),
                ConceptGen::new("obesity", 0.25, 0.3, 0.2),
                ConceptGen::new("copd", 0.08, 0.6, 0.3),
                ConceptGen::new("immunocompromised", 0.06, 0.4, 0.2),
                ConceptGen::new("cough", 0.30, 0.5, -0.3),
            ],
            n_noise_features: 8,
            noise_rate: 0.1,
            n_continuous: 4,
            lab_missing_rate: 0.1,
            lab_beta: 0.25,
            n_regions: 4,
            baseline_rate: 0.0024,
            censor_rate: 1.0 / 30.0,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            end_date: NaiveDate::from_ymd_opt(2022, 1, 12).expect("valid date"),
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        for c in &self.concepts {
            if !unit(c.prevalence) || !(c.delta > 0.0 && c.delta <= 1.0) {
                return Err(Error::invalid(format!(
                    "concept `{}`: prevalence must be in (0,1) and delta in (0,1]",
                    c.name
                )));
            }
            if !c.proxy_strength.is_finite() || !c.beta.is_finite() {
                return Err(Error::invalid(format!("concept `{}` has non-finite parameters", c.name)));
            }
        }
        if !(self.baseline_rate > 0.0) || !(self.censor_rate > 0.0) {
            return Err(Error::invalid("baseline and censoring rates must be positive"));
        }
        if !self.lab_beta.is_finite() {
            return Err(Error::invalid("lab effect must be finite"));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) || !(0.0..1.0).contains(&self.lab_missing_rate) {
            return Err(Error::invalid("noise and missingness rates must be probabilities"));
        }
        if self.end_date < self.start_date {
            return Err(Error::invalid("end date precedes start date"));
        }
        if self.n_patients == 0 {
            return Err(Error::invalid("need at least one patient"));
        }
        Ok(())
    }

    pub fn columns(&self) -> Vec<ColumnMeta> {
        const PROXY_KINDS: [ColumnKind; 4] = [
            ColumnKind::Medication,
            ColumnKind::Symptom,
            ColumnKind::Diagnosis,
            ColumnKind::Vaccine,
        ];
        let mut cols = Vec::new();
        for c in &self.concepts {
            cols.push(ColumnMeta::new(c.anchor_column(), ColumnKind::Diagnosis, Dtype::Binary));
            for k in 0..c.n_proxies {
                cols.push(ColumnMeta::new(format!("{}_proxy{k}", c.name), PROXY_KINDS[k % 4], Dtype::Binary));
            }
        }
        for k in 0..self.n_noise_features {
            cols.push(ColumnMeta::new(format!("noise{k}"), ColumnKind::Medication, Dtype::Binary));
        }
        for k in 0..self.n_continuous {
            cols.push(ColumnMeta::new(format!("lab{k}"), ColumnKind::Lab, Dtype::Continuous));
        }
        cols
    }
}

/// What the generator planted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub patient_ids: Vec<String>,
    /// Concept name -> latent label per patient.
    pub latent: BTreeMap<String, Vec<bool>>,
    pub delta: BTreeMap<String, f64>,
    pub beta: BTreeMap<String, f64>,
    pub lab_beta: f64,
    /// `exp(sum_c beta_c latent_c + lab_beta sum_k z_k)` per patient.
    pub hazard_multiplier: Vec<f64>,
}

impl GroundTruth {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

struct Patient {
    latent: Vec<bool>,
    row: Vec<f64>,
    region: Option<String>,
    time: f64,
    event: bool,
    t0_offset: u64,
    multiplier: f64,
}

fn draw_patient(cfg: &GenConfig, span: u64, rng: &mut ChaCha8Rng) -> Patient {
    let latent: Vec<bool> = cfg.concepts.iter().map(|c| rng.random::<f64>() < c.prevalence).collect();
    let mut row = Vec::new();
    for (c, &y) in cfg.concepts.iter().zip(&latent) {
        let seen = rng.random::<f64>() < c.delta;
        row.push(f64::from(u8::from(y && seen)));
        let p = sigmoid(-c.proxy_strength / 2.0 + if y { c.proxy_strength } else { 0.0 });
        for _ in 0..c.n_proxies {
            row.push(f64::from(u8::from(rng.random::<f64>() < p)));
        }
    }
    for _ in 0..cfg.n_noise_features {
        row.push(f64::from(u8::from(rng.random::<f64>() < cfg.noise_rate)));
    }
    let mut log_hr: f64 = cfg.concepts.iter().zip(&latent).filter(|(_, y)| **y).map(|(c, _)| c.beta).sum();
    for k in 0..cfg.n_continuous {
        let shift = if !latent.is_empty() && latent[k % latent.len()] { 0.5 } else { 0.0 };
        let z: f64 = rng.sample(StandardNormal);
        log_hr += cfg.lab_beta * z;
        let missing = rng.random::<f64>() < cfg.lab_missing_rate;
        row.push(if missing { f64::NAN } else { z + shift });
    }
    let region = (cfg.n_regions > 0).then(|| format!("region_{}", rng.random_range(0..cfg.n_regions) + 1));
    let multiplier = log_hr.exp();
    let t = Exp::new(cfg.baseline_rate * multiplier).expect("positive rate").sample(rng);
    let c = Exp::new(cfg.censor_rate).expect("positive rate").sample(rng);
    // follow-up is recorded in whole days, at least one
    let time = t.min(c).ceil().max(1.0);
    Patient {
        latent,
        row,
        region,
        time,
        event: t <= c,
        t0_offset: rng.random_range(0..=span),
        multiplier,
    }
}

/// Draws a cohort. Patient `i` uses its own RNG stream, so the output does not
/// depend on scheduling.
pub fn generate_cohort(cfg: &GenConfig) -> Result<(Cohort, GroundTruth)> {
    cfg.validate()?;
    let span = (cfg.end_date - cfg.start_date).num_days() as u64;
    let patients: Vec<Patient> = (0..cfg.n_patients as u64)
        .into_par_iter()
        .map(|i| draw_patient(cfg, span, &mut rng::stream(cfg.seed, i)))
        .collect();
    let columns = cfg.columns();
    let n = patients.len();
    let mut features = Array2::zeros((n, columns.len()));
    for (i, p) in patients.iter().enumerate() {
        for (j, v) in p.row.iter().enumerate() {
            features[[i, j]] = *v;
        }
    }
    let ids: Vec<String> = (0..n).map(|i| format!("P{i:06}")).collect();
    let t0 = patients
        .iter()
        .map(|p| cfg.start_date.checked_add_days(Days::new(p.t0_offset)).expect("date in range"))
        .collect();
    let categoricals = if cfg.n_regions > 0 {
        vec![CategoricalColumn {
            name: "region".into(),
            kind: ColumnKind::Location,
            values: patients.iter().map(|p| p.region.clone()).collect(),
        }]
    } else {
        Vec::new()
    };
    let cohort = Cohort::with_categoricals(
        ids.clone(),
        t0,
        patients.iter().map(|p| p.time).collect(),
        patients.iter().map(|p| p.event).collect(),
        features,
        columns,
        categoricals,
    )?;
    let truth = GroundTruth {
        patient_ids: ids,
        latent: cfg
            .concepts
            .iter()
            .enumerate()
            .map(|(k, c)| (c.name.clone(), patients.iter().map(|p| p.latent[k]).collect()))
            .collect(),
        delta: cfg.concepts.iter().map(|c| (c.name.clone(), c.delta)).collect(),
        beta: cfg.concepts.iter().map(|c| (c.name.clone(), c.beta)).collect(),
        lab_beta: cfg.lab_beta,
        hazard_multiplier: patients.iter().map(|p| p.multiplier).collect(),
    };
    Ok((cohort, truth))
}

pub fn event_fraction(cohort: &Cohort) -> f64 {
    if cohort.n_patients() == 0 {
        return 0.0;
    }
    cohort.n_events() as f64 / cohort.n_patients() as f64
}

/// Gaussian design with a known coefficient vector, unit baseline hazard and
/// exponential censoring whose rate is solved so the expected censored fraction
/// equals `censor_fraction`.
pub fn simulate_cox_data(n: usize, beta: &[f64], censor_fraction: f64, seed: u64) -> Result<SurvivalData> {
    if !(0.0..1.0).contains(&censor_fraction) {
        return Err(Error::invalid("censor fraction must be in [0, 1)"));
    }
    let d = beta.len();
    let mut rng = rng::stream(seed, 0);
    let x = Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal));
    let rates: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>().exp())
        .collect();
    // P(C < T) = c / (c + rate_i), increasing in c
    let censored = |c: f64| rates.iter().map(|r| c / (c + r)).sum::<f64>() / n as f64;
    let c = if censor_fraction == 0.0 {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        while censored(hi) < censor_fraction {
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if censored(mid) < censor_fraction {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    for r in &rates {
        let t = Exp::new(*r).map_err(|_| Error::NonFinite { context: "simulated hazard" })?.sample(&mut rng);
        let cens = if c > 0.0 { Exp::new(c).expect("positive rate").sample(&mut rng) } else { f64::INFINITY };
        time.push(t.min(cens));
        event.push(t <= cens);
    }
    let names = (0..d).map(|j| format!("x{j}")).collect();
    SurvivalData::new(x, time, event, names)
}
