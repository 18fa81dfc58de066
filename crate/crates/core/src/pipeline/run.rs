use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CohortSource, PipelineConfig};
use super::model::{fit_shared, fit_variant, SelectionSummary, SharedStage, TrainedModel};
use super::plots::{calibration_svg, d_calibration_svg, km_svg};
use super::sankey::export_sankey;
use super::variant::FeatureSetVariant;
use crate::backtest::{run_backtest, split_70_30, BacktestConfig};
use crate::data_model::{load_cohort, write_cohort, write_sidecar, Cohort, Schema};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate, percentile, write_d_calibration_csv, write_km_csv, write_one_calibration_csv, EvalInputs, EvalReport,
};
use crate::pu_concepts::{concept_report, ConceptReport};
use crate::rng;
use crate::survival::{CoxOptions, SurvivalData};
use crate::synthcohort::{event_fraction, generate_cohort};

/// How far a CLI invocation runs. Every stage reruns its prerequisites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Prep,
    Concepts,
    Fit,
    Eval,
    Backtest,
    ExportSankey,
    Run,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Prep => "prep",
            Stage::Concepts => "concepts",
            Stage::Fit => "fit",
            Stage::Eval => "eval",
            Stage::Backtest => "backtest",
            Stage::ExportSankey => "export-sankey",
            Stage::Run => "run",
        }
    }

    const ALL: [Stage; 8] = [
        Stage::Synth,
        Stage::Prep,
        Stage::Concepts,
        Stage::Fit,
        Stage::Eval,
        Stage::Backtest,
        Stage::ExportSankey,
        Stage::Run,
    ];
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_sha256: String,
    pub seed: u64,
    pub crate_version: String,
    /// Relative paths of every artifact, sorted.
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub selection: SelectionSummary,
    pub n_features: usize,
    pub eval: EvalReport,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub config_sha256: String,
    pub n_patients: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub event_fraction: f64,
    /// First configured variant.
    pub primary_variant: FeatureSetVariant,
    /// Test C-index of the primary variant.
    pub c_index: f64,
    pub concepts: Vec<ConceptReport>,
    pub variants: BTreeMap<FeatureSetVariant, VariantReport>,
    pub warnings: Vec<String>,
}

/// One row of a hazard-ratio table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardRatio {
    pub feature: String,
    pub coef: f64,
    pub hazard_ratio: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

/// Writes files under a staging directory that is moved into place only when
/// the whole stage succeeds.
struct Artifacts {
    root: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.written.push(rel.to_string());
        Ok(p)
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let p = self.path(rel)?;
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(p, text)?;
        Ok(())
    }

    fn text(&mut self, rel: &str, body: &str) -> Result<()> {
        let p = self.path(rel)?;
        fs::write(p, body)?;
        Ok(())
    }
}

fn staging_dir(out: &Path) -> PathBuf {
    let name = out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    out.with_file_name(format!(".{name}.staging-{}", std::process::id()))
}

/// Loads or generates the cohort named by the config.
pub fn load_source(cfg: &PipelineConfig) -> Result<(Cohort, Option<crate::synthcohort::GroundTruth>)> {
    match &cfg.cohort {
        CohortSource::Synth(g) => {
            let mut g = g.clone();
            g.seed = cfg.seed;
            let (c, t) = generate_cohort(&g)?;
            Ok((c, Some(t)))
        }
        CohortSource::Csv { path, sidecar } => {
            let schema = match sidecar {
                Some(s) => Schema::from_sidecar(s)?,
                None => Schema::default(),
            };
            Ok((load_cohort(path, &schema)?, None))
        }
    }
}

/// Exponentiated coefficients with percentile intervals from `b` bootstrap
/// refits at the selected penalty. Zero coefficients are omitted; rows are
/// ordered by hazard ratio, largest first.
pub fn hazard_ratio_table(model: &TrainedModel, train: &SurvivalData, b: usize, seed: u64) -> Result<Vec<HazardRatio>> {
    let fit = &model.fit;
    let opts = CoxOptions::default();
    let n = train.n();
    let draws: Vec<Option<Vec<f64>>> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            use rand::Rng;
            let mut g = rng::stream(seed, r);
            let idx: Vec<usize> = (0..n).map(|_| g.random_range(0..n)).collect();
            let data = train.subset(&idx).ok()?;
            crate::survival::fit_lasso_cox(&data, fit.lambda, Some(&fit.beta), &opts)
                .ok()
                .map(|f| f.beta)
        })
        .collect();
    let draws: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    let mut rows = Vec::new();
    for (j, name) in fit.feature_names.iter().enumerate() {
        if fit.beta[j] == 0.0 {
            continue;
        }
        let (lo, hi) = if draws.is_empty() {
            (None, None)
        } else {
            let mut hr: Vec<f64> = draws.iter().map(|d| d[j].exp()).collect();
            hr.sort_by(f64::total_cmp);
            (Some(percentile(&hr, 0.025)), Some(percentile(&hr, 0.975)))
        };
        rows.push(HazardRatio {
            feature: name.clone(),
            coef: fit.beta[j],
            hazard_ratio: fit.beta[j].exp(),
            lo,
            hi,
        });
    }
    rows.sort_by(|a, b| b.hazard_ratio.total_cmp(&a.hazard_ratio).then_with(|| a.feature.cmp(&b.feature)));
    Ok(rows)
}

fn write_hazard_csv(path: &Path, rows: &[HazardRatio]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "coef", "hazard_ratio", "hr_lo", "hr_hi"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.feature.clone(),
            r.coef.to_string(),
            r.hazard_ratio.to_string(),
            opt(r.lo),
            opt(r.hi),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_concept_csv(path: &Path, reports: &[ConceptReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "concept",
        "n_test",
        "original_positives",
        "original_fraction",
        "new_positives",
        "new_fraction",
        "recall",
        "delta_hat",
    ])?;
    for r in reports {
        w.write_record([
            r.concept_name.clone(),
            r.n_test.to_string(),
            r.original_positives.count.to_string(),
            r.original_positives.fraction.to_string(),
            r.new_positives.count.to_string(),
            r.new_positives.fraction.to_string(),
            r.recall.map(|v| v.to_string()).unwrap_or_default(),
            r.delta_hat.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn subgroup_masks(cfg: &PipelineConfig, test: &Cohort) -> Result<Vec<(String, Vec<bool>)>> {
    cfg.eval
        .subgroups
        .iter()
        .map(|s| {
            let col = test
                .column(&s.column)
                .ok_or_else(|| Error::invalid(format!("subgroup column `{}` not in cohort", s.column)))?;
            Ok((s.name.clone(), col.iter().map(|v| *v == s.value).collect()))
        })
        .collect()
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

struct Prepared {
    cohort: Cohort,
    train: Cohort,
    test: Cohort,
    shared: SharedStage,
}

fn needs_concepts(cfg: &PipelineConfig, upto: Stage) -> bool {
    upto >= Stage::Concepts || cfg.variants.iter().any(|v| v.uses_concepts())
}

fn prepare(cfg: &PipelineConfig, cohort: Cohort, with_concepts: bool, art: &mut Artifacts) -> Result<Prepared> {
    let anchors = cfg.effective_anchors();
    let (train, test) = stage("prep", split_70_30(&cohort, cfg.seed))?;
    let shared = stage("prep", fit_shared(&train, &anchors, &cfg.train, with_concepts, cfg.seed))?;
    art.json("prep/preprocessor.json", &shared.preprocessor)?;
    let split = serde_json::json!({
        "train": train.patient_ids(),
        "test": test.patient_ids(),
    });
    art.json("prep/split.json", &split)?;
    Ok(Prepared {
        cohort,
        train,
        test,
        shared,
    })
}

/// Runs the pipeline up to `upto`, writing artifacts to `out`. Output appears
/// only if every step succeeds; an existing `out` is replaced only when it
/// holds a previous run (a `manifest.json`) or is empty.
pub fn run_pipeline(cfg: &PipelineConfig, upto: Stage, out: &Path) -> Result<Manifest> {
    stage("config", cfg.validate())?;
    if out.exists() {
        let empty = fs::read_dir(out)?.next().is_none();
        if !empty && !out.join("manifest.json").exists() {
            return Err(Error::invalid(format!(
                "output directory {} exists and is not a previous run",
                out.display()
            )));
        }
    }
    let staging = staging_dir(out);
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    let mut art = Artifacts {
        root: staging.clone(),
        written: Vec::new(),
    };
    let result = run_into(cfg, upto, &mut art);
    match result {
        Ok(()) => {
            let mut artifacts = art.written.clone();
            artifacts.push("manifest.json".into());
            artifacts.sort();
            let manifest = Manifest {
                stage: upto.as_str().to_string(),
                config_sha256: cfg.hash()?,
                seed: cfg.seed,
                crate_version: env!("CARGO_PKG_VERSION").to_string(),
                artifacts,
            };
            art.json("manifest.json", &manifest)?;
            if out.exists() {
                fs::remove_dir_all(out)?;
            }
            fs::rename(&staging, out)?;
            Ok(manifest)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn run_into(cfg: &PipelineConfig, upto: Stage, art: &mut Artifacts) -> Result<()> {
    let (cohort, truth) = stage("synth", load_source(cfg))?;
    if let Some(truth) = &truth {
        if matches!(upto, Stage::Synth | Stage::Run) {
            write_cohort(&cohort, art.path("cohort/cohort.csv")?)?;
            write_sidecar(&cohort, art.path("cohort/schema.json")?)?;
            truth.write_json(art.path("cohort/truth.json")?)?;
        }
    }
    if upto == Stage::Synth {
        if truth.is_none() {
            return Err(Error::invalid("`synth` needs a synthetic cohort source").in_stage("synth"));
        }
        return Ok(());
    }
    if upto == Stage::Backtest {
        return run_backtest_stage(cfg, &cohort, art);
    }

    let prepared = prepare(cfg, cohort, needs_concepts(cfg, upto), art)?;
    if upto == Stage::Prep {
        return Ok(());
    }

    let test_pp = stage("concepts", prepared.shared.preprocessor.apply(&prepared.test))?;
    let reports: Vec<ConceptReport> = stage(
        "concepts",
        prepared
            .shared
            .concepts
            .iter()
            .map(|m| concept_report(m, &test_pp, cfg.eval.concept_threshold))
            .collect(),
    )?;
    art.json("concepts/concept_models.json", &prepared.shared.concepts)?;
    art.json("concepts/concept_report.json", &reports)?;
    write_concept_csv(&art.path("concepts/concept_report.csv")?, &reports)?;
    if upto == Stage::Concepts {
        return Ok(());
    }

    let settings = &cfg.train;
    let variants: Vec<FeatureSetVariant> = if upto == Stage::ExportSankey {
        vec![cfg.sankey.variant]
    } else {
        cfg.variants.clone()
    };
    let mut models = Vec::new();
    for &v in &variants {
        let m = stage("fit", fit_variant(&prepared.shared, v, settings, cfg.seed))?;
        let base = format!("models/{v}");
        art.json(&format!("{base}/model.json"), &m)?;
        if upto != Stage::ExportSankey {
            let train_data = stage("fit", m.survival_data(&prepared.train))?;
            let hr_seed = rng::mix64(cfg.seed ^ rng::hash_bytes(1, v.as_str().as_bytes()));
            let table = stage("fit", hazard_ratio_table(&m, &train_data, cfg.eval.hazard_bootstrap, hr_seed))?;
            write_hazard_csv(&art.path(&format!("{base}/hazard_ratios.csv"))?, &table)?;
        }
        models.push(m);
    }

    if upto == Stage::ExportSankey || upto == Stage::Run {
        let m = match models.iter().find(|m| m.variant == cfg.sankey.variant) {
            Some(m) => m.clone(),
            None => stage("export-sankey", fit_variant(&prepared.shared, cfg.sankey.variant, settings, cfg.seed))?,
        };
        let graph = export_sankey(&m.concepts, &m.fit, m.variant.as_str(), cfg.sankey.top_k);
        art.json("sankey/sankey.json", &graph)?;
        art.text("sankey/sankey.svg", &graph.to_svg())?;
        if upto == Stage::ExportSankey {
            return Ok(());
        }
    }
    if upto == Stage::Fit {
        return Ok(());
    }

    let masks = stage("eval", subgroup_masks(cfg, &prepared.test))?;
    let mut variant_reports = BTreeMap::new();
    for m in &models {
        let pred = stage("eval", m.predict(&prepared.test, cfg.eval.options.horizon))?;
        let inputs = EvalInputs {
            time: prepared.test.time(),
            event: prepared.test.event(),
            risk: &pred.risk,
            event_prob_at_horizon: &pred.event_prob_at_horizon,
            surv_at_time: &pred.surv_at_time,
        };
        let eval = stage("eval", evaluate(&inputs, &masks, &cfg.eval.options, cfg.seed))?;
        let base = format!("eval/{}", m.variant);
        write_km_csv(&art.path(&format!("{base}/km.csv"))?, &eval.km_strata)?;
        write_one_calibration_csv(&art.path(&format!("{base}/one_calibration.csv"))?, &eval.one_calibration)?;
        write_d_calibration_csv(&art.path(&format!("{base}/d_calibration.csv"))?, &eval.d_calibration)?;
        art.text(&format!("{base}/km.svg"), &km_svg(&eval.km_strata, cfg.eval.options.horizon))?;
        art.text(&format!("{base}/one_calibration.svg"), &calibration_svg(&eval.one_calibration))?;
        art.text(&format!("{base}/d_calibration.svg"), &d_calibration_svg(&eval.d_calibration))?;
        variant_reports.insert(
            m.variant,
            VariantReport {
                selection: m.selection.clone(),
                n_features: m.fit.feature_names.len(),
                eval,
                warnings: m.warnings.clone(),
            },
        );
    }
    let primary = cfg.variants[0];
    let report = PipelineReport {
        seed: cfg.seed,
        config_sha256: cfg.hash()?,
        n_patients: prepared.cohort.n_patients(),
        n_train: prepared.train.n_patients(),
        n_test: prepared.test.n_patients(),
        event_fraction: event_fraction(&prepared.cohort),
        primary_variant: primary,
        c_index: variant_reports[&primary].eval.c_index.estimate.unwrap_or(f64::NAN),
        concepts: reports,
        variants: variant_reports,
        warnings: prepared.shared.warnings.clone(),
    };
    art.json("report.json", &report)?;

    if upto == Stage::Run && cfg.backtest.is_some() {
        run_backtest_stage(cfg, &prepared.cohort, art)?;
    }
    Ok(())
}

fn run_backtest_stage(cfg: &PipelineConfig, cohort: &Cohort, art: &mut Artifacts) -> Result<()> {
    let bt = cfg.backtest.clone().unwrap_or_else(BacktestConfig::default);
    let matrix = stage(
        "backtest",
        run_backtest(cohort, &cfg.effective_anchors(), &cfg.train, &bt, cfg.seed),
    )?;
    art.json("backtest/matrix.json", &matrix)?;
    matrix.write_csv(&art.path("backtest/matrix.csv")?)?;
    Ok(())
}
