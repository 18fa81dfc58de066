//! Survival-model evaluation: Harrell's C with bootstrap intervals,
//! Kaplan-Meier curves by risk stratum, one-calibration at a horizon and
//! D-calibration.

mod bootstrap;
mod calibration;
mod concordance;
mod km;
mod report;

pub use bootstrap::{bootstrap_ci, percentile, BootstrapCi};
pub use calibration::{d_calibration, one_calibration, CalibrationBins, DCalibrationBins};
pub use concordance::{c_index, concordance_pairwise, concordance_sorted, ConcordanceCounts, PAIRWISE_LIMIT};
pub use km::{kaplan_meier, risk_strata, strata_sizes, RiskStratum, StepFunction};
pub use report::{
    c_index_summary, evaluate, write_d_calibration_csv, write_km_csv, write_one_calibration_csv, CIndexSummary,
    EvalInputs, EvalOptions, EvalReport, StratumCurve,
};
