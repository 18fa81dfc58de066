//! Seasonal back-testing.
//!
//! The study period is cut into seasons starting March 20 (spring), June 21
//! (summer), September 22 (fall) and December 21 (winter). Each season is
//! split 70-30 once. A model trained on the train splits up to a season is
//! scored on the test split of that season and every later one.

mod run;
mod seasons;

pub use run::{run_backtest, split_70_30, split_indices, BacktestConfig, BacktestMatrix, BacktestRow, TRAIN_FRACTION};
pub use seasons::{season_of, Season, SeasonWindow, StudyRange};
