use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Season {
    #[serde(rename = "SP")]
    Spring,
    #[serde(rename = "SU")]
    Summer,
    #[serde(rename = "F")]
    Fall,
    #[serde(rename = "W")]
    Winter,
}

impl Season {
    pub fn abbrev(self) -> &'static str {
        match self {
            Season::Spring => "SP",
            Season::Summer => "SU",
            Season::Fall => "F",
            Season::Winter => "W",
        }
    }

    /// Month and day the season starts.
    fn start_md(self) -> (u32, u32) {
        match self {
            Season::Spring => (3, 20),
            Season::Summer => (6, 21),
            Season::Fall => (9, 22),
            Season::Winter => (12, 21),
        }
    }

    fn next(self) -> Season {
        match self {
            Season::Spring => Season::Summer,
            Season::Summer => Season::Fall,
            Season::Fall => Season::Winter,
            Season::Winter => Season::Spring,
        }
    }
}

fn ymd(y: i32, (m, d): (u32, u32)) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("season boundaries are valid dates")
}

/// A season occurrence, `[start, end)`, possibly clipped to the study range.
/// Winter carries the year it starts in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeasonWindow {
    pub year: i32,
    pub season: Season,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl SeasonWindow {
    pub fn label(&self) -> String {
        format!("{} {}", self.season.abbrev(), self.year)
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d < self.end
    }

    /// The unclipped season containing `d`.
    fn containing(d: NaiveDate) -> SeasonWindow {
        let y = d.year();
        let (year, season) = if d >= ymd(y, Season::Winter.start_md()) {
            (y, Season::Winter)
        } else if d >= ymd(y, Season::Fall.start_md()) {
            (y, Season::Fall)
        } else if d >= ymd(y, Season::Summer.start_md()) {
            (y, Season::Summer)
        } else if d >= ymd(y, Season::Spring.start_md()) {
            (y, Season::Spring)
        } else {
            (y - 1, Season::Winter)
        };
        let next_year = if season == Season::Winter { year + 1 } else { year };
        SeasonWindow {
            year,
            season,
            start: ymd(year, season.start_md()),
            end: ymd(next_year, season.next().start_md()),
        }
    }
}

/// Inclusive study period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyRange {
    pub start: NaiveDate,
    /// Last day included.
    pub end: NaiveDate,
}

impl Default for StudyRange {
    fn default() -> Self {
        StudyRange {
            start: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2022, 1, 12).expect("valid date"),
        }
    }
}

impl StudyRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::invalid(format!("study range ends ({end}) before it starts ({start})")));
        }
        Ok(StudyRange { start, end })
    }

    fn end_exclusive(&self) -> NaiveDate {
        self.end.succ_opt().expect("date below chrono's maximum")
    }

    fn clip(&self, mut w: SeasonWindow) -> SeasonWindow {
        w.start = w.start.max(self.start);
        w.end = w.end.min(self.end_exclusive());
        w
    }

    /// Season windows tiling the range, clipped at both ends.
    pub fn windows(&self) -> Vec<SeasonWindow> {
        let mut out = Vec::new();
        let mut d = self.start;
        let stop = self.end_exclusive();
        while d < stop {
            let w = self.clip(SeasonWindow::containing(d));
            d = w.end;
            out.push(w);
        }
        out
    }

    /// Window of `date`, clipped to the range.
    pub fn season_of(&self, date: NaiveDate) -> Result<SeasonWindow> {
        if date < self.start || date > self.end {
            return Err(Error::invalid(format!(
                "date {date} outside study range {} to {}",
                self.start, self.end
            )));
        }
        Ok(self.clip(SeasonWindow::containing(date)))
    }
}

/// Season of `date` under the default study range.
pub fn season_of(date: NaiveDate) -> Result<SeasonWindow> {
    StudyRange::default().season_of(date)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn boundaries_are_half_open() {
        assert_eq!(season_of(d(2020, 6, 20)).unwrap().label(), "SP 2020");
        assert_eq!(season_of(d(2020, 6, 21)).unwrap().label(), "SU 2020");
        assert_eq!(season_of(d(2020, 12, 21)).unwrap().label(), "W 2020");
        assert_eq!(season_of(d(2021, 3, 19)).unwrap().label(), "W 2020");
        assert_eq!(season_of(d(2021, 3, 20)).unwrap().label(), "SP 2021");
    }

    #[test]
    fn range_edges_clip() {
        let w = season_of(d(2020, 1, 1)).unwrap();
        assert_eq!(w.label(), "W 2019");
        assert_eq!(w.start, d(2020, 1, 1));
        let last = StudyRange::default().windows().pop().unwrap();
        assert_eq!(last.label(), "W 2021");
        assert_eq!(last.end, d(2022, 1, 13));
        assert!(season_of(d(2022, 1, 13)).is_err());
        assert!(season_of(d(2019, 12, 31)).is_err());
    }
}
