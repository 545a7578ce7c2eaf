use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive calendar date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidDateRange { start, end });
        }
        Ok(DateRange { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    /// Number of days in the range (inclusive of both endpoints).
    pub fn len_days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn iter(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start.iter_days().take(self.len_days())
    }

    /// Default study window for raw record ingestion.
    pub fn default_study_window() -> Self {
        DateRange {
            start: NaiveDate::from_ymd_opt(2019, 9, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2020, 4, 16).unwrap(),
        }
    }

    /// Default analysis window over which series are built and fitted.
    pub fn default_analysis_window() -> Self {
        DateRange {
            start: NaiveDate::from_ymd_opt(2019, 12, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2020, 4, 16).unwrap(),
        }
    }
}

/// First date with officially reported case data; cumulative case series are
/// zero-filled before this.
pub fn case_data_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 21).unwrap()
}
