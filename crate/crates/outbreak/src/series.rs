//! Continuous per-state daily series with zero-fill and county aggregation.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dates::{case_data_start, DateRange};
use crate::error::{Error, Result};
use crate::geonorm::{state_token_for_case_row, NormalizationOutcome};
use crate::ingest::{CaseTable, TweetRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    TweetCount,
    CumulativeCases,
    SmoothedTweetCount,
}

impl SeriesKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeriesKind::TweetCount => "tweet_count",
            SeriesKind::CumulativeCases => "cumulative_cases",
            SeriesKind::SmoothedTweetCount => "smoothed_tweet_count",
        }
    }
}

/// Gap-free daily values for one state; `values[i]` belongs to
/// `start_date + i` days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub state_token: String,
    pub start_date: NaiveDate,
    pub values: Vec<f64>,
    pub kind: SeriesKind,
}

impl DailySeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start_date + chrono::Duration::days(index as i64)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.date_at(self.len().saturating_sub(1))
    }

    pub fn index_of(&self, date: NaiveDate) -> Result<usize> {
        let offset = (date - self.start_date).num_days();
        if offset < 0 || offset as usize >= self.len() {
            return Err(Error::SeriesDoesNotCover {
                date,
                start: self.start_date,
                end: self.end_date(),
            });
        }
        Ok(offset as usize)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_monotone_non_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Count matched records per UTC calendar day per state, zero-filling days
/// with no records. `records` and `outcomes` must be aligned 1:1.
pub fn daily_tweet_counts(
    records: &[TweetRecord],
    outcomes: &[NormalizationOutcome],
    window: &DateRange,
) -> Result<BTreeMap<String, DailySeries>> {
    if records.len() != outcomes.len() {
        return Err(Error::MisalignedInputs {
            records: records.len(),
            outcomes: outcomes.len(),
        });
    }
    let n = window.len_days();
    let mut map: BTreeMap<String, DailySeries> = BTreeMap::new();
    for (rec, outcome) in records.iter().zip(outcomes) {
        let Some(token) = &outcome.state_token else {
            continue;
        };
        let day = rec.day();
        if !window.contains(day) {
            continue;
        }
        let series = map.entry(token.clone()).or_insert_with(|| DailySeries {
            state_token: token.clone(),
            start_date: window.start,
            values: vec![0.0; n],
            kind: SeriesKind::TweetCount,
        });
        let idx = (day - window.start).num_days() as usize;
        series.values[idx] += 1.0;
    }
    Ok(map)
}

/// Sum cumulative cases over counties per state per date. Dates before the
/// first reported date are zero; dates past the table's last date carry the
/// last value forward (counted as warnings).
pub fn state_case_series(
    table: &CaseTable,
    window: &DateRange,
) -> (BTreeMap<String, DailySeries>, usize) {
    // (state token, date) -> summed cumulative cases
    let mut sums: BTreeMap<String, BTreeMap<NaiveDate, u64>> = BTreeMap::new();
    for entry in &table.entries {
        let Some(token) = state_token_for_case_row(&entry.province_state) else {
            continue;
        };
        *sums
            .entry(token)
            .or_default()
            .entry(entry.date)
            .or_insert(0) += entry.cumulative_cases;
    }

    let mut out = BTreeMap::new();
    let mut carry_warnings = 0;
    for (token, by_date) in sums {
        let last_date = *by_date.keys().next_back().expect("non-empty by construction");
        let mut values = Vec::with_capacity(window.len_days());
        let mut last_value = 0.0;
        for day in window.iter() {
            if day < case_data_start() {
                values.push(0.0);
                continue;
            }
            if let Some(&v) = by_date.get(&day) {
                last_value = v as f64;
            } else if day > last_date {
                carry_warnings += 1;
            }
            values.push(last_value);
        }
        out.insert(
            token.clone(),
            DailySeries {
                state_token: token,
                start_date: window.start,
                values,
                kind: SeriesKind::CumulativeCases,
            },
        );
    }
    (out, carry_warnings)
}

/// Centered moving average; edge positions average over the available
/// neighbors only. Window must be odd and no longer than the series.
pub fn smooth(series: &DailySeries, window_days: usize) -> Result<DailySeries> {
    let n = series.len();
    if window_days == 0 || window_days % 2 == 0 || window_days > n {
        return Err(Error::InvalidSmoothingWindow {
            window: window_days,
            len: n,
        });
    }
    let half = window_days / 2;
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            series.values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    Ok(DailySeries {
        state_token: series.state_token.clone(),
        start_date: series.start_date,
        values,
        kind: SeriesKind::SmoothedTweetCount,
    })
}

/// Export series as CSV rows `state_token,date,value,kind`.
pub fn write_series_csv<W: Write>(mut w: W, series: &[&DailySeries]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::io("<series csv>", e);
    writeln!(w, "state_token,date,value,kind").map_err(io_err)?;
    for s in series {
        for (i, v) in s.values.iter().enumerate() {
            writeln!(
                w,
                "\"{}\",{},{},{}",
                s.state_token,
                s.date_at(i),
                v,
                s.kind.as_str()
            )
            .map_err(io_err)?;
        }
    }
    Ok(())
}

/// Parse the CSV produced by [`write_series_csv`] back into series.
pub fn read_series_csv<R: std::io::Read>(r: R) -> Result<Vec<DailySeries>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out: Vec<DailySeries> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Csv {
            path: "<series csv>".into(),
            source: e,
        })?;
        let bad = || Error::Invalid(format!("bad series row: {rec:?}"));
        let token = rec.get(0).ok_or_else(bad)?;
        let date: NaiveDate = rec.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let value: f64 = rec.get(2).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let kind = match rec.get(3).ok_or_else(bad)? {
            "tweet_count" => SeriesKind::TweetCount,
            "cumulative_cases" => SeriesKind::CumulativeCases,
            "smoothed_tweet_count" => SeriesKind::SmoothedTweetCount,
            _ => return Err(bad()),
        };
        match out.last_mut() {
            Some(s) if s.state_token == token && s.kind == kind => {
                if s.date_at(s.len()) != date {
                    return Err(Error::Invalid(format!(
                        "series rows for {token} are not consecutive at {date}"
                    )));
                }
                s.values.push(value);
            }
            _ => out.push(DailySeries {
                state_token: token.to_string(),
                start_date: date,
                values: vec![value],
                kind,
            }),
        }
    }
    Ok(out)
}
