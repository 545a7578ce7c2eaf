//! Formal outbreak thresholding and informal-outbreak changepoint search.
//!
//! The informal outbreak estimate fits a two-segment model to the symptom
//! tweet series: a linear baseline followed by exponential growth, scored in
//! original count space. The breakpoint minimizing the summed segment SSE
//! (subject to minimum segment lengths, positive growth and an improvement
//! gate over a single-line fit) marks the onset of the exponential phase.

use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::OutbreakReportRow;
use crate::series::{smooth, DailySeries, SeriesKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    /// Change per day.
    pub slope: f64,
    /// Fitted value at the first day of the fit range.
    pub intercept: f64,
    pub sse: f64,
    pub sigma_resid: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    /// Fitted log-level at the first day of the fit range.
    pub log_level: f64,
    /// Per-day exponential growth rate.
    pub growth_rate: f64,
    /// Residual sum of squares in original count space.
    pub sse_original_scale: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangepointResult {
    pub informal_date: NaiveDate,
    pub linear: LinearFit,
    pub exponential: ExpFit,
    pub cost_piecewise: f64,
    pub cost_single_line: f64,
    /// 1 - cost_piecewise / cost_single_line, in [0, 1].
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub case_threshold: u32,
    pub min_linear_days: usize,
    pub min_exp_days: usize,
    pub improvement_min: f64,
    pub smoothing_window: usize,
    pub baseline_start: NaiveDate,
    pub log_offset: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            case_threshold: 100,
            min_linear_days: 21,
            min_exp_days: 5,
            improvement_min: 0.10,
            smoothing_window: 7,
            baseline_start: NaiveDate::from_ymd_opt(2019, 12, 1).unwrap(),
            log_offset: 1.0,
        }
    }
}

fn ols(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let x_mean = xs.clone().sum::<f64>() / n;
    let y_mean = ys.clone().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.zip(ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, y_mean - slope * x_mean)
}

/// Ordinary least squares of value against day index, with day 0 at the
/// start of `range`.
pub fn fit_linear(series: &DailySeries, range: Range<usize>) -> Result<LinearFit> {
    let n = range.len();
    if n < 2 || range.end > series.len() {
        return Err(Error::RangeTooShort { len: n, min: 2 });
    }
    let ys = &series.values[range];
    let (slope, intercept) = ols((0..n).map(|t| t as f64), ys.iter().copied());
    let sse: f64 = ys
        .iter()
        .enumerate()
        .map(|(t, y)| {
            let r = y - (intercept + slope * t as f64);
            r * r
        })
        .sum();
    let sigma_resid = if n > 2 { (sse / (n - 2) as f64).sqrt() } else { 0.0 };
    Ok(LinearFit {
        slope,
        intercept,
        sse,
        sigma_resid,
        n,
    })
}

/// OLS of log(value + log_offset) against day index; the residual sum of
/// squares is recomputed in original count space so segment costs are
/// commensurable.
pub fn fit_exponential(
    series: &DailySeries,
    range: Range<usize>,
    log_offset: f64,
) -> Result<ExpFit> {
    let n = range.len();
    if n < 2 || range.end > series.len() {
        return Err(Error::RangeTooShort { len: n, min: 2 });
    }
    let ys = &series.values[range];
    let (growth_rate, log_level) = ols(
        (0..n).map(|t| t as f64),
        ys.iter().map(|y| (y + log_offset).ln()),
    );
    let sse_original_scale: f64 = ys
        .iter()
        .enumerate()
        .map(|(t, y)| {
            let fitted = (log_level + growth_rate * t as f64).exp() - log_offset;
            let r = y - fitted;
            r * r
        })
        .sum();
    Ok(ExpFit {
        log_level,
        growth_rate,
        sse_original_scale,
        n,
    })
}

/// Earliest date whose cumulative case count strictly exceeds `threshold`.
pub fn formal_outbreak_date(cases: &DailySeries, threshold: u32) -> Result<Option<NaiveDate>> {
    if !cases.is_monotone_non_decreasing() {
        return Err(Error::NonMonotoneSeries {
            state: cases.state_token.clone(),
        });
    }
    Ok(cases
        .values
        .iter()
        .position(|&v| v > threshold as f64)
        .map(|i| cases.date_at(i)))
}

/// Whole days from `informal` to `formal`; negative when the detector fired
/// after the formal date.
pub fn compute_lag(informal: NaiveDate, formal: NaiveDate) -> i64 {
    (formal - informal).num_days()
}

/// Near-equal costs count as ties so the earliest breakpoint wins; scaled to
/// the single-line cost, the natural magnitude of the problem.
fn tie_epsilon(cost_single_line: f64) -> f64 {
    1e-12 * (1.0 + cost_single_line)
}

/// Two-segment breakpoint search over the smoothed tweet series between the
/// configured baseline start and the day before the formal outbreak (series
/// end when no formal date is known).
///
/// Candidate breakpoints `b` keep at least `min_linear_days` before and
/// `min_exp_days` after; cost is the linear segment SSE plus the exponential
/// segment SSE in original scale. The argmin is returned only when the
/// exponential growth rate is positive and the improvement over a single
/// linear fit reaches `improvement_min`. The informal date is the first day
/// of the exponential segment.
pub fn detect_informal_outbreak(
    tweets: &DailySeries,
    formal_date: Option<NaiveDate>,
    cfg: &DetectorConfig,
) -> Result<Option<ChangepointResult>> {
    let start = tweets.index_of(cfg.baseline_start)?;
    let end = match formal_date {
        Some(f) if f <= tweets.end_date() => {
            let fi = (f - tweets.start_date).num_days();
            if fi <= start as i64 {
                return Err(Error::WindowTooShort {
                    len: 0,
                    min: cfg.min_linear_days + cfg.min_exp_days,
                });
            }
            (fi - 1) as usize
        }
        _ => tweets.len() - 1,
    };

    let n = end - start + 1;
    let min_len = cfg.min_linear_days + cfg.min_exp_days;
    if n < min_len {
        return Err(Error::WindowTooShort { len: n, min: min_len });
    }

    let window = DailySeries {
        state_token: tweets.state_token.clone(),
        start_date: tweets.date_at(start),
        values: tweets.values[start..=end].to_vec(),
        kind: tweets.kind,
    };
    let smoothed = smooth(&window, cfg.smoothing_window)?;

    let cost_single_line = fit_linear(&smoothed, 0..n)?.sse;
    let eps = tie_epsilon(cost_single_line);

    let mut best: Option<(f64, usize, LinearFit, ExpFit)> = None;
    for b in (cfg.min_linear_days - 1)..=(n - 1 - cfg.min_exp_days) {
        let linear = fit_linear(&smoothed, 0..b + 1)?;
        let exponential = fit_exponential(&smoothed, b + 1..n, cfg.log_offset)?;
        let cost = linear.sse + exponential.sse_original_scale;
        let better = match &best {
            None => true,
            Some((best_cost, ..)) => cost < best_cost - eps,
        };
        if better {
            best = Some((cost, b, linear, exponential));
        }
    }

    let Some((cost_piecewise, b, linear, exponential)) = best else {
        return Ok(None);
    };
    if exponential.growth_rate <= 0.0 || cost_single_line <= 0.0 {
        return Ok(None);
    }
    let improvement = 1.0 - cost_piecewise / cost_single_line;
    if improvement < cfg.improvement_min {
        return Ok(None);
    }
    Ok(Some(ChangepointResult {
        informal_date: window.date_at(b + 1),
        linear,
        exponential,
        cost_piecewise,
        cost_single_line,
        improvement,
    }))
}

/// Compose formal thresholding, informal detection and lag computation into
/// one per-state report row. Absent components stay absent; no dates are
/// synthesized.
pub fn analyze_state(
    tweets: &DailySeries,
    cases: &DailySeries,
    cfg: &DetectorConfig,
) -> Result<OutbreakReportRow> {
    debug_assert_eq!(cases.kind, SeriesKind::CumulativeCases);
    let formal = formal_outbreak_date(cases, cfg.case_threshold)?;
    let changepoint = detect_informal_outbreak(tweets, formal, cfg)?;
    let informal = changepoint.as_ref().map(|c| c.informal_date);
    let lag_days = match (informal, formal) {
        (Some(i), Some(f)) => Some(compute_lag(i, f)),
        _ => None,
    };
    Ok(OutbreakReportRow {
        state_token: tweets.state_token.clone(),
        informal_date: informal,
        formal_date: formal,
        lag_days,
        improvement: changepoint.as_ref().map(|c| c.improvement),
        tweet_total: tweets.total().round() as u64,
    })
}
