//! Serialization of analysis results: report tables, charts and the state
//! distribution summary. All outputs are deterministic functions of their
//! inputs.

use std::collections::BTreeMap;
use std::fmt::Write as FmtWrite;
use std::io::Write;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::detect::ChangepointResult;
use crate::error::{Error, Result};
use crate::series::DailySeries;

/// One report row: the per-state outbreak dates and their lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutbreakReportRow {
    pub state_token: String,
    pub informal_date: Option<NaiveDate>,
    pub formal_date: Option<NaiveDate>,
    pub lag_days: Option<i64>,
    pub improvement: Option<f64>,
    pub tweet_total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

fn opt_date(d: &Option<NaiveDate>) -> String {
    d.map(|d| d.to_string()).unwrap_or_default()
}

/// Write rows as CSV (`state,informal_outbreak,formal_outbreak,time_lag_days`)
/// or as a JSON array with the same keys plus `improvement` and
/// `tweet_total`. Output is byte-identical for identical input.
pub fn write_report<W: Write>(rows: &[OutbreakReportRow], format: ReportFormat, mut w: W) -> Result<()> {
    let io_err = |e: std::io::Error| Error::io("<report>", e);
    match format {
        ReportFormat::Csv => {
            writeln!(w, "state,informal_outbreak,formal_outbreak,time_lag_days").map_err(io_err)?;
            for r in rows {
                writeln!(
                    w,
                    "\"{}\",{},{},{}",
                    r.state_token,
                    opt_date(&r.informal_date),
                    opt_date(&r.formal_date),
                    r.lag_days.map(|l| l.to_string()).unwrap_or_default()
                )
                .map_err(io_err)?;
            }
        }
        ReportFormat::Json => {
            // hand-rolled for stable key order and fixed 6-place decimals
            let mut s = String::from("[\n");
            for (i, r) in rows.iter().enumerate() {
                let quote_opt = |d: &Option<NaiveDate>| match d {
                    Some(d) => format!("\"{d}\""),
                    None => "null".into(),
                };
                write!(
                    s,
                    "  {{\"state\": {}, \"informal_outbreak\": {}, \"formal_outbreak\": {}, \"time_lag_days\": {}, \"improvement\": {}, \"tweet_total\": {}}}",
                    serde_json::to_string(&r.state_token).expect("string"),
                    quote_opt(&r.informal_date),
                    quote_opt(&r.formal_date),
                    r.lag_days.map(|l| l.to_string()).unwrap_or_else(|| "null".into()),
                    r.improvement
                        .map(|v| format!("{v:.6}"))
                        .unwrap_or_else(|| "null".into()),
                    r.tweet_total
                )
                .expect("string write");
                s.push_str(if i + 1 < rows.len() { ",\n" } else { "\n" });
            }
            s.push_str("]\n");
            w.write_all(s.as_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Parse a CSV report back into rows (lossy fields stay absent).
pub fn read_report_csv<R: std::io::Read>(r: R) -> Result<Vec<OutbreakReportRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Csv {
            path: "<report csv>".into(),
            source: e,
        })?;
        let date = |i: usize| -> Option<NaiveDate> {
            rec.get(i).filter(|s| !s.is_empty()).and_then(|s| s.parse().ok())
        };
        rows.push(OutbreakReportRow {
            state_token: rec.get(0).unwrap_or("").to_string(),
            informal_date: date(1),
            formal_date: date(2),
            lag_days: rec.get(3).filter(|s| !s.is_empty()).and_then(|s| s.parse().ok()),
            improvement: None,
            tweet_total: 0,
        });
    }
    Ok(rows)
}

/// Sorted (state, total) pairs, descending by total, state token as
/// tiebreaker.
pub fn state_distribution_summary(counts: &BTreeMap<String, DailySeries>) -> Vec<(String, u64)> {
    let mut rows: Vec<(String, u64)> = counts
        .iter()
        .map(|(token, s)| (token.clone(), s.total().round() as u64))
        .collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows
}

pub fn write_distribution_csv<W: Write>(mut w: W, rows: &[(String, u64)]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::io("<distribution csv>", e);
    writeln!(w, "state,total_tweets").map_err(io_err)?;
    for (state, total) in rows {
        writeln!(w, "\"{state}\",{total}").map_err(io_err)?;
    }
    Ok(())
}

const CHART_WIDTH: f64 = 960.0;
const CHART_HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 70.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

struct Scale {
    min: f64,
    max: f64,
    lo_px: f64,
    hi_px: f64,
}

impl Scale {
    fn project(&self, v: f64) -> f64 {
        if self.max == self.min {
            return self.lo_px;
        }
        self.lo_px + (v - self.min) / (self.max - self.min) * (self.hi_px - self.lo_px)
    }
}

fn fmt_px(v: f64) -> String {
    format!("{v:.2}")
}

fn polyline_points(series: &DailySeries, x: &Scale, y: &Scale, x0: NaiveDate) -> String {
    series
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let day = (series.date_at(i) - x0).num_days() as f64;
            format!("{},{}", fmt_px(x.project(day)), fmt_px(y.project(*v)))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Render a standalone dual-axis SVG: tweet counts (blue, left axis), case
/// counts (orange, right axis), the fitted linear trend (black), a red
/// vertical marker at the formal outbreak and a green one at the informal
/// outbreak. Elements carry stable ids (`tweet-line`, `case-line`,
/// `trend-line`, `formal-marker`, `informal-marker`).
pub fn render_chart(
    tweets: &DailySeries,
    cases: &DailySeries,
    result: Option<&ChangepointResult>,
    formal: Option<NaiveDate>,
    title: &str,
) -> Result<String> {
    if tweets.is_empty() || cases.is_empty() {
        return Err(Error::EmptySeries);
    }
    let x0 = tweets.start_date.min(cases.start_date);
    let x1 = tweets.end_date().max(cases.end_date());
    let total_days = (x1 - x0).num_days().max(1) as f64;

    let x = Scale {
        min: 0.0,
        max: total_days,
        lo_px: MARGIN_LEFT,
        hi_px: CHART_WIDTH - MARGIN_RIGHT,
    };
    let head = |m: f64| if m > 0.0 { m * 1.1 } else { 1.0 };
    let tweet_max = tweets.values.iter().cloned().fold(0.0, f64::max);
    let case_max = cases.values.iter().cloned().fold(0.0, f64::max);
    let y_left = Scale {
        min: 0.0,
        max: head(tweet_max),
        lo_px: CHART_HEIGHT - MARGIN_BOTTOM,
        hi_px: MARGIN_TOP,
    };
    let y_right = Scale {
        min: 0.0,
        max: head(case_max),
        lo_px: CHART_HEIGHT - MARGIN_BOTTOM,
        hi_px: MARGIN_TOP,
    };

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CHART_WIDTH}\" height=\"{CHART_HEIGHT}\" viewBox=\"0 0 {CHART_WIDTH} {CHART_HEIGHT}\">\n"
    );
    let _ = write!(
        svg,
        "  <title>{}</title>\n  <rect width=\"{CHART_WIDTH}\" height=\"{CHART_HEIGHT}\" fill=\"white\"/>\n",
        xml_escape(title)
    );
    let _ = write!(
        svg,
        "  <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        fmt_px(CHART_WIDTH / 2.0),
        xml_escape(title)
    );

    // axes
    let x_axis_y = CHART_HEIGHT - MARGIN_BOTTOM;
    let _ = write!(
        svg,
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt_px(MARGIN_LEFT),
        fmt_px(x_axis_y),
        fmt_px(CHART_WIDTH - MARGIN_RIGHT),
        fmt_px(x_axis_y)
    );
    let _ = write!(
        svg,
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt_px(MARGIN_LEFT),
        fmt_px(MARGIN_TOP),
        fmt_px(MARGIN_LEFT),
        fmt_px(x_axis_y)
    );
    let _ = write!(
        svg,
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt_px(CHART_WIDTH - MARGIN_RIGHT),
        fmt_px(MARGIN_TOP),
        fmt_px(CHART_WIDTH - MARGIN_RIGHT),
        fmt_px(x_axis_y)
    );

    // month ticks on the x axis
    let mut tick = x0;
    while tick <= x1 {
        if tick.day() == 1 || tick == x0 {
            let px = x.project((tick - x0).num_days() as f64);
            let _ = write!(
                svg,
                "  <line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n",
                fmt_px(px),
                fmt_px(x_axis_y),
                fmt_px(x_axis_y + 5.0)
            );
            let _ = write!(
                svg,
                "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                fmt_px(px),
                fmt_px(x_axis_y + 20.0),
                tick.format("%Y-%m-%d")
            );
        }
        tick += chrono::Duration::days(1);
    }

    // y tick labels: max values on each side
    let _ = write!(
        svg,
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#1f77b4\">{}</text>\n",
        fmt_px(MARGIN_LEFT - 6.0),
        fmt_px(MARGIN_TOP + 4.0),
        fmt_px(head(tweet_max))
    );
    let _ = write!(
        svg,
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"start\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#ff7f0e\">{}</text>\n",
        fmt_px(CHART_WIDTH - MARGIN_RIGHT + 6.0),
        fmt_px(MARGIN_TOP + 4.0),
        fmt_px(head(case_max))
    );
    let _ = write!(
        svg,
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">date</text>\n",
        fmt_px(CHART_WIDTH / 2.0),
        fmt_px(CHART_HEIGHT - 10.0)
    );
    let _ = write!(
        svg,
        "  <text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#1f77b4\">tweets/day</text>\n",
        fmt_px(CHART_HEIGHT / 2.0),
        fmt_px(CHART_HEIGHT / 2.0)
    );
    let _ = write!(
        svg,
        "  <text x=\"{}\" y=\"{}\" transform=\"rotate(90 {} {})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#ff7f0e\">cumulative cases</text>\n",
        fmt_px(CHART_WIDTH - 14.0),
        fmt_px(CHART_HEIGHT / 2.0),
        fmt_px(CHART_WIDTH - 14.0),
        fmt_px(CHART_HEIGHT / 2.0)
    );

    let _ = write!(
        svg,
        "  <polyline id=\"tweet-line\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        polyline_points(tweets, &x, &y_left, x0)
    );
    let _ = write!(
        svg,
        "  <polyline id=\"case-line\" fill=\"none\" stroke=\"#ff7f0e\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        polyline_points(cases, &x, &y_right, x0)
    );

    if let Some(cp) = result {
        // the linear fit spans the `n` days ending the day before the
        // informal date; reconstruct its segment from the fit parameters
        let seg_start = cp.informal_date - chrono::Duration::days(cp.linear.n as i64);
        let t_start = (seg_start - x0).num_days() as f64;
        let y_a = cp.linear.intercept;
        let y_b = cp.linear.intercept + cp.linear.slope * (cp.linear.n as f64 - 1.0);
        let _ = write!(
            svg,
            "  <line id=\"trend-line\" stroke=\"black\" stroke-width=\"1.5\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>\n",
            fmt_px(x.project(t_start)),
            fmt_px(y_left.project(y_a)),
            fmt_px(x.project(t_start + cp.linear.n as f64 - 1.0)),
            fmt_px(y_left.project(y_b))
        );
        let px = x.project((cp.informal_date - x0).num_days() as f64);
        let _ = write!(
            svg,
            "  <line id=\"informal-marker\" stroke=\"green\" stroke-width=\"1.5\" x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\"/>\n",
            fmt_px(px),
            fmt_px(MARGIN_TOP),
            fmt_px(x_axis_y)
        );
    }
    if let Some(f) = formal {
        let px = x.project((f - x0).num_days() as f64);
        let _ = write!(
            svg,
            "  <line id=\"formal-marker\" stroke=\"red\" stroke-width=\"1.5\" x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\"/>\n",
            fmt_px(px),
            fmt_px(MARGIN_TOP),
            fmt_px(x_axis_y)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
