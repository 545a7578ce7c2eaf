//! File-based ingestion of raw tweet records and cumulative case CSVs.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::dates::DateRange;
use crate::error::{Error, Result};

/// One symptom-mention post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub raw_location: String,
    pub text: String,
}

impl TweetRecord {
    /// UTC calendar day the record is attributed to.
    pub fn day(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub total_lines: usize,
    pub parsed: usize,
    pub rejected_window: usize,
    pub malformed: usize,
    pub duplicate_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TweetFormat {
    Jsonl,
    Csv,
}

#[derive(Deserialize)]
struct RawTweet {
    id: String,
    created_at: String,
    location: String,
    text: String,
}

fn record_from_raw(raw: RawTweet) -> Option<TweetRecord> {
    if raw.id.is_empty() {
        return None;
    }
    let ts = DateTime::parse_from_rfc3339(&raw.created_at).ok()?;
    Some(TweetRecord {
        id: raw.id,
        timestamp: ts.with_timezone(&Utc),
        raw_location: raw.location,
        text: raw.text,
    })
}

/// Parse a tweet record file. Malformed lines are skipped and counted;
/// records outside the study window are rejected and counted. Only an
/// unreadable file is fatal.
pub fn parse_tweet_file(
    path: &Path,
    format: TweetFormat,
    window: &DateRange,
) -> Result<(Vec<TweetRecord>, IngestStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut stats = IngestStats::default();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut out = Vec::new();

    let mut push = |raw: Option<RawTweet>, stats: &mut IngestStats| {
        let rec = match raw.and_then(record_from_raw) {
            Some(r) => r,
            None => {
                stats.malformed += 1;
                return;
            }
        };
        if !window.contains(rec.day()) {
            stats.rejected_window += 1;
            return;
        }
        if !seen_ids.insert(rec.id.clone()) {
            stats.duplicate_id += 1;
            return;
        }
        stats.parsed += 1;
        out.push(rec);
    };

    match format {
        TweetFormat::Jsonl => {
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                stats.total_lines += 1;
                push(serde_json::from_str::<RawTweet>(&line).ok(), &mut stats);
            }
        }
        TweetFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
            let headers = rdr
                .headers()
                .map_err(|e| Error::Csv {
                    path: path.into(),
                    source: e,
                })?
                .clone();
            for rec in rdr.records() {
                stats.total_lines += 1;
                let raw = rec
                    .ok()
                    .and_then(|r| r.deserialize::<RawTweet>(Some(&headers)).ok());
                push(raw, &mut stats);
            }
        }
    }
    Ok((out, stats))
}

/// Serialize records back to disk in either supported format.
pub fn write_tweet_file(path: &Path, records: &[TweetRecord], format: TweetFormat) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        TweetFormat::Jsonl => {
            for r in records {
                let obj = serde_json::json!({
                    "id": r.id,
                    "created_at": r.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                    "location": r.raw_location,
                    "text": r.text,
                });
                writeln!(file, "{obj}").map_err(|e| Error::io(path, e))?;
            }
        }
        TweetFormat::Csv => {
            let mut w = csv::Writer::from_writer(file);
            w.write_record(["id", "created_at", "location", "text"])
                .map_err(|e| Error::Csv {
                    path: path.into(),
                    source: e,
                })?;
            for r in records {
                w.write_record([
                    r.id.as_str(),
                    &r.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                    r.raw_location.as_str(),
                    r.text.as_str(),
                ])
                .map_err(|e| Error::Csv {
                    path: path.into(),
                    source: e,
                })?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

/// Lowercased word-boundary tokens: split on any non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Keep records whose text contains at least one keyword token and no
/// exclusion phrase. Exclusion phrases match as contiguous token
/// subsequences, case-insensitively.
pub fn filter_tweets(
    records: Vec<TweetRecord>,
    keywords: &[&str],
    exclusions: &[&str],
) -> Vec<TweetRecord> {
    let keyword_set: HashSet<String> = keywords.iter().map(|k| k.to_lowercase()).collect();
    let exclusion_tokens: Vec<Vec<String>> = exclusions
        .iter()
        .map(|p| tokenize(p))
        .filter(|t| !t.is_empty())
        .collect();

    records
        .into_iter()
        .filter(|r| {
            let tokens = tokenize(&r.text);
            if !tokens.iter().any(|t| keyword_set.contains(t)) {
                return false;
            }
            !exclusion_tokens.iter().any(|phrase| {
                tokens
                    .windows(phrase.len())
                    .any(|w| w == phrase.as_slice())
            })
        })
        .collect()
}

pub const DEFAULT_KEYWORDS: &[&str] = &["fever", "cough"];

/// One (state, county, date) cumulative case observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseEntry {
    pub province_state: String,
    pub county: String,
    pub date: NaiveDate,
    pub cumulative_cases: u64,
}

#[derive(Debug, Clone, Default)]
pub struct CaseTable {
    pub entries: Vec<CaseEntry>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CaseStats {
    pub data_rows: usize,
    pub date_columns: usize,
    pub cell_warnings: usize,
    pub monotonicity_repairs: usize,
}

/// Parse a date column header of the form M/D/YY (no zero padding).
fn parse_date_header(h: &str) -> Option<NaiveDate> {
    let mut parts = h.split('/');
    let m: u32 = parts.next()?.parse().ok()?;
    let d: u32 = parts.next()?.parse().ok()?;
    let y: i32 = parts.next()?.parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    NaiveDate::from_ymd_opt(2000 + y, m, d)
}

/// Parse a wide-format cumulative case CSV: one row per county, one column
/// per date. Non-integer or negative cells become 0 with a counted warning;
/// per-(state, county) series are repaired to be non-decreasing with a
/// running maximum.
pub fn parse_case_csv(path: &Path) -> Result<(CaseTable, CaseStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?
        .clone();

    let state_col = headers
        .iter()
        .position(|h| h == "Province_State")
        .ok_or_else(|| Error::MissingColumn {
            column: "Province_State".into(),
            path: path.into(),
        })?;
    let county_col = headers.iter().position(|h| h == "Admin2");

    // A column is a date column iff its header starts with a digit; any such
    // header that then fails to parse as M/D/YY is fatal.
    let mut date_cols: Vec<(usize, NaiveDate)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if h.chars().next().is_some_and(|c| c.is_ascii_digit()) {
            let d = parse_date_header(h).ok_or_else(|| Error::BadDateHeader {
                header: h.to_string(),
                path: path.into(),
            })?;
            date_cols.push((i, d));
        }
    }

    let mut stats = CaseStats {
        date_columns: date_cols.len(),
        ..Default::default()
    };
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?;
        stats.data_rows += 1;
        let state = rec.get(state_col).unwrap_or("").to_string();
        let county = county_col
            .and_then(|c| rec.get(c))
            .unwrap_or("")
            .to_string();
        let mut running_max: u64 = 0;
        for &(col, date) in &date_cols {
            let cell = rec.get(col).unwrap_or("");
            let value = match cell.trim().parse::<i64>() {
                Ok(v) if v >= 0 => v as u64,
                _ => {
                    stats.cell_warnings += 1;
                    0
                }
            };
            let repaired = if value < running_max {
                stats.monotonicity_repairs += 1;
                running_max
            } else {
                running_max = value;
                value
            };
            entries.push(CaseEntry {
                province_state: state.clone(),
                county: county.clone(),
                date,
                cumulative_cases: repaired,
            });
        }
    }
    Ok((CaseTable { entries }, stats))
}

#[derive(Debug)]
pub struct FetchOutcome {
    pub path: PathBuf,
    /// Set when the download failed and a stale cached copy was used instead.
    pub stale_cache_warning: bool,
}

fn cache_file_name(url: &str) -> String {
    // FNV-1a, pinned here so cache names are stable across builds.
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in url.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    let tail: String = url
        .rsplit('/')
        .next()
        .unwrap_or("download")
        .chars()
        .filter(|c| c.is_ascii_alphanumeric() || *c == '.' || *c == '-' || *c == '_')
        .take(64)
        .collect();
    format!("{hash:016x}-{tail}")
}

struct CacheLock(PathBuf);

impl CacheLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let lock_path = dir.join(".lock");
        let deadline = std::time::Instant::now() + Duration::from_secs(30);
        loop {
            match std::fs::OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(&lock_path)
            {
                Ok(_) => return Ok(CacheLock(lock_path)),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if std::time::Instant::now() > deadline {
                        return Err(Error::io(
                            &lock_path,
                            std::io::Error::new(
                                std::io::ErrorKind::TimedOut,
                                "cache lock held too long",
                            ),
                        ));
                    }
                    std::thread::sleep(Duration::from_millis(50));
                }
                Err(e) => return Err(Error::io(&lock_path, e)),
            }
        }
    }
}

impl Drop for CacheLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

/// Download `url` into `cache_dir` unless a copy newer than `max_age` is
/// already there. The write is atomic (temp file + rename). On a failed
/// download a stale cached copy is still returned, with a warning flag.
pub fn fetch_cases(url: &str, cache_dir: &Path, max_age: Duration) -> Result<FetchOutcome> {
    std::fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    let _lock = CacheLock::acquire(cache_dir)?;
    let target = cache_dir.join(cache_file_name(url));

    let cached_age = target
        .metadata()
        .and_then(|m| m.modified())
        .ok()
        .and_then(|t| t.elapsed().ok());
    if let Some(age) = cached_age {
        if age <= max_age {
            return Ok(FetchOutcome {
                path: target,
                stale_cache_warning: false,
            });
        }
    }

    let download = || -> std::result::Result<Vec<u8>, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| e.to_string())?;
        let resp = client.get(url).send().map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("HTTP {}", resp.status()));
        }
        let mut body = Vec::new();
        let mut r = resp;
        r.read_to_end(&mut body).map_err(|e| e.to_string())?;
        Ok(body)
    };

    match download() {
        Ok(body) => {
            let tmp = target.with_extension("part");
            std::fs::write(&tmp, &body).map_err(|e| Error::io(&tmp, e))?;
            std::fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
            Ok(FetchOutcome {
                path: target,
                stale_cache_warning: false,
            })
        }
        Err(reason) => {
            if target.exists() {
                Ok(FetchOutcome {
                    path: target,
                    stale_cache_warning: true,
                })
            } else {
                Err(Error::Fetch {
                    url: url.to_string(),
                    reason,
                    retryable: true,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window() -> DateRange {
        DateRange::default_study_window()
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn parses_quoted_example_line() {
        let f = write_lines(&[
            r#"{"id":"1","created_at":"2020-01-01T07:02:00Z","location":"Denver, CO","text":"Starting the new year off right with a cough and fever!"}"#,
        ]);
        let (recs, stats) = parse_tweet_file(f.path(), TweetFormat::Jsonl, &window()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].raw_location, "Denver, CO");
        assert_eq!(stats.parsed, 1);
        assert_eq!(stats.malformed, 0);
    }

    #[test]
    fn empty_file_gives_zero_stats() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let (recs, stats) = parse_tweet_file(f.path(), TweetFormat::Jsonl, &window()).unwrap();
        assert!(recs.is_empty());
        assert_eq!(stats, IngestStats::default());
    }

    #[test]
    fn malformed_line_is_skipped_not_fatal() {
        let f = write_lines(&[
            r#"{"id":"1","created_at":"2020-01-01T07:02:00Z","location":"","text":"fever"}"#,
            r#"{"id":"2", broken"#,
            r#"{"id":"3","created_at":"2020-01-02T07:02:00Z","location":"","text":"cough"}"#,
        ]);
        let (recs, stats) = parse_tweet_file(f.path(), TweetFormat::Jsonl, &window()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(stats.malformed, 1);
        assert_eq!(stats.total_lines, 3);
    }

    #[test]
    fn out_of_window_rejected_with_count() {
        let f = write_lines(&[
            r#"{"id":"1","created_at":"2019-08-15T00:00:00Z","location":"","text":"fever"}"#,
        ]);
        let (recs, stats) = parse_tweet_file(f.path(), TweetFormat::Jsonl, &window()).unwrap();
        assert!(recs.is_empty());
        assert_eq!(stats.rejected_window, 1);
    }

    #[test]
    fn duplicate_ids_counted_once() {
        let f = write_lines(&[
            r#"{"id":"1","created_at":"2020-01-01T00:00:00Z","location":"","text":"fever"}"#,
            r#"{"id":"1","created_at":"2020-01-02T00:00:00Z","location":"","text":"cough"}"#,
        ]);
        let (recs, stats) = parse_tweet_file(f.path(), TweetFormat::Jsonl, &window()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(stats.duplicate_id, 1);
    }

    #[test]
    fn missing_file_is_fatal() {
        let e = parse_tweet_file(
            Path::new("/nonexistent/tweets.jsonl"),
            TweetFormat::Jsonl,
            &window(),
        );
        assert!(e.is_err());
    }

    #[test]
    fn csv_round_trip_is_identity() {
        let f = write_lines(&[
            r#"{"id":"1","created_at":"2020-01-01T07:02:00Z","location":"Denver, CO","text":"a cough, and \"fever\""}"#,
            r#"{"id":"2","created_at":"2020-02-03T10:00:00+01:00","location":"","text":"fever"}"#,
        ]);
        let (recs, _) = parse_tweet_file(f.path(), TweetFormat::Jsonl, &window()).unwrap();
        for fmt in [TweetFormat::Jsonl, TweetFormat::Csv] {
            let out = tempfile::NamedTempFile::new().unwrap();
            write_tweet_file(out.path(), &recs, fmt).unwrap();
            let (back, _) = parse_tweet_file(out.path(), fmt, &window()).unwrap();
            assert_eq!(back, recs);
        }
    }

    fn rec(id: &str, text: &str) -> TweetRecord {
        TweetRecord {
            id: id.into(),
            timestamp: "2020-01-01T00:00:00Z".parse().unwrap(),
            raw_location: String::new(),
            text: text.into(),
        }
    }

    #[test]
    fn filter_keeps_keyword_matches() {
        let recs = vec![
            rec("1", "Starting the new year off right with a cough and fever!"),
            rec("2", "I love coffee"),
            rec("3", "COUGHING all night"),
        ];
        let kept = filter_tweets(recs, DEFAULT_KEYWORDS, &[]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "1");
    }

    #[test]
    fn exclusion_phrase_drops_record() {
        let recs = vec![rec("1", "baby fever is real"), rec("2", "real fever")];
        let kept = filter_tweets(recs, DEFAULT_KEYWORDS, &["baby fever"]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "2");
    }

    #[test]
    fn filter_is_idempotent_and_order_preserving() {
        let recs = vec![
            rec("1", "fever day"),
            rec("2", "nothing"),
            rec("3", "cough cough"),
            rec("4", "a Fever!"),
        ];
        let once = filter_tweets(recs, DEFAULT_KEYWORDS, &[]);
        let ids: Vec<_> = once.iter().map(|r| r.id.clone()).collect();
        assert_eq!(ids, ["1", "3", "4"]);
        let twice = filter_tweets(once.clone(), DEFAULT_KEYWORDS, &[]);
        assert_eq!(twice, once);
    }

    #[test]
    fn case_csv_small_fixture() {
        let f = write_lines(&[
            "Admin2,Province_State,1/22/20,1/23/20",
            "Denver,Colorado,0,1",
        ]);
        let (table, stats) = parse_case_csv(f.path()).unwrap();
        assert_eq!(table.entries.len(), 2);
        assert_eq!(stats.data_rows * stats.date_columns, table.entries.len());
        let e = &table.entries[1];
        assert_eq!(e.province_state, "Colorado");
        assert_eq!(e.county, "Denver");
        assert_eq!(e.date, NaiveDate::from_ymd_opt(2020, 1, 23).unwrap());
        assert_eq!(e.cumulative_cases, 1);
    }

    #[test]
    fn case_csv_header_only() {
        let f = write_lines(&["Admin2,Province_State,1/22/20"]);
        let (table, _) = parse_case_csv(f.path()).unwrap();
        assert!(table.entries.is_empty());
    }

    #[test]
    fn negative_and_junk_cells_become_zero_with_warning() {
        let f = write_lines(&["Province_State,1/22/20,1/23/20", "Colorado,-3,x"]);
        let (table, stats) = parse_case_csv(f.path()).unwrap();
        assert_eq!(table.entries[0].cumulative_cases, 0);
        assert_eq!(table.entries[1].cumulative_cases, 0);
        assert_eq!(stats.cell_warnings, 2);
    }

    #[test]
    fn monotonicity_is_repaired_with_running_max() {
        let f = write_lines(&["Province_State,1/22/20,1/23/20,1/24/20", "Colorado,5,3,7"]);
        let (table, stats) = parse_case_csv(f.path()).unwrap();
        let vals: Vec<u64> = table.entries.iter().map(|e| e.cumulative_cases).collect();
        assert_eq!(vals, [5, 5, 7]);
        assert_eq!(stats.monotonicity_repairs, 1);
    }

    #[test]
    fn missing_state_column_is_fatal() {
        let f = write_lines(&["Admin2,1/22/20", "Denver,1"]);
        assert!(matches!(
            parse_case_csv(f.path()),
            Err(Error::MissingColumn { .. })
        ));
    }

    #[test]
    fn bad_date_header_is_fatal() {
        let f = write_lines(&["Province_State,13/45/20", "Colorado,1"]);
        assert!(matches!(
            parse_case_csv(f.path()),
            Err(Error::BadDateHeader { .. })
        ));
    }

    #[test]
    fn fetch_uses_fresh_cache_without_network() {
        let dir = tempfile::tempdir().unwrap();
        let url = "http://127.0.0.1:9/cases.csv"; // port 9: nothing listens
        let cached = dir.path().join(cache_file_name(url));
        std::fs::write(&cached, "data").unwrap();
        let out = fetch_cases(url, dir.path(), Duration::from_secs(3600)).unwrap();
        assert_eq!(out.path, cached);
        assert!(!out.stale_cache_warning);
    }

    #[test]
    fn fetch_failure_with_stale_cache_warns() {
        let dir = tempfile::tempdir().unwrap();
        let url = "http://127.0.0.1:9/cases.csv";
        let cached = dir.path().join(cache_file_name(url));
        std::fs::write(&cached, "old data").unwrap();
        let out = fetch_cases(url, dir.path(), Duration::ZERO).unwrap();
        assert!(out.stale_cache_warning);
        assert_eq!(std::fs::read_to_string(out.path).unwrap(), "old data");
    }

    #[test]
    fn fetch_failure_without_cache_is_fatal_and_retryable() {
        let dir = tempfile::tempdir().unwrap();
        let e = fetch_cases(
            "http://127.0.0.1:9/cases.csv",
            dir.path(),
            Duration::from_secs(1),
        );
        match e {
            Err(Error::Fetch { retryable, .. }) => assert!(retryable),
            other => panic!("expected fetch error, got {other:?}"),
        }
    }

    #[test]
    fn fetch_downloads_from_local_server() {
        use std::net::TcpListener;
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut sock, _) = listener.accept().unwrap();
            let mut buf = [0u8; 1024];
            let _ = std::io::Read::read(&mut sock, &mut buf);
            let body = "Province_State,1/22/20\nColorado,1\n";
            let resp = format!(
                "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                body.len(),
                body
            );
            std::io::Write::write_all(&mut sock, resp.as_bytes()).unwrap();
        });
        let dir = tempfile::tempdir().unwrap();
        let url = format!("http://{addr}/cases.csv");
        let out = fetch_cases(&url, dir.path(), Duration::from_secs(3600)).unwrap();
        handle.join().unwrap();
        let content = std::fs::read_to_string(out.path).unwrap();
        assert!(content.starts_with("Province_State"));
    }
}
