//! Randomized invariants over the filtering, smoothing, counting and
//! geo-normalization layers.

use chrono::{NaiveDate, TimeZone, Utc};
use outbreak::detect::compute_lag;
use outbreak::geonorm::{normalize_location, Gazetteer};
use outbreak::ingest::{filter_tweets, tokenize, TweetRecord, DEFAULT_KEYWORDS};
use outbreak::series::{daily_tweet_counts, smooth, DailySeries, SeriesKind};
use outbreak::DateRange;
use proptest::prelude::*;

fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
}

fn record(i: usize, day_offset: i64, location: &str, text: &str) -> TweetRecord {
    TweetRecord {
        id: format!("t{i}"),
        timestamp: Utc.with_ymd_and_hms(2020, 1, 1, 12, 0, 0).unwrap()
            + chrono::Duration::days(day_offset),
        raw_location: location.to_string(),
        text: text.to_string(),
    }
}

fn text_strategy() -> impl Strategy<Value = String> {
    // words drawn from a pool that includes keywords, exclusion triggers and
    // filler, joined with assorted separators
    let word = prop::sample::select(vec![
        "fever", "cough", "Fever!", "COUGH", "baby", "bieber", "is", "real",
        "today", "awful", "sick", "coffee", "yellow",
    ]);
    (prop::collection::vec(word, 0..8)).prop_map(|ws| ws.join(" "))
}

proptest! {
    #[test]
    fn filter_output_is_subsequence_and_idempotent(texts in prop::collection::vec(text_strategy(), 0..40)) {
        let records: Vec<TweetRecord> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| record(i, (i % 5) as i64, "Los Angeles CA", t))
            .collect();
        let exclusions = ["baby fever", "bieber fever"];
        let kept = filter_tweets(records.clone(), DEFAULT_KEYWORDS, &exclusions);

        // subsequence of the input, order preserved
        let mut it = records.iter();
        for k in &kept {
            prop_assert!(it.any(|r| r.id == k.id));
        }
        // every kept record has a keyword and no exclusion phrase
        for k in &kept {
            let toks = tokenize(&k.text);
            prop_assert!(toks.iter().any(|t| t == "fever" || t == "cough"));
            for phrase in &exclusions {
                let p = tokenize(phrase);
                prop_assert!(!toks.windows(p.len()).any(|w| w == p.as_slice()));
            }
        }
        // idempotent
        let again = filter_tweets(kept.clone(), DEFAULT_KEYWORDS, &exclusions);
        prop_assert_eq!(again, kept);
    }

    #[test]
    fn smooth_stays_in_range_and_preserves_constants(
        values in prop::collection::vec(0.0f64..500.0, 13..80),
        half in 0usize..6,
    ) {
        let window = 2 * half + 1; // smoothing windows must be odd
        let series = DailySeries {
            state_token: "California, USA".into(),
            start_date: base_date(),
            values: values.clone(),
            kind: SeriesKind::TweetCount,
        };
        let s = smooth(&series, window).unwrap();
        prop_assert_eq!(s.values.len(), values.len());
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in &s.values {
            prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
        }
        // window 1 is the identity
        let id = smooth(&series, 1).unwrap();
        prop_assert_eq!(id.values, values.clone());
        // constant series are fixed points
        let flat = DailySeries { values: vec![7.0; values.len()], ..series.clone() };
        let sf = smooth(&flat, window).unwrap();
        for v in &sf.values {
            prop_assert!((v - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn daily_counts_conserve_mass(
        days in prop::collection::vec(0i64..30, 0..60),
        locs in prop::collection::vec(
            prop::sample::select(vec!["nyc", "Los Angeles CA", "mars colony", "chicago"]),
            0..60,
        ),
    ) {
        let n = days.len().min(locs.len());
        let g = Gazetteer::builtin();
        let records: Vec<TweetRecord> = (0..n)
            .map(|i| record(i, days[i], locs[i], "fever"))
            .collect();
        let outcomes: Vec<_> = records
            .iter()
            .map(|r| normalize_location(&r.raw_location, &g))
            .collect();
        let window = DateRange::new(
            base_date(),
            base_date() + chrono::Duration::days(29),
        ).unwrap();
        let matched = outcomes.iter().filter(|o| o.state_token.is_some()).count();
        let map = daily_tweet_counts(&records, &outcomes, &window).unwrap();
        let total: f64 = map.values().map(|s| s.total()).sum();
        prop_assert_eq!(total as usize, matched);
        for (token, series) in &map {
            prop_assert_eq!(&series.state_token, token);
            prop_assert_eq!(series.values.len(), 30);
            prop_assert!(series.values.iter().all(|v| *v >= 0.0 && v.fract() == 0.0));
        }
    }

    #[test]
    fn normalization_is_stable_under_case_and_spacing(raw in "[a-zA-Z, .]{0,40}") {
        let g = Gazetteer::builtin();
        let a = normalize_location(&raw, &g);
        let b = normalize_location(&raw.to_uppercase(), &g);
        let c = normalize_location(&format!("  {raw}  "), &g);
        prop_assert_eq!(&a.state_token, &b.state_token);
        prop_assert_eq!(&a.state_token, &c.state_token);
        // repeated calls agree
        prop_assert_eq!(a.state_token, normalize_location(&raw, &g).state_token);
    }

    #[test]
    fn lag_is_signed_day_difference(a in 0i64..400, b in 0i64..400) {
        let d0 = base_date() + chrono::Duration::days(a);
        let d1 = base_date() + chrono::Duration::days(b);
        prop_assert_eq!(compute_lag(d0, d1), b - a);
        prop_assert_eq!(compute_lag(d0, d1), -compute_lag(d1, d0));
        prop_assert_eq!(compute_lag(d0, d0), 0);
    }
}
