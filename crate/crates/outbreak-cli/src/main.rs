//! `outbreak` — command-line surface over the outbreak library: ingest raw
//! tweet records and official case counts, detect formal and informal
//! outbreak dates per state, and emit reports and charts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use outbreak::detect::{
    analyze_state, detect_informal_outbreak, formal_outbreak_date, ChangepointResult,
    DetectorConfig,
};
use outbreak::geonorm::{normalize_location, Gazetteer, NormalizationOutcome};
use outbreak::ingest::{
    fetch_cases, filter_tweets, parse_case_csv, parse_tweet_file, CaseStats, IngestStats,
    TweetFormat, DEFAULT_KEYWORDS,
};
use outbreak::report::{
    render_chart, state_distribution_summary, write_distribution_csv, write_report,
    ReportFormat,
};
use outbreak::series::{
    daily_tweet_counts, state_case_series, write_series_csv, DailySeries, SeriesKind,
};
use outbreak::synth::{generate_cases, generate_tweets, SynthSpec};
use outbreak::DateRange;

/// Phrases that mention a keyword without reporting a symptom.
const DEFAULT_EXCLUSIONS: &[&str] = &["baby fever", "bieber fever", "cabin fever", "fever dream"];

const CACHE_MAX_AGE: Duration = Duration::from_secs(6 * 60 * 60);

#[derive(Parser)]
#[command(
    name = "outbreak",
    version,
    about = "Early outbreak detection from symptom-mention counts and official case data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write report, charts and summaries
    Run(CommonArgs),
    /// Download the case-count CSV into the cache and print its path
    FetchCases(CommonArgs),
    /// Parse, filter and normalize tweets; write per-state series and stats
    Ingest(CommonArgs),
    /// Detect the changepoint for one state and print it as JSON
    Detect(DetectArgs),
    /// Generate a seeded synthetic series
    Synth(SynthArgs),
    /// Render the chart for one state
    Chart(DetectArgs),
}

/// Flags shared by every subcommand; all optional so a config file can
/// supply them.
#[derive(Args, Clone)]
struct CommonArgs {
    /// Tweet record file (.jsonl or .csv)
    #[arg(long)]
    tweets: Option<PathBuf>,
    /// Case-count CSV (wide format, one row per county)
    #[arg(long)]
    cases: Option<PathBuf>,
    /// URL to download the case-count CSV from
    #[arg(long)]
    cases_url: Option<String>,
    /// Gazetteer CSV; defaults to the bundled one
    #[arg(long)]
    gazetteer: Option<PathBuf>,
    /// Comma-separated state tokens to keep (e.g. "New_York, USA")
    #[arg(long)]
    states: Option<String>,
    /// Formal outbreak case threshold
    #[arg(long)]
    threshold: Option<u32>,
    /// First day of the analysis window (YYYY-MM-DD)
    #[arg(long)]
    baseline_start: Option<NaiveDate>,
    #[arg(long)]
    min_linear_days: Option<usize>,
    #[arg(long)]
    min_exp_days: Option<usize>,
    #[arg(long)]
    improvement_min: Option<f64>,
    #[arg(long)]
    smoothing_window: Option<usize>,
    #[arg(long)]
    log_offset: Option<f64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: csv or json
    #[arg(long)]
    format: Option<String>,
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// State token, e.g. "California, USA"
    #[arg(long)]
    state: String,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 45)]
    length_days: usize,
    /// First day of the exponential segment; omit for linear throughout
    #[arg(long)]
    breakpoint: Option<usize>,
    #[arg(long, default_value_t = 30.0)]
    base_level: f64,
    #[arg(long, default_value_t = 0.1)]
    slope: f64,
    #[arg(long, default_value_t = 0.2)]
    growth_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "2019-12-01")]
    start_date: NaiveDate,
    /// Keep exact model values instead of rounding to whole counts
    #[arg(long)]
    no_round: bool,
    /// Also generate a cumulative case series crossing the threshold on this day
    #[arg(long)]
    cases_crossing: Option<usize>,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Fully resolved run configuration: defaults, then config file, then flags.
#[derive(Debug, Clone, Serialize)]
struct RunConfig {
    tweets: Option<PathBuf>,
    cases: Option<PathBuf>,
    cases_url: Option<String>,
    gazetteer: Option<PathBuf>,
    states: Option<Vec<String>>,
    threshold: u32,
    baseline_start: NaiveDate,
    min_linear_days: usize,
    min_exp_days: usize,
    improvement_min: f64,
    smoothing_window: usize,
    log_offset: f64,
    out: PathBuf,
    format: String,
}

impl RunConfig {
    fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            case_threshold: self.threshold,
            min_linear_days: self.min_linear_days,
            min_exp_days: self.min_exp_days,
            improvement_min: self.improvement_min,
            smoothing_window: self.smoothing_window,
            baseline_start: self.baseline_start,
            log_offset: self.log_offset,
        }
    }

    fn report_format(&self) -> Result<ReportFormat> {
        match self.format.as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => bail!("unknown report format {other:?} (expected csv or json)"),
        }
    }
}

fn resolve_config(args: &CommonArgs) -> Result<RunConfig> {
    let d = DetectorConfig::default();
    let mut cfg = RunConfig {
        tweets: None,
        cases: None,
        cases_url: None,
        gazetteer: None,
        states: None,
        threshold: d.case_threshold,
        baseline_start: d.baseline_start,
        min_linear_days: d.min_linear_days,
        min_exp_days: d.min_exp_days,
        improvement_min: d.improvement_min,
        smoothing_window: d.smoothing_window,
        log_offset: d.log_offset,
        out: PathBuf::from("out"),
        format: "csv".into(),
    };

    if let Some(path) = &args.config {
        let content = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let file: serde_json::Value = serde_json::from_str(&content)
            .with_context(|| format!("config file {} is not valid JSON", path.display()))?;
        let obj = file
            .as_object()
            .with_context(|| format!("config file {} must be a JSON object", path.display()))?;
        for (key, value) in obj {
            apply_config_key(&mut cfg, key, value)
                .with_context(|| format!("config file {}, key {key:?}", path.display()))?;
        }
    }

    if let Some(v) = &args.tweets {
        cfg.tweets = Some(v.clone());
    }
    if let Some(v) = &args.cases {
        cfg.cases = Some(v.clone());
    }
    if let Some(v) = &args.cases_url {
        cfg.cases_url = Some(v.clone());
    }
    if let Some(v) = &args.gazetteer {
        cfg.gazetteer = Some(v.clone());
    }
    if let Some(v) = &args.states {
        cfg.states = Some(parse_state_list(v));
    }
    if let Some(v) = args.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = args.baseline_start {
        cfg.baseline_start = v;
    }
    if let Some(v) = args.min_linear_days {
        cfg.min_linear_days = v;
    }
    if let Some(v) = args.min_exp_days {
        cfg.min_exp_days = v;
    }
    if let Some(v) = args.improvement_min {
        cfg.improvement_min = v;
    }
    if let Some(v) = args.smoothing_window {
        cfg.smoothing_window = v;
    }
    if let Some(v) = args.log_offset {
        cfg.log_offset = v;
    }
    if let Some(v) = &args.out {
        cfg.out = v.clone();
    }
    if let Some(v) = &args.format {
        cfg.format = v.clone();
    }
    Ok(cfg)
}

fn apply_config_key(cfg: &mut RunConfig, key: &str, value: &serde_json::Value) -> Result<()> {
    let as_str = || -> Result<String> {
        value
            .as_str()
            .map(String::from)
            .context("expected a string")
    };
    let as_u64 = || -> Result<u64> { value.as_u64().context("expected a non-negative integer") };
    let as_f64 = || -> Result<f64> { value.as_f64().context("expected a number") };
    match key {
        "tweets" => cfg.tweets = Some(PathBuf::from(as_str()?)),
        "cases" => cfg.cases = Some(PathBuf::from(as_str()?)),
        "cases_url" => cfg.cases_url = Some(as_str()?),
        "gazetteer" => cfg.gazetteer = Some(PathBuf::from(as_str()?)),
        "states" => cfg.states = Some(parse_state_list(&as_str()?)),
        "threshold" => cfg.threshold = as_u64()? as u32,
        "baseline_start" => {
            cfg.baseline_start = as_str()?
                .parse()
                .context("expected a YYYY-MM-DD date")?;
        }
        "min_linear_days" => cfg.min_linear_days = as_u64()? as usize,
        "min_exp_days" => cfg.min_exp_days = as_u64()? as usize,
        "improvement_min" => cfg.improvement_min = as_f64()?,
        "smoothing_window" => cfg.smoothing_window = as_u64()? as usize,
        "log_offset" => cfg.log_offset = as_f64()?,
        "out" => cfg.out = PathBuf::from(as_str()?),
        "format" => cfg.format = as_str()?,
        other => bail!("unknown config key {other:?}"),
    }
    Ok(())
}

/// Tokens contain a comma (`"New_York, USA"`), so the list separator is a
/// semicolon; a single token needs no separator at all.
fn parse_state_list(s: &str) -> Vec<String> {
    s.split(';')
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => resolve_config(&args).and_then(cmd_run),
        Command::FetchCases(args) => resolve_config(&args).and_then(cmd_fetch_cases),
        Command::Ingest(args) => resolve_config(&args).and_then(cmd_ingest),
        Command::Detect(args) => {
            resolve_config(&args.common).and_then(|cfg| cmd_detect(cfg, &args.state))
        }
        Command::Synth(args) => cmd_synth(&args),
        Command::Chart(args) => {
            resolve_config(&args.common).and_then(|cfg| cmd_chart(cfg, &args.state))
        }
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// Everything the pipeline derives from the raw inputs before detection.
struct PipelineData {
    tweet_counts: BTreeMap<String, DailySeries>,
    case_series: BTreeMap<String, DailySeries>,
    ingest_stats: IngestStats,
    case_stats: Option<CaseStats>,
    carry_warnings: usize,
    kept_records: usize,
    matched_records: usize,
    window: DateRange,
}

fn load_gazetteer(cfg: &RunConfig) -> Result<Gazetteer> {
    match &cfg.gazetteer {
        Some(path) => Gazetteer::compile_from_path(path)
            .with_context(|| format!("cannot load gazetteer {}", path.display())),
        None => Ok(Gazetteer::builtin()),
    }
}

fn tweet_format(path: &Path) -> TweetFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => TweetFormat::Csv,
        _ => TweetFormat::Jsonl,
    }
}

fn cache_dir(cfg: &RunConfig) -> PathBuf {
    std::env::var_os("OUTBREAK_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.out.join("cache"))
}

fn resolve_case_path(cfg: &RunConfig) -> Result<(PathBuf, bool)> {
    if let Some(path) = &cfg.cases {
        return Ok((path.clone(), false));
    }
    let Some(url) = &cfg.cases_url else {
        bail!("either --cases or --cases-url is required");
    };
    let outcome = fetch_cases(url, &cache_dir(cfg), CACHE_MAX_AGE)
        .with_context(|| format!("cannot fetch case data from {url}"))?;
    Ok((outcome.path, outcome.stale_cache_warning))
}

fn load_pipeline(cfg: &RunConfig) -> Result<PipelineData> {
    let tweets_path = cfg
        .tweets
        .as_ref()
        .context("--tweets is required")?;
    let study = DateRange::default_study_window();
    let (records, ingest_stats) =
        parse_tweet_file(tweets_path, tweet_format(tweets_path), &study)
            .with_context(|| format!("cannot read tweet file {}", tweets_path.display()))?;
    let records = filter_tweets(records, DEFAULT_KEYWORDS, DEFAULT_EXCLUSIONS);
    let kept_records = records.len();

    let gazetteer = load_gazetteer(cfg)?;
    let outcomes: Vec<NormalizationOutcome> = records
        .iter()
        .map(|r| normalize_location(&r.raw_location, &gazetteer))
        .collect();
    let matched_records = outcomes.iter().filter(|o| o.state_token.is_some()).count();

    let window = DateRange::new(cfg.baseline_start, study.end)
        .context("baseline start must not be after the study window end")?;
    let tweet_counts = daily_tweet_counts(&records, &outcomes, &window)?;

    let (case_series, case_stats, carry_warnings) = if cfg.cases.is_some()
        || cfg.cases_url.is_some()
    {
        let (path, stale) = resolve_case_path(cfg)?;
        if stale {
            eprintln!("warning: case download failed; using stale cached copy");
        }
        let (table, stats) = parse_case_csv(&path)
            .with_context(|| format!("cannot parse case file {}", path.display()))?;
        let (series, carries) = state_case_series(&table, &window);
        (series, Some(stats), carries)
    } else {
        (BTreeMap::new(), None, 0)
    };

    Ok(PipelineData {
        tweet_counts,
        case_series,
        ingest_stats,
        case_stats,
        carry_warnings,
        kept_records,
        matched_records,
        window,
    })
}

fn selected_tokens(cfg: &RunConfig, data: &PipelineData) -> Result<Vec<String>> {
    let mut tokens: Vec<String> = data.tweet_counts.keys().cloned().collect();
    if let Some(filter) = &cfg.states {
        tokens.retain(|t| filter.contains(t));
        for wanted in filter {
            if !data.tweet_counts.contains_key(wanted) {
                bail!("state {wanted:?} has no tweet data in this run");
            }
        }
    }
    Ok(tokens)
}

fn zero_cases(token: &str, window: &DateRange) -> DailySeries {
    DailySeries {
        state_token: token.to_string(),
        start_date: window.start,
        values: vec![0.0; window.len_days()],
        kind: SeriesKind::CumulativeCases,
    }
}

fn state_file_name(token: &str) -> String {
    let mut out = String::new();
    let mut last_underscore = false;
    for c in token.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
            last_underscore = false;
        } else if !last_underscore && !out.is_empty() {
            out.push('_');
            last_underscore = true;
        }
    }
    out.trim_end_matches('_').to_string()
}

fn ingest_stats_json(data: &PipelineData) -> serde_json::Value {
    serde_json::json!({
        "tweets": data.ingest_stats,
        "kept_after_filter": data.kept_records,
        "location_matched": data.matched_records,
        "location_unmatched": data.kept_records - data.matched_records,
        "cases": data.case_stats,
        "case_carry_forward_days": data.carry_warnings,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_run(cfg: RunConfig) -> Result<()> {
    let format = cfg.report_format()?;
    let data = load_pipeline(&cfg)?;
    let tokens = selected_tokens(&cfg, &data)?;
    let detector = cfg.detector();

    // Per-state analysis in parallel; results land keyed by token so output
    // order stays deterministic.
    let analyzed: Vec<Result<_>> = tokens
        .par_iter()
        .map(|token| {
            let tweets = &data.tweet_counts[token];
            let owned_cases;
            let cases = match data.case_series.get(token) {
                Some(c) => c,
                None => {
                    owned_cases = zero_cases(token, &data.window);
                    &owned_cases
                }
            };
            let row = analyze_state(tweets, cases, &detector)
                .with_context(|| format!("analysis failed for {token}"))?;
            let changepoint = detect_informal_outbreak(tweets, row.formal_date, &detector)?;
            let chart = render_chart(tweets, cases, changepoint.as_ref(), row.formal_date, token)
                .with_context(|| format!("chart failed for {token}"))?;
            Ok((row, chart))
        })
        .collect();

    let mut rows = Vec::with_capacity(tokens.len());
    let mut charts = Vec::with_capacity(tokens.len());
    for (token, result) in tokens.iter().zip(analyzed) {
        let (row, chart) = result?;
        rows.push(row);
        charts.push((token.clone(), chart));
    }

    // Stage the whole tree, then swap it in, so a failed run leaves nothing
    // half-written behind.
    let staging = cfg.out.with_file_name(format!(
        "{}.staging",
        cfg.out
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("out")
    ));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)
            .with_context(|| format!("cannot clear staging dir {}", staging.display()))?;
    }
    let write_all = || -> Result<()> {
        std::fs::create_dir_all(staging.join("charts"))?;

        let report_name = match format {
            ReportFormat::Csv => "report.csv",
            ReportFormat::Json => "report.json",
        };
        let mut buf = Vec::new();
        write_report(&rows, format, &mut buf)?;
        std::fs::write(staging.join(report_name), buf)?;

        for (token, chart) in &charts {
            let name = format!("{}.svg", state_file_name(token));
            std::fs::write(staging.join("charts").join(name), chart)?;
        }

        let distribution = state_distribution_summary(&data.tweet_counts);
        let mut buf = Vec::new();
        write_distribution_csv(&mut buf, &distribution)?;
        std::fs::write(staging.join("state_distribution.csv"), buf)?;

        write_json(
            &staging.join("resolved_config.json"),
            &serde_json::to_value(&cfg)?,
        )?;
        write_json(&staging.join("ingest_stats.json"), &ingest_stats_json(&data))?;
        Ok(())
    };
    if let Err(e) = write_all() {
        let _ = std::fs::remove_dir_all(&staging);
        return Err(e).context("failed writing outputs");
    }

    if cfg.out.exists() {
        std::fs::remove_dir_all(&cfg.out)
            .with_context(|| format!("cannot replace output dir {}", cfg.out.display()))?;
    }
    std::fs::rename(&staging, &cfg.out)
        .with_context(|| format!("cannot move outputs into {}", cfg.out.display()))?;

    println!(
        "{} state{} analyzed; report written to {}",
        rows.len(),
        if rows.len() == 1 { "" } else { "s" },
        cfg.out.display()
    );
    Ok(())
}

fn cmd_fetch_cases(cfg: RunConfig) -> Result<()> {
    let url = cfg
        .cases_url
        .as_ref()
        .context("--cases-url is required")?;
    let outcome = fetch_cases(url, &cache_dir(&cfg), CACHE_MAX_AGE)
        .with_context(|| format!("cannot fetch case data from {url}"))?;
    if outcome.stale_cache_warning {
        eprintln!("warning: download failed; using stale cached copy");
    }
    println!("{}", outcome.path.display());
    Ok(())
}

fn cmd_ingest(cfg: RunConfig) -> Result<()> {
    let data = load_pipeline(&cfg)?;
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("cannot create output dir {}", cfg.out.display()))?;

    let series_refs: Vec<&DailySeries> = data.tweet_counts.values().collect();
    let mut buf = Vec::new();
    write_series_csv(&mut buf, &series_refs)?;
    let series_path = cfg.out.join("tweet_series.csv");
    std::fs::write(&series_path, buf)
        .with_context(|| format!("cannot write {}", series_path.display()))?;

    write_json(&cfg.out.join("ingest_stats.json"), &ingest_stats_json(&data))?;
    println!(
        "{} states, {} matched records; series written to {}",
        data.tweet_counts.len(),
        data.matched_records,
        series_path.display()
    );
    Ok(())
}

fn cmd_detect(cfg: RunConfig, state: &str) -> Result<()> {
    let data = load_pipeline(&cfg)?;
    let tweets = data
        .tweet_counts
        .get(state)
        .with_context(|| format!("state {state:?} has no tweet data in this run"))?;
    let detector = cfg.detector();
    let formal = match data.case_series.get(state) {
        Some(cases) => formal_outbreak_date(cases, detector.case_threshold)?,
        None => None,
    };
    let changepoint: Option<ChangepointResult> =
        detect_informal_outbreak(tweets, formal, &detector)?;
    let value = serde_json::json!({
        "state": state,
        "formal_date": formal,
        "changepoint": changepoint,
    });
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn cmd_chart(cfg: RunConfig, state: &str) -> Result<()> {
    let data = load_pipeline(&cfg)?;
    let tweets = data
        .tweet_counts
        .get(state)
        .with_context(|| format!("state {state:?} has no tweet data in this run"))?;
    let owned_cases;
    let cases = match data.case_series.get(state) {
        Some(c) => c,
        None => {
            owned_cases = zero_cases(state, &data.window);
            &owned_cases
        }
    };
    let detector = cfg.detector();
    let formal = formal_outbreak_date(cases, detector.case_threshold)?;
    let changepoint = detect_informal_outbreak(tweets, formal, &detector)?;
    let svg = render_chart(tweets, cases, changepoint.as_ref(), formal, state)?;

    let dir = cfg.out.join("charts");
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(format!("{}.svg", state_file_name(state)));
    std::fs::write(&path, svg).with_context(|| format!("cannot write {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        length_days: args.length_days,
        breakpoint: args.breakpoint,
        base_level: args.base_level,
        slope: args.slope,
        growth_rate: args.growth_rate,
        noise_sigma: args.noise_sigma,
        seed: args.seed,
        start_date: args.start_date,
        round_to_counts: !args.no_round,
    };
    let tweets = generate_tweets(&spec)?;
    let cases = args
        .cases_crossing
        .map(|day| generate_cases(args.length_days, day, args.start_date))
        .transpose()?;

    let mut series: Vec<&DailySeries> = vec![&tweets];
    if let Some(c) = &cases {
        series.push(c);
    }
    let mut buf = Vec::new();
    write_series_csv(&mut buf, &series)?;
    match &args.out {
        Some(path) => std::fs::write(path, buf)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&buf)?;
        }
    }
    Ok(())
}
