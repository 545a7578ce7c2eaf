//! Canonicalization of free-text locations to `State_Name, USA` tokens.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// The 50 states plus the District of Columbia, with USPS abbreviations.
pub const STATE_NAMES: &[(&str, &str)] = &[
    ("Alabama", "AL"),
    ("Alaska", "AK"),
    ("Arizona", "AZ"),
    ("Arkansas", "AR"),
    ("California", "CA"),
    ("Colorado", "CO"),
    ("Connecticut", "CT"),
    ("Delaware", "DE"),
    ("Florida", "FL"),
    ("Georgia", "GA"),
    ("Hawaii", "HI"),
    ("Idaho", "ID"),
    ("Illinois", "IL"),
    ("Indiana", "IN"),
    ("Iowa", "IA"),
    ("Kansas", "KS"),
    ("Kentucky", "KY"),
    ("Louisiana", "LA"),
    ("Maine", "ME"),
    ("Maryland", "MD"),
    ("Massachusetts", "MA"),
    ("Michigan", "MI"),
    ("Minnesota", "MN"),
    ("Mississippi", "MS"),
    ("Missouri", "MO"),
    ("Montana", "MT"),
    ("Nebraska", "NE"),
    ("Nevada", "NV"),
    ("New Hampshire", "NH"),
    ("New Jersey", "NJ"),
    ("New Mexico", "NM"),
    ("New York", "NY"),
    ("North Carolina", "NC"),
    ("North Dakota", "ND"),
    ("Ohio", "OH"),
    ("Oklahoma", "OK"),
    ("Oregon", "OR"),
    ("Pennsylvania", "PA"),
    ("Rhode Island", "RI"),
    ("South Carolina", "SC"),
    ("South Dakota", "SD"),
    ("Tennessee", "TN"),
    ("Texas", "TX"),
    ("Utah", "UT"),
    ("Vermont", "VT"),
    ("Virginia", "VA"),
    ("Washington", "WA"),
    ("West Virginia", "WV"),
    ("Wisconsin", "WI"),
    ("Wyoming", "WY"),
    ("District of Columbia", "DC"),
];

/// Canonical token for a full state name: `New York` -> `New_York, USA`.
pub fn token_for_state_name(name: &str) -> String {
    format!("{}, USA", name.replace(' ', "_"))
}

/// Maps a case-table `Province_State` value to its state token; non-state
/// rows (cruise ships, territories outside the 51-token set) get `None`.
pub fn state_token_for_case_row(province_state: &str) -> Option<String> {
    let trimmed = province_state.trim();
    STATE_NAMES
        .iter()
        .find(|(name, _)| *name == trimmed)
        .map(|(name, _)| token_for_state_name(name))
}

/// Lowercase, strip punctuation, collapse whitespace.
pub fn normalize_pattern(s: &str) -> String {
    let lowered = s.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    let mut pending_space = false;
    for c in lowered.chars() {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Rule {
    pattern: String, // normalized
    state_token: String,
}

#[derive(Debug, Clone)]
pub struct Gazetteer {
    rules: Vec<Rule>,
    by_pattern: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NormalizationOutcome {
    pub state_token: Option<String>,
    pub matched_rule: Option<String>,
    pub raw: String,
}

impl Gazetteer {
    pub fn compile_from_path(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::compile(&content)
    }

    /// The gazetteer shipped with the crate: all state names, USPS
    /// abbreviations and the known metro-area aliases.
    pub fn builtin() -> Self {
        Self::compile(include_str!("../data/gazetteer.csv"))
            .expect("bundled gazetteer must compile")
    }

    /// Compile gazetteer CSV content (`pattern,state_token`, `#` comments).
    pub fn compile(content: &str) -> Result<Self> {
        let filtered: String = content
            .lines()
            .map(|l| if l.starts_with('#') { "" } else { l })
            .collect::<Vec<_>>()
            .join("\n");
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(false)
            .from_reader(filtered.as_bytes());

        let valid_tokens: Vec<String> = STATE_NAMES
            .iter()
            .map(|(name, _)| token_for_state_name(name))
            .collect();

        let mut rules = Vec::new();
        let mut by_pattern: HashMap<String, usize> = HashMap::new();
        let mut line_of: HashMap<String, usize> = HashMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Csv {
                path: "<gazetteer>".into(),
                source: e,
            })?;
            let line = i + 2; // 1-based, after header
            let raw_pattern = rec.get(0).unwrap_or("").trim();
            let token = rec.get(1).unwrap_or("").trim();
            if raw_pattern.is_empty() && token.is_empty() {
                continue;
            }
            if !valid_tokens.iter().any(|t| t == token) {
                return Err(Error::UnknownStateToken {
                    token: token.to_string(),
                    line,
                });
            }
            let pattern = normalize_pattern(raw_pattern);
            if let Some(&first) = line_of.get(&pattern) {
                return Err(Error::DuplicatePattern {
                    pattern,
                    first_line: first,
                    second_line: line,
                });
            }
            line_of.insert(pattern.clone(), line);
            by_pattern.insert(pattern.clone(), rules.len());
            rules.push(Rule {
                pattern,
                state_token: token.to_string(),
            });
        }
        Ok(Gazetteer { rules, by_pattern })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    fn outcome(&self, rule_idx: usize, raw: &str) -> NormalizationOutcome {
        let rule = &self.rules[rule_idx];
        NormalizationOutcome {
            state_token: Some(rule.state_token.clone()),
            matched_rule: Some(rule.pattern.clone()),
            raw: raw.to_string(),
        }
    }

    /// First rule (in gazetteer order) whose pattern equals any of the
    /// candidate strings.
    fn best_rule(&self, candidates: &[String]) -> Option<usize> {
        candidates
            .iter()
            .filter_map(|c| self.by_pattern.get(c).copied())
            .min()
    }
}

/// Three-stage match: exact, then trailing comma-separated component runs,
/// then any single component; first gazetteer rule wins within a stage.
pub fn normalize_location(raw: &str, g: &Gazetteer) -> NormalizationOutcome {
    let miss = NormalizationOutcome {
        state_token: None,
        matched_rule: None,
        raw: raw.to_string(),
    };

    let exact = normalize_pattern(raw);
    if exact.is_empty() {
        return miss;
    }
    if let Some(&idx) = g.by_pattern.get(&exact) {
        return g.outcome(idx, raw);
    }

    let components: Vec<&str> = raw.split(',').map(str::trim).collect();
    if components.len() > 1 {
        // Trailing runs, longest first: "a, b, c" tries "b, c" then "c".
        let suffixes: Vec<String> = (1..components.len())
            .map(|skip| normalize_pattern(&components[skip..].join(" ")))
            .filter(|s| !s.is_empty())
            .collect();
        if let Some(idx) = g.best_rule(&suffixes) {
            return g.outcome(idx, raw);
        }
        let singles: Vec<String> = components
            .iter()
            .map(|c| normalize_pattern(c))
            .filter(|s| !s.is_empty())
            .collect();
        if let Some(idx) = g.best_rule(&singles) {
            return g.outcome(idx, raw);
        }
    }
    miss
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metro_alias_examples() {
        let g = Gazetteer::builtin();
        let cases = [
            ("Brooklyn, New York, USA", "New_York, USA"),
            ("Boston", "Massachusetts, USA"),
            ("Fresno, CA", "California, USA"),
            ("nyc", "New_York, USA"),
        ];
        for (raw, want) in cases {
            let got = normalize_location(raw, &g);
            assert_eq!(got.state_token.as_deref(), Some(want), "raw={raw}");
        }
    }

    #[test]
    fn unknown_location_is_a_miss_not_an_error() {
        let g = Gazetteer::builtin();
        let got = normalize_location("Gotham City", &g);
        assert_eq!(got.state_token, None);
        assert_eq!(got.matched_rule, None);
        assert_eq!(got.raw, "Gotham City");
    }

    #[test]
    fn canonical_self_map_for_all_tokens() {
        let g = Gazetteer::builtin();
        for (name, _) in STATE_NAMES {
            let token = token_for_state_name(name);
            let as_location = token.replace('_', " ");
            let got = normalize_location(&as_location, &g);
            assert_eq!(got.state_token.as_deref(), Some(token.as_str()), "{name}");
        }
    }

    #[test]
    fn case_insensitive() {
        let g = Gazetteer::builtin();
        for raw in ["Los Angeles, CA", "long island, ny", "BOSTON"] {
            let upper = normalize_location(&raw.to_uppercase(), &g);
            let plain = normalize_location(raw, &g);
            assert_eq!(upper.state_token, plain.state_token);
        }
    }

    #[test]
    fn empty_gazetteer_always_misses() {
        let g = Gazetteer::compile("pattern,state_token\n").unwrap();
        assert!(g.is_empty());
        assert_eq!(normalize_location("Boston", &g).state_token, None);
    }

    #[test]
    fn single_rule_quoted_token() {
        let g = Gazetteer::compile("pattern,state_token\nnyc,\"New_York, USA\"\n").unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(
            normalize_location("NYC", &g).state_token.as_deref(),
            Some("New_York, USA")
        );
    }

    #[test]
    fn duplicate_pattern_is_fatal_with_line_numbers() {
        let src = "pattern,state_token\nboston,\"Massachusetts, USA\"\nBoston,\"Massachusetts, USA\"\n";
        match Gazetteer::compile(src) {
            Err(Error::DuplicatePattern {
                first_line,
                second_line,
                ..
            }) => {
                assert_eq!((first_line, second_line), (2, 3));
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_token_is_fatal() {
        let src = "pattern,state_token\nparis,\"France, EU\"\n";
        assert!(matches!(
            Gazetteer::compile(src),
            Err(Error::UnknownStateToken { .. })
        ));
    }

    #[test]
    fn case_row_mapping() {
        assert_eq!(
            state_token_for_case_row("New York").as_deref(),
            Some("New_York, USA")
        );
        assert_eq!(
            state_token_for_case_row("California").as_deref(),
            Some("California, USA")
        );
        assert_eq!(state_token_for_case_row("Diamond Princess"), None);
        assert_eq!(state_token_for_case_row("Guam"), None);
    }
}
