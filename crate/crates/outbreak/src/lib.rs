//! State-level outbreak detection from symptom-mention posts and official
//! case counts.
//!
//! The pipeline: ingest raw tweet records and cumulative case CSVs,
//! canonicalize free-text locations to state tokens, build continuous daily
//! series, then estimate the formal outbreak date (cases exceed a threshold)
//! and the informal outbreak date (onset of exponential growth in symptom
//! posts) per state, reporting the lag between the two.

pub mod dates;
pub mod detect;
pub mod error;
pub mod geonorm;
pub mod ingest;
pub mod report;
pub mod series;
pub mod synth;

pub use dates::DateRange;
pub use error::{Error, Result};
