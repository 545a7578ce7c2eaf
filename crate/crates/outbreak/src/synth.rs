//! Seeded synthetic series with planted ground truth, used to exercise the
//! detector against an independently checkable oracle.

use chrono::NaiveDate;
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{DailySeries, SeriesKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub length_days: usize,
    /// First day of the exponential segment; `None` for linear throughout.
    pub breakpoint: Option<usize>,
    pub base_level: f64,
    pub slope: f64,
    pub growth_rate: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Round values to whole counts. Disable to keep the planted model
    /// exact, which the noiseless recovery checks rely on.
    pub round_to_counts: bool,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.length_days == 0 {
            return Err(Error::InvalidSynthSpec {
                reason: "length_days must be positive".into(),
            });
        }
        if let Some(b) = self.breakpoint {
            if b < 1 || b >= self.length_days {
                return Err(Error::InvalidSynthSpec {
                    reason: format!(
                        "breakpoint {b} outside [1, {}]",
                        self.length_days - 1
                    ),
                });
            }
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidSynthSpec {
                reason: "noise_sigma must be non-negative".into(),
            });
        }
        Ok(())
    }
}

/// Standard normal draws via Box-Muller over ChaCha8 output. Hand-pinned so
/// the byte stream never depends on distribution-crate internals.
struct NormalSource(ChaCha8Rng);

impl NormalSource {
    fn new(seed: u64) -> Self {
        NormalSource(ChaCha8Rng::seed_from_u64(seed))
    }

    fn uniform(&mut self) -> f64 {
        // 53 mantissa bits in (0, 1]
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64 + f64::MIN_POSITIVE
    }

    fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Linear segment, then an exponential segment anchored at the linear
/// segment's end value, with optional Gaussian noise truncated at zero.
pub fn generate_tweets(spec: &SynthSpec) -> Result<DailySeries> {
    spec.validate()?;
    let mut noise = NormalSource::new(spec.seed);
    let values: Vec<f64> = (0..spec.length_days)
        .map(|t| {
            let model = match spec.breakpoint {
                Some(b) if t >= b => {
                    let anchor = spec.base_level + spec.slope * b as f64;
                    anchor * (spec.growth_rate * (t - b) as f64).exp()
                }
                _ => spec.base_level + spec.slope * t as f64,
            };
            let v = if spec.noise_sigma > 0.0 {
                model + spec.noise_sigma * noise.standard_normal()
            } else {
                model
            };
            let v = v.max(0.0);
            if spec.round_to_counts {
                v.round()
            } else {
                v
            }
        })
        .collect();
    Ok(DailySeries {
        state_token: "Synthetic, USA".into(),
        start_date: spec.start_date,
        values,
        kind: SeriesKind::TweetCount,
    })
}

/// Monotone cumulative series equal to 100 the day before `crossing_day` and
/// 101 on it, so a strict >100 threshold fires exactly there.
pub fn generate_cases(
    length_days: usize,
    crossing_day: usize,
    start_date: NaiveDate,
) -> Result<DailySeries> {
    if crossing_day == 0 || crossing_day >= length_days {
        return Err(Error::InvalidSynthSpec {
            reason: format!("crossing_day {crossing_day} outside [1, {})", length_days),
        });
    }
    let values: Vec<f64> = (0..length_days)
        .map(|t| {
            if t < crossing_day {
                // ramp ending at exactly 100 the day before the crossing
                (100 * t / (crossing_day - 1).max(1)) as f64
            } else {
                (101 + 10 * (t - crossing_day)) as f64
            }
        })
        .collect();
    Ok(DailySeries {
        state_token: "Synthetic, USA".into(),
        start_date,
        values,
        kind: SeriesKind::CumulativeCases,
    })
}
