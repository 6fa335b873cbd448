//! Demographics and Big Five trait scores per participant.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Age bins shared by all cohorts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBin {
    Under25,
    From25To34,
    From35To44,
    From45To54,
    From55To64,
}

impl AgeBin {
    pub const ALL: [AgeBin; 5] = [
        AgeBin::Under25,
        AgeBin::From25To34,
        AgeBin::From35To44,
        AgeBin::From45To54,
        AgeBin::From55To64,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AgeBin::Under25 => "<25",
            AgeBin::From25To34 => "25-34",
            AgeBin::From35To44 => "35-44",
            AgeBin::From45To54 => "45-54",
            AgeBin::From55To64 => "55-64",
        }
    }

    /// Bin containing `age` years.
    pub fn from_age(age: f64) -> Option<AgeBin> {
        match age {
            a if a < 25.0 => Some(AgeBin::Under25),
            a if a < 35.0 => Some(AgeBin::From25To34),
            a if a < 45.0 => Some(AgeBin::From35To44),
            a if a < 55.0 => Some(AgeBin::From45To54),
            a if a < 65.0 => Some(AgeBin::From55To64),
            _ => None,
        }
    }

    /// Representative age used when only the bin is known.
    pub fn midpoint(self) -> f64 {
        match self {
            AgeBin::Under25 => 21.0,
            AgeBin::From25To34 => 29.5,
            AgeBin::From35To44 => 39.5,
            AgeBin::From45To54 => 49.5,
            AgeBin::From55To64 => 59.5,
        }
    }
}

impl fmt::Display for AgeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AgeBin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.trim().replace(['–', '—'], "-").chars().filter(|c| !c.is_whitespace()).collect();
        AgeBin::ALL
            .into_iter()
            .find(|b| b.label() == norm)
            .ok_or_else(|| Error::invalid("age_bin", format!("unknown age bin `{s}`")))
    }
}

pub const TRAIT_NAMES: [&str; 5] = ["extraversion", "agreeableness", "conscientiousness", "neuroticism", "openness"];

/// Trait scores on the common [1, 5] scale, in [`TRAIT_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigFive(pub [f64; 5]);

impl BigFive {
    pub fn new(scores: [f64; 5]) -> Result<Self> {
        for (name, s) in TRAIT_NAMES.iter().zip(scores) {
            if !(1.0..=5.0).contains(&s) {
                return Err(Error::invalid(*name, format!("score {s} outside [1, 5]")));
            }
        }
        Ok(Self(scores))
    }
}

/// Linear map from an instrument's `[lo, hi]` range onto [1, 5].
pub fn rescale_trait(score: f64, lo: f64, hi: f64) -> f64 {
    1.0 + 4.0 * (score - lo) / (hi - lo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub participant_id: String,
    pub age_bin: AgeBin,
    /// Exact age when known; the continuous age encoding falls back to the
    /// bin midpoint otherwise.
    pub age: Option<f64>,
    pub gender: String,
    pub big_five: BigFive,
    /// Cohort label used when pooling several studies.
    pub study: Option<String>,
}
