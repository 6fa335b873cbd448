//! Daily behavioral records: exclusion rules and within-person standardization.
//!
//! A day is described by 13 features: mobility (daily + four time-of-day
//! bins), sleep (bedtime, wake time, duration) and screen use (daily + four
//! bins). Raw-sensor proxies live in [`sensors`]; CSV readers and writers in
//! [`io`].

pub mod io;
pub mod profile;
pub mod sensors;

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_FEATURES: usize = 13;

/// Column names of the daily feature vector, in matrix order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "mob_daily",
    "mob_n",
    "mob_m",
    "mob_a",
    "mob_e",
    "sleep_bed",
    "sleep_wake",
    "sleep_dur",
    "scr_daily",
    "scr_n",
    "scr_m",
    "scr_a",
    "scr_e",
];

/// Days a participant must keep after trimming and missing-day removal.
pub const MIN_RETAINED_DAYS: usize = 14;

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

pub fn is_weekday(date: NaiveDate) -> bool {
    !matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

/// One participant-day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayRecord {
    pub participant_id: String,
    pub date: NaiveDate,
    pub weekday: bool,
    pub group_key: Option<String>,
    pub features: [Option<f64>; N_FEATURES],
    /// Set once the participant's first and last days have been removed, so
    /// later passes of [`apply_exclusions`] do not trim again.
    pub edges_trimmed: bool,
}

impl DayRecord {
    pub fn new(
        participant_id: impl Into<String>,
        date: NaiveDate,
        group_key: Option<String>,
        features: [Option<f64>; N_FEATURES],
    ) -> Self {
        Self {
            participant_id: participant_id.into(),
            date,
            weekday: is_weekday(date),
            group_key,
            features,
            edges_trimmed: false,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.features.iter().all(|f| f.is_some_and(f64::is_finite))
    }
}

/// Identity of one row of a [`FeatureMatrix`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub participant_id: String,
    pub date: NaiveDate,
    pub weekday: bool,
    pub group_key: Option<String>,
}

/// Standardized M x 13 analysis matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<RowMeta>,
    pub values: DMatrix<f64>,
    pub feature_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// Row indices grouped by participant, each list in row order.
    pub fn participant_rows(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, row) in self.rows.iter().enumerate() {
            out.entry(row.participant_id.as_str()).or_default().push(i);
        }
        out
    }

    /// Keeps only the rows for which `keep` returns true.
    pub fn filter_rows(&self, mut keep: impl FnMut(&RowMeta) -> bool) -> FeatureMatrix {
        let idx: Vec<usize> = (0..self.rows.len()).filter(|&i| keep(&self.rows[i])).collect();
        let values = DMatrix::from_fn(idx.len(), self.n_features(), |r, c| self.values[(idx[r], c)]);
        FeatureMatrix {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            values,
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Per-rule tallies from [`apply_exclusions_audited`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionAudit {
    pub rows_in: usize,
    pub participants_in: usize,
    pub dropped_endpoint_days: usize,
    pub dropped_missing_days: usize,
    pub dropped_short_participant_days: usize,
    pub dropped_participants: usize,
    pub rows_out: usize,
    pub participants_out: usize,
}

fn group_by_participant(records: Vec<DayRecord>) -> BTreeMap<String, Vec<DayRecord>> {
    let mut by: BTreeMap<String, Vec<DayRecord>> = BTreeMap::new();
    for r in records {
        by.entry(r.participant_id.clone()).or_default().push(r);
    }
    for days in by.values_mut() {
        days.sort_by_key(|d| d.date);
    }
    by
}

/// Applies the exclusion rules; see [`apply_exclusions_audited`].
pub fn apply_exclusions(records: Vec<DayRecord>) -> Vec<DayRecord> {
    apply_exclusions_audited(records).0
}

/// Drops each participant's first and last day, then incomplete days, then
/// participants left with fewer than [`MIN_RETAINED_DAYS`] days.
///
/// Output is ordered by participant id, then date. Trimming happens once per
/// participant: records already flagged `edges_trimmed` are not trimmed again.
pub fn apply_exclusions_audited(records: Vec<DayRecord>) -> (Vec<DayRecord>, ExclusionAudit) {
    let mut audit = ExclusionAudit {
        rows_in: records.len(),
        ..Default::default()
    };
    let by = group_by_participant(records);
    audit.participants_in = by.len();

    let mut out = Vec::new();
    for (_, mut days) in by {
        if !days.iter().any(|d| d.edges_trimmed) {
            let before = days.len();
            if days.len() <= 2 {
                days.clear();
            } else {
                days.pop();
                days.remove(0);
            }
            audit.dropped_endpoint_days += before - days.len();
            for d in &mut days {
                d.edges_trimmed = true;
            }
        }

        let before = days.len();
        days.retain(DayRecord::is_complete);
        audit.dropped_missing_days += before - days.len();

        if days.len() < MIN_RETAINED_DAYS {
            audit.dropped_short_participant_days += days.len();
            audit.dropped_participants += 1;
            continue;
        }
        out.extend(days);
    }
    audit.rows_out = out.len();
    audit.participants_out = audit.participants_in - audit.dropped_participants;
    (out, audit)
}

/// Z-normalizes every feature within each participant (sample standard
/// deviation, divisor n-1). Constant columns become all zeros.
///
/// Rows keep the order of `records`. Every record must be complete and every
/// participant must have at least two days.
pub fn standardize(records: &[DayRecord]) -> Result<FeatureMatrix> {
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if !r.is_complete() {
            return Err(Error::MissingData(format!(
                "participant {} on {} has missing features",
                r.participant_id, r.date
            )));
        }
        members.entry(r.participant_id.as_str()).or_default().push(i);
    }

    let mut values = DMatrix::zeros(records.len(), N_FEATURES);
    for (pid, idx) in &members {
        if idx.len() < 2 {
            return Err(Error::insufficient(format!(
                "participant {pid} has a single day; standardization needs at least two"
            )));
        }
        let n = idx.len() as f64;
        for c in 0..N_FEATURES {
            let col = |i: usize| records[i].features[c].unwrap_or(f64::NAN);
            let first = col(idx[0]);
            if idx.iter().all(|&i| col(i) == first) {
                continue;
            }
            let mean = idx.iter().map(|&i| col(i)).sum::<f64>() / n;
            let ss = idx.iter().map(|&i| (col(i) - mean).powi(2)).sum::<f64>();
            let sd = (ss / (n - 1.0)).sqrt();
            if sd == 0.0 {
                continue;
            }
            for &i in idx {
                values[(i, c)] = (col(i) - mean) / sd;
            }
        }
    }

    Ok(FeatureMatrix {
        rows: records
            .iter()
            .map(|r| RowMeta {
                participant_id: r.participant_id.clone(),
                date: r.date,
                weekday: r.weekday,
                group_key: r.group_key.clone(),
            })
            .collect(),
        values,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    })
}
