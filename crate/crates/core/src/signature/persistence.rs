//! Split-half segments and within/between-person persistence distances.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::Metric;
use crate::error::{Error, Result};

/// Two consecutive equal-length windows of one participant's retained days.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSplit<T> {
    pub participant_id: String,
    pub first: Vec<T>,
    pub second: Vec<T>,
    pub segment_length: usize,
}

/// First `segment_length` days, then the next `segment_length`; the tail
/// beyond twice the length is dropped.
pub fn split_halves<T: Clone>(
    participant_id: &str,
    days: &[T],
    segment_length: usize,
) -> Result<SegmentSplit<T>> {
    if segment_length == 0 {
        return Err(Error::domain("segment length must be positive"));
    }
    if days.len() < 2 * segment_length {
        return Err(Error::insufficient(format!(
            "participant {participant_id} has {} retained days, {} needed",
            days.len(),
            2 * segment_length
        )));
    }
    Ok(SegmentSplit {
        participant_id: participant_id.to_string(),
        first: days[..segment_length].to_vec(),
        second: days[segment_length..2 * segment_length].to_vec(),
        segment_length,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Signature,
    Transition,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Signature => "signature",
            Variant::Transition => "transition",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the per-peer distances are pooled into d_ref.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeerAggregation {
    #[default]
    Mean,
    Median,
}

impl PeerAggregation {
    pub fn name(self) -> &'static str {
        match self {
            PeerAggregation::Mean => "mean",
            PeerAggregation::Median => "median",
        }
    }

    fn apply(self, values: &mut [f64]) -> f64 {
        match self {
            PeerAggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
            PeerAggregation::Median => {
                values.sort_by(f64::total_cmp);
                let n = values.len();
                if n % 2 == 1 {
                    values[n / 2]
                } else {
                    0.5 * (values[n / 2 - 1] + values[n / 2])
                }
            }
        }
    }
}

impl fmt::Display for PeerAggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PeerAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(PeerAggregation::Mean),
            "median" => Ok(PeerAggregation::Median),
            other => Err(Error::invalid("peer_aggregation", format!("unknown aggregation `{other}`"))),
        }
    }
}

/// A participant's summary in each of the two segments. Peers are only
/// compared within the same `group_key`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPair<T> {
    pub participant_id: String,
    pub group_key: Option<String>,
    pub first: T,
    pub second: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceRecord {
    pub participant_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_key: Option<String>,
    pub variant: Variant,
    pub metric: Metric,
    pub d_self: f64,
    pub d_ref: f64,
    pub n_reference_peers: usize,
}

/// Outcome of one pairwise comparison: `Ok(None)` marks a pair that has
/// nothing in common to compare.
pub(crate) type PairDistance<'a, T> = dyn Fn(&T, &T) -> Result<Option<f64>> + Sync + 'a;

pub(crate) fn reference_with<T: Sync>(
    i: usize,
    population: &[SegmentPair<T>],
    aggregation: PeerAggregation,
    distance: &PairDistance<'_, T>,
) -> Result<(f64, usize)> {
    let me = population
        .get(i)
        .ok_or_else(|| Error::domain(format!("participant index {i} out of range")))?;
    let mut values = Vec::new();
    for (j, peer) in population.iter().enumerate() {
        if j == i || peer.group_key != me.group_key {
            continue;
        }
        let (Some(a), Some(b)) = (distance(&me.first, &peer.first)?, distance(&me.second, &peer.second)?) else {
            continue;
        };
        values.push(0.5 * (a + b));
    }
    if values.is_empty() {
        return Err(Error::insufficient(format!(
            "participant {} has no comparable peers",
            me.participant_id
        )));
    }
    let n = values.len();
    Ok((aggregation.apply(&mut values), n))
}

/// d_self and d_ref for every participant whose own segments are comparable
/// and who has at least one comparable peer. Output follows population order.
pub(crate) fn records_with<T: Sync>(
    population: &[SegmentPair<T>],
    variant: Variant,
    metric: Metric,
    aggregation: PeerAggregation,
    distance: &PairDistance<'_, T>,
) -> Result<Vec<PersistenceRecord>> {
    let rows: Vec<Option<PersistenceRecord>> = (0..population.len())
        .into_par_iter()
        .map(|i| {
            let unit = &population[i];
            let Some(d_self) = distance(&unit.first, &unit.second)? else {
                return Ok(None);
            };
            match reference_with(i, population, aggregation, distance) {
                Ok((d_ref, n_reference_peers)) => Ok(Some(PersistenceRecord {
                    participant_id: unit.participant_id.clone(),
                    group_key: unit.group_key.clone(),
                    variant,
                    metric,
                    d_self,
                    d_ref,
                    n_reference_peers,
                })),
                Err(Error::InsufficientData(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}
