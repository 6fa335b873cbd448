//! From per-day cluster labels to signatures, transition matrices and
//! persistence records for every analysis unit.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FeatureMatrix;
use crate::signature::{
    build_signature, signature_persistence, split_halves, Metric, PeerAggregation, PersistenceRecord, RoutineSignature,
    SegmentPair,
};
use crate::transitions::{build_transitions, transition_persistence, TransitionMatrix, DEFAULT_MAX_GAP_DAYS};

/// Days of one participant within one group, in date order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDays {
    pub participant_id: String,
    pub group_key: Option<String>,
    pub days: Vec<(NaiveDate, usize)>,
}

/// Group matrix rows by (participant, group) and attach labels.
pub fn unit_days(matrix: &FeatureMatrix, labels: &[usize]) -> Result<Vec<UnitDays>> {
    if labels.len() != matrix.n_rows() {
        return Err(Error::domain(format!("{} labels for {} rows", labels.len(), matrix.n_rows())));
    }
    let mut units: BTreeMap<(&str, Option<&str>), Vec<(NaiveDate, usize)>> = BTreeMap::new();
    for (row, &l) in matrix.rows.iter().zip(labels) {
        units
            .entry((row.participant_id.as_str(), row.group_key.as_deref()))
            .or_default()
            .push((row.date, l));
    }
    Ok(units
        .into_iter()
        .map(|((pid, group), mut days)| {
            days.sort_by_key(|&(d, _)| d);
            UnitDays {
                participant_id: pid.to_string(),
                group_key: group.map(str::to_string),
                days,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceOptions {
    pub segment_length: usize,
    pub metrics: Vec<Metric>,
    pub aggregation: PeerAggregation,
    pub max_gap_days: i64,
}

impl PersistenceOptions {
    pub fn new(segment_length: usize) -> Self {
        Self {
            segment_length,
            metrics: Metric::ALL.to_vec(),
            aggregation: PeerAggregation::Mean,
            max_gap_days: DEFAULT_MAX_GAP_DAYS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub participant_id: String,
    pub group_key: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceAnalysis {
    pub signatures: Vec<SegmentPair<RoutineSignature>>,
    pub transitions: Vec<SegmentPair<TransitionMatrix>>,
    /// Signature records for every metric, then transition records.
    pub records: Vec<PersistenceRecord>,
    pub excluded_signature: Vec<Exclusion>,
    pub excluded_transition: Vec<Exclusion>,
}

impl PersistenceAnalysis {
    pub fn records_for(&self, variant: crate::signature::Variant, metric: Metric) -> Vec<&PersistenceRecord> {
        self.records.iter().filter(|r| r.variant == variant && r.metric == metric).collect()
    }
}

fn exclusion(unit: &UnitDays, err: &Error) -> Exclusion {
    Exclusion {
        participant_id: unit.participant_id.clone(),
        group_key: unit.group_key.clone(),
        reason: err.to_string(),
    }
}

/// Split each unit's days, build both summaries per segment and compute
/// d_self and d_ref for every requested metric.
pub fn analyze_persistence(units: &[UnitDays], k: usize, opts: &PersistenceOptions) -> Result<PersistenceAnalysis> {
    let mut signatures = Vec::new();
    let mut transitions = Vec::new();
    let mut excluded_signature = Vec::new();
    let mut excluded_transition = Vec::new();

    for unit in units {
        let split = match split_halves(&unit.participant_id, &unit.days, opts.segment_length) {
            Ok(s) => s,
            Err(e @ Error::InsufficientData(_)) => {
                excluded_signature.push(exclusion(unit, &e));
                excluded_transition.push(exclusion(unit, &e));
                continue;
            }
            Err(e) => return Err(e),
        };
        let labels = |seg: &[(NaiveDate, usize)]| seg.iter().map(|&(_, l)| l).collect::<Vec<_>>();
        signatures.push(SegmentPair {
            participant_id: unit.participant_id.clone(),
            group_key: unit.group_key.clone(),
            first: build_signature(&labels(&split.first), k)?.labelled(&unit.participant_id, 1),
            second: build_signature(&labels(&split.second), k)?.labelled(&unit.participant_id, 2),
        });

        let first = build_transitions(&split.first, k, opts.max_gap_days);
        let second = build_transitions(&split.second, k, opts.max_gap_days);
        match (first, second) {
            (Ok(a), Ok(b)) => transitions.push(SegmentPair {
                participant_id: unit.participant_id.clone(),
                group_key: unit.group_key.clone(),
                first: a.labelled(&unit.participant_id, 1),
                second: b.labelled(&unit.participant_id, 2),
            }),
            (Err(e @ Error::InsufficientData(_)), _) | (_, Err(e @ Error::InsufficientData(_))) => {
                excluded_transition.push(exclusion(unit, &e));
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }

    let mut records = Vec::new();
    for &metric in &opts.metrics {
        records.extend(signature_persistence(&signatures, metric, opts.aggregation)?);
    }
    for &metric in &opts.metrics {
        records.extend(transition_persistence(&transitions, metric, opts.aggregation)?);
    }
    Ok(PersistenceAnalysis {
        signatures,
        transitions,
        records,
        excluded_signature,
        excluded_transition,
    })
}

/// Whole-period signature per unit, used for rank curves and top-k shares.
pub fn whole_period_signatures(units: &[UnitDays], k: usize) -> Result<Vec<RoutineSignature>> {
    units
        .iter()
        .map(|u| {
            let labels: Vec<usize> = u.days.iter().map(|&(_, l)| l).collect();
            Ok(build_signature(&labels, k)?.labelled(&u.participant_id, 0))
        })
        .collect()
}
