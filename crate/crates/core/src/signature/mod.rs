//! Rank-ordered routine signatures and their persistence over time.

mod distance;
mod persistence;

pub use distance::{cosine_distance, jsd, Metric};
pub use persistence::{split_halves, PeerAggregation, PersistenceRecord, SegmentPair, SegmentSplit, Variant};
pub(crate) use persistence::{records_with, reference_with};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FeatureMatrix;

/// Share of a participant's days spent in each routine, sorted from most to
/// least frequent. Clusters with no days stay in the vector as trailing zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutineSignature {
    pub participant_id: String,
    pub segment_id: u32,
    /// Day counts indexed by cluster label.
    pub counts: Vec<usize>,
    /// Cluster label at each rank.
    pub order: Vec<usize>,
    pub proportions: Vec<f64>,
}

impl RoutineSignature {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn n_days(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn labelled(mut self, participant_id: impl Into<String>, segment_id: u32) -> Self {
        self.participant_id = participant_id.into();
        self.segment_id = segment_id;
        self
    }
}

/// Count labels per cluster and rank the shares; ties keep the lower label first.
///
/// ```
/// let sig = routinesig::signature::build_signature(&[0, 0, 1, 2], 4).unwrap();
/// assert_eq!(sig.proportions, vec![0.5, 0.25, 0.25, 0.0]);
/// assert_eq!(sig.order, vec![0, 1, 2, 3]);
/// ```
pub fn build_signature(labels: &[usize], k: usize) -> Result<RoutineSignature> {
    if labels.is_empty() {
        return Err(Error::EmptySegment);
    }
    if k == 0 {
        return Err(Error::domain("signature needs at least one cluster"));
    }
    let mut counts = vec![0usize; k];
    for &l in labels {
        *counts
            .get_mut(l)
            .ok_or_else(|| Error::domain(format!("label {l} outside 0..{k}")))? += 1;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]));
    let total = labels.len() as f64;
    let proportions = order.iter().map(|&c| counts[c] as f64 / total).collect();
    Ok(RoutineSignature {
        participant_id: String::new(),
        segment_id: 0,
        counts,
        order,
        proportions,
    })
}

pub fn self_distance(a: &RoutineSignature, b: &RoutineSignature, metric: Metric) -> Result<f64> {
    if a.k() != b.k() {
        return Err(Error::domain(format!("signatures have K = {} and {}", a.k(), b.k())));
    }
    metric.distance(&a.proportions, &b.proportions)
}

fn pair_distance(metric: Metric) -> impl Fn(&RoutineSignature, &RoutineSignature) -> Result<Option<f64>> + Sync {
    move |a, b| self_distance(a, b, metric).map(Some)
}

/// Segment-matched distance from participant `i` to each same-group peer,
/// pooled by `aggregation`. Returns the value and the number of peers.
pub fn reference_distance(
    i: usize,
    population: &[SegmentPair<RoutineSignature>],
    metric: Metric,
    aggregation: PeerAggregation,
) -> Result<(f64, usize)> {
    reference_with(i, population, aggregation, &pair_distance(metric))
}

/// Persistence records for every participant with at least one peer.
pub fn signature_persistence(
    population: &[SegmentPair<RoutineSignature>],
    metric: Metric,
    aggregation: PeerAggregation,
) -> Result<Vec<PersistenceRecord>> {
    records_with(population, Variant::Signature, metric, aggregation, &pair_distance(metric))
}

/// Combined share of the `k` most frequent routines.
pub fn top_k_share(sig: &RoutineSignature, k: usize) -> f64 {
    sig.proportions.iter().take(k).sum()
}

/// Per-cluster tables behind the centroid heatmap, day histogram and
/// weekday/weekend bars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub feature_names: Vec<String>,
    /// Mean standardized feature vector; `None` for clusters with no days.
    pub centroids: Vec<Option<Vec<f64>>>,
    pub day_counts: Vec<usize>,
    pub weekday_counts: Vec<usize>,
    pub weekend_counts: Vec<usize>,
}

impl ClusterSummary {
    pub fn k(&self) -> usize {
        self.day_counts.len()
    }

    pub fn weekday_share(&self, cluster: usize) -> Option<f64> {
        let n = self.day_counts[cluster];
        (n > 0).then(|| self.weekday_counts[cluster] as f64 / n as f64)
    }

    pub fn weekend_share(&self, cluster: usize) -> Option<f64> {
        let n = self.day_counts[cluster];
        (n > 0).then(|| self.weekend_counts[cluster] as f64 / n as f64)
    }
}

pub fn cluster_summary(labels: &[usize], matrix: &FeatureMatrix, k: usize) -> Result<ClusterSummary> {
    if labels.len() != matrix.n_rows() {
        return Err(Error::domain(format!(
            "{} labels for {} feature rows",
            labels.len(),
            matrix.n_rows()
        )));
    }
    let d = matrix.n_features();
    let mut sums = vec![vec![0.0; d]; k];
    let mut day_counts = vec![0usize; k];
    let mut weekday_counts = vec![0usize; k];
    for (row, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::domain(format!("label {l} outside 0..{k}")));
        }
        day_counts[l] += 1;
        if matrix.rows[row].weekday {
            weekday_counts[l] += 1;
        }
        for (f, s) in sums[l].iter_mut().enumerate() {
            *s += matrix.values[(row, f)];
        }
    }
    let centroids = sums
        .into_iter()
        .zip(&day_counts)
        .map(|(s, &n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    let weekend_counts = day_counts.iter().zip(&weekday_counts).map(|(n, w)| n - w).collect();
    Ok(ClusterSummary {
        feature_names: matrix.feature_names.clone(),
        centroids,
        day_counts,
        weekday_counts,
        weekend_counts,
    })
}
