//! Day-to-day routine transition matrices and transition-signature persistence.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signature::{records_with, reference_with, Metric, PeerAggregation, PersistenceRecord, SegmentPair, Variant};

pub const DEFAULT_MAX_GAP_DAYS: i64 = 1;

/// First-order transition estimate for one participant segment. Rows with no
/// outgoing transitions are undefined rather than uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub participant_id: String,
    pub segment_id: u32,
    /// `counts[a][b]`: transitions from cluster `a` to cluster `b`.
    pub counts: Vec<Vec<usize>>,
    pub row_counts: Vec<usize>,
    pub probabilities: Vec<Option<Vec<f64>>>,
}

impl TransitionMatrix {
    pub fn from_counts(counts: Vec<Vec<usize>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::domain("transition counts must be a non-empty square table"));
        }
        let row_counts: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
        let probabilities = counts
            .iter()
            .zip(&row_counts)
            .map(|(row, &n)| (n > 0).then(|| row.iter().map(|&c| c as f64 / n as f64).collect()))
            .collect();
        Ok(Self {
            participant_id: String::new(),
            segment_id: 0,
            counts,
            row_counts,
            probabilities,
        })
    }

    pub fn labelled(mut self, participant_id: impl Into<String>, segment_id: u32) -> Self {
        self.participant_id = participant_id.into();
        self.segment_id = segment_id;
        self
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn row(&self, from: usize) -> Option<&[f64]> {
        self.probabilities[from].as_deref()
    }

    pub fn n_transitions(&self) -> usize {
        self.row_counts.iter().sum()
    }

    /// Same chain with cluster `c` renamed to `perm[c]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        let k = self.k();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::domain("relabeling is not a permutation of the clusters"));
        }
        let mut counts = vec![vec![0; k]; k];
        for (a, row) in self.counts.iter().enumerate() {
            for (b, &c) in row.iter().enumerate() {
                counts[perm[a]][perm[b]] = c;
            }
        }
        Ok(Self::from_counts(counts)?.labelled(self.participant_id.clone(), self.segment_id))
    }
}

/// Count transitions between consecutive days at most `max_gap_days` apart.
/// `days` must be in strictly increasing date order.
pub fn build_transitions(days: &[(NaiveDate, usize)], k: usize, max_gap_days: i64) -> Result<TransitionMatrix> {
    if k == 0 {
        return Err(Error::domain("transition matrix needs at least one cluster"));
    }
    if max_gap_days < 1 {
        return Err(Error::domain(format!("max_gap_days must be at least 1, got {max_gap_days}")));
    }
    if let Some(&(_, l)) = days.iter().find(|&&(_, l)| l >= k) {
        return Err(Error::domain(format!("label {l} outside 0..{k}")));
    }
    let mut counts = vec![vec![0usize; k]; k];
    let mut usable = 0usize;
    for w in days.windows(2) {
        let ((d0, a), (d1, b)) = (w[0], w[1]);
        let gap = (d1 - d0).num_days();
        if gap <= 0 {
            return Err(Error::domain(format!("days out of order or repeated at {d1}")));
        }
        if gap <= max_gap_days {
            counts[a][b] += 1;
            usable += 1;
        }
    }
    if usable < 2 {
        return Err(Error::insufficient(format!("{usable} usable consecutive day pairs, 2 needed")));
    }
    TransitionMatrix::from_counts(counts)
}

/// Mean per-row divergence over rows defined in both matrices.
pub fn transition_distance_with(a: &TransitionMatrix, b: &TransitionMatrix, metric: Metric) -> Result<f64> {
    if a.k() != b.k() {
        return Err(Error::domain(format!("transition matrices have K = {} and {}", a.k(), b.k())));
    }
    let mut total = 0.0;
    let mut rows = 0usize;
    for (pa, pb) in a.probabilities.iter().zip(&b.probabilities) {
        if let (Some(pa), Some(pb)) = (pa, pb) {
            total += metric.distance(pa, pb)?;
            rows += 1;
        }
    }
    if rows == 0 {
        return Err(Error::Incomparable);
    }
    Ok(total / rows as f64)
}

/// [`transition_distance_with`] using Jensen-Shannon divergence per row.
pub fn transition_distance(a: &TransitionMatrix, b: &TransitionMatrix) -> Result<f64> {
    transition_distance_with(a, b, Metric::Jsd)
}

fn pair_distance(metric: Metric) -> impl Fn(&TransitionMatrix, &TransitionMatrix) -> Result<Option<f64>> + Sync {
    move |a, b| match transition_distance_with(a, b, metric) {
        Ok(d) => Ok(Some(d)),
        Err(Error::Incomparable) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn transition_self_distance(pair: &SegmentPair<TransitionMatrix>, metric: Metric) -> Result<f64> {
    transition_distance_with(&pair.first, &pair.second, metric)
}

/// Segment-matched distance to each comparable same-group peer, pooled by
/// `aggregation`. Peers sharing no defined rows with either segment are skipped.
pub fn transition_reference_distance(
    i: usize,
    population: &[SegmentPair<TransitionMatrix>],
    metric: Metric,
    aggregation: PeerAggregation,
) -> Result<(f64, usize)> {
    reference_with(i, population, aggregation, &pair_distance(metric))
}

pub fn transition_persistence(
    population: &[SegmentPair<TransitionMatrix>],
    metric: Metric,
    aggregation: PeerAggregation,
) -> Result<Vec<PersistenceRecord>> {
    records_with(population, Variant::Transition, metric, aggregation, &pair_distance(metric))
}

/// Entrywise mean over participants whose source row is defined; entries
/// with no contributors are `None`.
pub fn mean_population_transitions(matrices: &[TransitionMatrix]) -> Result<Vec<Vec<Option<f64>>>> {
    let k = matrices
        .first()
        .map(TransitionMatrix::k)
        .ok_or_else(|| Error::insufficient("no transition matrices to average"))?;
    if matrices.iter().any(|m| m.k() != k) {
        return Err(Error::domain("transition matrices differ in K"));
    }
    let mut out = vec![vec![None; k]; k];
    for (a, out_row) in out.iter_mut().enumerate() {
        let rows: Vec<&[f64]> = matrices.iter().filter_map(|m| m.row(a)).collect();
        if rows.is_empty() {
            continue;
        }
        for (b, cell) in out_row.iter_mut().enumerate() {
            *cell = Some(rows.iter().map(|r| r[b]).sum::<f64>() / rows.len() as f64);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::jsd;
    use chrono::Days;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dated(labels: &[usize]) -> Vec<(NaiveDate, usize)> {
        let start = NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
        labels.iter().enumerate().map(|(i, &l)| (start + Days::new(i as u64), l)).collect()
    }

    #[test]
    fn constant_sequence_defines_one_row() {
        let m = build_transitions(&dated(&[0, 0, 0]), 3, 1).unwrap();
        assert_eq!(m.row(0), Some(&[1.0, 0.0, 0.0][..]));
        assert_eq!(m.row(1), None);
        assert_eq!(m.row(2), None);
        assert_eq!(m.row_counts, [2, 0, 0]);
    }

    #[test]
    fn alternation_is_a_deterministic_cycle() {
        let m = build_transitions(&dated(&[0, 1, 0, 1]), 2, 1).unwrap();
        assert_eq!(m.row(0), Some(&[0.0, 1.0][..]));
        assert_eq!(m.row(1), Some(&[1.0, 0.0][..]));
    }

    #[test]
    fn gaps_and_ordering() {
        let mut days = dated(&[0, 1, 1]);
        days[2].0 = days[2].0 + Days::new(1);
        assert!(matches!(build_transitions(&days, 2, 1), Err(Error::InsufficientData(_))));
        let m = build_transitions(&days, 2, 2).unwrap();
        assert_eq!(m.counts, [[0, 1], [0, 1]]);

        let mut unordered = dated(&[0, 1, 0]);
        unordered.swap(1, 2);
        assert!(matches!(build_transitions(&unordered, 2, 1), Err(Error::Domain(_))));
        assert!(matches!(build_transitions(&dated(&[0, 2, 0]), 2, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn long_chain_recovers_true_matrix() {
        let truth = [[0.7, 0.2, 0.1], [0.3, 0.4, 0.3], [0.1, 0.1, 0.8]];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut state = 0usize;
        let mut labels = vec![state];
        for _ in 1..10_000 {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            state = (0..3).find(|&b| {
                acc += truth[state][b];
                u < acc
            }).unwrap_or(2);
            labels.push(state);
        }
        let m = build_transitions(&dated(&labels), 3, 1).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!((m.row(a).unwrap()[b] - truth[a][b]).abs() < 0.02);
            }
        }
    }

    fn matrix(rows: &[Option<[f64; 3]>]) -> TransitionMatrix {
        // Build from counts out of 20 so the probabilities are exact.
        let counts = rows
            .iter()
            .map(|r| r.map_or(vec![0; 3], |p| p.iter().map(|x| (x * 20.0).round() as usize).collect()))
            .collect();
        TransitionMatrix::from_counts(counts).unwrap()
    }

    #[test]
    fn distance_examples() {
        let p = matrix(&[Some([0.5, 0.5, 0.0]), Some([0.25, 0.25, 0.5]), Some([0.0, 0.0, 1.0])]);
        assert_eq!(transition_distance(&p, &p).unwrap(), 0.0);

        let a = matrix(&[Some([1.0, 0.0, 0.0]), Some([0.0, 1.0, 0.0]), Some([0.0, 0.0, 1.0])]);
        let b = matrix(&[Some([0.0, 1.0, 0.0]), Some([0.0, 0.0, 1.0]), Some([1.0, 0.0, 0.0])]);
        assert_eq!(transition_distance(&a, &b).unwrap(), 1.0);

        let q = matrix(&[Some([1.0, 0.0, 0.0]), None, Some([0.5, 0.0, 0.5])]);
        let manual = 0.5 * (jsd(&[0.5, 0.5, 0.0], &[1.0, 0.0, 0.0]).unwrap() + jsd(&[0.0, 0.0, 1.0], &[0.5, 0.0, 0.5]).unwrap());
        assert!((transition_distance(&p, &q).unwrap() - manual).abs() < 1e-15);

        let only_middle = matrix(&[None, Some([1.0, 0.0, 0.0]), None]);
        assert!(matches!(transition_distance(&q, &only_middle), Err(Error::Incomparable)));
    }

    #[test]
    fn population_mean_masks_undefined_rows() {
        let a = matrix(&[Some([1.0, 0.0, 0.0]), Some([0.5, 0.5, 0.0]), None]);
        let b = matrix(&[Some([0.0, 1.0, 0.0]), None, None]);
        let c = matrix(&[Some([0.5, 0.0, 0.5]), Some([0.0, 0.5, 0.5]), None]);
        let mean = mean_population_transitions(&[a.clone(), b, c]).unwrap();
        assert_eq!(mean[0], [Some(0.5), Some(1.0 / 3.0), Some(0.5 / 3.0)]);
        assert_eq!(mean[1], [Some(0.25), Some(0.5), Some(0.25)]);
        assert_eq!(mean[2], [None, None, None]);
        let single = mean_population_transitions(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single[1], [Some(0.5), Some(0.5), Some(0.0)]);
    }

    fn pair(id: &str, first: TransitionMatrix, second: TransitionMatrix) -> SegmentPair<TransitionMatrix> {
        SegmentPair {
            participant_id: id.into(),
            group_key: None,
            first,
            second,
        }
    }

    #[test]
    fn reference_distance_matches_hand_average() {
        let m1 = matrix(&[Some([1.0, 0.0, 0.0]), Some([0.5, 0.5, 0.0]), Some([0.0, 0.0, 1.0])]);
        let m2 = matrix(&[Some([0.5, 0.5, 0.0]), Some([0.0, 1.0, 0.0]), None]);
        let m3 = matrix(&[Some([0.0, 0.5, 0.5]), None, Some([0.5, 0.0, 0.5])]);
        let pop = vec![pair("a", m1.clone(), m2.clone()), pair("b", m2.clone(), m3.clone()), pair("c", m3.clone(), m1.clone())];
        let d = |x: &TransitionMatrix, y: &TransitionMatrix| transition_distance(x, y).unwrap();
        let ab = 0.5 * (d(&m1, &m2) + d(&m2, &m3));
        let ac = 0.5 * (d(&m1, &m3) + d(&m2, &m1));
        let (got, n) = transition_reference_distance(0, &pop, Metric::Jsd, PeerAggregation::Mean).unwrap();
        assert_eq!(n, 2);
        assert!((got - 0.5 * (ab + ac)).abs() < 1e-15);

        let clones = vec![pair("a", m1.clone(), m2.clone()), pair("b", m1, m2)];
        let recs = transition_persistence(&clones, Metric::Jsd, PeerAggregation::Mean).unwrap();
        assert!(recs.iter().all(|r| r.d_ref == 0.0));
    }

    #[test]
    fn self_distance_shrinks_with_segment_length() {
        let truth = [[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.3, 0.3, 0.4]];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut walk = |n: usize| {
            let mut s = 0usize;
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(s);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                s = (0..3).find(|&b| {
                    acc += truth[s][b];
                    u < acc
                }).unwrap_or(2);
            }
            v
        };
        let mut means = Vec::new();
        for len in [30, 135, 1000] {
            let total: f64 = (0..50)
                .map(|_| {
                    let a = build_transitions(&dated(&walk(len)), 3, 1).unwrap();
                    let b = build_transitions(&dated(&walk(len)), 3, 1).unwrap();
                    transition_distance(&a, &b).unwrap()
                })
                .sum();
            means.push(total / 50.0);
        }
        assert!(means[0] > means[1] && means[1] > means[2] && means[2] > 0.0, "{means:?}");
    }

    fn dated_labels() -> impl Strategy<Value = (Vec<(NaiveDate, usize)>, usize)> {
        (1usize..6).prop_flat_map(|k| {
            (prop::collection::vec((1u64..4, 0..k), 3..80), Just(k)).prop_map(|(steps, k)| {
                let mut date = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
                let days = steps
                    .into_iter()
                    .map(|(gap, l)| {
                        date = date + Days::new(gap);
                        (date, l)
                    })
                    .collect();
                (days, k)
            })
        })
    }

    fn permutation(k: usize) -> impl Strategy<Value = Vec<usize>> {
        Just((0..k).collect::<Vec<_>>()).prop_shuffle()
    }

    proptest! {
        #[test]
        fn counts_equal_brute_force_pairs(((days, k), gap) in (dated_labels(), 1i64..4)) {
            let mut brute = vec![vec![0usize; k]; k];
            for i in 0..days.len() {
                for j in i + 1..days.len() {
                    if j == i + 1 && (days[j].0 - days[i].0).num_days() <= gap {
                        brute[days[i].1][days[j].1] += 1;
                    }
                }
            }
            let usable: usize = brute.iter().flatten().sum();
            match build_transitions(&days, k, gap) {
                Ok(m) => {
                    prop_assert_eq!(&m.counts, &brute);
                    for (row, &n) in m.probabilities.iter().zip(&m.row_counts) {
                        match row {
                            Some(r) => prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12),
                            None => prop_assert_eq!(n, 0),
                        }
                    }
                }
                Err(Error::InsufficientData(_)) => prop_assert!(usable < 2),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn distance_is_symmetric_bounded_and_label_free(
            (a, b, perm) in (2usize..6).prop_flat_map(|k| {
                let table = prop::collection::vec(prop::collection::vec(0usize..5, k), k);
                (table.clone(), table, permutation(k))
            })
        ) {
            let a = TransitionMatrix::from_counts(a).unwrap();
            let b = TransitionMatrix::from_counts(b).unwrap();
            match transition_distance(&a, &b) {
                Ok(d) => {
                    prop_assert!((0.0..=1.0).contains(&d));
                    prop_assert_eq!(d, transition_distance(&b, &a).unwrap());
                    let d_perm = transition_distance(&a.relabeled(&perm).unwrap(), &b.relabeled(&perm).unwrap()).unwrap();
                    prop_assert!((d - d_perm).abs() < 1e-12);
                }
                Err(Error::Incomparable) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
