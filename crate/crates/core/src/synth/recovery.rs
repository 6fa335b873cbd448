//! Scoring inferred routine labels against ground truth.

use std::collections::HashMap;

use chrono::NaiveDate;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use super::GroundTruth;
use crate::error::{Error, Result};
use crate::ingest::RowMeta;

fn pairs(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!("labelings differ in length: {} vs {}", a.len(), b.len())));
    }
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| pairs(n as f64)).sum();
    let sum_rows: f64 = rows.values().map(|&n| pairs(n as f64)).sum();
    let sum_cols: f64 = cols.values().map(|&n| pairs(n as f64)).sum();
    let total = pairs(a.len() as f64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_rows * sum_cols / total;
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Inferred-to-true label mapping maximizing agreement. Inferred labels left
/// unmatched (when there are more inferred than true clusters) map to `None`.
pub fn match_labels(inferred: &[usize], truth: &[usize], k_inferred: usize, k_true: usize) -> Result<Vec<Option<usize>>> {
    if inferred.len() != truth.len() {
        return Err(Error::domain("label sequences differ in length"));
    }
    let size = k_inferred.max(k_true);
    let mut confusion = Matrix::new(size, size, 0i64);
    for (&i, &t) in inferred.iter().zip(truth) {
        if i >= k_inferred || t >= k_true {
            return Err(Error::domain(format!("label out of range: inferred {i}, true {t}")));
        }
        confusion[(i, t)] += 1;
    }
    let (_, assignment) = kuhn_munkres(&confusion);
    Ok((0..k_inferred).map(|i| Some(assignment[i]).filter(|&t| t < k_true)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub ari: f64,
    /// Fraction of days whose matched inferred label equals the true label.
    pub matched_accuracy: f64,
    pub mapping: Vec<Option<usize>>,
    /// Per participant: largest absolute gap between true routine
    /// frequencies and inferred day shares after matching.
    pub weight_errors: Vec<(String, f64)>,
    pub n_days: usize,
}

impl RecoveryReport {
    pub fn max_weight_error(&self) -> f64 {
        self.weight_errors.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }
}

/// Compare labels of analysed rows with the latent routines of the same days.
pub fn score_recovery(truth: &GroundTruth, rows: &[RowMeta], labels: &[usize], k_inferred: usize) -> Result<RecoveryReport> {
    if rows.len() != labels.len() {
        return Err(Error::domain(format!("{} rows for {} labels", rows.len(), labels.len())));
    }
    let k_true = truth.spec.k_true;
    let lookup: HashMap<(&str, NaiveDate), usize> = truth
        .participants
        .iter()
        .flat_map(|p| p.days.iter().map(move |&(d, l)| ((p.participant_id.as_str(), d), l)))
        .collect();
    let true_labels: Vec<usize> = rows
        .iter()
        .map(|r| {
            lookup
                .get(&(r.participant_id.as_str(), r.date))
                .copied()
                .ok_or_else(|| Error::domain(format!("no ground truth for {} on {}", r.participant_id, r.date)))
        })
        .collect::<Result<_>>()?;

    let ari = adjusted_rand_index(labels, &true_labels)?;
    let mapping = match_labels(labels, &true_labels, k_inferred, k_true)?;
    let hits = labels
        .iter()
        .zip(&true_labels)
        .filter(|&(&i, &t)| mapping[i] == Some(t))
        .count();

    let mut shares: std::collections::BTreeMap<&str, (Vec<usize>, usize)> = Default::default();
    for (r, &l) in rows.iter().zip(labels) {
        let entry = shares.entry(r.participant_id.as_str()).or_insert_with(|| (vec![0; k_true], 0));
        if let Some(t) = mapping[l] {
            entry.0[t] += 1;
        }
        entry.1 += 1;
    }
    let weight_errors = shares
        .into_iter()
        .map(|(id, (counts, n))| {
            let expected = truth
                .participant(id)
                .map(|p| p.expected_frequencies())
                .unwrap_or_else(|| vec![0.0; k_true]);
            let err = counts
                .iter()
                .zip(&expected)
                .map(|(&c, w)| (c as f64 / n as f64 - w).abs())
                .fold(0.0, f64::max);
            (id.to_string(), err)
        })
        .collect();

    Ok(RecoveryReport {
        ari,
        matched_accuracy: hits as f64 / labels.len().max(1) as f64,
        mapping,
        weight_errors,
        n_days: labels.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Pair-counting ARI straight from the definition, looping over all pairs.
    fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut all) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                both += f64::from(u8::from(sa && sb));
                only_a += f64::from(u8::from(sa));
                only_b += f64::from(u8::from(sb));
                all += 1.0;
            }
        }
        let expected = only_a * only_b / all;
        (both - expected) / (0.5 * (only_a + only_b) - expected)
    }

    #[test]
    fn identical_and_relabeled_are_perfect() {
        let t = [0, 0, 1, 1, 2, 2, 2];
        assert_eq!(adjusted_rand_index(&t, &t).unwrap(), 1.0);
        let relabeled: Vec<usize> = t.iter().map(|&l| (l + 1) % 3).collect();
        assert!((adjusted_rand_index(&relabeled, &t).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(match_labels(&relabeled, &t, 3, 3).unwrap(), [Some(2), Some(0), Some(1)]);
    }

    #[test]
    fn matches_pair_counting_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a: Vec<usize> = (0..60).map(|_| rng.random_range(0..4)).collect();
            let b: Vec<usize> = a.iter().map(|&x| if rng.random_bool(0.7) { x } else { rng.random_range(0..3) }).collect();
            assert!((adjusted_rand_index(&a, &b).unwrap() - ari_by_pairs(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn random_labels_score_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
        assert!(adjusted_rand_index(&a, &b).unwrap().abs() < 0.02);
    }

    #[test]
    fn extra_inferred_clusters_stay_unmatched() {
        let truth = [0, 0, 1, 1, 1];
        let inferred = [2, 2, 0, 0, 1];
        assert_eq!(match_labels(&inferred, &truth, 3, 2).unwrap(), [Some(1), None, Some(0)]);
    }
}
