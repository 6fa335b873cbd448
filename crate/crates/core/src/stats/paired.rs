//! Paired comparison of within- and between-person distances.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// Every difference is zero; the t statistic is undefined.
    AllZero,
    /// Differences are identical and non-zero; the t statistic is infinite.
    ConstantDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub n: usize,
    /// Mean of `a - b`.
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t_statistic: f64,
    pub degrees_freedom: f64,
    pub p_value: f64,
    /// Smaller of the positive and negative signed-rank sums.
    pub wilcoxon_statistic: f64,
    pub wilcoxon_z: f64,
    pub wilcoxon_p: f64,
    /// Pairs left after dropping zero differences.
    pub wilcoxon_n: usize,
    pub degenerate: Option<Degeneracy>,
}

/// Paired t-test on `a - b` with a Wilcoxon signed-rank companion.
///
/// The Wilcoxon p value uses the normal approximation with continuity and
/// tie corrections, after dropping zero differences.
pub fn paired_test(a: &[f64], b: &[f64]) -> Result<PairedTestResult> {
    if a.len() != b.len() {
        return Err(Error::domain(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 3 {
        return Err(Error::insufficient(format!("paired test needs at least 3 pairs, got {n}")));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::domain("non-finite paired difference"));
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let df = (n - 1) as f64;

    let all_equal = diffs.iter().all(|&d| d == diffs[0]);
    let (t, p, degenerate) = if all_equal && diffs[0] == 0.0 {
        (f64::NAN, 1.0, Some(Degeneracy::AllZero))
    } else if all_equal {
        (diffs[0].signum() * f64::INFINITY, 0.0, Some(Degeneracy::ConstantDifference))
    } else {
        let t = mean / (sd / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::domain(e.to_string()))?;
        (t, (2.0 * dist.sf(t.abs())).min(1.0), None)
    };

    let w = signed_rank(&diffs);
    Ok(PairedTestResult {
        n,
        mean_diff: mean,
        sd_diff: sd,
        t_statistic: t,
        degrees_freedom: df,
        p_value: p,
        wilcoxon_statistic: w.statistic,
        wilcoxon_z: w.z,
        wilcoxon_p: w.p,
        wilcoxon_n: w.n,
        degenerate,
    })
}

struct SignedRank {
    statistic: f64,
    z: f64,
    p: f64,
    n: usize,
}

fn signed_rank(diffs: &[f64]) -> SignedRank {
    let mut nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return SignedRank { statistic: 0.0, z: 0.0, p: 1.0, n };
    }
    nz.sort_by(|x, y| x.abs().total_cmp(&y.abs()));

    let (mut w_plus, mut w_minus, mut tie_term) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && nz[j].abs() == nz[i].abs() {
            j += 1;
        }
        // Ranks i+1..=j share their average.
        let rank = 0.5 * ((i + 1 + j) as f64);
        for &d in &nz[i..j] {
            if d > 0.0 {
                w_plus += rank;
            } else {
                w_minus += rank;
            }
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let dev = w_plus - mean;
    let corrected = dev - 0.5 * dev.signum();
    let z = if var > 0.0 { corrected / var.sqrt() } else { 0.0 };
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * normal.sf(z.abs())).min(1.0);
    SignedRank {
        statistic: w_plus.min(w_minus),
        z,
        p,
        n,
    }
}
