//! Distances between routine distributions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Jensen-Shannon divergence in bits.
    Jsd,
    /// One minus cosine similarity.
    Cosine,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Jsd, Metric::Cosine];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Jsd => "jsd",
            Metric::Cosine => "cosine",
        }
    }

    pub fn distance(self, p: &[f64], q: &[f64]) -> Result<f64> {
        match self {
            Metric::Jsd => jsd(p, q),
            Metric::Cosine => cosine_distance(p, q),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jsd" => Ok(Metric::Jsd),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::invalid("metric", format!("unknown metric `{other}`"))),
        }
    }
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    let mut total = 0.0;
    for &x in p {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::domain(format!("{name} has invalid mass {x}")));
        }
        total += x;
    }
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::domain(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

/// Jensen-Shannon divergence with base-2 logarithms, so the result lies in [0, 1].
///
/// ```
/// use routinesig::signature::jsd;
/// assert_eq!(jsd(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
/// ```
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::domain(format!("length mismatch: {} vs {}", p.len(), q.len())));
    }
    if p.is_empty() {
        return Err(Error::domain("empty distributions"));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;

    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        let term = |x: f64| if x > 0.0 { x * (x / m).log2() } else { 0.0 };
        acc += term(a) + term(b);
    }
    Ok((0.5 * acc).clamp(0.0, 1.0))
}

/// `1 - p·q / (|p| |q|)`.
pub fn cosine_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::domain(format!("length mismatch: {} vs {}", p.len(), q.len())));
    }
    let (mut pq, mut pp, mut qq) = (0.0, 0.0, 0.0);
    for (&a, &b) in p.iter().zip(q) {
        pq += a * b;
        pp += a * a;
        qq += b * b;
    }
    if pp == 0.0 || qq == 0.0 {
        return Err(Error::domain("cosine distance of a zero vector"));
    }
    if !(pq.is_finite() && pp.is_finite() && qq.is_finite()) {
        return Err(Error::domain("non-finite input to cosine distance"));
    }
    Ok((1.0 - pq / (pp * qq).sqrt()).clamp(0.0, 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entropy_bits(p: &[f64]) -> f64 {
        -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.log2()).sum::<f64>()
    }

    fn jsd_by_entropies(p: &[f64], q: &[f64]) -> f64 {
        let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
        entropy_bits(&m) - 0.5 * (entropy_bits(p) + entropy_bits(q))
    }

    #[test]
    fn worked_values() {
        let expected = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2()) - 0.5;
        let got = jsd(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.311_278_124_459_132_8).abs() < 1e-12);
        assert_eq!(jsd(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(jsd(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);

        let c = cosine_distance(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(cosine_distance(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
    }

    #[test]
    fn bad_inputs_are_domain_errors() {
        assert!(matches!(jsd(&[1.0], &[0.5, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(jsd(&[1.5, -0.5], &[0.5, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(jsd(&[0.5, 0.4], &[0.5, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(cosine_distance(&[1.0], &[1.0, 0.0]), Err(Error::Domain(_))));
    }

    fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64], len).prop_filter_map("zero mass", |w| {
            let s: f64 = w.iter().sum();
            (s > 0.0).then(|| w.iter().map(|x| x / s).collect())
        })
    }

    fn triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..10).prop_flat_map(|n| (distribution(n), distribution(n), distribution(n)))
    }

    proptest! {
        #[test]
        fn jsd_matches_entropy_form((p, q, _) in triple()) {
            let d = jsd(&p, &q).unwrap();
            prop_assert!((d - jsd_by_entropies(&p, &q).clamp(0.0, 1.0)).abs() < 1e-12);
        }

        #[test]
        fn jsd_is_a_bounded_symmetric_divergence((p, q, r) in triple()) {
            let pq = jsd(&p, &q).unwrap();
            prop_assert_eq!(pq, jsd(&q, &p).unwrap());
            prop_assert!((0.0..=1.0).contains(&pq));
            prop_assert!(jsd(&p, &p).unwrap() < 1e-12);
            let pr = jsd(&p, &r).unwrap();
            let qr = jsd(&q, &r).unwrap();
            prop_assert!(pr.sqrt() <= pq.sqrt() + qr.sqrt() + 1e-9);
        }

        #[test]
        fn jsd_vanishes_only_on_equal_inputs((p, q, _) in triple()) {
            let max_gap = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if max_gap > 1e-6 {
                prop_assert!(jsd(&p, &q).unwrap() > 0.0);
            }
        }

        #[test]
        fn cosine_on_distributions_is_in_unit_interval((p, q, _) in triple()) {
            let d = cosine_distance(&p, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, cosine_distance(&q, &p).unwrap());
        }
    }
}
