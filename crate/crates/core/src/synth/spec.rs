//! Cohort specification and its validation.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::N_FEATURES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainMode {
    /// Each day's routine is drawn independently from the person's weights.
    Iid,
    /// Routines follow a person-specific first-order chain.
    Markov,
}

/// Gaussian emission parameters for the latent routines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum EmissionSpec {
    /// Means on scaled simplex vertices with random SPD covariances, scaled
    /// so every pair of routines is at least this Bhattacharyya distance apart.
    Preset { min_bhattacharyya: f64 },
    Explicit {
        means: Vec<Vec<f64>>,
        /// One dense row-major covariance per routine.
        covariances: Vec<Vec<Vec<f64>>>,
    },
}

impl EmissionSpec {
    pub const EASY: f64 = 2.0;
    pub const HARD: f64 = 0.5;

    pub fn easy() -> Self {
        EmissionSpec::Preset {
            min_bhattacharyya: Self::EASY,
        }
    }

    pub fn hard() -> Self {
        EmissionSpec::Preset {
            min_bhattacharyya: Self::HARD,
        }
    }
}

fn default_feature_dim() -> usize {
    N_FEATURES
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub n_participants: usize,
    pub n_days: usize,
    pub k_true: usize,
    /// Informative leading features; the rest of the 13 are pure noise.
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    pub emissions: EmissionSpec,
    /// Dirichlet concentration for person-specific routine weights.
    pub weight_concentration: f64,
    /// Base measure of the weight prior; uniform when absent.
    #[serde(default)]
    pub weight_base: Option<Vec<f64>>,
    pub chain_mode: ChainMode,
    /// Dirichlet concentration for each row of a person's chain.
    pub chain_concentration: f64,
    /// Weekend odds multiplier per routine.
    #[serde(default)]
    pub weekend_modulation: Option<Vec<f64>>,
    /// Draw one weight vector and chain and give it to every participant.
    #[serde(default)]
    pub shared_parameters: bool,
    pub missing_day_rate: f64,
    pub seed: u64,
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
}

impl CohortSpec {
    /// 100 participants over 300 days with four well separated routines.
    pub fn reference() -> Self {
        Self {
            n_participants: 100,
            n_days: 300,
            k_true: 4,
            feature_dim: N_FEATURES,
            emissions: EmissionSpec::easy(),
            weight_concentration: 0.5,
            weight_base: None,
            chain_mode: ChainMode::Iid,
            chain_concentration: 1.0,
            weekend_modulation: None,
            shared_parameters: false,
            missing_day_rate: 0.0,
            seed: 20240101,
            start_date: default_start_date(),
        }
    }

    /// Parse JSON, reporting the path of the offending field on failure.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: CohortSpec = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::invalid(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        spec.validate()?;
        Ok(spec)
    }

    /// Dirichlet parameters of the weight prior.
    pub fn weight_alpha(&self) -> Vec<f64> {
        let k = self.k_true as f64;
        match &self.weight_base {
            Some(base) => {
                let total: f64 = base.iter().sum();
                base.iter().map(|b| self.weight_concentration * k * b / total).collect()
            }
            None => vec![self.weight_concentration; self.k_true],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |path: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(path, format!("must be positive, got {v}")))
            }
        };
        if self.n_participants == 0 {
            return Err(Error::invalid("n_participants", "must be at least 1"));
        }
        if self.n_days == 0 {
            return Err(Error::invalid("n_days", "must be at least 1"));
        }
        if self.k_true == 0 {
            return Err(Error::invalid("k_true", "must be at least 1"));
        }
        if !(1..=N_FEATURES).contains(&self.feature_dim) {
            return Err(Error::invalid("feature_dim", format!("must be in 1..={N_FEATURES}")));
        }
        positive("weight_concentration", self.weight_concentration)?;
        positive("chain_concentration", self.chain_concentration)?;
        if !(0.0..=1.0).contains(&self.missing_day_rate) {
            return Err(Error::invalid("missing_day_rate", "must be in [0, 1]"));
        }
        if let Some(base) = &self.weight_base {
            if base.len() != self.k_true {
                return Err(Error::invalid("weight_base", format!("expected {} entries", self.k_true)));
            }
            for (i, &b) in base.iter().enumerate() {
                positive(&format!("weight_base[{i}]"), b)?;
            }
        }
        if let Some(m) = &self.weekend_modulation {
            if m.len() != self.k_true {
                return Err(Error::invalid("weekend_modulation", format!("expected {} entries", self.k_true)));
            }
            for (i, &v) in m.iter().enumerate() {
                positive(&format!("weekend_modulation[{i}]"), v)?;
            }
        }
        match &self.emissions {
            EmissionSpec::Preset { min_bhattacharyya } => {
                if !(min_bhattacharyya.is_finite() && *min_bhattacharyya >= 0.0) {
                    return Err(Error::invalid("emissions.min_bhattacharyya", "must be non-negative"));
                }
                if self.k_true > self.feature_dim {
                    return Err(Error::invalid(
                        "k_true",
                        format!("preset emissions place at most feature_dim = {} routines", self.feature_dim),
                    ));
                }
            }
            EmissionSpec::Explicit { means, covariances } => {
                if means.len() != self.k_true {
                    return Err(Error::invalid("emissions.means", format!("expected {} routines", self.k_true)));
                }
                if covariances.len() != self.k_true {
                    return Err(Error::invalid("emissions.covariances", format!("expected {} routines", self.k_true)));
                }
                for (k, m) in means.iter().enumerate() {
                    if m.len() != self.feature_dim || m.iter().any(|v| !v.is_finite()) {
                        return Err(Error::invalid(
                            format!("emissions.means[{k}]"),
                            format!("expected {} finite values", self.feature_dim),
                        ));
                    }
                }
                for (k, c) in covariances.iter().enumerate() {
                    let path = format!("emissions.covariances[{k}]");
                    if c.len() != self.feature_dim || c.iter().any(|r| r.len() != self.feature_dim) {
                        return Err(Error::invalid(path, format!("expected a {0}x{0} matrix", self.feature_dim)));
                    }
                    let m = nalgebra::DMatrix::from_fn(self.feature_dim, self.feature_dim, |i, j| c[i][j]);
                    if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) || m.cholesky().is_none() {
                        return Err(Error::invalid(path, "covariance is not symmetric positive definite"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_spec_round_trips() {
        let spec = CohortSpec::reference();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(CohortSpec::from_json_str(&text).unwrap(), spec);
    }

    #[test]
    fn errors_name_the_field() {
        let mut v = serde_json::to_value(CohortSpec::reference()).unwrap();
        v["emissions"]["preset"]["min_bhattacharyya"] = serde_json::json!("far");
        match CohortSpec::from_json_str(&v.to_string()) {
            Err(Error::InvalidSpec { path, .. }) => assert_eq!(path, "emissions.preset.min_bhattacharyya"),
            other => panic!("{other:?}"),
        }

        let mut v = serde_json::to_value(CohortSpec::reference()).unwrap();
        v["missing_day_rate"] = serde_json::json!(1.5);
        match CohortSpec::from_json_str(&v.to_string()) {
            Err(Error::InvalidSpec { path, .. }) => assert_eq!(path, "missing_day_rate"),
            other => panic!("{other:?}"),
        }

        let mut spec = CohortSpec::reference();
        spec.k_true = 2;
        spec.feature_dim = 2;
        spec.emissions = EmissionSpec::Explicit {
            means: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            covariances: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![1.0, 2.0], vec![2.0, 1.0]]],
        };
        match spec.validate() {
            Err(Error::InvalidSpec { path, .. }) => assert_eq!(path, "emissions.covariances[1]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weight_prior_scales_base_measure() {
        let mut spec = CohortSpec::reference();
        spec.weight_concentration = 10.0;
        spec.weight_base = Some(vec![0.4, 0.3, 0.2, 0.1]);
        let alpha = spec.weight_alpha();
        assert!((alpha.iter().sum::<f64>() - 40.0).abs() < 1e-12);
        assert!((alpha[0] - 16.0).abs() < 1e-12);
    }
}
