//! Run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use routinesig::gmm::SweepOptions;
use routinesig::stats::AgeEncoding;
use routinesig::{CovarianceStructure, Error, Metric, PeerAggregation};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub daily: Option<PathBuf>,
    pub lock: Option<PathBuf>,
    pub accelerometer: Option<PathBuf>,
    pub screen: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Overrides the cohort spec seed in `synth` when set.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub inputs: InputPaths,
    /// K for `fit`.
    pub k: usize,
    pub structure: CovarianceStructure,
    pub sweep_k: Vec<usize>,
    pub sweep_structures: Vec<CovarianceStructure>,
    /// Restricts `sweep` to a single fit at this K with `structure`.
    pub pin_k: Option<usize>,
    pub n_restarts: usize,
    pub segment_length: usize,
    pub metrics: Vec<Metric>,
    pub aggregation: PeerAggregation,
    pub max_gap_days: i64,
    /// Daily CSV column holding the analysis group.
    pub group_column: String,
    /// Adds study indicators to the regression when profiles span several studies.
    pub pool_studies: bool,
    /// Binary for OLS and continuous for the mixed model when unset.
    pub age_encoding: Option<AgeEncoding>,
    /// K values for the rank-curve sensitivity figure; the model's K when empty.
    pub k_range: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sweep = SweepOptions::default();
        Self {
            version: CONFIG_VERSION,
            seed: None,
            out_dir: PathBuf::from("."),
            inputs: InputPaths::default(),
            k: 8,
            structure: CovarianceStructure::Full,
            sweep_k: sweep.k_values,
            sweep_structures: sweep.structures,
            pin_k: None,
            n_restarts: sweep.n_restarts,
            segment_length: 135,
            metrics: Metric::ALL.to_vec(),
            aggregation: PeerAggregation::Mean,
            max_gap_days: routinesig::transitions::DEFAULT_MAX_GAP_DAYS,
            group_column: "group_key".into(),
            pool_studies: false,
            age_encoding: None,
            k_range: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self, Error> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::InvalidSpec {
            path: e.path().to_string(),
            reason: e.inner().to_string(),
        })?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::InvalidSpec {
                path: "version".into(),
                reason: format!("unsupported config version {}; expected {CONFIG_VERSION}", cfg.version),
            });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// The configuration with input and output locations removed, so moving
    /// files around does not change provenance.
    pub fn provenance_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        obj.remove("inputs");
        obj.remove("out_dir");
        v
    }

    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.provenance_value()).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn sweep_options(&self) -> SweepOptions {
        let (k_values, structures) = match self.pin_k {
            Some(k) => (vec![k], vec![self.structure]),
            None => (self.sweep_k.clone(), self.sweep_structures.clone()),
        };
        SweepOptions {
            k_values,
            structures,
            seed: self.seed(),
            n_restarts: self.n_restarts,
            ..SweepOptions::default()
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |path: &str, reason: &str| {
            Err(Error::InvalidSpec {
                path: path.into(),
                reason: reason.into(),
            })
        };
        if self.k == 0 {
            return bad("k", "must be at least 1");
        }
        if self.pin_k == Some(0) {
            return bad("pin_k", "must be at least 1");
        }
        if self.sweep_k.is_empty() || self.sweep_k.contains(&0) {
            return bad("sweep_k", "needs at least one K, each at least 1");
        }
        if self.sweep_structures.is_empty() {
            return bad("sweep_structures", "needs at least one structure");
        }
        if self.n_restarts == 0 {
            return bad("n_restarts", "must be at least 1");
        }
        if self.segment_length == 0 {
            return bad("segment_length", "must be at least 1");
        }
        if self.metrics.is_empty() {
            return bad("metrics", "needs at least one metric");
        }
        if self.max_gap_days < 1 {
            return bad("max_gap_days", "must be at least 1");
        }
        if self.k_range.contains(&0) {
            return bad("k_range", "K values must be at least 1");
        }
        Ok(())
    }
}

/// Parses `lo:hi` (inclusive) or a comma-separated list of K values.
pub fn parse_k_list(s: &str) -> Result<Vec<usize>, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not a K value"));
    if let Some((lo, hi)) = s.split_once(':') {
        let (lo, hi) = (num(lo)?, num(hi)?);
        if lo > hi {
            return Err(format!("empty range {lo}:{hi}"));
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(num).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_paths() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = "/elsewhere".into();
        b.inputs.dataset = Some("x.csv".into());
        assert_eq!(a.hash(), b.hash());
        b.segment_length = 30;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_fields_name_their_path() {
        let err = RunConfig::from_json_str(r#"{"version":1,"inputs":{"dayly":"x"}}"#).unwrap_err();
        match err {
            Error::InvalidSpec { path, .. } => assert_eq!(path, "inputs.dayly"),
            e => panic!("{e}"),
        }
        let err = RunConfig::from_json_str(r#"{"version":1,"segment_length":"long"}"#).unwrap_err();
        assert!(matches!(err, Error::InvalidSpec { path, .. } if path == "segment_length"));
        assert!(RunConfig::from_json_str(r#"{"version":2}"#).is_err());
    }

    #[test]
    fn config_round_trips() {
        let mut c = RunConfig::default();
        c.metrics = vec![Metric::Cosine];
        c.age_encoding = Some(AgeEncoding::Continuous);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json_str(&text).unwrap(), c);
    }

    #[test]
    fn k_lists() {
        assert_eq!(parse_k_list("6:11").unwrap(), vec![6, 7, 8, 9, 10, 11]);
        assert_eq!(parse_k_list("2,4").unwrap(), vec![2, 4]);
        assert!(parse_k_list("5:3").is_err());
        assert!(parse_k_list("a").is_err());
    }

    #[test]
    fn pinning_restricts_the_sweep() {
        let mut c = RunConfig::default();
        c.pin_k = Some(8);
        let s = c.sweep_options();
        assert_eq!(s.k_values, vec![8]);
        assert_eq!(s.structures, vec![CovarianceStructure::Full]);
    }
}
