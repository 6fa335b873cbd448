//! Versioned JSON document for fitted mixtures.
//!
//! Full and tied covariances are stored as row-major lower triangles,
//! diagonal ones as per-component variance vectors, spherical ones as one
//! variance per component.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CovarianceStructure, Covariances, MixtureModel};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "routinesig-mixture";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum CovarianceDocument {
    PerComponent(Vec<Vec<f64>>),
    Shared(Vec<f64>),
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    k: usize,
    structure: CovarianceStructure,
    n_features: usize,
    feature_names: Vec<String>,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: CovarianceDocument,
    seed: u64,
    loglik: f64,
    converged: bool,
    n_iter: usize,
}

fn lower_triangle(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    (0..d).flat_map(|a| (0..=a).map(move |b| (a, b))).map(|(a, b)| m[(a, b)]).collect()
}

fn from_lower_triangle(v: &[f64], d: usize, what: &str) -> Result<DMatrix<f64>> {
    if v.len() != d * (d + 1) / 2 {
        return Err(Error::invalid(what, format!("expected {} lower-triangle entries, got {}", d * (d + 1) / 2, v.len())));
    }
    let mut m = DMatrix::zeros(d, d);
    let mut it = v.iter();
    for a in 0..d {
        for b in 0..=a {
            let x = *it.next().unwrap();
            m[(a, b)] = x;
            m[(b, a)] = x;
        }
    }
    Ok(m)
}

impl MixtureModel {
    pub fn to_json(&self) -> serde_json::Value {
        let covariances = match &self.covariances {
            Covariances::Full(c) => CovarianceDocument::PerComponent(c.iter().map(lower_triangle).collect()),
            Covariances::Tied(c) => CovarianceDocument::Shared(lower_triangle(c)),
            Covariances::Diagonal(v) => CovarianceDocument::PerComponent(v.clone()),
            Covariances::Spherical(v) => CovarianceDocument::Shared(v.clone()),
        };
        let doc = ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            k: self.k(),
            structure: self.structure(),
            n_features: self.n_features(),
            feature_names: self.feature_names.clone(),
            weights: self.weights.clone(),
            means: self.means.clone(),
            covariances,
            seed: self.seed,
            loglik: self.loglik,
            converged: self.converged,
            n_iter: self.n_iter,
        };
        serde_json::to_value(doc).expect("model document serializes")
    }

    pub fn from_json(value: serde_json::Value) -> Result<MixtureModel> {
        let doc: ModelDocument = serde_json::from_value(value)?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::invalid("format", format!("expected `{MODEL_FORMAT}`, found `{}`", doc.format)));
        }
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid("version", format!("unsupported model version {}", doc.version)));
        }
        let (k, d) = (doc.k, doc.n_features);
        if doc.weights.len() != k || doc.means.len() != k || doc.means.iter().any(|m| m.len() != d) {
            return Err(Error::invalid("means", "weights/means do not match k and n_features"));
        }
        let total: f64 = doc.weights.iter().sum();
        if doc.weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("weights", "weights must be non-negative and sum to 1"));
        }
        let shape_err = || Error::invalid("covariances", format!("layout does not match structure `{}`", doc.structure));
        let covariances = match (doc.structure, doc.covariances) {
            (CovarianceStructure::Full, CovarianceDocument::PerComponent(c)) if c.len() == k => Covariances::Full(
                c.iter()
                    .enumerate()
                    .map(|(i, v)| from_lower_triangle(v, d, &format!("covariances[{i}]")))
                    .collect::<Result<_>>()?,
            ),
            (CovarianceStructure::Tied, CovarianceDocument::Shared(v)) => Covariances::Tied(from_lower_triangle(&v, d, "covariances")?),
            (CovarianceStructure::Diagonal, CovarianceDocument::PerComponent(c)) if c.len() == k && c.iter().all(|v| v.len() == d) => {
                Covariances::Diagonal(c)
            }
            (CovarianceStructure::Spherical, CovarianceDocument::Shared(v)) if v.len() == k => Covariances::Spherical(v),
            _ => return Err(shape_err()),
        };
        let model = MixtureModel {
            weights: doc.weights,
            means: doc.means,
            covariances,
            seed: doc.seed,
            loglik: doc.loglik,
            converged: doc.converged,
            n_iter: doc.n_iter,
            feature_names: doc.feature_names,
        };
        model.components()?;
        Ok(model)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("model document serializes")
    }

    pub fn from_json_str(s: &str) -> Result<MixtureModel> {
        Self::from_json(serde_json::from_str(s)?)
    }
}
