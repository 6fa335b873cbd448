//! Gaussian mixture routine clustering.
//!
//! Mixtures are fit by EM on pooled standardized person-days with one of four
//! covariance parameterizations. Model choice uses BIC; cluster separation is
//! summarized by pairwise Bhattacharyya distances.

mod bhattacharyya;
pub(crate) mod em;
mod serial;
mod sweep;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bhattacharyya::{bhattacharyya, pairwise_bhattacharyya, SeparationSummary};
pub use serial::MODEL_FORMAT_VERSION;
pub use sweep::{model_sweep, SweepEntry, SweepOptions, ModelSweepResult};

use crate::error::{Error, Result};
use crate::seed;
use em::{Component, RunSettings, Samples};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceStructure {
    Full,
    Tied,
    Diagonal,
    Spherical,
}

impl CovarianceStructure {
    pub const ALL: [CovarianceStructure; 4] = [
        CovarianceStructure::Full,
        CovarianceStructure::Tied,
        CovarianceStructure::Diagonal,
        CovarianceStructure::Spherical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CovarianceStructure::Full => "full",
            CovarianceStructure::Tied => "tied",
            CovarianceStructure::Diagonal => "diagonal",
            CovarianceStructure::Spherical => "spherical",
        }
    }

    /// Free covariance parameters for `k` components in `d` dimensions.
    pub fn covariance_parameters(self, k: usize, d: usize) -> usize {
        match self {
            CovarianceStructure::Full => k * d * (d + 1) / 2,
            CovarianceStructure::Tied => d * (d + 1) / 2,
            CovarianceStructure::Diagonal => k * d,
            CovarianceStructure::Spherical => k,
        }
    }
}

impl fmt::Display for CovarianceStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CovarianceStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "tied" => Ok(Self::Tied),
            "diag" | "diagonal" => Ok(Self::Diagonal),
            "spherical" => Ok(Self::Spherical),
            other => Err(Error::invalid("structure", format!("unknown covariance structure `{other}`"))),
        }
    }
}

/// Covariances in their structure-specific storage.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariances {
    Full(Vec<DMatrix<f64>>),
    Tied(DMatrix<f64>),
    Diagonal(Vec<Vec<f64>>),
    Spherical(Vec<f64>),
}

impl Covariances {
    pub fn structure(&self) -> CovarianceStructure {
        match self {
            Covariances::Full(_) => CovarianceStructure::Full,
            Covariances::Tied(_) => CovarianceStructure::Tied,
            Covariances::Diagonal(_) => CovarianceStructure::Diagonal,
            Covariances::Spherical(_) => CovarianceStructure::Spherical,
        }
    }

    /// Dense covariance of component `k`.
    pub fn dense(&self, k: usize, d: usize) -> DMatrix<f64> {
        match self {
            Covariances::Full(c) => c[k].clone(),
            Covariances::Tied(c) => c.clone(),
            Covariances::Diagonal(v) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&v[k])),
            Covariances::Spherical(v) => DMatrix::identity(d, d) * v[k],
        }
    }
}

/// A fitted K-component Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Covariances,
    pub seed: u64,
    pub loglik: f64,
    pub converged: bool,
    pub n_iter: usize,
    pub feature_names: Vec<String>,
}

impl MixtureModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn n_features(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn structure(&self) -> CovarianceStructure {
        self.covariances.structure()
    }

    pub fn covariance(&self, k: usize) -> DMatrix<f64> {
        self.covariances.dense(k, self.n_features())
    }

    /// Free parameters: weights, means and covariances.
    pub fn n_parameters(&self) -> usize {
        n_parameters(self.k(), self.n_features(), self.structure())
    }

    /// Components with covariance factors ready for density evaluation.
    pub(crate) fn components(&self) -> Result<Vec<Component>> {
        (0..self.k())
            .map(|c| {
                let cov = self.covariance(c);
                let d = self.n_features();
                let flat: Vec<f64> = (0..d * d).map(|i| cov[(i / d, i % d)]).collect();
                Component::new(self.means[c].clone(), flat).map_err(|_| {
                    Error::domain(format!("component {c} covariance is not positive definite"))
                })
            })
            .collect()
    }

    /// Log-likelihood of `data` under the model.
    pub fn log_likelihood(&self, data: &DMatrix<f64>) -> Result<f64> {
        self.check_dims(data)?;
        let samples = Samples::from_matrix(data);
        let joint = em::log_joint(&samples, &self.weights, &self.components()?);
        Ok(joint.chunks(self.k()).map(em::log_sum_exp).sum())
    }

    fn check_dims(&self, data: &DMatrix<f64>) -> Result<()> {
        if data.ncols() != self.n_features() {
            return Err(Error::domain(format!(
                "data has {} columns, model expects {}",
                data.ncols(),
                self.n_features()
            )));
        }
        Ok(())
    }

    /// The same model with components reordered so that new component `i` is
    /// old component `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> MixtureModel {
        let covariances = match &self.covariances {
            Covariances::Full(c) => Covariances::Full(order.iter().map(|&i| c[i].clone()).collect()),
            Covariances::Tied(c) => Covariances::Tied(c.clone()),
            Covariances::Diagonal(v) => Covariances::Diagonal(order.iter().map(|&i| v[i].clone()).collect()),
            Covariances::Spherical(v) => Covariances::Spherical(order.iter().map(|&i| v[i]).collect()),
        };
        MixtureModel {
            weights: order.iter().map(|&i| self.weights[i]).collect(),
            means: order.iter().map(|&i| self.means[i].clone()).collect(),
            covariances,
            ..self.clone()
        }
    }
}

pub fn n_parameters(k: usize, d: usize, structure: CovarianceStructure) -> usize {
    (k - 1) + k * d + structure.covariance_parameters(k, d)
}

/// BIC = -2 loglik + p ln(M); lower is better.
pub fn bic(model: &MixtureModel, data: &DMatrix<f64>) -> Result<f64> {
    let ll = model.log_likelihood(data)?;
    Ok(bic_from_loglik(ll, model.n_parameters(), data.nrows()))
}

pub fn bic_from_loglik(loglik: f64, n_parameters: usize, n_rows: usize) -> f64 {
    -2.0 * loglik + n_parameters as f64 * (n_rows as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub k: usize,
    pub structure: CovarianceStructure,
    pub seed: u64,
    pub n_restarts: usize,
    pub max_iter: usize,
    /// Relative log-likelihood change that ends a run.
    pub tol: f64,
    /// Added to every covariance diagonal after each M-step.
    pub reg_covar: f64,
}

impl FitOptions {
    pub fn new(k: usize, structure: CovarianceStructure, seed: u64) -> Self {
        Self {
            k,
            structure,
            seed,
            n_restarts: 10,
            max_iter: 500,
            tol: 1e-6,
            reg_covar: 1e-6,
        }
    }

    pub fn with_restarts(mut self, n: usize) -> Self {
        self.n_restarts = n;
        self
    }
}

/// Trace of one EM restart.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartTrace {
    pub loglik_history: Vec<f64>,
    pub converged: bool,
    pub reinitializations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: MixtureModel,
    pub restarts: Vec<RestartTrace>,
}

/// Fits a mixture; best of `n_restarts` runs by final log-likelihood.
pub fn fit_gmm(data: &DMatrix<f64>, opts: &FitOptions) -> Result<MixtureModel> {
    fit_gmm_traced(data, opts, &[]).map(|o| o.model)
}

/// [`fit_gmm`] that also reports every restart. `feature_names` is stored
/// on the model.
pub fn fit_gmm_traced(data: &DMatrix<f64>, opts: &FitOptions, feature_names: &[String]) -> Result<FitOutcome> {
    if opts.k == 0 {
        return Err(Error::domain("K must be at least 1"));
    }
    if data.nrows() < opts.k {
        return Err(Error::insufficient(format!("{} rows cannot support K = {}", data.nrows(), opts.k)));
    }
    if data.ncols() == 0 {
        return Err(Error::domain("data has no columns"));
    }
    if opts.n_restarts == 0 {
        return Err(Error::domain("n_restarts must be at least 1"));
    }
    let samples = Samples::from_matrix(data);
    let settings = RunSettings {
        k: opts.k,
        structure: opts.structure,
        max_iter: opts.max_iter,
        tol: opts.tol,
        reg: opts.reg_covar,
    };
    let runs: Vec<Result<em::RunResult>> = (0..opts.n_restarts)
        .into_par_iter()
        .map(|r| em::run(&samples, &settings, &mut seed::rng_for(opts.seed, "gmm-restart", r as u64)))
        .collect();

    let mut best: Option<em::RunResult> = None;
    let mut restarts = Vec::with_capacity(runs.len());
    let mut last_err = None;
    for run in runs {
        match run {
            Ok(r) => {
                restarts.push(RestartTrace {
                    loglik_history: r.history.clone(),
                    converged: r.converged,
                    reinitializations: r.reinitializations,
                    error: None,
                });
                if best.as_ref().is_none_or(|b| r.loglik > b.loglik) {
                    best = Some(r);
                }
            }
            Err(e) => {
                restarts.push(RestartTrace {
                    loglik_history: Vec::new(),
                    converged: false,
                    reinitializations: 0,
                    error: Some(e.to_string()),
                });
                last_err = Some(e);
            }
        }
    }
    let best = match best {
        Some(b) => b,
        None => return Err(last_err.unwrap_or_else(|| Error::SingularFit("no restart succeeded".into()))),
    };

    let d = data.ncols();
    let dense = |c: &Component| DMatrix::from_row_slice(d, d, &c.cov);
    let covariances = match opts.structure {
        CovarianceStructure::Full => Covariances::Full(best.components.iter().map(dense).collect()),
        CovarianceStructure::Tied => Covariances::Tied(dense(&best.components[0])),
        CovarianceStructure::Diagonal => {
            Covariances::Diagonal(best.components.iter().map(|c| (0..d).map(|a| c.cov[a * d + a]).collect()).collect())
        }
        CovarianceStructure::Spherical => Covariances::Spherical(best.components.iter().map(|c| c.cov[0]).collect()),
    };
    let model = MixtureModel {
        weights: best.weights,
        means: best.components.iter().map(|c| c.mean.clone()).collect(),
        covariances,
        seed: opts.seed,
        loglik: best.loglik,
        converged: best.converged,
        n_iter: best.n_iter,
        feature_names: feature_names.to_vec(),
    };
    Ok(FitOutcome { model, restarts })
}

/// Per-day routine labels and posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub labels: Vec<usize>,
    /// n x K, each row summing to one.
    pub responsibilities: DMatrix<f64>,
}

impl Assignment {
    pub fn k(&self) -> usize {
        self.responsibilities.ncols()
    }
}

/// Posterior responsibilities by Bayes rule in log space; hard label is the
/// argmax, ties going to the lowest component index.
pub fn assign(model: &MixtureModel, data: &DMatrix<f64>) -> Result<Assignment> {
    model.check_dims(data)?;
    let k = model.k();
    let samples = Samples::from_matrix(data);
    let joint = em::log_joint(&samples, &model.weights, &model.components()?);
    let mut resp = DMatrix::zeros(samples.n, k);
    let mut labels = Vec::with_capacity(samples.n);
    for (i, row) in joint.chunks(k).enumerate() {
        let lse = em::log_sum_exp(row);
        let mut best = 0;
        for c in 0..k {
            resp[(i, c)] = (row[c] - lse).exp();
            if row[c] > row[best] {
                best = c;
            }
        }
        labels.push(best);
    }
    Ok(Assignment {
        labels,
        responsibilities: resp,
    })
}
