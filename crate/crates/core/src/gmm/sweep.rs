use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bic_from_loglik, fit_gmm_traced, pairwise_bhattacharyya, CovarianceStructure, FitOptions, MixtureModel};
use crate::error::{Error, Result};

/// K and structure of the main-analysis model.
pub const PINNED_K: usize = 8;
pub const PINNED_STRUCTURE: CovarianceStructure = CovarianceStructure::Full;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub k_values: Vec<usize>,
    pub structures: Vec<CovarianceStructure>,
    pub seed: u64,
    pub n_restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub reg_covar: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        let base = FitOptions::new(1, CovarianceStructure::Full, 0);
        Self {
            k_values: (2..=12).collect(),
            structures: CovarianceStructure::ALL.to_vec(),
            seed: 0,
            n_restarts: base.n_restarts,
            max_iter: base.max_iter,
            tol: base.tol,
            reg_covar: base.reg_covar,
        }
    }
}

impl SweepOptions {
    pub fn fit_options(&self, k: usize, structure: CovarianceStructure) -> FitOptions {
        FitOptions {
            k,
            structure,
            seed: self.seed,
            n_restarts: self.n_restarts,
            max_iter: self.max_iter,
            tol: self.tol,
            reg_covar: self.reg_covar,
        }
    }
}

/// One (K, structure) fit of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub k: usize,
    pub structure: CovarianceStructure,
    pub bic: Option<f64>,
    pub loglik: Option<f64>,
    pub n_parameters: usize,
    pub mean_bhattacharyya: Option<f64>,
    pub min_bhattacharyya: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ModelSweepResult {
    pub entries: Vec<SweepEntry>,
    /// Fitted model per entry, `None` where the fit failed.
    pub models: Vec<Option<MixtureModel>>,
    /// Index of the BIC-minimal converged entry (any successful entry if
    /// none converged).
    pub selected: usize,
    /// Index of the K = 8 full-covariance entry when it was part of the sweep.
    pub pinned: Option<usize>,
}

impl ModelSweepResult {
    pub fn selected_entry(&self) -> &SweepEntry {
        &self.entries[self.selected]
    }

    pub fn selected_model(&self) -> &MixtureModel {
        self.models[self.selected].as_ref().expect("selected entry has a model")
    }

    pub fn pinned_model(&self) -> Option<&MixtureModel> {
        self.pinned.and_then(|i| self.models[i].as_ref())
    }
}

/// Fits every (K, structure) pair and selects by BIC.
pub fn model_sweep(data: &DMatrix<f64>, opts: &SweepOptions, feature_names: &[String]) -> Result<ModelSweepResult> {
    if opts.k_values.is_empty() || opts.structures.is_empty() {
        return Err(Error::domain("sweep needs at least one K and one structure"));
    }
    let grid: Vec<(usize, CovarianceStructure)> = opts
        .k_values
        .iter()
        .flat_map(|&k| opts.structures.iter().map(move |&s| (k, s)))
        .collect();
    let n = data.nrows();
    let fits: Vec<(SweepEntry, Option<MixtureModel>)> = grid
        .par_iter()
        .map(|&(k, structure)| {
            let n_parameters = super::n_parameters(k.max(1), data.ncols(), structure);
            let failed = |e: Error| SweepEntry {
                k,
                structure,
                bic: None,
                loglik: None,
                n_parameters,
                mean_bhattacharyya: None,
                min_bhattacharyya: None,
                converged: false,
                error: Some(e.to_string()),
            };
            let model = match fit_gmm_traced(data, &opts.fit_options(k, structure), feature_names) {
                Ok(o) => o.model,
                Err(e) => return (failed(e), None),
            };
            let sep = match pairwise_bhattacharyya(&model) {
                Ok(s) => s,
                Err(e) => return (failed(e), None),
            };
            let entry = SweepEntry {
                k,
                structure,
                bic: Some(bic_from_loglik(model.loglik, n_parameters, n)),
                loglik: Some(model.loglik),
                n_parameters,
                mean_bhattacharyya: sep.map(|s| s.mean),
                min_bhattacharyya: sep.map(|s| s.min),
                converged: model.converged,
                error: None,
            };
            (entry, Some(model))
        })
        .collect();
    let (entries, models): (Vec<_>, Vec<_>) = fits.into_iter().unzip();

    let pick = |require_converged: bool| {
        entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.bic.is_some() && (e.converged || !require_converged))
            .min_by(|a, b| a.1.bic.unwrap().total_cmp(&b.1.bic.unwrap()).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    };
    let selected = pick(true)
        .or_else(|| pick(false))
        .ok_or_else(|| Error::SweepFailed(format!("all {} fits failed", entries.len())))?;
    let pinned = entries
        .iter()
        .position(|e| e.k == PINNED_K && e.structure == PINNED_STRUCTURE && e.bic.is_some());
    Ok(ModelSweepResult {
        entries,
        models,
        selected,
        pinned,
    })
}
