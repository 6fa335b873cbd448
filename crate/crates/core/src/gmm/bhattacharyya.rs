use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::MixtureModel;
use crate::error::{Error, Result};

fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if !m.is_square() {
        return Err(Error::domain(format!("{what} is not square")));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-9 * m.amax().max(1.0) {
        return Err(Error::domain(format!("{what} is not symmetric")));
    }
    m.clone()
        .cholesky()
        .ok_or_else(|| Error::domain(format!("{what} is not positive definite")))
}

fn log_det(c: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Bhattacharyya distance between two Gaussians.
///
/// `(1/8) dmu' S^-1 dmu + (1/2) ln(det S / sqrt(det S1 det S2))` with
/// `S = (S1 + S2) / 2`, evaluated through Cholesky factors.
pub fn bhattacharyya(mu1: &DVector<f64>, sigma1: &DMatrix<f64>, mu2: &DVector<f64>, sigma2: &DMatrix<f64>) -> Result<f64> {
    let d = mu1.len();
    if mu2.len() != d || sigma1.nrows() != d || sigma2.nrows() != d {
        return Err(Error::domain("Gaussian parameters have mismatched dimensions"));
    }
    let c1 = cholesky(sigma1, "first covariance")?;
    let c2 = cholesky(sigma2, "second covariance")?;
    let avg = (sigma1 + sigma2) * 0.5;
    let c = cholesky(&avg, "average covariance")?;

    let diff = mu1 - mu2;
    let z = c.l_dirty().solve_lower_triangular(&diff).expect("cholesky factor is invertible");
    let maha = z.norm_squared();
    let log_ratio = log_det(&c) - 0.5 * (log_det(&c1) + log_det(&c2));
    let term = if sigma1 == sigma2 { 0.0 } else { 0.5 * log_ratio };
    Ok(maha / 8.0 + term)
}

/// Mean and minimum Bhattacharyya distance over all component pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationSummary {
    pub mean: f64,
    pub min: f64,
}

/// `None` for single-component models.
pub fn pairwise_bhattacharyya(model: &MixtureModel) -> Result<Option<SeparationSummary>> {
    let k = model.k();
    if k < 2 {
        return Ok(None);
    }
    let means: Vec<DVector<f64>> = model.means.iter().map(|m| DVector::from_column_slice(m)).collect();
    let covs: Vec<DMatrix<f64>> = (0..k).map(|c| model.covariance(c)).collect();
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut pairs = 0usize;
    for a in 0..k {
        for b in a + 1..k {
            let v = bhattacharyya(&means[a], &covs[a], &means[b], &covs[b])?;
            sum += v;
            min = min.min(v);
            pairs += 1;
        }
    }
    Ok(Some(SeparationSummary {
        mean: sum / pairs as f64,
        min,
    }))
}
