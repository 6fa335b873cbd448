//! Ordinary least squares through a QR factorization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::design::Design;
use crate::error::{Error, Result};

const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    /// t for OLS, z for Wald tests.
    pub statistic: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
}

impl Coefficient {
    pub(crate) fn from_estimate(name: &str, estimate: f64, std_error: f64, crit: f64, sf: impl Fn(f64) -> f64) -> Self {
        let statistic = if std_error > 0.0 {
            estimate / std_error
        } else if estimate == 0.0 {
            0.0
        } else {
            estimate.signum() * f64::INFINITY
        };
        let p = if std_error > 0.0 {
            (2.0 * sf(statistic.abs())).min(1.0)
        } else if estimate == 0.0 {
            1.0
        } else {
            0.0
        };
        Self {
            name: name.to_string(),
            estimate,
            std_error,
            statistic,
            ci_low: estimate - crit * std_error,
            ci_high: estimate + crit * std_error,
            p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub residual_variance: f64,
    pub n: usize,
    pub df_residual: usize,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Names of columns that are linear combinations of earlier columns,
/// together with the earlier columns they depend on.
pub(crate) fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut independent: Vec<usize> = Vec::new();
    let mut flagged = vec![false; x.ncols()];
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            flagged[j] = true;
            continue;
        }
        if independent.is_empty() {
            independent.push(j);
            continue;
        }
        let basis = x.select_columns(&independent);
        let qr = basis.clone().qr();
        let coef = qr
            .r()
            .solve_upper_triangular(&(qr.q().transpose() * &col))
            .unwrap_or_else(|| DVector::zeros(independent.len()));
        let resid = &col - &basis * &coef;
        if resid.norm() <= RANK_TOLERANCE * norm {
            flagged[j] = true;
            for (&i, c) in independent.iter().zip(coef.iter()) {
                if c.abs() > 1e-8 {
                    flagged[i] = true;
                }
            }
        } else {
            independent.push(j);
        }
    }
    names.iter().zip(flagged).filter(|(_, f)| *f).map(|(n, _)| n.clone()).collect()
}

pub(crate) fn check_full_rank(design: &Design) -> Result<()> {
    let bad = collinear_columns(&design.x, &design.names);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Rank(bad))
    }
}

pub(crate) fn check_shapes(design: &Design, y: &[f64]) -> Result<()> {
    if design.x.nrows() != y.len() {
        return Err(Error::domain(format!("{} design rows for {} responses", design.x.nrows(), y.len())));
    }
    if design.names.len() != design.x.ncols() {
        return Err(Error::domain("design column names do not match its width"));
    }
    if y.len() <= design.x.ncols() {
        return Err(Error::insufficient(format!(
            "{} observations for {} coefficients",
            y.len(),
            design.x.ncols()
        )));
    }
    if y.iter().chain(design.x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite value in regression input"));
    }
    Ok(())
}

/// Least squares with classical standard errors and t-based 95% intervals.
pub fn ols(design: &Design, y: &[f64]) -> Result<RegressionResult> {
    check_shapes(design, y)?;
    check_full_rank(design)?;
    let (n, p) = design.x.shape();
    let yv = DVector::from_column_slice(y);

    let qr = design.x.clone().qr();
    let r = qr.r();
    let beta = r
        .solve_upper_triangular(&(qr.q().transpose() * &yv))
        .ok_or_else(|| Error::Rank(design.names.clone()))?;
    let fitted = &design.x * &beta;
    let rss = (&yv - &fitted).norm_squared();
    let y_mean = yv.mean();
    let tss = yv.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>();
    let df = n - p;
    let sigma2 = rss / df as f64;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Rank(design.names.clone()))?;
    let unscaled = &r_inv * r_inv.transpose();

    let t = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::domain(e.to_string()))?;
    let crit = t.inverse_cdf(0.975);
    let coefficients = design
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = (sigma2 * unscaled[(j, j)]).max(0.0).sqrt();
            Coefficient::from_estimate(name, beta[j], se, crit, |s| t.sf(s))
        })
        .collect();

    let r_squared = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 0.0 };
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (n - 1) as f64 / df as f64;
    Ok(RegressionResult {
        coefficients,
        r_squared,
        adj_r_squared,
        residual_variance: sigma2,
        n,
        df_residual: df,
    })
}
