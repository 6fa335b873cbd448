//! Random-intercept linear mixed model fitted by REML.
//!
//! With `λ = σ²_int / σ²_res` the marginal covariance of group `g` is
//! `σ²_res (I + λJ)`, whose inverse is `I - c_g J` with
//! `c_g = λ / (1 + n_g λ)`. The residual variance and fixed effects have
//! closed forms given `λ`, so the restricted likelihood is profiled down to a
//! one-dimensional search over `ln λ`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::design::Design;
use super::ols::{check_full_rank, check_shapes, ols, Coefficient};
use crate::error::{Error, Result};

const LOG_LAMBDA_RANGE: (f64, f64) = (-20.0, 12.0);
const GRID_POINTS: usize = 33;
const GOLDEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedModelResult {
    pub fixed_effects: Vec<Coefficient>,
    pub random_intercept_variance: f64,
    pub residual_variance: f64,
    pub marginal_r2: f64,
    pub conditional_r2: f64,
    pub n: usize,
    pub n_groups: usize,
    /// `-2` times the restricted log-likelihood at the optimum.
    pub reml_criterion: f64,
    /// Best criterion value after each optimizer iteration.
    pub objective_trace: Vec<f64>,
    /// Every group had a single observation, so an OLS fit was returned.
    pub fell_back_to_ols: bool,
}

impl MixedModelResult {
    pub fn fixed_effect(&self, name: &str) -> Option<&Coefficient> {
        self.fixed_effects.iter().find(|c| c.name == name)
    }
}

struct Profile<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    group_of: Vec<usize>,
    sizes: Vec<usize>,
    /// Per-group column sums of `x`.
    x_sums: Vec<DVector<f64>>,
}

struct Evaluation {
    criterion: f64,
    beta: DVector<f64>,
    sigma2: f64,
    a_inv: DMatrix<f64>,
}

impl Profile<'_> {
    fn shrink(&self, lambda: f64) -> Vec<f64> {
        self.sizes.iter().map(|&n| lambda / (1.0 + n as f64 * lambda)).collect()
    }

    fn evaluate(&self, lambda: f64) -> Result<Evaluation> {
        let (n, p) = self.x.shape();
        let c = self.shrink(lambda);
        let mut a = self.x.transpose() * self.x;
        let mut b = self.x.transpose() * self.y;
        let mut y_sums = vec![0.0; self.sizes.len()];
        for (i, &g) in self.group_of.iter().enumerate() {
            y_sums[g] += self.y[i];
        }
        for (g, s) in self.x_sums.iter().enumerate() {
            a -= c[g] * s * s.transpose();
            b -= c[g] * y_sums[g] * s;
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::SingularFit("fixed-effect information matrix is not positive definite".into()))?;
        let beta = chol.solve(&b);
        let resid = self.y - self.x * &beta;
        let mut r_sums = vec![0.0; self.sizes.len()];
        for (i, &g) in self.group_of.iter().enumerate() {
            r_sums[g] += resid[i];
        }
        let quad = resid.norm_squared() - c.iter().zip(&r_sums).map(|(c, s)| c * s * s).sum::<f64>();
        let dof = (n - p) as f64;
        let sigma2 = (quad / dof).max(f64::MIN_POSITIVE);
        let log_det_h: f64 = self.sizes.iter().map(|&m| (m as f64 * lambda).ln_1p()).sum();
        let log_det_a = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let criterion = dof * sigma2.ln() + log_det_h + log_det_a + dof * (1.0 + (2.0 * std::f64::consts::PI).ln());
        Ok(Evaluation {
            criterion,
            beta,
            sigma2,
            a_inv: chol.inverse(),
        })
    }
}

/// Coarse grid over `ln λ`, then golden-section refinement around the best
/// grid point. The boundary `λ = 0` is checked separately.
fn minimise(profile: &Profile<'_>) -> Result<(f64, Evaluation, Vec<f64>)> {
    let (lo, hi) = LOG_LAMBDA_RANGE;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let mut trace = Vec::new();
    let mut best_theta = lo;
    let mut best = f64::INFINITY;
    for i in 0..GRID_POINTS {
        let theta = lo + step * i as f64;
        let v = profile.evaluate(theta.exp())?.criterion;
        if v < best {
            best = v;
            best_theta = theta;
        }
        trace.push(best);
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = ((best_theta - step).max(lo), (best_theta + step).min(hi));
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = profile.evaluate(c.exp())?.criterion;
    let mut fd = profile.evaluate(d.exp())?.criterion;
    while b - a > GOLDEN_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = profile.evaluate(c.exp())?.criterion;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = profile.evaluate(d.exp())?.criterion;
        }
        let (theta, v) = if fc < fd { (c, fc) } else { (d, fd) };
        if v < best {
            best = v;
            best_theta = theta;
        }
        trace.push(best);
    }

    let mut lambda = best_theta.exp();
    let mut eval = profile.evaluate(lambda)?;
    let boundary = profile.evaluate(0.0)?;
    if boundary.criterion <= eval.criterion {
        lambda = 0.0;
        eval = boundary;
        trace.push(eval.criterion.min(best));
    }
    Ok((lambda, eval, trace))
}

fn sample_variance(v: &DVector<f64>) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = v.mean();
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

fn r_squared(var_fixed: f64, var_int: f64, var_res: f64) -> (f64, f64) {
    let total = var_fixed + var_int + var_res;
    if total > 0.0 {
        (var_fixed / total, (var_fixed + var_int) / total)
    } else {
        (0.0, 0.0)
    }
}

/// Random-intercept model `y = Xβ + u_group + ε` with Wald 95% intervals.
pub fn mixed_model(design: &Design, y: &[f64], groups: &[String]) -> Result<MixedModelResult> {
    check_shapes(design, y)?;
    if groups.len() != y.len() {
        return Err(Error::domain(format!("{} group labels for {} observations", groups.len(), y.len())));
    }
    check_full_rank(design)?;

    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for g in groups {
        let next = index.len();
        index.entry(g.as_str()).or_insert(next);
    }
    let n_groups = index.len();
    if n_groups < 2 {
        return Err(Error::insufficient("mixed model needs at least two groups"));
    }
    let group_of: Vec<usize> = groups.iter().map(|g| index[g.as_str()]).collect();
    let mut sizes = vec![0usize; n_groups];
    for &g in &group_of {
        sizes[g] += 1;
    }

    let (n, p) = design.x.shape();
    if sizes.iter().all(|&s| s == 1) {
        let fit = ols(design, y)?;
        let fitted = &design.x * DVector::from_iterator(p, fit.coefficients.iter().map(|c| c.estimate));
        let (marginal_r2, conditional_r2) = r_squared(sample_variance(&fitted), 0.0, fit.residual_variance);
        return Ok(MixedModelResult {
            fixed_effects: fit.coefficients,
            random_intercept_variance: 0.0,
            residual_variance: fit.residual_variance,
            marginal_r2,
            conditional_r2,
            n,
            n_groups,
            reml_criterion: f64::NAN,
            objective_trace: Vec::new(),
            fell_back_to_ols: true,
        });
    }

    let y = DVector::from_column_slice(y);
    let mut x_sums = vec![DVector::zeros(p); n_groups];
    for (i, &g) in group_of.iter().enumerate() {
        x_sums[g] += design.x.row(i).transpose();
    }
    let profile = Profile {
        x: &design.x,
        y: &y,
        group_of,
        sizes,
        x_sums,
    };
    let (lambda, eval, objective_trace) = minimise(&profile)?;

    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let crit = normal.inverse_cdf(0.975);
    let fixed_effects = design
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = (eval.sigma2 * eval.a_inv[(j, j)]).max(0.0).sqrt();
            Coefficient::from_estimate(name, eval.beta[j], se, crit, |z| normal.sf(z))
        })
        .collect();

    let var_fixed = sample_variance(&(&design.x * &eval.beta));
    let var_int = lambda * eval.sigma2;
    let (marginal_r2, conditional_r2) = r_squared(var_fixed, var_int, eval.sigma2);
    Ok(MixedModelResult {
        fixed_effects,
        random_intercept_variance: var_int,
        residual_variance: eval.sigma2,
        marginal_r2,
        conditional_r2,
        n,
        n_groups,
        reml_criterion: eval.criterion,
        objective_trace,
        fell_back_to_ols: false,
    })
}
