//! Expectation-maximization inner loop over row-major samples.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::CovarianceStructure;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Components with less responsibility mass than this are re-seeded.
pub(crate) const DEGENERATE_MASS: f64 = 1e-10;
const MAX_REINITIALIZATIONS: usize = 25;
/// Responsibilities below this do not contribute to the scatter.
const NEGLIGIBLE_RESPONSIBILITY: f64 = 1e-12;

/// Row-major view of an n x d sample matrix.
pub(crate) struct Samples {
    pub n: usize,
    pub d: usize,
    pub x: Vec<f64>,
}

impl Samples {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (n, d) = m.shape();
        let mut x = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                x.push(m[(i, j)]);
            }
        }
        Self { n, d, x }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Sample mean and MLE covariance (divisor n), lower triangle filled.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.d;
        let mut mean = vec![0.0; d];
        for i in 0..self.n {
            for (m, v) in mean.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.n as f64);
        let mut cov = vec![0.0; d * d];
        let mut diff = vec![0.0; d];
        for i in 0..self.n {
            for (j, v) in self.row(i).iter().enumerate() {
                diff[j] = v - mean[j];
            }
            accumulate_outer(&mut cov, &diff, 1.0);
        }
        cov.iter_mut().for_each(|c| *c /= self.n as f64);
        symmetrize(&mut cov, d);
        (mean, cov)
    }
}

#[inline]
fn accumulate_outer(acc: &mut [f64], diff: &[f64], w: f64) {
    let d = diff.len();
    for a in 0..d {
        let wa = w * diff[a];
        let row = &mut acc[a * d..a * d + a + 1];
        for (b, slot) in row.iter_mut().enumerate() {
            *slot += wa * diff[b];
        }
    }
}

fn symmetrize(m: &mut [f64], d: usize) {
    for a in 0..d {
        for b in 0..a {
            m[b * d + a] = m[a * d + b];
        }
    }
}

/// Gaussian component with its covariance held as a Cholesky factor.
#[derive(Clone)]
pub(crate) struct Component {
    pub mean: Vec<f64>,
    /// Dense covariance, row-major.
    pub cov: Vec<f64>,
    /// Lower Cholesky factor, row-major.
    chol: Vec<f64>,
    /// Reciprocal diagonal of `chol`.
    inv_diag: Vec<f64>,
    /// Covariance has no off-diagonal entries.
    diagonal: bool,
    log_norm: f64,
}

impl Component {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        let m = DMatrix::from_row_slice(d, d, &cov);
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::SingularFit("component covariance is not positive definite".into()))?;
        let l = chol.l();
        let mut flat = vec![0.0; d * d];
        let mut log_det = 0.0;
        let mut inv_diag = vec![0.0; d];
        for a in 0..d {
            for b in 0..=a {
                flat[a * d + b] = l[(a, b)];
            }
            log_det += 2.0 * l[(a, a)].ln();
            inv_diag[a] = 1.0 / l[(a, a)];
        }
        if !log_det.is_finite() {
            return Err(Error::SingularFit("component covariance has vanishing determinant".into()));
        }
        let diagonal = (0..d).all(|a| (0..d).all(|b| a == b || cov[a * d + b] == 0.0));
        Ok(Self {
            mean,
            cov,
            chol: flat,
            inv_diag,
            diagonal,
            log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
        })
    }

    /// Log density at `x`; `z` is scratch space of length d.
    #[inline]
    pub fn log_density(&self, x: &[f64], z: &mut [f64]) -> f64 {
        let d = self.mean.len();
        let mut maha = 0.0;
        if self.diagonal {
            for a in 0..d {
                let za = (x[a] - self.mean[a]) * self.inv_diag[a];
                maha += za * za;
            }
            return self.log_norm - 0.5 * maha;
        }
        for a in 0..d {
            let row = &self.chol[a * d..a * d + a];
            let mut s = x[a] - self.mean[a];
            for (l, zb) in row.iter().zip(z.iter()) {
                s -= l * zb;
            }
            let za = s * self.inv_diag[a];
            z[a] = za;
            maha += za * za;
        }
        self.log_norm - 0.5 * maha
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Projects a dense MLE covariance onto a structure and regularizes it.
pub(crate) fn constrain(cov: &[f64], d: usize, structure: CovarianceStructure, reg: f64) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    match structure {
        CovarianceStructure::Full | CovarianceStructure::Tied => out.copy_from_slice(cov),
        CovarianceStructure::Diagonal => {
            for a in 0..d {
                out[a * d + a] = cov[a * d + a];
            }
        }
        CovarianceStructure::Spherical => {
            let v = (0..d).map(|a| cov[a * d + a]).sum::<f64>() / d as f64;
            for a in 0..d {
                out[a * d + a] = v;
            }
        }
    }
    for a in 0..d {
        out[a * d + a] += reg;
    }
    out
}

pub(crate) struct RunSettings {
    pub k: usize,
    pub structure: CovarianceStructure,
    pub max_iter: usize,
    pub tol: f64,
    pub reg: f64,
}

pub(crate) struct RunResult {
    pub weights: Vec<f64>,
    pub components: Vec<Component>,
    pub loglik: f64,
    pub history: Vec<f64>,
    pub converged: bool,
    pub n_iter: usize,
    pub reinitializations: usize,
}

/// k-means++ seeding: first centre uniform, the rest proportional to the
/// squared distance from the nearest chosen centre.
fn seed_means(data: &Samples, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centres: Vec<Vec<f64>> = vec![data.row(rng.random_range(0..data.n)).to_vec()];
    let mut nearest = vec![f64::INFINITY; data.n];
    while centres.len() < k {
        let last = centres.last().unwrap();
        for (i, slot) in nearest.iter_mut().enumerate() {
            let d2: f64 = data.row(i).iter().zip(last).map(|(a, b)| (a - b) * (a - b)).sum();
            *slot = slot.min(d2);
        }
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = data.n - 1;
            for (i, w) in nearest.iter().enumerate() {
                if u < *w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..data.n)
        };
        centres.push(data.row(pick).to_vec());
    }
    centres
}

/// E-step: fills `resp` (n x k, row-major) and returns the log-likelihood
/// together with each row's log-likelihood.
fn e_step(data: &Samples, weights: &[f64], comps: &[Component], resp: &mut [f64], row_ll: &mut [f64]) -> f64 {
    let k = comps.len();
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let mut z = vec![0.0; data.d];
    let mut total = 0.0;
    for i in 0..data.n {
        let x = data.row(i);
        let r = &mut resp[i * k..(i + 1) * k];
        for (c, comp) in comps.iter().enumerate() {
            r[c] = log_w[c] + comp.log_density(x, &mut z);
        }
        let lse = log_sum_exp(r);
        for v in r.iter_mut() {
            *v = (*v - lse).exp();
        }
        row_ll[i] = lse;
        total += lse;
    }
    total
}

/// M-step from responsibilities. Returns `Ok(None)` when some component
/// collapsed; its index is written to `collapsed`.
fn m_step(
    data: &Samples,
    resp: &[f64],
    s: &RunSettings,
    collapsed: &mut Vec<usize>,
) -> Result<Option<(Vec<f64>, Vec<Component>)>> {
    let (n, d, k) = (data.n, data.d, s.k);
    let mut mass = vec![0.0; k];
    let mut means = vec![vec![0.0; d]; k];
    for i in 0..n {
        let x = data.row(i);
        for c in 0..k {
            let r = resp[i * k + c];
            mass[c] += r;
            for (m, v) in means[c].iter_mut().zip(x) {
                *m += r * v;
            }
        }
    }
    collapsed.clear();
    collapsed.extend((0..k).filter(|&c| mass[c] < DEGENERATE_MASS));
    if !collapsed.is_empty() {
        return Ok(None);
    }
    for c in 0..k {
        means[c].iter_mut().for_each(|m| *m /= mass[c]);
    }

    let diagonal_only = matches!(s.structure, CovarianceStructure::Diagonal | CovarianceStructure::Spherical);
    let mut scatter = vec![vec![0.0; d * d]; k];
    let mut diff = vec![0.0; d];
    for i in 0..n {
        let x = data.row(i);
        for c in 0..k {
            let r = resp[i * k + c];
            if r < NEGLIGIBLE_RESPONSIBILITY {
                continue;
            }
            for j in 0..d {
                diff[j] = x[j] - means[c][j];
            }
            if diagonal_only {
                for (a, &v) in diff.iter().enumerate() {
                    scatter[c][a * d + a] += r * v * v;
                }
            } else {
                accumulate_outer(&mut scatter[c], &diff, r);
            }
        }
    }

    let weights: Vec<f64> = mass.iter().map(|m| m / n as f64).collect();
    let mut comps = Vec::with_capacity(k);
    if s.structure == CovarianceStructure::Tied {
        let mut pooled = vec![0.0; d * d];
        for sc in &scatter {
            for (p, v) in pooled.iter_mut().zip(sc) {
                *p += v;
            }
        }
        pooled.iter_mut().for_each(|p| *p /= n as f64);
        symmetrize(&mut pooled, d);
        let cov = constrain(&pooled, d, s.structure, s.reg);
        for mean in means {
            comps.push(Component::new(mean, cov.clone())?);
        }
    } else {
        for (c, (mut sc, mean)) in scatter.into_iter().zip(means).enumerate() {
            sc.iter_mut().for_each(|v| *v /= mass[c]);
            symmetrize(&mut sc, d);
            comps.push(Component::new(mean, constrain(&sc, d, s.structure, s.reg))?);
        }
    }
    Ok(Some((weights, comps)))
}

/// One EM run from a k-means++ seeding drawn from `rng`.
pub(crate) fn run(data: &Samples, s: &RunSettings, rng: &mut ChaCha8Rng) -> Result<RunResult> {
    let (_, pooled) = data.moments();
    let init_cov = constrain(&pooled, data.d, s.structure, s.reg);
    let mut components = seed_means(data, s.k, rng)
        .into_iter()
        .map(|m| Component::new(m, init_cov.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut weights = vec![1.0 / s.k as f64; s.k];

    let mut resp = vec![0.0; data.n * s.k];
    let mut row_ll = vec![0.0; data.n];
    let mut loglik = e_step(data, &weights, &components, &mut resp, &mut row_ll);
    let mut history = vec![loglik];
    let mut converged = false;
    let mut reinitializations = 0;
    let mut collapsed = Vec::new();
    let mut n_iter = 0;

    while n_iter < s.max_iter {
        n_iter += 1;
        match m_step(data, &resp, s, &mut collapsed)? {
            Some((w, c)) => {
                weights = w;
                components = c;
            }
            None => {
                reinitializations += collapsed.len();
                if reinitializations > MAX_REINITIALIZATIONS {
                    return Err(Error::SingularFit(format!(
                        "components kept collapsing after {MAX_REINITIALIZATIONS} re-initializations"
                    )));
                }
                // Re-seed each collapsed component at the worst-explained point.
                let mut order: Vec<usize> = (0..data.n).collect();
                order.sort_by(|&a, &b| row_ll[a].total_cmp(&row_ll[b]).then(a.cmp(&b)));
                for (slot, &c) in collapsed.iter().enumerate() {
                    let cov = match s.structure {
                        CovarianceStructure::Tied => components[c].cov.clone(),
                        _ => init_cov.clone(),
                    };
                    components[c] = Component::new(data.row(order[slot]).to_vec(), cov)?;
                    weights[c] = 1.0 / s.k as f64;
                }
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= total);
                loglik = e_step(data, &weights, &components, &mut resp, &mut row_ll);
                // Monotonicity restarts after re-seeding.
                history.clear();
                history.push(loglik);
                continue;
            }
        }
        let new_ll = e_step(data, &weights, &components, &mut resp, &mut row_ll);
        history.push(new_ll);
        let change = (new_ll - loglik).abs();
        loglik = new_ll;
        if change <= s.tol * loglik.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    Ok(RunResult {
        weights,
        components,
        loglik,
        history,
        converged,
        n_iter,
        reinitializations,
    })
}

/// Per-row log joint densities `ln pi_k + ln N(x | mu_k, Sigma_k)`.
pub(crate) fn log_joint(data: &Samples, weights: &[f64], comps: &[Component]) -> Vec<f64> {
    let k = comps.len();
    let mut out = vec![0.0; data.n * k];
    let mut z = vec![0.0; data.d];
    for i in 0..data.n {
        for (c, comp) in comps.iter().enumerate() {
            out[i * k + c] = weights[c].ln() + comp.log_density(data.row(i), &mut z);
        }
    }
    out
}
