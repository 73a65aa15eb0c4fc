//! Marginal log-likelihood with exact handling of replicated inputs.
//!
//! With `m` distinct inputs, replicate counts `a_j`, group means `ȳ_j` and
//! within-group sum of squares `SS`, the covariance of all `N` targets is
//! `Z·K·Zᵀ + φ·I`. Woodbury and the matrix-determinant lemma reduce it to the
//! `m × m` matrix `K̃ = K + φ·A⁻¹`:
//!
//! ```text
//! yᵀC⁻¹y   = SS/φ + ȳᵀK̃⁻¹ȳ
//! ln det C = (N − m)·ln φ + Σ ln a_j + ln det K̃
//! ```
//!
//! The posterior mean and variance computed from `K̃` and `ȳ` equal those of
//! the full `N`-point problem.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::kernel::{kernel_with_grad, Hyperparams, KernelKind};
use crate::error::{Error, Result};

/// Relative diagonal jitter: φ_eff = φ_n + JITTER·mean(diag K).
pub const JITTER: f64 = 1e-10;

/// Training data collapsed onto its distinct input rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedData {
    pub inputs: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    pub means: Vec<f64>,
    /// Σ over all targets of (y − group mean)²
    pub within_ss: f64,
    pub n_total: usize,
}

impl GroupedData {
    /// Groups bit-identical input rows, keeping first-appearance order.
    pub fn new(xs: &[Vec<f64>], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                found: ys.len(),
            });
        }
        if xs.is_empty() {
            return Err(Error::invalid("gp data", "no training points"));
        }
        let d = xs[0].len();
        if let Some(bad) = xs.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        if xs.iter().flatten().chain(ys).any(|v| !v.is_finite()) {
            return Err(Error::invalid("gp data", "non-finite training value"));
        }
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut inputs = Vec::new();
        let mut members: Vec<Vec<f64>> = Vec::new();
        for (x, y) in xs.iter().zip(ys) {
            let key: Vec<u64> = x.iter().map(|v| (v + 0.0).to_bits()).collect();
            let g = *index.entry(key).or_insert_with(|| {
                inputs.push(x.clone());
                members.push(Vec::new());
                inputs.len() - 1
            });
            members[g].push(*y);
        }
        let counts: Vec<usize> = members.iter().map(Vec::len).collect();
        let means: Vec<f64> = members.iter().map(|m| m.iter().sum::<f64>() / m.len() as f64).collect();
        let within_ss = members
            .iter()
            .zip(&means)
            .map(|(m, mu)| m.iter().map(|y| (y - mu).powi(2)).sum::<f64>())
            .sum();
        Ok(Self {
            inputs,
            counts,
            means,
            within_ss,
            n_total: ys.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn n_unique(&self) -> usize {
        self.inputs.len()
    }

    /// Variance of all targets (population convention).
    pub fn target_variance(&self) -> f64 {
        let n = self.n_total as f64;
        let grand = self.means.iter().zip(&self.counts).map(|(m, c)| m * *c as f64).sum::<f64>() / n;
        let between: f64 = self
            .means
            .iter()
            .zip(&self.counts)
            .map(|(m, c)| *c as f64 * (m - grand).powi(2))
            .sum();
        (between + self.within_ss) / n
    }
}

/// Noise actually placed on the diagonal.
pub(crate) fn effective_noise(hyper: &Hyperparams) -> f64 {
    hyper.noise_var + JITTER * hyper.signal_std * hyper.signal_std
}

/// Factorisation of K̃ = K + φ_eff·A⁻¹.
pub(crate) fn factorize(kind: &KernelKind, hyper: &Hyperparams, data: &GroupedData) -> Result<Cholesky<f64, Dyn>> {
    let m = data.n_unique();
    let phi = effective_noise(hyper);
    let k = DMatrix::from_fn(m, m, |i, j| {
        let v = super::kernel::eval_kernel(kind, hyper, &data.inputs[i], &data.inputs[j]);
        if i == j {
            v + phi / data.counts[i] as f64
        } else {
            v
        }
    });
    Cholesky::new(k).ok_or(Error::NotPositiveDefinite)
}

/// Log marginal likelihood of the data and its gradient with respect to the
/// log-hyperparameters (order of [`Hyperparams::to_log`]).
pub fn log_marginal_likelihood_grouped(
    kind: &KernelKind,
    hyper: &Hyperparams,
    data: &GroupedData,
) -> Result<(f64, Vec<f64>)> {
    hyper.validate(kind, data.dim())?;
    let m = data.n_unique();
    let n = data.n_total as f64;
    let n_params = kind.n_params(data.dim());
    let n_kernel = n_params - 1;

    // kernel values and per-entry partials
    let mut k = DMatrix::zeros(m, m);
    let mut dk = vec![DMatrix::<f64>::zeros(m, m); n_kernel];
    let mut g = vec![0.0; n_kernel];
    for i in 0..m {
        for j in 0..=i {
            let v = kernel_with_grad(kind, hyper, &data.inputs[i], &data.inputs[j], &mut g);
            k[(i, j)] = v;
            k[(j, i)] = v;
            for (p, gp) in g.iter().enumerate() {
                dk[p][(i, j)] = *gp;
                dk[p][(j, i)] = *gp;
            }
        }
    }
    let phi = effective_noise(hyper);
    for i in 0..m {
        k[(i, i)] += phi / data.counts[i] as f64;
    }
    let chol = Cholesky::new(k).ok_or(Error::NotPositiveDefinite)?;
    let ybar = DVector::from_column_slice(&data.means);
    let alpha = chol.solve(&ybar);
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let extra = (data.n_total - m) as f64;
    let sum_ln_counts: f64 = data.counts.iter().map(|c| (*c as f64).ln()).sum();
    let value = -0.5 * (data.within_ss / phi + ybar.dot(&alpha))
        - 0.5 * (extra * phi.ln() + sum_ln_counts + logdet)
        - 0.5 * n * (2.0 * PI).ln();

    // Q = ααᵀ − K̃⁻¹
    let mut q = chol.inverse();
    q.iter_mut().for_each(|v| *v = -*v);
    q.ger(1.0, &alpha, &alpha, 1.0);
    let trace_with = |d: &DMatrix<f64>| 0.5 * q.component_mul(d).sum();

    let d_phi = 0.5 * data.within_ss / (phi * phi) - 0.5 * extra / phi
        + 0.5 * (0..m).map(|j| q[(j, j)] / data.counts[j] as f64).sum::<f64>();
    let mut grad: Vec<f64> = dk.iter().map(trace_with).collect();
    // the jitter scales with φ_f²
    grad[0] += d_phi * 2.0 * JITTER * hyper.signal_std * hyper.signal_std;
    grad.push(d_phi * hyper.noise_var);
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok((value, grad))
}

/// Log marginal likelihood for raw training rows.
pub fn log_marginal_likelihood(
    kind: &KernelKind,
    hyper: &Hyperparams,
    xs: &[Vec<f64>],
    ys: &[f64],
) -> Result<(f64, Vec<f64>)> {
    log_marginal_likelihood_grouped(kind, hyper, &GroupedData::new(xs, ys)?)
}
