//! Fitted GP models: multi-start hyperparameter search, posterior
//! prediction and a plain-text blob format.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{Cholesky, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::kernel::{eval_kernel, Hyperparams, KernelFamily, KernelKind};
use super::lbfgs::{minimize, LbfgsOptions};
use super::likelihood::{factorize, log_marginal_likelihood_grouped, GroupedData};
use crate::error::{Error, Result};

/// Box constraints on the natural-unit hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub signal_std: (f64, f64),
    pub lengthscale: (f64, f64),
    pub alpha: (f64, f64),
    pub noise_var: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            signal_std: (1e-3, 1e3),
            lengthscale: (1e-2, 1e2),
            alpha: (1e-2, 1e2),
            noise_var: (1e-8, 1e1),
        }
    }
}

impl Bounds {
    /// Log-space bounds in [`Hyperparams::to_log`] order.
    fn log_box(&self, kind: &KernelKind, dim: usize) -> Vec<(f64, f64)> {
        let ln = |(a, b): (f64, f64)| (a.ln(), b.ln());
        let mut v = vec![ln(self.signal_std)];
        v.extend(std::iter::repeat(ln(self.lengthscale)).take(kind.n_lengthscales(dim)));
        if kind.family == KernelFamily::RationalQuadratic {
            v.push(ln(self.alpha));
        }
        v.push(ln(self.noise_var));
        v
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("signal_std", self.signal_std),
            ("lengthscale", self.lengthscale),
            ("alpha", self.alpha),
            ("noise_var", self.noise_var),
        ] {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::invalid("bounds", format!("{name} needs 0 < lo < hi")));
            }
        }
        if self.noise_var.0 < super::kernel::NOISE_FLOOR {
            return Err(Error::invalid("bounds", "noise_var lower bound below 1e-12"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub seed: u64,
    pub bounds: Bounds,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0,
            bounds: Bounds::default(),
            max_iter: 200,
        }
    }
}

static VARIANCE_CLAMPS: AtomicUsize = AtomicUsize::new(0);

/// Number of predictions whose variance dipped below −1e-10 before being
/// clamped to zero, since process start.
pub fn variance_clamp_count() -> usize {
    VARIANCE_CLAMPS.load(Ordering::Relaxed)
}

/// A GP conditioned on its training data.
///
/// Replicated input rows are stored once with their count and target mean;
/// the posterior is identical to the one built from every row.
#[derive(Debug, Clone)]
pub struct GpModel {
    kind: KernelKind,
    hyper: Hyperparams,
    data: GroupedData,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    mll: f64,
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters.
    pub fn new(kind: KernelKind, hyper: Hyperparams, xs: &[Vec<f64>], ys: &[f64]) -> Result<Self> {
        Self::from_grouped(kind, hyper, GroupedData::new(xs, ys)?)
    }

    fn from_grouped(kind: KernelKind, hyper: Hyperparams, data: GroupedData) -> Result<Self> {
        let (mll, _) = log_marginal_likelihood_grouped(&kind, &hyper, &data)?;
        let chol = factorize(&kind, &hyper, &data)?;
        let alpha = chol.solve(&DVector::from_column_slice(&data.means));
        Ok(Self {
            kind,
            hyper,
            data,
            chol,
            alpha,
            mll,
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    /// Log marginal likelihood at the stored hyperparameters.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.mll
    }

    pub fn n_train(&self) -> usize {
        self.data.n_total
    }

    pub fn unique_inputs(&self) -> &[Vec<f64>] {
        &self.data.inputs
    }

    /// Posterior mean and latent variance at a scaled query point.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let ks = DVector::from_iterator(
            self.data.n_unique(),
            self.data.inputs.iter().map(|xi| eval_kernel(&self.kind, &self.hyper, xi, x)),
        );
        let mean = ks.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("Cholesky factor has a positive diagonal");
        let prior = eval_kernel(&self.kind, &self.hyper, x, x);
        let mut var = prior - v.norm_squared();
        if var < 0.0 {
            if var < -1e-10 {
                VARIANCE_CLAMPS.fetch_add(1, Ordering::Relaxed);
            }
            var = 0.0;
        }
        Ok((mean, var))
    }

    /// Serialises hyperparameters, grouped training data and the solve
    /// vector, followed by a SHA-256 checksum line over everything above it.
    ///
    /// Field order: format, kernel, dim, signal_std, lengthscales, alpha,
    /// noise_var, mll, n_total, within_ss, n_unique, then one
    /// `row,count,mean,solve,x_1..x_d` line per distinct input, then checksum.
    pub fn to_text(&self) -> String {
        let h = &self.hyper;
        let mut s = String::new();
        writeln!(s, "format,cylpress-gp,1").unwrap();
        writeln!(s, "kernel,{}", self.kind).unwrap();
        writeln!(s, "dim,{}", self.dim()).unwrap();
        writeln!(s, "signal_std,{:e}", h.signal_std).unwrap();
        s.push_str("lengthscales");
        for l in &h.lengthscales {
            write!(s, ",{l:e}").unwrap();
        }
        s.push('\n');
        writeln!(s, "alpha,{:e}", h.alpha).unwrap();
        writeln!(s, "noise_var,{:e}", h.noise_var).unwrap();
        writeln!(s, "mll,{:e}", self.mll).unwrap();
        writeln!(s, "n_total,{}", self.data.n_total).unwrap();
        writeln!(s, "within_ss,{:e}", self.data.within_ss).unwrap();
        writeln!(s, "n_unique,{}", self.data.n_unique()).unwrap();
        for j in 0..self.data.n_unique() {
            write!(s, "row,{},{:e},{:e}", self.data.counts[j], self.data.means[j], self.alpha[j]).unwrap();
            for v in &self.data.inputs[j] {
                write!(s, ",{v:e}").unwrap();
            }
            s.push('\n');
        }
        let digest = checksum(&s);
        writeln!(s, "checksum,{digest}").unwrap();
        s
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let body_end = text
            .rfind("checksum,")
            .ok_or_else(|| "missing checksum line".to_string())?;
        let (body, tail) = text.split_at(body_end);
        let stored = tail.trim_end().strip_prefix("checksum,").unwrap_or_default();
        if stored != checksum(body) {
            return Err("checksum mismatch".into());
        }
        let mut lines = body.lines();
        let mut next = |tag: &str| -> std::result::Result<Vec<String>, String> {
            let line = lines.next().ok_or_else(|| format!("missing `{tag}` line"))?;
            let fields: Vec<String> = line.split(',').map(str::to_string).collect();
            if fields[0] != tag {
                return Err(format!("expected `{tag}`, found `{}`", fields[0]));
            }
            Ok(fields[1..].to_vec())
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number `{s}`"));
        let one = |v: Vec<String>, tag: &str| v.into_iter().next().ok_or_else(|| format!("empty `{tag}`"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| format!("bad integer `{s}`"));

        if next("format")? != ["cylpress-gp", "1"] {
            return Err("unsupported GP format".into());
        }
        let kind: KernelKind = one(next("kernel")?, "kernel")?.parse().map_err(|e: Error| e.to_string())?;
        let dim = int(&one(next("dim")?, "dim")?)?;
        let signal_std = num(&one(next("signal_std")?, "signal_std")?)?;
        let lengthscales = next("lengthscales")?
            .iter()
            .map(|v| num(v))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let alpha = num(&one(next("alpha")?, "alpha")?)?;
        let noise_var = num(&one(next("noise_var")?, "noise_var")?)?;
        let _mll = num(&one(next("mll")?, "mll")?)?;
        let n_total = int(&one(next("n_total")?, "n_total")?)?;
        let within_ss = num(&one(next("within_ss")?, "within_ss")?)?;
        let m = int(&one(next("n_unique")?, "n_unique")?)?;
        let mut data = GroupedData {
            inputs: Vec::with_capacity(m),
            counts: Vec::with_capacity(m),
            means: Vec::with_capacity(m),
            within_ss,
            n_total,
        };
        let mut solve = Vec::with_capacity(m);
        for _ in 0..m {
            let f = next("row")?;
            if f.len() != 3 + dim {
                return Err(format!("row needs {} fields", 3 + dim));
            }
            data.counts.push(int(&f[0])?);
            data.means.push(num(&f[1])?);
            solve.push(num(&f[2])?);
            data.inputs.push(f[3..].iter().map(|v| num(v)).collect::<std::result::Result<_, _>>()?);
        }
        if lines.next().is_some() {
            return Err("unexpected trailing lines".into());
        }
        if data.counts.iter().sum::<usize>() != n_total {
            return Err("replicate counts do not sum to n_total".into());
        }
        let hyper = Hyperparams {
            signal_std,
            lengthscales,
            alpha,
            noise_var,
        };
        let model = Self::from_grouped(kind, hyper, data).map_err(|e| e.to_string())?;
        let scale = model.alpha.amax().max(1.0);
        if model.alpha.iter().zip(&solve).any(|(a, b)| (a - b).abs() > 1e-8 * scale) {
            return Err("stored solve vector inconsistent with hyperparameters".into());
        }
        Ok(model)
    }
}

fn checksum(body: &str) -> String {
    Sha256::digest(body.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Maximises the log marginal likelihood over the bounded log-parameter box.
///
/// Each log-parameter is written `lo + (hi − lo)·sigmoid(u)` and L-BFGS runs
/// unconstrained in `u`. Restart 0 starts from φ_f = 1, ℓ = 1, φ_α = 1,
/// φ_n = 0.1 (natural for standardised data); the others start at seeded
/// random points in the interior of the box.
pub fn fit_gp(xs: &[Vec<f64>], ys: &[f64], kind: KernelKind, opts: &FitOptions) -> Result<GpModel> {
    if xs.len() < 2 {
        return Err(Error::invalid("gp data", "need at least two training points"));
    }
    opts.bounds.validate()?;
    let data = GroupedData::new(xs, ys)?;
    let dim = data.dim();
    let boxes = opts.bounds.log_box(&kind, dim);
    let clamp_p = |p: f64| p.clamp(1e-6, 1.0 - 1e-6);

    let heuristic = Hyperparams {
        signal_std: 1.0,
        lengthscales: vec![1.0; kind.n_lengthscales(dim)],
        alpha: 1.0,
        noise_var: 0.1,
    }
    .to_log(&kind);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<Vec<f64>> = (0..opts.restarts.max(1))
        .map(|r| {
            boxes
                .iter()
                .enumerate()
                .map(|(i, (lo, hi))| {
                    if r == 0 {
                        logit(clamp_p((heuristic[i] - lo) / (hi - lo)))
                    } else {
                        rng.gen_range(-2.0..2.0)
                    }
                })
                .collect()
        })
        .collect();

    let n = data.n_total as f64;
    let to_theta = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(&boxes)
            .map(|(ui, (lo, hi))| lo + (hi - lo) * sigmoid(*ui))
            .collect()
    };
    let objective = |u: &[f64]| -> Option<(f64, Vec<f64>)> {
        let theta = to_theta(u);
        let hyper = Hyperparams::from_log(&kind, dim, &theta);
        let (v, g) = log_marginal_likelihood_grouped(&kind, &hyper, &data).ok()?;
        let grad = g
            .iter()
            .zip(u)
            .zip(&boxes)
            .map(|((gi, ui), (lo, hi))| {
                let s = sigmoid(*ui);
                -gi * (hi - lo) * s * (1.0 - s) / n
            })
            .collect();
        Some((-v / n, grad))
    };
    let lbfgs = LbfgsOptions {
        max_iter: opts.max_iter,
        ..LbfgsOptions::default()
    };
    let results: Vec<Option<(f64, Vec<f64>)>> = starts
        .par_iter()
        .map(|u0| minimize(objective, u0, &lbfgs).map(|r| (r.f, r.x)))
        .collect();
    let best = results
        .into_iter()
        .flatten()
        .filter(|(f, _)| f.is_finite())
        .reduce(|a, b| if b.0 < a.0 { b } else { a })
        .ok_or_else(|| Error::Fit(format!("all {} restarts failed to factorise the kernel matrix", starts.len())))?;
    let hyper = Hyperparams::from_log(&kind, dim, &to_theta(&best.1));
    GpModel::from_grouped(kind, hyper, data)
}

/// Posterior mean and latent variance of `model` at scaled query `x`.
pub fn gp_predict(model: &GpModel, x: &[f64]) -> Result<(f64, f64)> {
    model.predict(x)
}
