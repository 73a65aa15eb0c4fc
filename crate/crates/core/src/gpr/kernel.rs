use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    SquaredExponential,
    Matern32,
    Matern52,
    RationalQuadratic,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::SquaredExponential,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
        KernelFamily::RationalQuadratic,
    ];

    pub fn key(&self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "se",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
            KernelFamily::RationalQuadratic => "rq",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "SE",
            KernelFamily::Matern32 => "Matern 3/2",
            KernelFamily::Matern52 => "Matern 5/2",
            KernelFamily::RationalQuadratic => "RQ",
        }
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" | "sqexp" | "squared_exponential" => Ok(KernelFamily::SquaredExponential),
            "matern32" | "matern3/2" | "m32" => Ok(KernelFamily::Matern32),
            "matern52" | "matern5/2" | "m52" => Ok(KernelFamily::Matern52),
            "rq" | "rational_quadratic" => Ok(KernelFamily::RationalQuadratic),
            other => Err(Error::invalid("kernel", format!("unknown kernel `{other}`"))),
        }
    }
}

/// Kernel family plus whether each input dimension gets its own lengthscale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelKind {
    pub family: KernelFamily,
    pub ard: bool,
}

impl KernelKind {
    pub fn new(family: KernelFamily, ard: bool) -> Self {
        Self { family, ard }
    }

    /// The eight variants in report order: every family without ARD, then
    /// every family with ARD.
    pub fn all() -> Vec<KernelKind> {
        [false, true]
            .into_iter()
            .flat_map(|ard| KernelFamily::ALL.into_iter().map(move |f| KernelKind::new(f, ard)))
            .collect()
    }

    pub fn n_lengthscales(&self, dim: usize) -> usize {
        if self.ard {
            dim
        } else {
            1
        }
    }

    /// Length of the log-hyperparameter vector for inputs of dimension `dim`.
    pub fn n_params(&self, dim: usize) -> usize {
        2 + self.n_lengthscales(dim) + usize::from(self.family == KernelFamily::RationalQuadratic)
    }

    pub fn label(&self) -> String {
        format!("{}{}", self.family.label(), if self.ard { " ARD" } else { "" })
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.family.key(), if self.ard { "+ard" } else { "" })
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_suffix("+ard") {
            Some(base) => Ok(KernelKind::new(base.parse()?, true)),
            None => Ok(KernelKind::new(s.parse()?, false)),
        }
    }
}

/// Kernel hyperparameters in natural units.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// φ_f; the prior variance is φ_f².
    pub signal_std: f64,
    /// One value without ARD, one per input dimension with ARD.
    pub lengthscales: Vec<f64>,
    /// RQ shape φ_α; ignored by the other families.
    pub alpha: f64,
    /// Observation noise variance φ_n.
    pub noise_var: f64,
}

/// Lower limit on the noise variance.
pub const NOISE_FLOOR: f64 = 1e-12;

impl Hyperparams {
    pub fn validate(&self, kind: &KernelKind, dim: usize) -> Result<()> {
        if self.lengthscales.len() != kind.n_lengthscales(dim) {
            return Err(Error::DimensionMismatch {
                expected: kind.n_lengthscales(dim),
                found: self.lengthscales.len(),
            });
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.signal_std) || !self.lengthscales.iter().all(|l| positive(*l)) {
            return Err(Error::invalid("hyperparameters", "signal scale and lengthscales must be positive"));
        }
        if kind.family == KernelFamily::RationalQuadratic && !positive(self.alpha) {
            return Err(Error::invalid("hyperparameters", "RQ alpha must be positive"));
        }
        if !(self.noise_var.is_finite() && self.noise_var >= NOISE_FLOOR) {
            return Err(Error::invalid("hyperparameters", "noise variance below the 1e-12 floor"));
        }
        Ok(())
    }

    /// [ln φ_f, ln ℓ…, (ln φ_α), ln φ_n]
    pub fn to_log(&self, kind: &KernelKind) -> Vec<f64> {
        let mut v = vec![self.signal_std.ln()];
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        if kind.family == KernelFamily::RationalQuadratic {
            v.push(self.alpha.ln());
        }
        v.push(self.noise_var.ln());
        v
    }

    pub fn from_log(kind: &KernelKind, dim: usize, theta: &[f64]) -> Self {
        let nl = kind.n_lengthscales(dim);
        let rq = kind.family == KernelFamily::RationalQuadratic;
        Self {
            signal_std: theta[0].exp(),
            lengthscales: theta[1..1 + nl].iter().map(|t| t.exp()).collect(),
            alpha: if rq { theta[1 + nl].exp() } else { 1.0 },
            noise_var: theta[theta.len() - 1].exp(),
        }
    }
}

/// Scaled squared distance r² = Σ ((x−x′)/ℓ)².
fn scaled_sq_dist(hyper: &Hyperparams, x: &[f64], y: &[f64]) -> f64 {
    if hyper.lengthscales.len() == 1 {
        let l2 = hyper.lengthscales[0] * hyper.lengthscales[0];
        x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / l2
    } else {
        x.iter()
            .zip(y)
            .zip(&hyper.lengthscales)
            .map(|((a, b), l)| ((a - b) / l).powi(2))
            .sum()
    }
}

/// Unit-amplitude correlation as a function of r², plus its derivatives
/// with respect to r² and ln φ_α.
fn correlation(family: KernelFamily, r2: f64, alpha: f64) -> (f64, f64, f64) {
    match family {
        KernelFamily::SquaredExponential => {
            let v = (-0.5 * r2).exp();
            (v, -0.5 * v, 0.0)
        }
        KernelFamily::Matern32 => {
            let s = (3.0 * r2).sqrt();
            let e = (-s).exp();
            ((1.0 + s) * e, -1.5 * e, 0.0)
        }
        KernelFamily::Matern52 => {
            let s = (5.0 * r2).sqrt();
            let e = (-s).exp();
            ((1.0 + s + 5.0 / 3.0 * r2) * e, -5.0 / 6.0 * (1.0 + s) * e, 0.0)
        }
        KernelFamily::RationalQuadratic => {
            let u = r2 / (2.0 * alpha);
            let base = 1.0 + u;
            let v = base.powf(-alpha);
            let dr2 = -0.5 * base.powf(-alpha - 1.0);
            let dlog_alpha = v * alpha * (u / base - base.ln());
            (v, dr2, dlog_alpha)
        }
    }
}

/// k(x, x′) for the given kernel.
pub fn eval_kernel(kind: &KernelKind, hyper: &Hyperparams, x: &[f64], y: &[f64]) -> f64 {
    let r2 = scaled_sq_dist(hyper, x, y);
    hyper.signal_std * hyper.signal_std * correlation(kind.family, r2, hyper.alpha).0
}

/// k(x, x′) and ∂k/∂(ln φ_f, ln ℓ…, ln φ_α) in [`Hyperparams::to_log`]
/// order, without the trailing noise entry.
pub(crate) fn kernel_with_grad(kind: &KernelKind, hyper: &Hyperparams, x: &[f64], y: &[f64], grad: &mut [f64]) -> f64 {
    let s2 = hyper.signal_std * hyper.signal_std;
    let r2 = scaled_sq_dist(hyper, x, y);
    let (v, dv_dr2, dv_dlna) = correlation(kind.family, r2, hyper.alpha);
    let k = s2 * v;
    grad[0] = 2.0 * k;
    if kind.ard {
        for (j, l) in hyper.lengthscales.iter().enumerate() {
            let t = (x[j] - y[j]) / l;
            grad[1 + j] = s2 * dv_dr2 * (-2.0 * t * t);
        }
    } else {
        grad[1] = s2 * dv_dr2 * (-2.0 * r2);
    }
    if kind.family == KernelFamily::RationalQuadratic {
        grad[1 + hyper.lengthscales.len()] = s2 * dv_dlna;
    }
    k
}

/// Cross-covariance K(X, X′) between row sets.
pub fn kernel_matrix(kind: &KernelKind, hyper: &Hyperparams, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let dim = xs.first().or(ys.first()).map_or(0, Vec::len);
    if let Some(bad) = xs.iter().chain(ys).find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    if kind.ard && hyper.lengthscales.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: hyper.lengthscales.len(),
        });
    }
    Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| eval_kernel(kind, hyper, &xs[i], &ys[j])))
}
