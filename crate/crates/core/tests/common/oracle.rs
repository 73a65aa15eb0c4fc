//! Independent dense-solve oracle for the grouped GP likelihood and
//! posterior, plus the random instances it is checked on.

use cylpress::gpr::{eval_kernel, gp_predict, log_marginal_likelihood, GpModel, Hyperparams, KernelFamily, KernelKind};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const JITTER: f64 = 1e-10;

/// Full-size covariance with every row kept, solved by LU.
pub struct Dense {
    k: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dense {
    pub fn new(kind: &KernelKind, h: &Hyperparams, xs: &[Vec<f64>], ys: &[f64]) -> Self {
        let n = xs.len();
        let phi = h.noise_var + JITTER * h.signal_std.powi(2);
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let r2: f64 = if h.lengthscales.len() == 1 {
                    xs[i].iter().zip(&xs[j]).map(|(a, b)| ((a - b) / h.lengthscales[0]).powi(2)).sum()
                } else {
                    xs[i].iter().zip(&xs[j]).zip(&h.lengthscales).map(|((a, b), l)| ((a - b) / l).powi(2)).sum()
                };
                k[(i, j)] = closed_form(kind.family, h, r2) + if i == j { phi } else { 0.0 };
            }
        }
        Self {
            k,
            y: DVector::from_column_slice(ys),
        }
    }

    pub fn mll(&self) -> f64 {
        let lu = self.k.clone().lu();
        let a = lu.solve(&self.y).unwrap();
        let n = self.y.len() as f64;
        -0.5 * self.y.dot(&a) - 0.5 * lu.determinant().ln() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    pub fn predict(&self, ks: &DVector<f64>, prior: f64) -> (f64, f64) {
        let lu = self.k.clone().lu();
        let a = lu.solve(&self.y).unwrap();
        let b = lu.solve(ks).unwrap();
        (ks.dot(&a), prior - ks.dot(&b))
    }
}

pub fn closed_form(family: KernelFamily, h: &Hyperparams, r2: f64) -> f64 {
    let s2 = h.signal_std * h.signal_std;
    let r = r2.sqrt();
    s2 * match family {
        KernelFamily::SquaredExponential => (-0.5 * r2).exp(),
        KernelFamily::Matern32 => (1.0 + 3f64.sqrt() * r) * (-(3f64.sqrt()) * r).exp(),
        KernelFamily::Matern52 => (1.0 + 5f64.sqrt() * r + 5.0 / 3.0 * r2) * (-(5f64.sqrt()) * r).exp(),
        KernelFamily::RationalQuadratic => (1.0 + r2 / (2.0 * h.alpha)).powf(-h.alpha),
    }
}

pub fn random_hyper(kind: &KernelKind, dim: usize, rng: &mut ChaCha8Rng) -> Hyperparams {
    Hyperparams {
        signal_std: rng.gen_range(0.3..3.0),
        lengthscales: (0..kind.n_lengthscales(dim)).map(|_| rng.gen_range(0.3..3.0)).collect(),
        alpha: rng.gen_range(0.3..5.0),
        noise_var: 10f64.powf(rng.gen_range(-3.0..0.0)),
    }
}

/// Random inputs where some rows repeat exactly.
pub fn random_data(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut xs: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        if i > 1 && rng.gen_bool(0.3) {
            let j = rng.gen_range(0..i);
            xs.push(xs[j].clone());
        } else {
            xs.push((0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect());
        }
    }
    let ys = xs.iter().map(|x| x.iter().map(|v| v.sin()).sum::<f64>() + rng.gen_range(-0.1..0.1)).collect();
    (xs, ys)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Worst disagreement with the dense oracle over `per_kernel` random
/// instances of every kernel variant, relative to max(|value|, 1) for the
/// mean and MLL and to max(prior, 1) for the variance.
pub fn worst_oracle_error(per_kernel: usize, seed: u64) -> (f64, KernelKind) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0, KernelKind::all()[0]);
    let mut note = |e: f64, kind: KernelKind| {
        if e > worst.0 || e.is_nan() {
            worst = (e, kind);
        }
    };
    for kind in KernelKind::all() {
        for _ in 0..per_kernel {
            let dim = rng.gen_range(1..=3);
            let n = rng.gen_range(2..=8);
            let (xs, ys) = random_data(n, dim, &mut rng);
            let h = random_hyper(&kind, dim, &mut rng);
            let oracle = Dense::new(&kind, &h, &xs, &ys);
            let (mll, _) = log_marginal_likelihood(&kind, &h, &xs, &ys).unwrap();
            note(rel(mll, oracle.mll()), kind);
            let model = GpModel::new(kind, h.clone(), &xs, &ys).unwrap();
            let prior = h.signal_std.powi(2);
            for _ in 0..3 {
                let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.5..2.5)).collect();
                let ks = DVector::from_iterator(n, xs.iter().map(|x| eval_kernel(&kind, &h, x, &q)));
                let (m0, v0) = oracle.predict(&ks, prior);
                let (m, v) = gp_predict(&model, &q).unwrap();
                note(rel(m, m0), kind);
                note((v - v0.max(0.0)).abs() / prior.max(1.0), kind);
            }
        }
    }
    worst
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Worst norm-wise relative error between the analytic MLL gradient (in log
/// hyperparameters) and central differences, over `draws` hyperparameter
/// draws per kernel variant.
pub fn worst_gradient_error(draws: usize, seed: u64) -> (f64, KernelKind) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0, KernelKind::all()[0]);
    for kind in KernelKind::all() {
        let dim = 2;
        let (xs, ys) = random_data(10, dim, &mut rng);
        for _ in 0..draws {
            let h = random_hyper(&kind, dim, &mut rng);
            let theta = h.to_log(&kind);
            let (_, grad) = log_marginal_likelihood(&kind, &h, &xs, &ys).unwrap();
            let eps = 1e-5;
            let fd: Vec<f64> = (0..theta.len())
                .map(|i| {
                    let eval = |d: f64| {
                        let mut t = theta.clone();
                        t[i] += d;
                        log_marginal_likelihood(&kind, &Hyperparams::from_log(&kind, dim, &t), &xs, &ys).unwrap().0
                    };
                    (eval(eps) - eval(-eps)) / (2.0 * eps)
                })
                .collect();
            let diff: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            let e = diff / norm.max(1e-3);
            if e > worst.0 || e.is_nan() {
                worst = (e, kind);
            }
        }
    }
    worst
}
