//! Principal-component decomposition of pressure deviations from the
//! motored reference.
//!
//! Column `b` of the deviation matrix holds `p_b(θ) − p_mot(θ; p_im,b)` for
//! training record `b`. The components are the leading left singular vectors
//! of that matrix (the unit eigenvectors of `P·Pᵀ`); the eigenvalues are the
//! squared singular values.

use std::fmt::Write as _;

use faer::Mat;

use crate::dataset::Dataset;
use crate::engine::{motored_samples, CrankGrid, CylinderGeometry, IccVector, PressureTrace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcdBasis {
    grid: CrankGrid,
    geom: CylinderGeometry,
    kappa_mot: f64,
    /// unit-norm components, most relevant first
    components: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    /// sum of all eigenvalues of P·Pᵀ, retained or not
    total_variance: f64,
}

/// Weights of one trace on the basis components, in Pa.
pub type WeightVector = Vec<f64>;

/// Flips `v` so that its entry of largest magnitude is positive.
fn orient(v: &mut [f64]) {
    let (_, pivot) = v
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(best, val), (_, &x)| if x.abs() > best { (x.abs(), x) } else { (best, val) });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Deviation of one record from its motored reference.
pub fn deviation(trace: &PressureTrace, p_im: f64, geom: &CylinderGeometry, kappa_mot: f64) -> Vec<f64> {
    let mot = motored_samples(trace.grid(), geom, p_im, kappa_mot);
    trace.samples().iter().zip(mot).map(|(p, m)| p - m).collect()
}

/// Fits the basis on every record of `train`.
pub fn fit_pcd(train: &Dataset, geom: &CylinderGeometry, kappa_mot: f64, n_pc: usize) -> Result<PcdBasis> {
    if train.is_empty() {
        return Err(Error::invalid("pcd", "training set is empty"));
    }
    if !(1.0..=1.7).contains(&kappa_mot) {
        return Err(Error::invalid("pcd", "kappa_mot out of [1.0, 1.7]"));
    }
    let grid = *train.grid();
    let n_ca = grid.n_ca();
    let n_rec = train.len();
    let max_pc = n_ca.min(n_rec);
    if n_pc == 0 || n_pc > max_pc {
        return Err(Error::invalid("pcd", format!("n_pc must lie in 1..={max_pc}, got {n_pc}")));
    }
    let columns: Vec<Vec<f64>> = train
        .records()
        .iter()
        .map(|r| deviation(&r.trace, r.icc.p_im, geom, kappa_mot))
        .collect();
    let scale = train
        .records()
        .iter()
        .flat_map(|r| r.trace.samples())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let dev_max = columns.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if dev_max <= 1e-12 * scale {
        return Err(Error::ZeroDeviation);
    }
    let p = Mat::<f64>::from_fn(n_ca, n_rec, |a, b| columns[b][a]);
    let total_variance = columns.iter().flatten().map(|v| v * v).sum();
    let svd = p
        .thin_svd()
        .map_err(|e| Error::Fit(format!("singular value decomposition failed: {e:?}")))?;
    let u = svd.U();
    let s = svd.S().column_vector();
    let mut order: Vec<usize> = (0..s.nrows()).collect();
    // stable: equal eigenvalues keep decomposition order
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
    let mut components = Vec::with_capacity(n_pc);
    let mut eigenvalues = Vec::with_capacity(n_pc);
    for &k in order.iter().take(n_pc) {
        let mut v: Vec<f64> = (0..n_ca).map(|a| u[(a, k)]).collect();
        orient(&mut v);
        components.push(v);
        eigenvalues.push(s[k] * s[k]);
    }
    Ok(PcdBasis {
        grid,
        geom: *geom,
        kappa_mot,
        components,
        eigenvalues,
        total_variance,
    })
}

impl PcdBasis {
    pub fn grid(&self) -> &CrankGrid {
        &self.grid
    }

    pub fn geometry(&self) -> &CylinderGeometry {
        &self.geom
    }

    pub fn kappa_mot(&self) -> f64 {
        self.kappa_mot
    }

    pub fn n_pc(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    /// Share of the total deviation energy captured by each retained component.
    pub fn eigenvalue_shares(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l / self.total_variance).collect()
    }

    pub fn captured_fraction(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.total_variance
    }

    /// Basis restricted to its first `n` components.
    pub fn truncated(&self, n: usize) -> Result<PcdBasis> {
        if n == 0 || n > self.n_pc() {
            return Err(Error::invalid("pcd", format!("cannot keep {n} of {} components", self.n_pc())));
        }
        let mut b = self.clone();
        b.components.truncate(n);
        b.eigenvalues.truncate(n);
        Ok(b)
    }

    pub fn motored(&self, p_im: f64) -> Vec<f64> {
        motored_samples(&self.grid, &self.geom, p_im, self.kappa_mot)
    }

    fn check_grid(&self, trace: &PressureTrace) -> Result<()> {
        if !trace.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch {
                expected: self.grid.n_ca(),
                found: trace.len(),
            });
        }
        Ok(())
    }

    /// wᵢ = Σₐ (p(θₐ) − p_mot(θₐ))·fᵢ(θₐ)
    pub fn project(&self, trace: &PressureTrace, icc: &IccVector) -> Result<WeightVector> {
        self.check_grid(trace)?;
        let dev = deviation(trace, icc.p_im, &self.geom, self.kappa_mot);
        Ok(self
            .components
            .iter()
            .map(|f| f.iter().zip(&dev).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// p(θ) = p_mot(θ; p_im) + Σᵢ wᵢ·fᵢ(θ)
    pub fn reconstruct(&self, weights: &[f64], icc: &IccVector) -> Result<PressureTrace> {
        if weights.len() != self.n_pc() {
            return Err(Error::DimensionMismatch {
                expected: self.n_pc(),
                found: weights.len(),
            });
        }
        let mut p = self.motored(icc.p_im);
        for (w, f) in weights.iter().zip(&self.components) {
            for (pa, fa) in p.iter_mut().zip(f) {
                *pa += w * fa;
            }
        }
        Ok(PressureTrace::modelled(self.grid, p))
    }

    /// Plain-text export. Layout, one record per line:
    ///
    /// ```text
    /// format,cylpress-pcd-basis,1
    /// grid,<theta_start>,<theta_end>,<resolution>,<n_ca>
    /// n_pc,<n>
    /// kappa_mot,<kappa>
    /// geometry,<bore>,<stroke>,<conrod>,<compression_ratio>
    /// total_variance,<sum of all eigenvalues>
    /// eigenvalues,<l1>,...,<ln>
    /// theta,f1,...,fn
    /// <theta_0>,<f1(theta_0)>,...      (n_ca rows)
    /// ```
    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let mut s = String::new();
        writeln!(s, "format,cylpress-pcd-basis,1").unwrap();
        writeln!(s, "grid,{},{},{},{}", g.theta_start(), g.theta_end(), g.resolution(), g.n_ca()).unwrap();
        writeln!(s, "n_pc,{}", self.n_pc()).unwrap();
        writeln!(s, "kappa_mot,{}", self.kappa_mot).unwrap();
        let geo = &self.geom;
        writeln!(
            s,
            "geometry,{},{},{},{}",
            geo.bore(),
            geo.stroke(),
            geo.conrod_length(),
            geo.compression_ratio()
        )
        .unwrap();
        writeln!(s, "total_variance,{}", self.total_variance).unwrap();
        s.push_str("eigenvalues");
        for l in &self.eigenvalues {
            write!(s, ",{l}").unwrap();
        }
        s.push('\n');
        s.push_str("theta");
        for i in 1..=self.n_pc() {
            write!(s, ",f{i}").unwrap();
        }
        s.push('\n');
        for (a, theta) in g.angles().enumerate() {
            write!(s, "{theta}").unwrap();
            for f in &self.components {
                write!(s, ",{}", f[a]).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        let mut next = |tag: &str| -> std::result::Result<Vec<String>, String> {
            let line = lines.next().ok_or_else(|| format!("missing `{tag}` line"))?;
            let fields: Vec<String> = line.split(',').map(str::to_string).collect();
            if fields[0] != tag {
                return Err(format!("expected `{tag}`, found `{}`", fields[0]));
            }
            Ok(fields[1..].to_vec())
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number `{s}`"));
        let fmt = next("format")?;
        if fmt != ["cylpress-pcd-basis", "1"] {
            return Err(format!("unsupported basis format {fmt:?}"));
        }
        let g = next("grid")?;
        if g.len() != 4 {
            return Err("grid needs 4 fields".into());
        }
        let grid = CrankGrid::new(num(&g[0])?, num(&g[1])?, num(&g[2])?).map_err(|e| e.to_string())?;
        if grid.n_ca().to_string() != g[3] {
            return Err("grid sample count mismatch".into());
        }
        let n_pc: usize = next("n_pc")?
            .first()
            .and_then(|v| v.parse().ok())
            .ok_or("bad n_pc")?;
        let kappa_mot = num(next("kappa_mot")?.first().ok_or("bad kappa_mot")?)?;
        let geo = next("geometry")?;
        if geo.len() != 4 {
            return Err("geometry needs 4 fields".into());
        }
        let geom = CylinderGeometry::new(num(&geo[0])?, num(&geo[1])?, num(&geo[2])?, num(&geo[3])?)
            .map_err(|e| e.to_string())?;
        let total_variance = num(next("total_variance")?.first().ok_or("bad total_variance")?)?;
        let eigenvalues = next("eigenvalues")?.iter().map(|s| num(s)).collect::<std::result::Result<Vec<_>, _>>()?;
        if eigenvalues.len() != n_pc {
            return Err("eigenvalue count mismatch".into());
        }
        let head = next("theta")?;
        if head.len() != n_pc {
            return Err("component column count mismatch".into());
        }
        let mut components = vec![Vec::with_capacity(grid.n_ca()); n_pc];
        for a in 0..grid.n_ca() {
            let line = lines.next().ok_or("truncated component table")?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n_pc + 1 {
                return Err(format!("component row {a}: expected {} fields", n_pc + 1));
            }
            for (i, f) in fields[1..].iter().enumerate() {
                components[i].push(num(f)?);
            }
        }
        Ok(Self {
            grid,
            geom,
            kappa_mot,
            components,
            eigenvalues,
            total_variance,
        })
    }
}
