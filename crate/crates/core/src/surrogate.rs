//! The stochastic pressure model: principal components of the pressure
//! deviation with one GP per component weight.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::engine::{CylinderGeometry, IccVector, PressureTrace, ICC_DIM};
use crate::error::{Error, Result};
use crate::gpr::{fit_gp, FitOptions, GpModel, KernelFamily, KernelKind, Scaler};
use crate::io_util::write_atomic;
use crate::pcd::{fit_pcd, PcdBasis};
use crate::synth::derive_seed;

/// Which GP variance feeds the weight covariance W.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceMode {
    /// latent variance plus the fitted noise variance; the noise term is where
    /// cycle-to-cycle scatter at a fixed condition ends up
    Predictive,
    /// latent variance only (uncertainty of the mean weight)
    Latent,
}

impl VarianceMode {
    pub fn key(&self) -> &'static str {
        match self {
            VarianceMode::Predictive => "predictive",
            VarianceMode::Latent => "latent",
        }
    }
}

impl std::str::FromStr for VarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predictive" => Ok(VarianceMode::Predictive),
            "latent" => Ok(VarianceMode::Latent),
            _ => Err(Error::invalid("variance mode", format!("`{s}` is not predictive|latent"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateConfig {
    pub n_pc: usize,
    pub kernel: KernelKind,
    pub geom: CylinderGeometry,
    pub kappa_mot: f64,
    pub fit: FitOptions,
    pub variance_mode: VarianceMode,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            n_pc: 8,
            kernel: KernelKind::new(KernelFamily::Matern32, false),
            geom: CylinderGeometry::default(),
            kappa_mot: 1.32,
            fit: FitOptions::default(),
            variance_mode: VarianceMode::Predictive,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMetadata {
    pub kernel: KernelKind,
    pub variance_mode: VarianceMode,
    /// SHA-256 over the training conditions and pressure samples
    pub fingerprint: String,
    /// seconds since the Unix epoch; `SOURCE_DATE_EPOCH` wins when set
    pub created: u64,
    pub n_train_records: usize,
    pub n_train_conditions: usize,
}

#[derive(Debug, Clone)]
pub struct SurrogateModel {
    basis: PcdBasis,
    icc_scaler: Scaler,
    weight_scalers: Vec<Scaler>,
    gps: Vec<GpModel>,
    metadata: ModelMetadata,
}

/// Mean and per-angle variance of the predicted pressure at one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct PressurePrediction {
    pub icc: IccVector,
    pub mean: PressureTrace,
    /// Pa²
    pub variance: Vec<f64>,
    /// descaled weight means ŵᵢ, Pa
    pub weight_mean: Vec<f64>,
    /// diagonal of W, Pa²
    pub weight_var: Vec<f64>,
}

impl PressurePrediction {
    pub fn std(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }
}

/// SHA-256 over a dataset's condition table and samples.
pub fn dataset_fingerprint(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    for r in ds.records() {
        h.update(r.condition_id.as_bytes());
        h.update((r.cycle_id as u64).to_le_bytes());
        for v in r.icc.to_array() {
            h.update(v.to_le_bytes());
        }
        for v in r.trace.samples() {
            h.update(v.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn creation_time() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        })
}

/// Fits the basis, projects every training cycle and fits one GP per
/// component on (scaled ICC → scaled weight).
pub fn train_surrogate(train: &Dataset, cfg: &SurrogateConfig) -> Result<SurrogateModel> {
    if train.is_empty() {
        return Err(Error::invalid("training set", "no records"));
    }
    if cfg.n_pc == 0 {
        return Err(Error::invalid("n_pc", "must be >= 1"));
    }
    let basis = fit_pcd(train, &cfg.geom, cfg.kappa_mot, cfg.n_pc)?;
    let weights: Vec<Vec<f64>> = train
        .records()
        .par_iter()
        .map(|r| basis.project(&r.trace, &r.icc))
        .collect::<Result<_>>()?;
    let raw_x: Vec<Vec<f64>> = train.records().iter().map(|r| r.icc.to_array().to_vec()).collect();
    let icc_scaler = Scaler::fit(&raw_x)?;
    let xs: Vec<Vec<f64>> = raw_x.iter().map(|x| icc_scaler.apply(x)).collect();

    let fitted: Vec<(Scaler, GpModel)> = (0..basis.n_pc())
        .into_par_iter()
        .map(|i| {
            let w: Vec<f64> = weights.iter().map(|row| row[i]).collect();
            let scaler = Scaler::fit_1d(&w).map_err(|_| Error::ZeroVariance {
                what: "weight channel",
                index: i,
            })?;
            let ys: Vec<f64> = w.iter().map(|v| (v - scaler.mean[0]) / scaler.std[0]).collect();
            let opts = FitOptions {
                seed: derive_seed(cfg.fit.seed, i as u64),
                ..cfg.fit.clone()
            };
            let gp = fit_gp(&xs, &ys, cfg.kernel, &opts)?;
            Ok((scaler, gp))
        })
        .collect::<Result<_>>()?;
    let (weight_scalers, gps) = fitted.into_iter().unzip();
    Ok(SurrogateModel {
        basis,
        icc_scaler,
        weight_scalers,
        gps,
        metadata: ModelMetadata {
            kernel: cfg.kernel,
            variance_mode: cfg.variance_mode,
            fingerprint: dataset_fingerprint(train),
            created: creation_time(),
            n_train_records: train.len(),
            n_train_conditions: train.n_conditions(),
        },
    })
}

static SAMPLE_TRUNCATIONS: AtomicUsize = AtomicUsize::new(0);

/// Number of weight draws redrawn because they fell beyond ±6σ.
pub fn sample_truncation_count() -> usize {
    SAMPLE_TRUNCATIONS.load(Ordering::Relaxed)
}

impl SurrogateModel {
    pub fn basis(&self) -> &PcdBasis {
        &self.basis
    }

    pub fn gps(&self) -> &[GpModel] {
        &self.gps
    }

    pub fn icc_scaler(&self) -> &Scaler {
        &self.icc_scaler
    }

    pub fn weight_scalers(&self) -> &[Scaler] {
        &self.weight_scalers
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn n_pc(&self) -> usize {
        self.gps.len()
    }

    pub fn geometry(&self) -> &CylinderGeometry {
        self.basis.geometry()
    }

    /// Per-dimension (min, max) of the training conditions.
    pub fn training_bounds(&self) -> [(f64, f64); ICC_DIM] {
        let mut b = [(f64::INFINITY, f64::NEG_INFINITY); ICC_DIM];
        for x in self.gps[0].unique_inputs() {
            for (k, v) in self.icc_scaler.invert(x).into_iter().enumerate() {
                b[k] = (b[k].0.min(v), b[k].1.max(v));
            }
        }
        b
    }

    /// True when `icc` lies outside the training bounding box.
    pub fn is_extrapolating(&self, icc: &IccVector) -> bool {
        let b = self.training_bounds();
        icc.to_array().iter().zip(&b).any(|(v, (lo, hi))| {
            let tol = 1e-9 * (hi - lo).abs().max(lo.abs());
            *v < lo - tol || *v > hi + tol
        })
    }

    /// Mean trace p_mot + Σ ŵᵢ fᵢ and variance trace Σ Wᵢᵢ fᵢ².
    pub fn predict_pressure(&self, icc: &IccVector) -> Result<PressurePrediction> {
        icc.validate()?;
        let x = self.icc_scaler.apply(&icc.to_array());
        let mut weight_mean = Vec::with_capacity(self.n_pc());
        let mut weight_var = Vec::with_capacity(self.n_pc());
        for (gp, sc) in self.gps.iter().zip(&self.weight_scalers) {
            let (m, v) = gp.predict(&x)?;
            let v = match self.metadata.variance_mode {
                VarianceMode::Predictive => v + gp.hyper().noise_var,
                VarianceMode::Latent => v,
            };
            weight_mean.push(m * sc.std[0] + sc.mean[0]);
            weight_var.push(v * sc.std[0] * sc.std[0]);
        }
        let mean = self.basis.reconstruct(&weight_mean, icc)?;
        let mut variance = vec![0.0; mean.len()];
        for (wv, f) in weight_var.iter().zip(self.basis.components()) {
            for (va, fa) in variance.iter_mut().zip(f) {
                *va += wv * fa * fa;
            }
        }
        Ok(PressurePrediction {
            icc: *icc,
            mean,
            variance,
            weight_mean,
            weight_var,
        })
    }

    /// `n` independent weight vectors wᵢ ~ N(ŵᵢ, Wᵢᵢ), each standard-normal
    /// draw restricted to [−6, 6] by redrawing.
    pub fn sample_weights(&self, pred: &PressurePrediction, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                pred.weight_mean
                    .iter()
                    .zip(&pred.weight_var)
                    .map(|(m, v)| {
                        let mut z: f64 = StandardNormal.sample(&mut rng);
                        while z.abs() > 6.0 {
                            SAMPLE_TRUNCATIONS.fetch_add(1, Ordering::Relaxed);
                            z = StandardNormal.sample(&mut rng);
                        }
                        m + z * v.sqrt()
                    })
                    .collect()
            })
            .collect()
    }

    /// Monte-Carlo cycles at `icc`; deterministic per seed.
    pub fn sample_cycles(&self, icc: &IccVector, n: usize, seed: u64) -> Result<Vec<PressureTrace>> {
        if n == 0 {
            return Err(Error::invalid("sample count", "must be >= 1"));
        }
        let pred = self.predict_pressure(icc)?;
        self.sample_weights(&pred, n, seed)
            .iter()
            .map(|w| self.basis.reconstruct(w, icc))
            .collect()
    }

    /// Human-readable training summary.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let m = &self.metadata;
        writeln!(s, "kernel: {} ({})", m.kernel.label(), m.kernel).unwrap();
        writeln!(s, "training: {} cycles over {} conditions", m.n_train_records, m.n_train_conditions).unwrap();
        writeln!(s, "captured deviation variance: {:.6}", self.basis.captured_fraction()).unwrap();
        writeln!(s, "{:>3} {:>10} {:>11} {:>11} {:>11} {:>14}  lengthscales", "pc", "share", "signal_std", "noise_var", "alpha", "mll").unwrap();
        let shares = self.basis.eigenvalue_shares();
        for (i, gp) in self.gps.iter().enumerate() {
            let h = gp.hyper();
            let alpha = if m.kernel.family == KernelFamily::RationalQuadratic {
                format!("{:.4e}", h.alpha)
            } else {
                "-".into()
            };
            let ls: Vec<String> = h.lengthscales.iter().map(|l| format!("{l:.4e}")).collect();
            writeln!(
                s,
                "{:>3} {:>10.6} {:>11.4e} {:>11.4e} {:>11} {:>14.6e}  {}",
                i + 1,
                shares[i],
                h.signal_std,
                h.noise_var,
                alpha,
                gp.log_marginal_likelihood(),
                ls.join(" ")
            )
            .unwrap();
        }
        s
    }

    /// Container: a manifest followed by length-prefixed sections.
    ///
    /// ```text
    /// format,cylpress-surrogate,1
    /// kernel,<kind>
    /// variance_mode,<predictive|latent>
    /// n_pc,<n>
    /// fingerprint,<sha256>
    /// created,<unix seconds>
    /// n_train,<records>,<conditions>
    /// sections,basis,icc_scaler,weight_scalers,gp_1..gp_n
    /// section,<name>,<line count>
    /// <section body>
    /// ...
    /// ```
    pub fn to_text(&self) -> String {
        let m = &self.metadata;
        let mut sections: Vec<(String, String)> = vec![("basis".into(), self.basis.to_text())];
        sections.push(("icc_scaler".into(), scaler_text(std::slice::from_ref(&self.icc_scaler))));
        sections.push(("weight_scalers".into(), scaler_text(&self.weight_scalers)));
        for (i, gp) in self.gps.iter().enumerate() {
            sections.push((format!("gp_{}", i + 1), gp.to_text()));
        }
        let mut s = String::new();
        writeln!(s, "format,cylpress-surrogate,1").unwrap();
        writeln!(s, "kernel,{}", m.kernel).unwrap();
        writeln!(s, "variance_mode,{}", m.variance_mode.key()).unwrap();
        writeln!(s, "n_pc,{}", self.n_pc()).unwrap();
        writeln!(s, "fingerprint,{}", m.fingerprint).unwrap();
        writeln!(s, "created,{}", m.created).unwrap();
        writeln!(s, "n_train,{},{}", m.n_train_records, m.n_train_conditions).unwrap();
        let names: Vec<&str> = sections.iter().map(|(n, _)| n.as_str()).collect();
        writeln!(s, "sections,{}", names.join(",")).unwrap();
        for (name, body) in &sections {
            writeln!(s, "section,{name},{}", body.lines().count()).unwrap();
            s.push_str(body);
        }
        s
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let lines: Vec<&str> = text.lines().collect();
        let mut pos = 0;
        let next = |pos: &mut usize, tag: &str| -> std::result::Result<Vec<String>, String> {
            let line = lines.get(*pos).ok_or_else(|| format!("missing `{tag}` line"))?;
            *pos += 1;
            let fields: Vec<String> = line.split(',').map(str::to_string).collect();
            if fields[0] != tag {
                return Err(format!("expected `{tag}`, found `{}`", fields[0]));
            }
            Ok(fields[1..].to_vec())
        };
        let one = |v: Vec<String>| v.into_iter().next().ok_or_else(|| "empty field".to_string());
        if next(&mut pos, "format")? != ["cylpress-surrogate", "1"] {
            return Err("unsupported model format".into());
        }
        let kernel: KernelKind = one(next(&mut pos, "kernel")?)?.parse().map_err(|e: Error| e.to_string())?;
        let variance_mode: VarianceMode = one(next(&mut pos, "variance_mode")?)?.parse().map_err(|e: Error| e.to_string())?;
        let n_pc: usize = one(next(&mut pos, "n_pc")?)?.parse().map_err(|_| "bad n_pc")?;
        let fingerprint = one(next(&mut pos, "fingerprint")?)?;
        let created: u64 = one(next(&mut pos, "created")?)?.parse().map_err(|_| "bad created")?;
        let nt = next(&mut pos, "n_train")?;
        if nt.len() != 2 {
            return Err("n_train needs 2 fields".into());
        }
        let n_train_records: usize = nt[0].parse().map_err(|_| "bad n_train")?;
        let n_train_conditions: usize = nt[1].parse().map_err(|_| "bad n_train")?;
        let names = next(&mut pos, "sections")?;
        let mut bodies = Vec::with_capacity(names.len());
        for name in &names {
            let header = next(&mut pos, "section")?;
            if header.len() != 2 || &header[0] != name {
                return Err(format!("expected section `{name}`"));
            }
            let count: usize = header[1].parse().map_err(|_| "bad section length")?;
            let end = pos + count;
            if end > lines.len() {
                return Err(format!("section `{name}` truncated"));
            }
            let mut body = lines[pos..end].join("\n");
            body.push('\n');
            bodies.push(body);
            pos = end;
        }
        if pos != lines.len() {
            return Err("unexpected trailing lines".into());
        }
        if names.len() != 3 + n_pc || names[0] != "basis" || names[1] != "icc_scaler" || names[2] != "weight_scalers" {
            return Err("manifest does not match n_pc".into());
        }
        let basis = PcdBasis::from_text(&bodies[0])?;
        let icc_scaler = parse_scalers(&bodies[1])?.pop().ok_or("missing icc scaler")?;
        let weight_scalers = parse_scalers(&bodies[2])?;
        let gps = bodies[3..]
            .iter()
            .map(|b| GpModel::from_text(b))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if basis.n_pc() != n_pc || weight_scalers.len() != n_pc || icc_scaler.dim() != ICC_DIM {
            return Err("section sizes do not match n_pc".into());
        }
        if gps.iter().any(|g| g.kind() != kernel || g.dim() != ICC_DIM) {
            return Err("GP sections disagree with the manifest".into());
        }
        Ok(Self {
            basis,
            icc_scaler,
            weight_scalers,
            gps,
            metadata: ModelMetadata {
                kernel,
                variance_mode,
                fingerprint,
                created,
                n_train_records,
                n_train_conditions,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }
}

/// `dim,<d>` then `mean,...` and `std,...` per scaler.
fn scaler_text(scalers: &[Scaler]) -> String {
    let mut s = String::new();
    for sc in scalers {
        writeln!(s, "dim,{}", sc.dim()).unwrap();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        writeln!(s, "mean,{}", join(&sc.mean)).unwrap();
        writeln!(s, "std,{}", join(&sc.std)).unwrap();
    }
    s
}

fn parse_scalers(text: &str) -> std::result::Result<Vec<Scaler>, String> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() % 3 != 0 {
        return Err("scaler section needs dim/mean/std triples".into());
    }
    let nums = |line: &str, tag: &str| -> std::result::Result<Vec<f64>, String> {
        let rest = line
            .strip_prefix(tag)
            .and_then(|r| r.strip_prefix(','))
            .ok_or_else(|| format!("expected `{tag}`"))?;
        rest.split(',').map(|v| v.parse::<f64>().map_err(|_| format!("bad number `{v}`"))).collect()
    };
    lines
        .chunks(3)
        .map(|c| {
            let d = nums(c[0], "dim")?;
            let mean = nums(c[1], "mean")?;
            let std = nums(c[2], "std")?;
            if d.len() != 1 || d[0] as usize != mean.len() || mean.len() != std.len() {
                return Err("scaler dimension mismatch".into());
            }
            if std.iter().any(|s| !(*s > 0.0)) {
                return Err("scaler std must be positive".into());
            }
            Ok(Scaler { mean, std })
        })
        .collect()
}

/// Pearson correlation of weight channels at one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightCorrelation {
    pub r: DMatrix<f64>,
    /// determinant of `r`, clamped into [0, 1]
    pub det: f64,
    /// per-channel mean and std (population) used for normalisation
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl WeightCorrelation {
    /// (wᵢ − μ̃ᵢ)/σ̃ᵢ for one cycle's weights.
    pub fn scaled(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Pearson matrix of `weights` (one row per cycle, one column per channel).
/// Moments use the population convention, so the diagonal is exactly 1.
pub fn weight_correlation(weights: &[Vec<f64>]) -> Result<WeightCorrelation> {
    let n = weights.len();
    if n < 3 {
        return Err(Error::invalid("weight correlation", "need at least 3 cycles"));
    }
    let p = weights[0].len();
    if let Some(bad) = weights.iter().find(|w| w.len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: bad.len(),
        });
    }
    let nf = n as f64;
    let mean: Vec<f64> = (0..p).map(|a| weights.iter().map(|w| w[a]).sum::<f64>() / nf).collect();
    let std: Vec<f64> = (0..p)
        .map(|a| (weights.iter().map(|w| (w[a] - mean[a]).powi(2)).sum::<f64>() / nf).sqrt())
        .collect();
    for (a, s) in std.iter().enumerate() {
        if !(*s > 1e-12 * mean[a].abs().max(f64::MIN_POSITIVE)) {
            return Err(Error::ZeroVariance {
                what: "weight channel",
                index: a,
            });
        }
    }
    let mut r = DMatrix::identity(p, p);
    for a in 0..p {
        for b in 0..a {
            let c = weights.iter().map(|w| (w[a] - mean[a]) * (w[b] - mean[b])).sum::<f64>() / (nf * std[a] * std[b]);
            let c = c.clamp(-1.0, 1.0);
            r[(a, b)] = c;
            r[(b, a)] = c;
        }
    }
    let det = r.clone().lu().determinant().clamp(0.0, 1.0);
    Ok(WeightCorrelation { r, det, mean, std })
}

/// Upper-triangular rendering of a correlation matrix followed by its
/// determinant, e.g.
///
/// ```text
/// R =
///   1        0.6762  -0.3265
///            1       -0.5037
///                     1
/// det(R) = 0.23
/// ```
pub fn format_correlation(r: &DMatrix<f64>, det: f64) -> String {
    let p = r.nrows();
    let mut s = String::from("R =\n");
    for a in 0..p {
        s.push(' ');
        for b in 0..p {
            let cell = match b.cmp(&a) {
                std::cmp::Ordering::Less => String::new(),
                std::cmp::Ordering::Equal => " 1".to_string(),
                std::cmp::Ordering::Greater => format!("{:.4}", r[(a, b)]),
            };
            write!(s, " {cell:<8}").unwrap();
        }
        let trimmed = s.trim_end_matches(' ').len();
        s.truncate(trimmed);
        s.push('\n');
    }
    writeln!(s, "det(R) = {det:.2}").unwrap();
    s
}
