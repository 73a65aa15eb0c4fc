//! Layered run settings: defaults, then the `--config` file, then flags.

use std::path::{Path, PathBuf};

use cylpress::config::KeyValues;
use cylpress::engine::{CrankGrid, CylinderGeometry, IccVector, ICC_FIELDS};
use cylpress::gpr::{Bounds, FitOptions, KernelKind};
use cylpress::metrics::MetricOptions;
use cylpress::study::EvalOptions;
use cylpress::surrogate::{SurrogateConfig, VarianceMode};

/// Bad flags or config values; exits with the usage code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn usage_from(e: cylpress::Error) -> anyhow::Error {
    usage(e.to_string())
}

pub struct Settings {
    pub kv: KeyValues,
    pub out_dir: PathBuf,
    pub quiet: bool,
}

impl Settings {
    pub fn new(config: Option<&Path>, overrides: KeyValues, out_dir: PathBuf, quiet: bool) -> anyhow::Result<Self> {
        let file = match config {
            Some(p) => {
                if !p.exists() {
                    return Err(usage(format!("config file {} does not exist", p.display())));
                }
                KeyValues::load(p).map_err(usage_from)?
            }
            None => KeyValues::default(),
        };
        Ok(Self {
            kv: file.merged(&overrides),
            out_dir,
            quiet,
        })
    }

    pub fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> anyhow::Result<T> {
        self.kv.get_or(key, default).map_err(usage_from)
    }

    pub fn seed(&self) -> anyhow::Result<u64> {
        self.get_or("seed", 1)
    }

    /// Input path from `key`, else `default_name` inside the output directory.
    pub fn input(&self, key: &str, default_name: &str) -> anyhow::Result<PathBuf> {
        let p = self
            .kv
            .get_str(key)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.out_dir.join(default_name));
        if !p.exists() {
            return Err(usage(format!("{key} file {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn grid(&self) -> anyhow::Result<CrankGrid> {
        CrankGrid::full_cycle(self.get_or("resolution", 0.2)?).map_err(usage_from)
    }

    pub fn geometry(&self) -> anyhow::Result<CylinderGeometry> {
        let g = CylinderGeometry::default();
        CylinderGeometry::new(
            self.get_or("bore", g.bore())?,
            self.get_or("stroke", g.stroke())?,
            self.get_or("conrod", g.conrod_length())?,
            self.get_or("compression_ratio", g.compression_ratio())?,
        )
        .map_err(usage_from)
    }

    pub fn kernel(&self) -> anyhow::Result<KernelKind> {
        let family = self.kv.get_str("kernel").unwrap_or("matern32");
        let mut kind: KernelKind = family.parse().map_err(usage_from)?;
        if let Some(ard) = self.kv.get_bool("ard").map_err(usage_from)? {
            kind.ard = kind.ard || ard;
        }
        Ok(kind)
    }

    pub fn surrogate(&self) -> anyhow::Result<SurrogateConfig> {
        let n_pc: usize = self.get_or("n_pc", 8)?;
        if n_pc == 0 {
            return Err(usage("n_pc must be at least 1"));
        }
        let restarts: usize = self.get_or("restarts", 8)?;
        if restarts == 0 {
            return Err(usage("restarts must be at least 1"));
        }
        let variance_mode: VarianceMode = self
            .kv
            .get_str("variance_mode")
            .unwrap_or("predictive")
            .parse()
            .map_err(usage_from)?;
        Ok(SurrogateConfig {
            n_pc,
            kernel: self.kernel()?,
            geom: self.geometry()?,
            kappa_mot: self.get_or("kappa_mot", 1.32)?,
            fit: FitOptions {
                restarts,
                seed: self.seed()?,
                bounds: Bounds::default(),
                max_iter: self.get_or("max_iter", 200)?,
            },
            variance_mode,
        })
    }

    pub fn eval(&self) -> anyhow::Result<EvalOptions> {
        let d = MetricOptions::default();
        let samples: usize = self.get_or("samples", 200)?;
        if samples < 2 {
            return Err(usage("samples must be at least 2"));
        }
        Ok(EvalOptions {
            n_samples: samples,
            seed: self.seed()?,
            metric: MetricOptions {
                kappa_hr: self.get_or("kappa_hr", d.kappa_hr)?,
                pprr_window: self.get_or("pprr_window", d.pprr_window)?,
                firing_threshold: self.get_or("firing_threshold", d.firing_threshold)?,
            },
        })
    }

    /// Operating point from the six condition keys, defaulting to nominal.
    pub fn icc(&self) -> anyhow::Result<IccVector> {
        let mut a = IccVector::nominal().to_array();
        for (k, f) in ICC_FIELDS.iter().enumerate() {
            a[k] = self.get_or(f, a[k])?;
        }
        IccVector::from_array(a).map_err(usage_from)
    }
}
