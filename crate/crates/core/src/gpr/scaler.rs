use crate::error::{Error, Result};

/// Per-dimension standardisation, population convention (divide by n).
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(samples: &[Vec<f64>]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid("scaler", "need at least two samples"));
        }
        let d = samples[0].len();
        if let Some(bad) = samples.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        let n = samples.len() as f64;
        let mut mean = vec![0.0; d];
        for r in samples {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in samples {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.into_iter().map(|s| (s / n).sqrt()).collect();
        for (j, (s, m)) in std.iter().zip(&mean).enumerate() {
            if !(*s > 1e-12 * m.abs().max(f64::MIN_POSITIVE)) {
                return Err(Error::ZeroVariance { what: "dimension", index: j });
            }
        }
        Ok(Self { mean, std })
    }

    /// Scaler for a single column of values.
    pub fn fit_1d(values: &[f64]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = values.iter().map(|v| vec![*v]).collect();
        Self::fit(&rows)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_convention() {
        let s = Scaler::fit_1d(&[1.0, 3.0]).unwrap();
        assert_eq!(s.mean, vec![2.0]);
        // population std of {1, 3} is 1, sample std would be √2
        assert!((s.std[0] - 1.0).abs() < 1e-15);
        let z = s.apply(&[1.0]);
        assert!((z[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn standardises_and_inverts() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64 * 0.3 + 5.0, (i as f64).sin() * 1e5, 1e-3 * i as f64])
            .collect();
        let s = Scaler::fit(&rows).unwrap();
        let z: Vec<Vec<f64>> = rows.iter().map(|r| s.apply(r)).collect();
        for j in 0..3 {
            let m: f64 = z.iter().map(|r| r[j]).sum::<f64>() / 20.0;
            let v: f64 = z.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / 20.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
        for r in &rows {
            let back = s.invert(&s.apply(r));
            for (a, b) in back.iter().zip(r) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constant_column_is_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![1.0, 3.0], vec![1.0, 4.0]];
        assert!(matches!(Scaler::fit(&rows), Err(Error::ZeroVariance { index: 0, .. })));
        assert!(Scaler::fit_1d(&[5.0]).is_err());
    }
}
