//! Combustion metrics from pressure traces and the error statistics used in
//! validation.

use std::fmt::Write as _;
use std::path::Path;

use crate::engine::{CylinderGeometry, PressureTrace};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;

/// Why a crank-angle based metric has no value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Undefined {
    /// Cumulative heat release never reached the firing threshold.
    NonFiring,
    /// CA50 coincides with CA10, so the burn ratio is undefined.
    UndefinedRatio,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOptions {
    /// Ratio of specific heats for the apparent heat release.
    pub kappa_hr: f64,
    /// Moving-average window applied before differentiating for PPRR (odd, 1 = off).
    pub pprr_window: usize,
    /// Minimum max(Q) in J for a cycle to count as firing.
    pub firing_threshold: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            kappa_hr: 1.33,
            pprr_window: 1,
            firing_threshold: 50.0,
        }
    }
}

/// Gross IMEP in Pa: trapezoidal ∫p dV/dθ dθ over the trace grid, over V_d.
pub fn imep_gross(trace: &PressureTrace, geom: &CylinderGeometry) -> f64 {
    let grid = trace.grid();
    let integrand: Vec<f64> = trace
        .samples()
        .iter()
        .zip(grid.angles())
        .map(|(p, theta)| p * geom.volume_derivative(theta))
        .collect();
    trapezoid(&integrand, grid.resolution()) / geom.displacement_volume()
}

fn trapezoid(y: &[f64], h: f64) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let inner: f64 = y[1..y.len() - 1].iter().sum();
    h * (inner + 0.5 * (y[0] + y[y.len() - 1]))
}

/// Maximum pressure and the angle of its first occurrence.
pub fn peak_pressure(trace: &PressureTrace) -> (f64, f64) {
    let (idx, p) = trace
        .samples()
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bp), (i, &p)| if p > bp { (i, p) } else { (bi, bp) });
    (p, trace.grid().angle(idx))
}

/// Centered moving average; the window shrinks symmetrically near the ends.
pub fn moving_average(y: &[f64], window: usize) -> Vec<f64> {
    assert!(window % 2 == 1, "smoothing window must be odd");
    if window <= 1 {
        return y.to_vec();
    }
    let half = window / 2;
    let n = y.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let s: f64 = y[i - h..=i + h].iter().sum();
            s / (2 * h + 1) as f64
        })
        .collect()
}

/// Second-order finite-difference derivative: central inside, one-sided at
/// the ends.
pub fn derivative(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        2 => vec![(y[1] - y[0]) / h; 2],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h)
                } else if i == n - 1 {
                    (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * h)
                } else {
                    (y[i + 1] - y[i - 1]) / (2.0 * h)
                }
            })
            .collect(),
    }
}

/// Peak pressure rise rate in Pa per degree CA.
pub fn peak_pressure_rise_rate(trace: &PressureTrace, window: usize) -> f64 {
    pressure_rise_rate(trace, window).0
}

/// Peak pressure rise rate and the angle where it occurs.
pub fn pressure_rise_rate(trace: &PressureTrace, window: usize) -> (f64, f64) {
    let smoothed = moving_average(trace.samples(), window.max(1));
    let d = derivative(&smoothed, trace.grid().resolution());
    let (idx, v) = d
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    (v, trace.grid().angle(idx))
}

/// Apparent cumulative heat release in J at every grid angle, zero at the
/// first sample.
pub fn heat_release(trace: &PressureTrace, geom: &CylinderGeometry, kappa: f64) -> Vec<f64> {
    assert!(kappa > 1.0, "heat-release kappa must exceed 1");
    let grid = trace.grid();
    let p = trace.samples();
    let h = grid.resolution();
    let inv = 1.0 / (kappa - 1.0);
    let volumes: Vec<f64> = grid.angles().map(|t| geom.volume(t)).collect();
    let dv: Vec<f64> = grid.angles().map(|t| geom.volume_derivative(t)).collect();
    let pv0 = p[0] * volumes[0];
    let mut work = 0.0;
    let mut q = Vec::with_capacity(p.len());
    q.push(0.0);
    for i in 1..p.len() {
        work += 0.5 * h * (p[i - 1] * dv[i - 1] + p[i] * dv[i]);
        q.push(inv * (p[i] * volumes[i] - pv0) + work);
    }
    q
}

/// Angle of the first upward crossing of `fraction`·max(Q), linearly
/// interpolated between grid samples.
pub fn burn_angle(
    q: &[f64],
    theta_start: f64,
    resolution: f64,
    fraction: f64,
    firing_threshold: f64,
) -> Result<f64, Undefined> {
    assert!(fraction > 0.0 && fraction < 1.0, "fraction must lie in (0, 1)");
    let q_max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(q_max > firing_threshold) {
        return Err(Undefined::NonFiring);
    }
    let target = fraction * q_max;
    for i in 0..q.len().saturating_sub(1) {
        if q[i] < target && q[i + 1] >= target {
            let t = (target - q[i]) / (q[i + 1] - q[i]);
            return Ok(theta_start + (i as f64 + t) * resolution);
        }
    }
    // q[0] already at or above the target
    Ok(theta_start)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurnAngles {
    pub ca10: f64,
    pub ca25: f64,
    pub ca50: f64,
    pub ca75: f64,
}

pub fn burn_angles(q: &[f64], theta_start: f64, resolution: f64, firing_threshold: f64) -> Result<BurnAngles, Undefined> {
    let at = |f| burn_angle(q, theta_start, resolution, f, firing_threshold);
    Ok(BurnAngles {
        ca10: at(0.10)?,
        ca25: at(0.25)?,
        ca50: at(0.50)?,
        ca75: at(0.75)?,
    })
}

/// CA75 − CA25.
pub fn burn_duration(angles: &BurnAngles) -> f64 {
    angles.ca75 - angles.ca25
}

/// (CA75 − CA50)/(CA50 − CA10).
pub fn burn_ratio(angles: &BurnAngles) -> Result<f64, Undefined> {
    let den = angles.ca50 - angles.ca10;
    if den <= 0.0 {
        return Err(Undefined::UndefinedRatio);
    }
    Ok((angles.ca75 - angles.ca50) / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombustionMetrics {
    /// Pa
    pub imep_g: f64,
    /// Pa
    pub p_max: f64,
    pub p_max_angle: f64,
    /// Pa per degree CA
    pub dp_dtheta_max: f64,
    /// Burn angles, `None` for non-firing cycles.
    pub burn: Option<BurnAngles>,
    pub burn_duration: Option<f64>,
    pub burn_ratio: Option<f64>,
}

impl CombustionMetrics {
    pub fn compute(trace: &PressureTrace, geom: &CylinderGeometry, opts: &MetricOptions) -> Self {
        let (p_max, p_max_angle) = peak_pressure(trace);
        let q = heat_release(trace, geom, opts.kappa_hr);
        let grid = trace.grid();
        let burn = burn_angles(&q, grid.theta_start(), grid.resolution(), opts.firing_threshold).ok();
        Self {
            imep_g: imep_gross(trace, geom),
            p_max,
            p_max_angle,
            dp_dtheta_max: peak_pressure_rise_rate(trace, opts.pprr_window),
            burn,
            burn_duration: burn.as_ref().map(burn_duration),
            burn_ratio: burn.as_ref().and_then(|b| burn_ratio(b).ok()),
        }
    }

    pub fn firing(&self) -> bool {
        self.burn.is_some()
    }

    pub fn ca50(&self) -> Option<f64> {
        self.burn.map(|b| b.ca50)
    }
}

/// The six metrics tracked in validation tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Imep,
    PeakPressure,
    Pprr,
    Ca50,
    BurnDuration,
    BurnRatio,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Imep,
        Metric::PeakPressure,
        Metric::Pprr,
        Metric::Ca50,
        Metric::BurnDuration,
        Metric::BurnRatio,
    ];

    /// Value in reporting units (bar, bar/CAD, CAD, dimensionless).
    pub fn value(&self, m: &CombustionMetrics) -> Option<f64> {
        match self {
            Metric::Imep => Some(m.imep_g / 1e5),
            Metric::PeakPressure => Some(m.p_max / 1e5),
            Metric::Pprr => Some(m.dp_dtheta_max / 1e5),
            Metric::Ca50 => m.ca50(),
            Metric::BurnDuration => m.burn_duration,
            Metric::BurnRatio => m.burn_ratio,
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Metric::Imep => "imep_g",
            Metric::PeakPressure => "p_max",
            Metric::Pprr => "pprr",
            Metric::Ca50 => "ca50",
            Metric::BurnDuration => "burn_duration",
            Metric::BurnRatio => "rb",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Metric::Imep => "IMEPg [bar]",
            Metric::PeakPressure => "max(p) [bar]",
            Metric::Pprr => "max(dp/dCA) [bar/CAD]",
            Metric::Ca50 => "CA50 [CAD]",
            Metric::BurnDuration => "CA75-CA25 [CAD]",
            Metric::BurnRatio => "Rb [-]",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaeSummary {
    pub value: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

/// Mean absolute error over pairs, skipping pairs where either side is
/// undefined.
pub fn mean_absolute_error(pred: &[Option<f64>], meas: &[Option<f64>]) -> Result<MaeSummary> {
    if pred.len() != meas.len() {
        return Err(Error::DimensionMismatch {
            expected: meas.len(),
            found: pred.len(),
        });
    }
    let mut sum = 0.0;
    let mut n_used = 0;
    for (p, m) in pred.iter().zip(meas) {
        if let (Some(p), Some(m)) = (p, m) {
            sum += (m - p).abs();
            n_used += 1;
        }
    }
    if n_used == 0 {
        return Err(Error::EmptyAfterExclusion);
    }
    Ok(MaeSummary {
        value: sum / n_used as f64,
        n_used,
        n_excluded: pred.len() - n_used,
    })
}

/// MAE for fully defined value lists.
pub fn mae(pred: &[f64], meas: &[f64]) -> Result<f64> {
    let p: Vec<_> = pred.iter().copied().map(Some).collect();
    let m: Vec<_> = meas.iter().copied().map(Some).collect();
    mean_absolute_error(&p, &m).map(|s| s.value)
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Coefficient of variation of IMEPg (population standard deviation over mean).
pub fn cov_imep(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::invalid("cov(IMEPg)", "need at least two values"));
    }
    let (mean, std) = mean_std(values);
    if !(mean > 0.0) {
        return Err(Error::invalid("cov(IMEPg)", format!("non-positive mean {mean}")));
    }
    Ok(std / mean)
}

pub const METRICS_HEADER: &str =
    "condition_id,cycle_id,imep_g_bar,p_max_bar,pprr_bar_per_cad,ca10,ca25,ca50,ca75,burn_duration,rb,firing_flag";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders a metrics table; undefined entries are left empty.
pub fn metrics_csv(rows: &[(String, usize, CombustionMetrics)]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for (cond, cyc, m) in rows {
        let b = m.burn;
        writeln!(
            s,
            "{cond},{cyc},{},{},{},{},{},{},{},{},{},{}",
            m.imep_g / 1e5,
            m.p_max / 1e5,
            m.dp_dtheta_max / 1e5,
            opt(b.map(|b| b.ca10)),
            opt(b.map(|b| b.ca25)),
            opt(b.map(|b| b.ca50)),
            opt(b.map(|b| b.ca75)),
            opt(m.burn_duration),
            opt(m.burn_ratio),
            u8::from(m.firing())
        )
        .unwrap();
    }
    s
}

pub fn write_metrics_csv(path: &Path, rows: &[(String, usize, CombustionMetrics)]) -> Result<()> {
    write_atomic(path, metrics_csv(rows).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{motored_pressure, CrankGrid};

    fn setup() -> (CrankGrid, CylinderGeometry) {
        (CrankGrid::default(), CylinderGeometry::default())
    }

    #[test]
    fn motored_imep_is_zero() {
        let (grid, geom) = setup();
        let p = motored_pressure(&grid, &geom, 1.55e5, 1.32).unwrap();
        assert!(imep_gross(&p, &geom).abs() < 0.01e5);
        assert!(imep_gross(&p, &geom).abs() < 1e-6);
    }

    #[test]
    fn constant_pressure_imep_is_zero() {
        let (grid, geom) = setup();
        let p = PressureTrace::new(grid, vec![3.0e5; grid.n_ca()]).unwrap();
        assert!(imep_gross(&p, &geom).abs() < 1e-9);
    }

    #[test]
    fn offset_leaves_imep_and_pprr() {
        let (grid, geom) = setup();
        let base = motored_pressure(&grid, &geom, 1.5e5, 1.3).unwrap();
        let shifted = PressureTrace::new(grid, base.samples().iter().map(|p| p + 2e5).collect()).unwrap();
        assert!((imep_gross(&base, &geom) - imep_gross(&shifted, &geom)).abs() < 1e-6);
        let a = peak_pressure_rise_rate(&base, 1);
        let b = peak_pressure_rise_rate(&shifted, 1);
        assert!((a - b).abs() < 1e-6 * a.abs());
    }

    #[test]
    fn motored_peak_at_tdc_and_rise_before() {
        let (grid, geom) = setup();
        let p = motored_pressure(&grid, &geom, 1.55e5, 1.32).unwrap();
        let (_, angle) = peak_pressure(&p);
        assert!(angle.abs() < 1e-9);
        let (_, at) = pressure_rise_rate(&p, 1);
        assert!(at > -180.0 && at < 0.0);
    }

    #[test]
    fn spike_is_found() {
        let (grid, _) = setup();
        let mut s = vec![1e5; grid.n_ca()];
        s[123] = 5e5;
        s[500] = 5e5;
        let (v, a) = peak_pressure(&PressureTrace::new(grid, s).unwrap());
        assert_eq!(v, 5e5);
        assert!((a - grid.angle(123)).abs() < 1e-12);
    }

    #[test]
    fn linear_ramp_rise_rate() {
        let (grid, _) = setup();
        let s: Vec<f64> = grid.angles().map(|t| 1e6 + 250.0 * t).collect();
        let tr = PressureTrace::new(grid, s).unwrap();
        assert!((peak_pressure_rise_rate(&tr, 1) - 250.0).abs() < 1e-6);
        assert!((peak_pressure_rise_rate(&tr, 5) - 250.0).abs() < 1e-6);
    }

    #[test]
    fn kappa_matched_motored_releases_no_heat() {
        let (grid, geom) = setup();
        let p = motored_pressure(&grid, &geom, 1.55e5, 1.32).unwrap();
        let q = heat_release(&p, &geom, 1.32);
        assert_eq!(q[0], 0.0);
        let worst = q.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(worst <= 0.01 * 2300.0, "max |Q| = {worst}");
        let err = burn_angle(&q, -180.0, 0.2, 0.5, 50.0).unwrap_err();
        assert_eq!(err, Undefined::NonFiring);
    }

    #[test]
    fn ramp_burn_angles() {
        // Q rises linearly from 0 at a = -10 to 1000 at b = 30, flat after.
        let (a, b) = (-10.0, 30.0);
        let grid = CrankGrid::default();
        let q: Vec<f64> = grid
            .angles()
            .map(|t| if t <= a { 0.0 } else if t >= b { 1000.0 } else { 1000.0 * (t - a) / (b - a) })
            .collect();
        let ang = burn_angles(&q, -180.0, 0.2, 50.0).unwrap();
        assert!((ang.ca50 - (a + b) / 2.0).abs() < 1e-9);
        assert!((ang.ca10 - (a + 0.1 * (b - a))).abs() < 1e-9);
        assert!((burn_ratio(&ang).unwrap() - 0.625).abs() < 1e-9);
        assert!((burn_duration(&ang) - 0.5 * (b - a)).abs() < 1e-9);
    }

    #[test]
    fn equal_ca50_ca10_is_undefined_ratio() {
        let b = BurnAngles { ca10: 1.0, ca25: 1.0, ca50: 1.0, ca75: 2.0 };
        assert_eq!(burn_ratio(&b), Err(Undefined::UndefinedRatio));
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, 2.0], &[1.5, 2.5]).unwrap(), 0.5);
        let s = mean_absolute_error(&[Some(1.0), None, Some(3.0)], &[Some(2.0), Some(1.0), None]).unwrap();
        assert_eq!((s.value, s.n_used, s.n_excluded), (1.0, 1, 2));
        assert!(matches!(
            mean_absolute_error(&[None], &[Some(1.0)]),
            Err(Error::EmptyAfterExclusion)
        ));
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cov_examples() {
        assert_eq!(cov_imep(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert!((cov_imep(&[9.0, 11.0]).unwrap() - 0.1).abs() < 1e-15);
        assert!(cov_imep(&[-1.0, -2.0]).is_err());
        assert!(cov_imep(&[1.0]).is_err());
    }

    #[test]
    fn moving_average_edges() {
        let y = [1.0, 2.0, 3.0, 4.0, 10.0];
        let s = moving_average(&y, 3);
        assert_eq!(s, vec![1.0, 2.0, 3.0, 17.0 / 3.0, 10.0]);
    }

    #[test]
    fn csv_leaves_undefined_empty() {
        let (grid, geom) = setup();
        let p = motored_pressure(&grid, &geom, 1.55e5, 1.32).unwrap();
        let m = CombustionMetrics::compute(&p, &geom, &MetricOptions::default());
        assert!(!m.firing());
        let s = metrics_csv(&[("c1".into(), 0, m)]);
        let line = s.lines().nth(1).unwrap();
        assert!(line.ends_with(",,,,,,,0"), "{line}");
        assert_eq!(line.split(',').count(), METRICS_HEADER.split(',').count());
    }
}
