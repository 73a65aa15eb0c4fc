//! Cylinder geometry, crank kinematics and the trace containers shared by
//! every other module. Angles are degrees crank angle after top dead centre;
//! everything else is SI.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// Uniform crank-angle axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrankGrid {
    theta_start: f64,
    theta_end: f64,
    resolution: f64,
    n_ca: usize,
}

impl CrankGrid {
    pub fn new(theta_start: f64, theta_end: f64, resolution: f64) -> Result<Self> {
        if !(theta_start.is_finite() && theta_end.is_finite() && resolution.is_finite()) {
            return Err(Error::invalid("crank grid", "non-finite bound"));
        }
        if theta_start >= theta_end {
            return Err(Error::invalid("crank grid", "theta_start must be below theta_end"));
        }
        if resolution <= 0.0 {
            return Err(Error::invalid("crank grid", "resolution must be positive"));
        }
        let steps = (theta_end - theta_start) / resolution;
        let rounded = steps.round();
        if (steps - rounded).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::invalid(
                "crank grid",
                format!("span {} is not a whole multiple of {resolution}", theta_end - theta_start),
            ));
        }
        Ok(Self {
            theta_start,
            theta_end,
            resolution,
            n_ca: rounded as usize + 1,
        })
    }

    /// Symmetric grid over one full compression and expansion, [-180, 180].
    pub fn full_cycle(resolution: f64) -> Result<Self> {
        Self::new(-180.0, 180.0, resolution)
    }

    pub fn theta_start(&self) -> f64 {
        self.theta_start
    }

    pub fn theta_end(&self) -> f64 {
        self.theta_end
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn n_ca(&self) -> usize {
        self.n_ca
    }

    /// Crank angle of sample `index`.
    pub fn angle(&self, index: usize) -> f64 {
        if index + 1 == self.n_ca {
            self.theta_end
        } else {
            self.theta_start + index as f64 * self.resolution
        }
    }

    pub fn angles(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n_ca).map(move |i| self.angle(i))
    }

    /// Index of the sample closest to `theta`, clamped to the grid.
    pub fn nearest_index(&self, theta: f64) -> usize {
        let raw = ((theta - self.theta_start) / self.resolution).round();
        raw.clamp(0.0, (self.n_ca - 1) as f64) as usize
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.theta_start && theta <= self.theta_end
    }

    pub(crate) fn same_as(&self, other: &CrankGrid) -> bool {
        self.n_ca == other.n_ca
            && (self.theta_start - other.theta_start).abs() < 1e-9
            && (self.resolution - other.resolution).abs() < 1e-12
    }
}

impl Default for CrankGrid {
    fn default() -> Self {
        Self::full_cycle(0.2).expect("default grid is valid")
    }
}

impl fmt::Display for CrankGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}] step {} ({} samples)",
            self.theta_start, self.theta_end, self.resolution, self.n_ca
        )
    }
}

/// Slider-crank cylinder geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderGeometry {
    bore: f64,
    stroke: f64,
    conrod_length: f64,
    compression_ratio: f64,
}

impl CylinderGeometry {
    pub fn new(bore: f64, stroke: f64, conrod_length: f64, compression_ratio: f64) -> Result<Self> {
        for (name, v) in [
            ("bore", bore),
            ("stroke", stroke),
            ("conrod_length", conrod_length),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid("geometry", format!("{name} must be positive")));
            }
        }
        if !(compression_ratio.is_finite() && compression_ratio > 1.0) {
            return Err(Error::invalid("geometry", "compression ratio must exceed 1"));
        }
        if conrod_length <= stroke / 2.0 {
            return Err(Error::invalid(
                "geometry",
                "connecting rod must be longer than the crank radius",
            ));
        }
        Ok(Self {
            bore,
            stroke,
            conrod_length,
            compression_ratio,
        })
    }

    pub fn bore(&self) -> f64 {
        self.bore
    }

    pub fn stroke(&self) -> f64 {
        self.stroke
    }

    pub fn conrod_length(&self) -> f64 {
        self.conrod_length
    }

    pub fn compression_ratio(&self) -> f64 {
        self.compression_ratio
    }

    pub fn piston_area(&self) -> f64 {
        PI * self.bore * self.bore / 4.0
    }

    pub fn displacement_volume(&self) -> f64 {
        self.piston_area() * self.stroke
    }

    pub fn clearance_volume(&self) -> f64 {
        self.displacement_volume() / (self.compression_ratio - 1.0)
    }

    /// Instantaneous cylinder volume at `theta` degrees aTDC, in m³.
    pub fn volume(&self, theta: f64) -> f64 {
        let a = self.stroke / 2.0;
        let l = self.conrod_length;
        let rad = theta.to_radians();
        let (s, c) = rad.sin_cos();
        self.clearance_volume() + self.piston_area() * (l + a - a * c - (l * l - a * a * s * s).sqrt())
    }

    /// Analytic dV/dθ in m³ per degree crank angle.
    pub fn volume_derivative(&self, theta: f64) -> f64 {
        let a = self.stroke / 2.0;
        let l = self.conrod_length;
        let rad = theta.to_radians();
        let (s, c) = rad.sin_cos();
        let per_rad = self.piston_area() * (a * s + a * a * s * c / (l * l - a * a * s * s).sqrt());
        per_rad * PI / 180.0
    }
}

impl Default for CylinderGeometry {
    fn default() -> Self {
        Self::new(0.130, 0.162, 0.262, 15.85).expect("default geometry is valid")
    }
}

/// Free-function form of [`CylinderGeometry::volume`].
pub fn cylinder_volume(theta: f64, geom: &CylinderGeometry) -> f64 {
    geom.volume(theta)
}

/// Free-function form of [`CylinderGeometry::volume_derivative`].
pub fn cylinder_volume_derivative(theta: f64, geom: &CylinderGeometry) -> f64 {
    geom.volume_derivative(theta)
}

/// One cycle of pressure samples (Pa) on a crank grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureTrace {
    grid: CrankGrid,
    samples: Vec<f64>,
}

impl PressureTrace {
    /// Measured-trace constructor: every sample must be finite and positive.
    pub fn new(grid: CrankGrid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.n_ca() {
            return Err(Error::GridMismatch {
                expected: grid.n_ca(),
                found: samples.len(),
            });
        }
        if let Some((i, v)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::invalid(
                "pressure trace",
                format!("sample {i} at {}° is {v}, expected finite and positive", grid.angle(i)),
            ));
        }
        Ok(Self { grid, samples })
    }

    /// Constructor for model output, where positivity is not guaranteed.
    pub fn modelled(grid: CrankGrid, samples: Vec<f64>) -> Self {
        assert_eq!(samples.len(), grid.n_ca(), "sample count must match grid");
        Self { grid, samples }
    }

    pub fn grid(&self) -> &CrankGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_abs_diff(&self, other: &PressureTrace) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Number of in-cylinder condition variables.
pub const ICC_DIM: usize = 6;

/// Field names in canonical order, as used on the command line.
pub const ICC_FIELDS: [&str; ICC_DIM] = ["q_total", "br", "soi_di", "p_im", "t_im", "x_egr"];

/// In-cylinder conditions at intake valve closing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IccVector {
    /// Total injected fuel energy, J.
    pub q_total: f64,
    /// Energy-based blend ratio.
    pub br: f64,
    /// Direct-injection start, degrees CA.
    pub soi_di: f64,
    /// Intake manifold pressure, Pa.
    pub p_im: f64,
    /// Intake manifold temperature, K.
    pub t_im: f64,
    /// EGR ratio.
    pub x_egr: f64,
}

impl IccVector {
    pub fn new(q_total: f64, br: f64, soi_di: f64, p_im: f64, t_im: f64, x_egr: f64) -> Result<Self> {
        let icc = Self {
            q_total,
            br,
            soi_di,
            p_im,
            t_im,
            x_egr,
        };
        icc.validate()?;
        Ok(icc)
    }

    pub fn validate(&self) -> Result<()> {
        let arr = self.to_array();
        if let Some(i) = arr.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("icc", format!("{} is not finite", ICC_FIELDS[i])));
        }
        if self.q_total < 0.0 {
            return Err(Error::invalid("icc", "q_total must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.br) {
            return Err(Error::invalid("icc", "br out of [0,1]"));
        }
        if !(0.0..1.0).contains(&self.x_egr) {
            return Err(Error::invalid("icc", "x_egr out of [0,1)"));
        }
        if self.p_im <= 0.0 {
            return Err(Error::invalid("icc", "p_im must be positive"));
        }
        if self.t_im <= 0.0 {
            return Err(Error::invalid("icc", "t_im must be positive"));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; ICC_DIM] {
        [self.q_total, self.br, self.soi_di, self.p_im, self.t_im, self.x_egr]
    }

    pub fn from_array(a: [f64; ICC_DIM]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn field_index(name: &str) -> Option<usize> {
        ICC_FIELDS.iter().position(|f| *f == name)
    }

    /// Nominal operating point of the simulated sweeps: 2.3 kJ, BR 0.8,
    /// SOI 40, 1.55 bar, 45 °C, 20 % EGR.
    pub fn nominal() -> Self {
        Self {
            q_total: 2300.0,
            br: 0.8,
            soi_di: 40.0,
            p_im: 1.55e5,
            t_im: 318.15,
            x_egr: 0.2,
        }
    }
}

/// Polytropic motored pressure anchored at the intake manifold pressure at
/// bottom dead centre.
pub fn motored_pressure(
    grid: &CrankGrid,
    geom: &CylinderGeometry,
    p_im: f64,
    kappa_mot: f64,
) -> Result<PressureTrace> {
    if !(p_im.is_finite() && p_im > 0.0) {
        return Err(Error::invalid("motored pressure", "p_im must be positive"));
    }
    if !(1.0..=1.7).contains(&kappa_mot) {
        return Err(Error::invalid("motored pressure", "kappa_mot out of [1.0, 1.7]"));
    }
    Ok(PressureTrace::modelled(
        *grid,
        motored_samples(grid, geom, p_im, kappa_mot),
    ))
}

pub(crate) fn motored_samples(grid: &CrankGrid, geom: &CylinderGeometry, p_im: f64, kappa_mot: f64) -> Vec<f64> {
    let v_bdc = geom.volume(-180.0);
    grid.angles()
        .map(|theta| p_im * (v_bdc / geom.volume(theta)).powf(kappa_mot))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn default_grid_has_1801_samples() {
        let g = CrankGrid::default();
        assert_eq!(g.n_ca(), 1801);
        assert_eq!(g.angle(0), -180.0);
        assert_eq!(g.angle(1800), 180.0);
        assert!((g.angle(900)).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_bad_spans() {
        assert!(CrankGrid::new(0.0, 1.0, 0.3).is_err());
        assert!(CrankGrid::new(1.0, 0.0, 0.1).is_err());
        assert!(CrankGrid::new(0.0, 1.0, 0.0).is_err());
        assert_eq!(CrankGrid::new(-10.0, 10.0, 0.5).unwrap().n_ca(), 41);
    }

    #[test]
    fn volume_extremes() {
        let g = CylinderGeometry::default();
        assert!(rel(g.volume(0.0), g.clearance_volume()) < 1e-12);
        assert!(rel(g.volume(-180.0), g.clearance_volume() + g.displacement_volume()) < 1e-12);
        assert!(rel(g.volume(-180.0) / g.volume(0.0), 15.85) < 1e-12);
    }

    #[test]
    fn volume_is_symmetric_and_periodic() {
        let g = CylinderGeometry::default();
        for k in 0..=1800 {
            let t = k as f64 * 0.1;
            assert!(rel(g.volume(t), g.volume(-t)) < 1e-12);
            assert!(rel(g.volume(t), g.volume(t - 360.0)) < 1e-12);
        }
    }

    #[test]
    fn volume_derivative_matches_finite_difference() {
        let g = CylinderGeometry::default();
        let h = 1e-4;
        for theta in [-150.0, -90.0, -30.0, 10.0, 45.0, 90.0, 135.0] {
            let fd = (g.volume(theta + h) - g.volume(theta - h)) / (2.0 * h);
            let an = g.volume_derivative(theta);
            assert!(rel(an, fd) < 1e-6, "theta {theta}: {an} vs {fd}");
        }
        assert!(g.volume_derivative(0.0).abs() < 1e-18);
        assert!(g.volume_derivative(-180.0).abs() < 1e-18);
    }

    #[test]
    fn volume_derivative_sign() {
        let g = CylinderGeometry::default();
        for k in 1..1800 {
            let t = k as f64 * 0.1;
            assert!(g.volume_derivative(-t) < 0.0);
            assert!(g.volume_derivative(t) > 0.0);
        }
    }

    #[test]
    fn motored_boundary_and_tdc() {
        let grid = CrankGrid::default();
        let geom = CylinderGeometry::default();
        let p = motored_pressure(&grid, &geom, 1.55e5, 1.32).unwrap();
        let s = p.samples();
        assert!(rel(s[0], 1.55e5) < 1e-12);
        assert!(rel(s[1800], 1.55e5) < 1e-12);
        let oracle = 1.55e5 * 15.85f64.powf(1.32);
        assert!(rel(s[900], oracle) < 1e-10);
        assert!((s[900] / 1e5 - 59.5).abs() < 0.1);
    }

    #[test]
    fn motored_symmetric_and_monotone() {
        let grid = CrankGrid::default();
        let geom = CylinderGeometry::default();
        let s = motored_pressure(&grid, &geom, 1.2e5, 1.35).unwrap().into_samples();
        for i in 0..900 {
            assert!(s[i + 1] > s[i]);
            assert!(rel(s[i], s[1800 - i]) < 1e-12);
        }
    }

    #[test]
    fn motored_rejects_bad_kappa() {
        let grid = CrankGrid::default();
        let geom = CylinderGeometry::default();
        assert!(motored_pressure(&grid, &geom, 1e5, 1.8).is_err());
        assert!(motored_pressure(&grid, &geom, -1.0, 1.3).is_err());
    }

    #[test]
    fn geometry_rejects_short_rod() {
        assert!(CylinderGeometry::new(0.1, 0.2, 0.09, 15.0).is_err());
        assert!(CylinderGeometry::new(0.1, 0.2, 0.3, 1.0).is_err());
    }

    #[test]
    fn icc_validation() {
        assert!(IccVector::new(2300.0, 0.8, 40.0, 1.55e5, 318.15, 1.2).is_err());
        assert!(IccVector::new(2300.0, 1.1, 40.0, 1.55e5, 318.15, 0.2).is_err());
        assert!(IccVector::new(-1.0, 0.8, 40.0, 1.55e5, 318.15, 0.2).is_err());
        assert!(IccVector::new(2300.0, 0.8, 40.0, 1.55e5, 318.15, 0.2).is_ok());
        assert_eq!(IccVector::field_index("t_im"), Some(4));
    }

    #[test]
    fn trace_validation() {
        let grid = CrankGrid::new(0.0, 1.0, 0.5).unwrap();
        assert!(PressureTrace::new(grid, vec![1.0, 2.0]).is_err());
        assert!(PressureTrace::new(grid, vec![1.0, 0.0, 2.0]).is_err());
        assert!(PressureTrace::new(grid, vec![1.0, f64::NAN, 2.0]).is_err());
        assert!(PressureTrace::new(grid, vec![1.0, 3.0, 2.0]).is_ok());
    }
}
