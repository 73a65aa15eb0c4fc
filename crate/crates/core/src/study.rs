//! Model evaluation: validation error tables, kernel comparison, the
//! component-count study, parameter sweeps and weight decomposition.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::engine::{IccVector, ICC_FIELDS};
use crate::error::{Error, Result};
use crate::gpr::KernelKind;
use crate::metrics::{cov_imep, mean_absolute_error, mean_std, CombustionMetrics, MaeSummary, Metric, MetricOptions};
use crate::pcd::PcdBasis;
use crate::surrogate::{weight_correlation, SurrogateModel, WeightCorrelation};
use crate::synth::derive_seed;

const N_METRICS: usize = Metric::ALL.len();

/// Mean and population std of one metric over a set of cycles. Cycles where
/// the metric is undefined are skipped; the std needs two defined values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricStats {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_defined: usize,
}

pub fn metric_stats(metrics: &[CombustionMetrics]) -> [MetricStats; N_METRICS] {
    Metric::ALL.map(|m| {
        let v: Vec<f64> = metrics.iter().filter_map(|c| m.value(c)).collect();
        if v.is_empty() {
            return MetricStats::default();
        }
        let (mean, std) = mean_std(&v);
        MetricStats {
            mean: Some(mean),
            std: (v.len() >= 2).then_some(std),
            n_defined: v.len(),
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Monte-Carlo cycles drawn per condition for model statistics
    pub n_samples: usize,
    pub seed: u64,
    pub metric: MetricOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            n_samples: 200,
            seed: 0,
            metric: MetricOptions::default(),
        }
    }
}

/// Metric statistics of the model at `icc`, from sampled cycles.
pub fn model_metric_stats(
    model: &SurrogateModel,
    icc: &IccVector,
    opts: &EvalOptions,
    seed: u64,
) -> Result<([MetricStats; N_METRICS], Vec<CombustionMetrics>)> {
    let cycles = model.sample_cycles(icc, opts.n_samples.max(2), seed)?;
    let m: Vec<CombustionMetrics> = cycles
        .iter()
        .map(|t| CombustionMetrics::compute(t, model.geometry(), &opts.metric))
        .collect();
    Ok((metric_stats(&m), m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionValidation {
    pub condition_id: String,
    pub icc: IccVector,
    pub extrapolating: bool,
    pub measured: [MetricStats; N_METRICS],
    pub predicted: [MetricStats; N_METRICS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub kernel: KernelKind,
    pub conditions: Vec<ConditionValidation>,
    /// MAE of per-condition metric means, `None` when no condition has both sides defined
    pub mean_mae: [Option<MaeSummary>; N_METRICS],
    /// MAE of per-condition metric standard deviations
    pub std_mae: [Option<MaeSummary>; N_METRICS],
}

/// Compares measured per-condition metric statistics against the model's.
pub fn validate_model(model: &SurrogateModel, data: &Dataset, opts: &EvalOptions) -> Result<ValidationReport> {
    let grid = model.basis().grid();
    if !data.grid().same_as(grid) {
        return Err(Error::GridMismatch {
            expected: grid.n_ca(),
            found: data.grid().n_ca(),
        });
    }
    let groups = data.by_condition();
    let conditions: Vec<ConditionValidation> = groups
        .par_iter()
        .enumerate()
        .map(|(c, (id, recs))| {
            let icc = recs[0].icc;
            let measured: Vec<CombustionMetrics> = recs
                .iter()
                .map(|r| CombustionMetrics::compute(&r.trace, model.geometry(), &opts.metric))
                .collect();
            let (predicted, _) = model_metric_stats(model, &icc, opts, derive_seed(opts.seed, c as u64))?;
            Ok(ConditionValidation {
                condition_id: id.to_string(),
                icc,
                extrapolating: model.is_extrapolating(&icc),
                measured: metric_stats(&measured),
                predicted,
            })
        })
        .collect::<Result<_>>()?;
    let summary = |pick: fn(&MetricStats) -> Option<f64>| -> [Option<MaeSummary>; N_METRICS] {
        std::array::from_fn(|k| {
            let p: Vec<Option<f64>> = conditions.iter().map(|c| pick(&c.predicted[k])).collect();
            let m: Vec<Option<f64>> = conditions.iter().map(|c| pick(&c.measured[k])).collect();
            mean_absolute_error(&p, &m).ok()
        })
    };
    Ok(ValidationReport {
        kernel: model.metadata().kernel,
        mean_mae: summary(|s| s.mean),
        std_mae: summary(|s| s.std),
        conditions,
    })
}

/// Which of the two error tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaeTable {
    Mean,
    Std,
}

impl MaeTable {
    fn pick(self, r: &ValidationReport) -> &[Option<MaeSummary>; N_METRICS] {
        match self {
            MaeTable::Mean => &r.mean_mae,
            MaeTable::Std => &r.std_mae,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            MaeTable::Mean => "Mean absolute error in the mean behaviour",
            MaeTable::Std => "Mean absolute error in the standard deviation",
        }
    }
}

/// Ranking score per report: the average over metrics of each kernel's MAE
/// divided by the mean MAE of all kernels for that metric. Lower is better.
pub fn kernel_scores(reports: &[ValidationReport], table: MaeTable) -> Vec<f64> {
    let mut score = vec![0.0; reports.len()];
    let mut used = vec![0usize; reports.len()];
    for k in 0..N_METRICS {
        let vals: Vec<Option<f64>> = reports.iter().map(|r| table.pick(r)[k].map(|s| s.value)).collect();
        if vals.iter().any(Option::is_none) {
            continue;
        }
        let avg = vals.iter().flatten().sum::<f64>() / vals.len() as f64;
        if !(avg > 0.0) {
            continue;
        }
        for (i, v) in vals.iter().enumerate() {
            score[i] += v.unwrap() / avg;
            used[i] += 1;
        }
    }
    score
        .iter()
        .zip(&used)
        .map(|(s, n)| if *n == 0 { f64::NAN } else { s / *n as f64 })
        .collect()
}

/// Index of the report with the lowest mean-behaviour score.
pub fn best_kernel(reports: &[ValidationReport]) -> Option<usize> {
    kernel_scores(reports, MaeTable::Mean)
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
}

/// `metric,<kernel>...` with one row per metric; empty cells where the MAE
/// is undefined.
pub fn mae_table_csv(reports: &[ValidationReport], table: MaeTable) -> String {
    let mut s = String::from("metric");
    for r in reports {
        write!(s, ",{}", r.kernel).unwrap();
    }
    s.push('\n');
    for (k, m) in Metric::ALL.iter().enumerate() {
        s.push_str(m.key());
        for r in reports {
            match table.pick(r)[k] {
                Some(v) => write!(s, ",{}", v.value).unwrap(),
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

/// Aligned text rendering; the lowest value per metric carries a `*`.
pub fn mae_table_text(reports: &[ValidationReport], table: MaeTable) -> String {
    let mut s = format!("{}\n", table.title());
    let w = 14;
    write!(s, "{:<24}", "").unwrap();
    for r in reports {
        write!(s, "{:>w$}", r.kernel.to_string()).unwrap();
    }
    s.push('\n');
    for (k, m) in Metric::ALL.iter().enumerate() {
        write!(s, "{:<24}", m.label()).unwrap();
        let vals: Vec<Option<f64>> = reports.iter().map(|r| table.pick(r)[k].map(|v| v.value)).collect();
        let best = vals.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        for v in &vals {
            let cell = match v {
                Some(x) if reports.len() > 1 && *x == best => format!("{x:.4}*"),
                Some(x) => format!("{x:.4} "),
                None => "- ".to_string(),
            };
            write!(s, "{cell:>w$}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Per-condition detail: measured and predicted mean/std for every metric.
pub fn validation_detail_csv(report: &ValidationReport) -> String {
    let mut s = String::from("condition_id,extrapolating,metric,measured_mean,measured_std,predicted_mean,predicted_std\n");
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in &report.conditions {
        for (k, m) in Metric::ALL.iter().enumerate() {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                c.condition_id,
                c.extrapolating,
                m.key(),
                cell(c.measured[k].mean),
                cell(c.measured[k].std),
                cell(c.predicted[k].mean),
                cell(c.predicted[k].std)
            )
            .unwrap();
        }
    }
    s
}

/// Absolute metric errors of reconstructing each record from its own
/// projection onto the first `n` components, for each `n` in `counts`.
/// Only cycles where the metric is defined on both sides contribute.
pub fn reconstruction_errors(
    basis: &PcdBasis,
    data: &Dataset,
    counts: &[usize],
    opts: &MetricOptions,
) -> Result<Vec<(usize, [Vec<f64>; N_METRICS])>> {
    let geom = *basis.geometry();
    let truth: Vec<CombustionMetrics> = data
        .records()
        .par_iter()
        .map(|r| CombustionMetrics::compute(&r.trace, &geom, opts))
        .collect();
    counts
        .iter()
        .map(|&n| {
            let b = basis.truncated(n)?;
            let rec: Vec<CombustionMetrics> = data
                .records()
                .par_iter()
                .map(|r| {
                    let w = b.project(&r.trace, &r.icc)?;
                    Ok(CombustionMetrics::compute(&b.reconstruct(&w, &r.icc)?, &geom, opts))
                })
                .collect::<Result<_>>()?;
            let errs = Metric::ALL.map(|m| {
                truth
                    .iter()
                    .zip(&rec)
                    .filter_map(|(t, r)| Some((m.value(t)? - m.value(r)?).abs()))
                    .collect()
            });
            Ok((n, errs))
        })
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// index into the condition fields
    pub field: usize,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    pub nominal: IccVector,
}

impl SweepSpec {
    pub fn new(field: &str, lo: f64, hi: f64, steps: usize, nominal: IccVector) -> Result<Self> {
        let field = IccVector::field_index(field).ok_or_else(|| {
            Error::invalid("sweep variable", format!("`{field}` is not one of {}", ICC_FIELDS.join(", ")))
        })?;
        if steps == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid("sweep", "need steps >= 1 and a finite range"));
        }
        Ok(Self {
            field,
            lo,
            hi,
            steps,
            nominal,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lo];
        }
        (0..self.steps)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }

    pub fn points(&self) -> Result<Vec<IccVector>> {
        self.values()
            .into_iter()
            .map(|v| {
                let mut a = self.nominal.to_array();
                a[self.field] = v;
                IccVector::from_array(a)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub icc: IccVector,
    pub extrapolating: bool,
    pub stats: [MetricStats; N_METRICS],
    pub cov_imep: Option<f64>,
}

/// Sampled metric statistics at each condition. Point `i` draws with seed
/// `derive_seed(opts.seed, i)`.
pub fn evaluate_points(model: &SurrogateModel, points: &[IccVector], opts: &EvalOptions) -> Result<Vec<OperatingPoint>> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, icc)| {
            let (stats, cycles) = model_metric_stats(model, icc, opts, derive_seed(opts.seed, i as u64))?;
            let imep: Vec<f64> = cycles.iter().map(|c| c.imep_g).collect();
            Ok(OperatingPoint {
                icc: *icc,
                extrapolating: model.is_extrapolating(icc),
                stats,
                cov_imep: cov_imep(&imep).ok(),
            })
        })
        .collect()
}

fn trim(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Operating point in engineering units, e.g.
/// `Q_tot 2.3 kJ, BR 0.8, SOI 40, p_im 1.55 bar, T_im 45 °C, X_EGR 0.2`.
pub fn describe_icc(icc: &IccVector) -> String {
    format!(
        "Q_tot {} kJ, BR {}, SOI {}, p_im {} bar, T_im {} °C, X_EGR {}",
        trim(icc.q_total / 1e3),
        trim(icc.br),
        trim(icc.soi_di),
        trim(icc.p_im / 1e5),
        trim(icc.t_im - 273.15),
        trim(icc.x_egr)
    )
}

/// Threshold on cov(IMEPg) commonly taken as the stability limit.
pub const COV_IMEP_LIMIT: f64 = 0.05;

/// CSV of operating-point statistics. Two `#` comment lines name the
/// nominal point and the band convention; bands are mean ± 1 standard
/// deviation of the sampled cycles.
pub fn points_csv(points: &[OperatingPoint], nominal: &IccVector) -> String {
    let mut s = format!("# nominal: {}\n# bands: mean +/- 1 sigma over sampled cycles\n", describe_icc(nominal));
    for f in ICC_FIELDS {
        write!(s, "{f},").unwrap();
    }
    s.push_str("extrapolating");
    for m in Metric::ALL {
        let k = m.key();
        write!(s, ",{k}_mean,{k}_std,{k}_lo_1sigma,{k}_hi_1sigma").unwrap();
    }
    s.push_str(",cov_imep,cov_imep_limit,cov_imep_above_limit\n");
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in points {
        for v in p.icc.to_array() {
            write!(s, "{v},").unwrap();
        }
        s.push_str(if p.extrapolating { "true" } else { "false" });
        for st in &p.stats {
            let band = |sign: f64| st.mean.zip(st.std).map(|(m, d)| m + sign * d);
            write!(s, ",{},{},{},{}", cell(st.mean), cell(st.std), cell(band(-1.0)), cell(band(1.0))).unwrap();
        }
        let above = p.cov_imep.map(|c| (c > COV_IMEP_LIMIT).to_string()).unwrap_or_default();
        writeln!(s, ",{},{COV_IMEP_LIMIT},{above}", cell(p.cov_imep)).unwrap();
    }
    s
}

/// Per-condition weight coupling; `None` marks a degenerate condition where
/// some weight channel does not vary.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCoupling {
    pub condition_id: String,
    pub correlation: Option<WeightCorrelation>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// (condition_id, cycle_id, weights)
    pub weights: Vec<(String, usize, Vec<f64>)>,
    pub coupling: Vec<ConditionCoupling>,
}

pub fn decompose(model: &SurrogateModel, data: &Dataset) -> Result<Decomposition> {
    let basis = model.basis();
    if !data.grid().same_as(basis.grid()) {
        return Err(Error::GridMismatch {
            expected: basis.grid().n_ca(),
            found: data.grid().n_ca(),
        });
    }
    let weights: Vec<(String, usize, Vec<f64>)> = data
        .records()
        .par_iter()
        .map(|r| Ok((r.condition_id.clone(), r.cycle_id, basis.project(&r.trace, &r.icc)?)))
        .collect::<Result<_>>()?;
    let mut coupling = Vec::new();
    let mut start = 0;
    while start < weights.len() {
        let id = &weights[start].0;
        let end = start + weights[start..].iter().take_while(|w| &w.0 == id).count();
        let block: Vec<Vec<f64>> = weights[start..end].iter().map(|w| w.2.clone()).collect();
        let (correlation, reason) = match weight_correlation(&block) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        };
        coupling.push(ConditionCoupling {
            condition_id: id.clone(),
            correlation,
            reason,
        });
        start = end;
    }
    Ok(Decomposition { weights, coupling })
}

/// `theta,f1..fn`
pub fn pc_shapes_csv(basis: &PcdBasis) -> String {
    let mut s = String::from("theta");
    for i in 1..=basis.n_pc() {
        write!(s, ",f{i}").unwrap();
    }
    s.push('\n');
    for (a, theta) in basis.grid().angles().enumerate() {
        write!(s, "{theta}").unwrap();
        for f in basis.components() {
            write!(s, ",{}", f[a]).unwrap();
        }
        s.push('\n');
    }
    s
}

/// Raw weights per cycle, plus the per-condition scaled weights
/// (w − μ̃)/σ̃ where the condition is not degenerate.
pub fn weights_csv(d: &Decomposition, n_pc: usize) -> String {
    let mut s = String::from("condition_id,cycle_id");
    for i in 1..=n_pc {
        write!(s, ",w{i}").unwrap();
    }
    for i in 1..=n_pc {
        write!(s, ",w{i}_scaled").unwrap();
    }
    s.push('\n');
    for (id, cyc, w) in &d.weights {
        write!(s, "{id},{cyc}").unwrap();
        for v in w {
            write!(s, ",{v}").unwrap();
        }
        let corr = d.coupling.iter().find(|c| &c.condition_id == id).and_then(|c| c.correlation.as_ref());
        match corr {
            Some(c) => c.scaled(w).iter().for_each(|v| write!(s, ",{v}").unwrap()),
            None => (0..n_pc).for_each(|_| s.push(',')),
        }
        s.push('\n');
    }
    s
}

/// `condition_id,status,det_r,r_a_b...` over the upper triangle.
pub fn correlation_csv(d: &Decomposition, n_pc: usize) -> String {
    let mut s = String::from("condition_id,status,det_r");
    for a in 1..=n_pc {
        for b in a + 1..=n_pc {
            write!(s, ",r_{a}_{b}").unwrap();
        }
    }
    s.push('\n');
    for c in &d.coupling {
        match &c.correlation {
            Some(r) => {
                write!(s, "{},ok,{}", c.condition_id, r.det).unwrap();
                for a in 0..n_pc {
                    for b in a + 1..n_pc {
                        write!(s, ",{}", r.r[(a, b)]).unwrap();
                    }
                }
            }
            None => {
                write!(s, "{},degenerate,", c.condition_id).unwrap();
                for _ in 0..n_pc * (n_pc - 1) / 2 {
                    s.push(',');
                }
            }
        }
        s.push('\n');
    }
    s
}

/// Text report with one correlation matrix per condition.
pub fn correlation_report(d: &Decomposition) -> String {
    let mut s = String::new();
    for c in &d.coupling {
        writeln!(s, "condition {}", c.condition_id).unwrap();
        match (&c.correlation, &c.reason) {
            (Some(r), _) => s.push_str(&crate::surrogate::format_correlation(&r.r, r.det)),
            (None, reason) => writeln!(s, "degenerate: {}", reason.as_deref().unwrap_or("")).unwrap(),
        }
        s.push('\n');
    }
    s
}
