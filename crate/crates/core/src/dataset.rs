//! Per-cycle pressure matrices, condition tables and the train/validation
//! split.
//!
//! Two CSV layouts are supported, both UTF-8 with LF line endings:
//!
//! * `conditions.csv`: `condition_id,q_total_J,br,soi_di_cad_atdc,p_im_pa,t_im_k,x_egr`
//! * `pressure.csv`: `condition_id,cycle_id,p_pa@-180.0,...,p_pa@180.0`, one
//!   row per cycle, the column names carrying the grid angle.
//!
//! Floats are written in shortest round-trip form, so a save/load cycle is
//! lossless.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{CrankGrid, IccVector, PressureTrace, ICC_FIELDS};
use crate::error::{Error, Result};
use crate::io_util::{angle_decimals, write_atomic};

pub const CONDITIONS_HEADER: [&str; 7] = [
    "condition_id",
    "q_total_J",
    "br",
    "soi_di_cad_atdc",
    "p_im_pa",
    "t_im_k",
    "x_egr",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub condition_id: String,
    pub cycle_id: usize,
    pub icc: IccVector,
    pub trace: PressureTrace,
}

/// Ordered (condition_id, conditions) table.
pub type ConditionTable = Vec<(String, IccVector)>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    grid: CrankGrid,
    records: Vec<CycleRecord>,
    /// condition ids in first-appearance order
    conditions: Vec<String>,
    n_cyc: Option<usize>,
}

impl Dataset {
    /// Builds a dataset, requiring every condition to hold the same number
    /// of cycles unless `allow_ragged` is set.
    pub fn new(grid: CrankGrid, records: Vec<CycleRecord>, allow_ragged: bool) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut iccs: HashMap<&str, &IccVector> = HashMap::new();
        let mut conditions = Vec::new();
        for r in &records {
            if !r.trace.grid().same_as(&grid) {
                return Err(Error::GridMismatch {
                    expected: grid.n_ca(),
                    found: r.trace.len(),
                });
            }
            if !seen.insert((r.condition_id.as_str(), r.cycle_id)) {
                return Err(Error::invalid(
                    "dataset",
                    format!("duplicate record ({}, {})", r.condition_id, r.cycle_id),
                ));
            }
            match iccs.get(r.condition_id.as_str()) {
                Some(icc) if **icc != r.icc => {
                    return Err(Error::invalid(
                        "dataset",
                        format!("condition {} carries inconsistent conditions", r.condition_id),
                    ))
                }
                Some(_) => {}
                None => {
                    iccs.insert(&r.condition_id, &r.icc);
                    conditions.push(r.condition_id.clone());
                }
            }
            *counts.entry(&r.condition_id).or_default() += 1;
        }
        let distinct: HashSet<usize> = counts.values().copied().collect();
        let n_cyc = match distinct.len() {
            0 => None,
            1 => distinct.into_iter().next(),
            _ if allow_ragged => None,
            _ => {
                return Err(Error::invalid(
                    "dataset",
                    "conditions hold different cycle counts (pass allow_ragged to accept)",
                ))
            }
        };
        Ok(Self {
            grid,
            records,
            conditions,
            n_cyc,
        })
    }

    pub fn grid(&self) -> &CrankGrid {
        &self.grid
    }

    pub fn records(&self) -> &[CycleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_conditions(&self) -> usize {
        self.conditions.len()
    }

    /// Cycles per condition; `None` for ragged or empty datasets.
    pub fn n_cyc(&self) -> Option<usize> {
        self.n_cyc
    }

    pub fn condition_ids(&self) -> &[String] {
        &self.conditions
    }

    /// Condition table in first-appearance order.
    pub fn condition_table(&self) -> ConditionTable {
        self.conditions
            .iter()
            .map(|id| {
                let icc = self
                    .records
                    .iter()
                    .find(|r| &r.condition_id == id)
                    .map(|r| r.icc)
                    .expect("every listed condition has a record");
                (id.clone(), icc)
            })
            .collect()
    }

    /// Records grouped per condition, in condition order.
    pub fn by_condition(&self) -> Vec<(&str, Vec<&CycleRecord>)> {
        let mut groups: BTreeMap<usize, (&str, Vec<&CycleRecord>)> = BTreeMap::new();
        let index: HashMap<&str, usize> = self
            .conditions
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        for r in &self.records {
            let i = index[r.condition_id.as_str()];
            groups
                .entry(i)
                .or_insert_with(|| (r.condition_id.as_str(), Vec::new()))
                .1
                .push(r);
        }
        groups.into_values().collect()
    }

    /// Sub-dataset holding only the listed conditions.
    pub fn subset(&self, ids: &[String]) -> Result<Self> {
        let keep: HashSet<&str> = ids.iter().map(String::as_str).collect();
        let records = self
            .records
            .iter()
            .filter(|r| keep.contains(r.condition_id.as_str()))
            .cloned()
            .collect();
        Dataset::new(self.grid, records, self.n_cyc.is_none())
    }
}

fn load_err(path: &Path, row: usize, column: &str, reason: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        reason: reason.into(),
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    load_err(path, row, "-", e.to_string())
}

fn parse_field(path: &Path, row: usize, column: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|_| load_err(path, row, column, format!("cannot parse `{raw}` as a number")))?;
    if !v.is_finite() {
        return Err(load_err(path, row, column, "non-finite value"));
    }
    Ok(v)
}

/// Reads a conditions table. Row numbers in errors are file line numbers.
pub fn load_conditions(path: &Path) -> Result<ConditionTable> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != CONDITIONS_HEADER {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!(
                "header mismatch: expected `{}`, found `{}`",
                CONDITIONS_HEADER.join(","),
                found.join(",")
            ),
        });
    }
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(load_err(path, row, "condition_id", "empty identifier"));
        }
        if !ids.insert(id.clone()) {
            return Err(load_err(path, row, "condition_id", format!("duplicate condition_id `{id}`")));
        }
        let mut vals = [0.0; 6];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = parse_field(path, row, CONDITIONS_HEADER[k + 1], &rec[k + 1])?;
        }
        let icc = IccVector::from_array(vals).map_err(|e| {
            let column = match &e {
                Error::Invalid { reason, .. } => ICC_FIELDS
                    .iter()
                    .position(|f| reason.starts_with(f))
                    .map(|k| CONDITIONS_HEADER[k + 1])
                    .unwrap_or("-"),
                _ => "-",
            };
            let reason = match e {
                Error::Invalid { reason, .. } => reason,
                other => other.to_string(),
            };
            load_err(path, row, column, reason)
        })?;
        out.push((id, icc));
    }
    Ok(out)
}

pub fn write_conditions(path: &Path, table: &[(String, IccVector)]) -> Result<()> {
    let mut s = CONDITIONS_HEADER.join(",");
    s.push('\n');
    for (id, icc) in table {
        let a = icc.to_array();
        writeln!(s, "{id},{},{},{},{},{},{}", a[0], a[1], a[2], a[3], a[4], a[5]).unwrap();
    }
    write_atomic(path, s.as_bytes())
}

/// Column label of a pressure sample at `theta`.
pub fn pressure_column(theta: f64, decimals: usize) -> String {
    format!("p_pa@{theta:.decimals$}")
}

/// Reads a pressure matrix and joins it with `conditions`.
pub fn load_pressure_matrix(
    path: &Path,
    grid: &CrankGrid,
    conditions: &[(String, IccVector)],
    allow_ragged: bool,
) -> Result<Dataset> {
    let icc_of: HashMap<&str, &IccVector> = conditions.iter().map(|(id, icc)| (id.as_str(), icc)).collect();
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let expected = 2 + grid.n_ca();
    if header.len() != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("column count: expected {expected}, found {}", header.len()),
        });
    }
    if &header[0] != "condition_id" || &header[1] != "cycle_id" {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "header must start with `condition_id,cycle_id`".into(),
        });
    }
    for (k, name) in header.iter().skip(2).enumerate() {
        let theta = name
            .strip_prefix("p_pa@")
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| load_err(path, 1, name, "expected a `p_pa@<angle>` column"))?;
        if (theta - grid.angle(k)).abs() > 1e-3 * grid.resolution() {
            return Err(load_err(
                path,
                1,
                name,
                format!("column angle {theta} does not match grid angle {}", grid.angle(k)),
            ));
        }
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != expected {
            return Err(load_err(
                path,
                row,
                "-",
                format!("column count: expected {expected}, found {}", rec.len()),
            ));
        }
        let condition_id = rec[0].to_string();
        let icc = **icc_of
            .get(condition_id.as_str())
            .ok_or_else(|| load_err(path, row, "condition_id", format!("unknown condition_id `{condition_id}`")))?;
        let cycle_id: usize = rec[1]
            .parse()
            .map_err(|_| load_err(path, row, "cycle_id", format!("cannot parse `{}` as an index", &rec[1])))?;
        let mut samples = Vec::with_capacity(grid.n_ca());
        for k in 0..grid.n_ca() {
            let v = parse_field(path, row, &header[k + 2], &rec[k + 2])?;
            if v <= 0.0 {
                return Err(load_err(path, row, &header[k + 2], format!("non-positive pressure {v}")));
            }
            samples.push(v);
        }
        records.push(CycleRecord {
            condition_id,
            cycle_id,
            icc,
            trace: PressureTrace::new(*grid, samples)?,
        });
    }
    Dataset::new(*grid, records, allow_ragged)
}

pub fn write_pressure_matrix(path: &Path, ds: &Dataset) -> Result<()> {
    let grid = ds.grid();
    let decimals = angle_decimals(grid.resolution());
    let mut s = String::with_capacity(ds.len() * grid.n_ca() * 20);
    s.push_str("condition_id,cycle_id");
    for theta in grid.angles() {
        s.push(',');
        s.push_str(&pressure_column(theta, decimals));
    }
    s.push('\n');
    for r in ds.records() {
        write!(s, "{},{}", r.condition_id, r.cycle_id).unwrap();
        for v in r.trace.samples() {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// Loads a conditions/pressure file pair into a dataset.
pub fn load_dataset(conditions: &Path, pressure: &Path, grid: &CrankGrid, allow_ragged: bool) -> Result<Dataset> {
    let table = load_conditions(conditions)?;
    load_pressure_matrix(pressure, grid, &table, allow_ragged)
}

/// Writes the conditions/pressure file pair for a dataset.
pub fn write_dataset(conditions: &Path, pressure: &Path, ds: &Dataset) -> Result<()> {
    write_conditions(conditions, &ds.condition_table())?;
    write_pressure_matrix(pressure, ds)
}

/// Randomly splits by condition: every cycle of a condition lands on the
/// same side. Deterministic for a fixed seed.
pub fn split_dataset(ds: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = ds.n_conditions();
    if n_train == 0 || n_train >= n {
        return Err(Error::invalid(
            "split",
            format!("n_train must lie in 1..{n}, got {n_train}"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_idx = order[..n_train].to_vec();
    let mut val_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    let ids = ds.condition_ids();
    let pick = |idx: &[usize]| idx.iter().map(|&i| ids[i].clone()).collect::<Vec<_>>();
    Ok((ds.subset(&pick(&train_idx))?, ds.subset(&pick(&val_idx))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tiny_grid() -> CrankGrid {
        CrankGrid::new(-1.0, 1.0, 0.5).unwrap()
    }

    fn toy_dataset(n_cond: usize, n_cyc: usize) -> Dataset {
        let grid = tiny_grid();
        let mut recs = Vec::new();
        for c in 0..n_cond {
            let icc = IccVector::new(2000.0 + c as f64, 0.8, 40.0, 1.5e5, 318.0, 0.2).unwrap();
            for k in 0..n_cyc {
                let samples = (0..grid.n_ca())
                    .map(|i| 1e5 + (c * 1000 + k * 10 + i) as f64 * 1.000001)
                    .collect();
                recs.push(CycleRecord {
                    condition_id: format!("c{c:02}"),
                    cycle_id: k,
                    icc,
                    trace: PressureTrace::new(grid, samples).unwrap(),
                });
            }
        }
        Dataset::new(grid, recs, false).unwrap()
    }

    fn write_file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn loads_nominal_condition_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            &dir,
            "c.csv",
            "condition_id,q_total_J,br,soi_di_cad_atdc,p_im_pa,t_im_k,x_egr\nc01,2300,0.8,40,155000,318.15,0.2\n",
        );
        let t = load_conditions(&p).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].0, "c01");
        assert_eq!(t[0].1, IccVector::new(2300.0, 0.8, 40.0, 155000.0, 318.15, 0.2).unwrap());
    }

    #[test]
    fn rejects_egr_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            &dir,
            "c.csv",
            "condition_id,q_total_J,br,soi_di_cad_atdc,p_im_pa,t_im_k,x_egr\nc01,2300,0.8,40,155000,318.15,1.2\n",
        );
        let err = load_conditions(&p).unwrap_err().to_string();
        assert!(err.contains("x_egr out of [0,1)"), "{err}");
        assert!(err.contains("row 2"), "{err}");
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(&dir, "c.csv", "condition_id,q_total_J,br,soi_di_cad_atdc,p_im_pa,t_im_k,x_egr\n");
        assert!(load_conditions(&p).unwrap().is_empty());
    }

    #[test]
    fn rejects_duplicate_and_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let h = "condition_id,q_total_J,br,soi_di_cad_atdc,p_im_pa,t_im_k,x_egr\n";
        let dup = write_file(&dir, "d.csv", &format!("{h}a,1,0.5,1,1,1,0\na,1,0.5,1,1,1,0\n"));
        assert!(load_conditions(&dup).unwrap_err().to_string().contains("duplicate"));
        let nan = write_file(&dir, "n.csv", &format!("{h}a,NaN,0.5,1,1,1,0\n"));
        assert!(load_conditions(&nan).unwrap_err().to_string().contains("q_total_J"));
        let bad = write_file(&dir, "b.csv", "id,q\n");
        assert!(load_conditions(&bad).is_err());
    }

    #[test]
    fn round_trip_is_lossless() {
        let ds = toy_dataset(2, 3);
        assert_eq!(ds.len(), 6);
        let dir = tempfile::tempdir().unwrap();
        let (c, p) = (dir.path().join("c.csv"), dir.path().join("p.csv"));
        write_dataset(&c, &p, &ds).unwrap();
        let back = load_dataset(&c, &p, ds.grid(), false).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn column_count_error_reports_both() {
        let ds = toy_dataset(1, 1);
        let dir = tempfile::tempdir().unwrap();
        let (c, p) = (dir.path().join("c.csv"), dir.path().join("p.csv"));
        write_dataset(&c, &p, &ds).unwrap();
        let wider = CrankGrid::new(-1.0, 1.5, 0.5).unwrap();
        let err = load_dataset(&c, &p, &wider, false).unwrap_err().to_string();
        assert!(err.contains("expected 8, found 7"), "{err}");
    }

    #[test]
    fn unknown_condition_and_bad_pressure() {
        let dir = tempfile::tempdir().unwrap();
        let c = write_file(
            &dir,
            "c.csv",
            "condition_id,q_total_J,br,soi_di_cad_atdc,p_im_pa,t_im_k,x_egr\na,1,0.5,1,1,1,0\n",
        );
        let head = "condition_id,cycle_id,p_pa@-1.0,p_pa@-0.5,p_pa@0.0,p_pa@0.5,p_pa@1.0\n";
        let p1 = write_file(&dir, "p1.csv", &format!("{head}b,0,1,1,1,1,1\n"));
        assert!(load_dataset(&c, &p1, &tiny_grid(), false)
            .unwrap_err()
            .to_string()
            .contains("unknown condition_id"));
        let p2 = write_file(&dir, "p2.csv", &format!("{head}a,0,1,1,-3,1,1\n"));
        let err = load_dataset(&c, &p2, &tiny_grid(), false).unwrap_err().to_string();
        assert!(err.contains("non-positive") && err.contains("p_pa@0.0"), "{err}");
    }

    #[test]
    fn ragged_requires_override() {
        let ds = toy_dataset(2, 3);
        let mut recs = ds.records().to_vec();
        recs.pop();
        assert!(Dataset::new(*ds.grid(), recs.clone(), false).is_err());
        let ragged = Dataset::new(*ds.grid(), recs, true).unwrap();
        assert_eq!(ragged.n_cyc(), None);
    }

    #[test]
    fn split_partitions_by_condition() {
        let ds = toy_dataset(10, 2);
        let (tr, va) = split_dataset(&ds, 7, 42).unwrap();
        assert_eq!(tr.n_conditions(), 7);
        assert_eq!(va.n_conditions(), 3);
        let a: HashSet<_> = tr.condition_ids().iter().collect();
        let b: HashSet<_> = va.condition_ids().iter().collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len() + b.len(), 10);
        assert_eq!(tr.len(), 14);
        let (tr2, _) = split_dataset(&ds, 7, 42).unwrap();
        assert_eq!(tr, tr2);
        assert!(split_dataset(&ds, 10, 0).is_err());
        assert!(split_dataset(&ds, 0, 0).is_err());
    }
}
