#![allow(dead_code)]

pub mod oracle;

use cylpress::dataset::{CycleRecord, Dataset};
use cylpress::engine::{IccVector, PressureTrace};
use cylpress::gpr::{kernel_matrix, Hyperparams, KernelFamily, KernelKind};
use cylpress::pcd::fit_pcd;
use cylpress::synth::{synth_dataset, ConditionRanges, GeneratorConfig, JitterSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn clean_config(n_conditions: usize, n_cyc: usize, seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        n_conditions,
        n_cyc,
        jitter: JitterSpec::none(),
        seed,
        ..GeneratorConfig::default()
    }
}

/// Pressure data whose component weights are a draw from a Matérn-3/2 GP
/// over the conditions.
///
/// Component shapes come from a small generator dataset. Each weight field
/// is an independent GP sample with per-input lengthscales (two inputs
/// carry nearly all the variation), scaled to 0.3 of the generator's weight
/// spread, plus i.i.d. cycle noise of 2% of that spread.
pub fn matern_fixture(n_conditions: usize, n_cyc: usize, seed: u64) -> Dataset {
    let base = synth_dataset(&clean_config(30, 2, 2)).unwrap();
    let geom = GeneratorConfig::default().engine.geom;
    let n_pc = 4;
    let basis = fit_pcd(&base, &geom, 1.32, n_pc).unwrap();
    let weights: Vec<Vec<f64>> = base.records().iter().map(|r| basis.project(&r.trace, &r.icc).unwrap()).collect();
    let n_base = weights.len() as f64;
    let means: Vec<f64> = (0..n_pc).map(|i| weights.iter().map(|w| w[i]).sum::<f64>() / n_base).collect();
    let spread: Vec<f64> = basis.eigenvalues().iter().map(|e| (e / n_base).sqrt()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = ConditionRanges::default();
    let iccs: Vec<IccVector> = (0..n_conditions)
        .map(|_| {
            IccVector::from_array(std::array::from_fn(|k| {
                let (lo, hi) = ranges.0[k];
                lo + rng.gen::<f64>() * (hi - lo)
            }))
            .unwrap()
        })
        .collect();
    // unit box mapped to roughly unit standard deviation
    let xs: Vec<Vec<f64>> = iccs
        .iter()
        .map(|icc| {
            icc.to_array()
                .iter()
                .zip(&ranges.0)
                .map(|(v, (lo, hi))| ((v - lo) / (hi - lo) - 0.5) * 12f64.sqrt())
                .collect()
        })
        .collect();
    let kind = KernelKind::new(KernelFamily::Matern32, true);
    let h = Hyperparams {
        signal_std: 1.0,
        lengthscales: vec![1.0, 40.0, 1.5, 40.0, 40.0, 40.0],
        alpha: 1.0,
        noise_var: 1e-12,
    };
    let k = kernel_matrix(&kind, &h, &xs, &xs).unwrap() + DMatrix::identity(n_conditions, n_conditions) * 1e-10;
    let l = k.cholesky().unwrap().l();
    let fields: Vec<DVector<f64>> = (0..n_pc)
        .map(|_| &l * DVector::from_iterator(n_conditions, (0..n_conditions).map(|_| rng.sample::<f64, _>(StandardNormal))))
        .collect();
    let mut records = Vec::new();
    for (c, icc) in iccs.iter().enumerate() {
        for cyc in 0..n_cyc {
            let w: Vec<f64> = (0..n_pc)
                .map(|i| means[i] + 0.3 * spread[i] * (fields[i][c] + 0.02 * rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let t = basis.reconstruct(&w, icc).unwrap();
            records.push(CycleRecord {
                condition_id: format!("g{c:03}"),
                cycle_id: cyc,
                icc: *icc,
                trace: PressureTrace::new(*t.grid(), t.into_samples()).unwrap(),
            });
        }
    }
    Dataset::new(*base.grid(), records, false).unwrap()
}
