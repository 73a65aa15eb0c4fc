use std::fmt::Write as _;
use std::io::Write as _;

use anyhow::Context;
use cylpress::dataset::{load_dataset, write_dataset, Dataset};
use cylpress::engine::{CrankGrid, IccVector, ICC_FIELDS};
use cylpress::gpr::KernelKind;
use cylpress::io_util::write_atomic;
use cylpress::study::{
    best_kernel, correlation_csv, correlation_report, decompose as decompose_data, describe_icc, evaluate_points,
    kernel_scores, mae_table_csv, mae_table_text, pc_shapes_csv, points_csv, validate_model, validation_detail_csv,
    weights_csv, MaeTable, SweepSpec, ValidationReport,
};
use cylpress::surrogate::{train_surrogate, SurrogateModel};
use cylpress::synth::GeneratorConfig;

use crate::settings::{usage, Settings};

fn say(s: &Settings, msg: impl AsRef<str>) {
    if !s.quiet {
        // a closed pipe (e.g. `| head`) is not worth failing over
        let _ = writeln!(std::io::stdout().lock(), "{}", msg.as_ref());
    }
}

fn write(s: &Settings, name: &str, contents: &str) -> anyhow::Result<()> {
    std::fs::create_dir_all(&s.out_dir).with_context(|| format!("creating {}", s.out_dir.display()))?;
    let path = s.output(name);
    write_atomic(&path, contents.as_bytes())?;
    say(s, format!("wrote {}", path.display()));
    Ok(())
}

fn load_data(s: &Settings, cond_key: &str, press_key: &str, grid: &CrankGrid) -> anyhow::Result<Dataset> {
    let cond = s.input(cond_key, "conditions.csv")?;
    let press = s.input(press_key, "pressure.csv")?;
    let ragged = s.kv.get_bool("allow_ragged")?.unwrap_or(false);
    Ok(load_dataset(&cond, &press, grid, ragged)?)
}

fn load_model(s: &Settings) -> anyhow::Result<SurrogateModel> {
    let path = s.input("model", "model.txt")?;
    Ok(SurrogateModel::load(&path)?)
}

pub fn generate(s: &Settings) -> anyhow::Result<()> {
    let mut cfg = GeneratorConfig::default();
    cfg.apply(&s.kv).map_err(|e| usage(e.to_string()))?;
    let ds = cylpress::synth::synth_dataset(&cfg)?;
    std::fs::create_dir_all(&s.out_dir).with_context(|| format!("creating {}", s.out_dir.display()))?;
    let (cond, press) = (s.output("conditions.csv"), s.output("pressure.csv"));
    write_dataset(&cond, &press, &ds)?;

    let table = ds.condition_table();
    let nominal = IccVector::nominal().to_array();
    let mut out = format!(
        "{} conditions x {} cycles on {} crank angles\n",
        ds.n_conditions(),
        cfg.n_cyc,
        ds.grid().n_ca()
    );
    writeln!(out, "{:<10} {:>12} {:>28} {:>28}", "", "nominal", "configured range", "generated range").unwrap();
    for (k, f) in ICC_FIELDS.iter().enumerate() {
        let (lo, hi) = cfg.ranges.0[k];
        let vals = table.iter().map(|(_, icc)| icc.to_array()[k]);
        let (gmin, gmax) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        writeln!(
            out,
            "{f:<10} {:>12} {:>28} {:>28}",
            format!("{}", nominal[k]),
            format!("{lo} to {hi}"),
            format!("{gmin:.4} to {gmax:.4}")
        )
        .unwrap();
    }
    say(s, out);
    say(s, format!("wrote {}\nwrote {}", cond.display(), press.display()));
    Ok(())
}

pub fn train(s: &Settings) -> anyhow::Result<()> {
    let cfg = s.surrogate()?;
    let ds = load_data(s, "conditions", "pressures", &s.grid()?)?;
    let model = train_surrogate(&ds, &cfg).context("training failed")?;
    let path = s
        .kv
        .get_str("model")
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| s.output("model.txt"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    model.save(&path)?;
    say(s, format!("wrote {}", path.display()));
    let report = model.report();
    write(s, "train_report.txt", &report)?;
    say(s, report);
    Ok(())
}

pub fn validate(s: &Settings, all_kernels: bool) -> anyhow::Result<()> {
    let eval = s.eval()?;
    let reports: Vec<ValidationReport> = if all_kernels {
        let cfg = s.surrogate()?;
        let train = load_data(s, "train_conditions", "train_pressures", &s.grid()?)?;
        let val = load_data(s, "conditions", "pressures", &s.grid()?)?;
        let mut out = Vec::new();
        for kind in KernelKind::all() {
            say(s, format!("training {kind}"));
            let model = train_surrogate(&train, &cylpress::surrogate::SurrogateConfig { kernel: kind, ..cfg.clone() })
                .with_context(|| format!("training {kind}"))?;
            out.push(validate_model(&model, &val, &eval)?);
        }
        out
    } else {
        let model = load_model(s)?;
        let val = load_data(s, "conditions", "pressures", model.basis().grid())?;
        vec![validate_model(&model, &val, &eval)?]
    };

    write(s, "validation_mean_mae.csv", &mae_table_csv(&reports, MaeTable::Mean))?;
    write(s, "validation_std_mae.csv", &mae_table_csv(&reports, MaeTable::Std))?;
    for r in &reports {
        let name = if reports.len() == 1 {
            "validation_detail.csv".to_string()
        } else {
            format!("validation_detail_{}.csv", r.kernel)
        };
        write(s, &name, &validation_detail_csv(r))?;
    }
    let mut text = mae_table_text(&reports, MaeTable::Mean);
    text.push('\n');
    text.push_str(&mae_table_text(&reports, MaeTable::Std));
    if reports.len() > 1 {
        let scores = kernel_scores(&reports, MaeTable::Mean);
        text.push_str("\nrelative mean-behaviour score (lower is better)\n");
        for (r, sc) in reports.iter().zip(&scores) {
            writeln!(text, "{:<14} {sc:.4}", r.kernel.to_string()).unwrap();
        }
        if let Some(b) = best_kernel(&reports) {
            writeln!(text, "best kernel: {} ({})", reports[b].kernel, reports[b].kernel.label()).unwrap();
        }
    }
    let extrapolating = reports[0].conditions.iter().filter(|c| c.extrapolating).count();
    if extrapolating > 0 {
        writeln!(text, "\n{extrapolating} validation conditions lie outside the training range").unwrap();
    }
    write(s, "validation.txt", &text)?;
    say(s, text);
    Ok(())
}

pub fn predict(s: &Settings) -> anyhow::Result<()> {
    let model = load_model(s)?;
    let icc = s.icc()?;
    let pred = model.predict_pressure(&icc)?;
    let mut trace = String::from("theta,mean_pa,std_pa,variance_pa2\n");
    for (a, theta) in model.basis().grid().angles().enumerate() {
        let v = pred.variance[a];
        writeln!(trace, "{theta},{},{},{v}", pred.mean.samples()[a], v.sqrt()).unwrap();
    }
    write(s, "prediction_trace.csv", &trace)?;
    let pts = evaluate_points(&model, &[icc], &s.eval()?)?;
    let csv = points_csv(&pts, &icc);
    write(s, "predict.csv", &csv)?;
    if pts[0].extrapolating {
        say(s, "warning: condition lies outside the training range");
    }
    say(s, format!("condition: {}", describe_icc(&icc)));
    Ok(())
}

pub fn sweep(s: &Settings) -> anyhow::Result<()> {
    let model = load_model(s)?;
    let variable = s
        .kv
        .get_str("variable")
        .ok_or_else(|| usage(format!("sweep needs --variable (one of {})", ICC_FIELDS.join(", "))))?
        .to_string();
    let field = IccVector::field_index(&variable)
        .ok_or_else(|| usage(format!("`{variable}` is not one of {}", ICC_FIELDS.join(", "))))?;
    let bounds = model.training_bounds()[field];
    let nominal = s.icc()?;
    let spec = SweepSpec::new(
        &variable,
        s.get_or("from", bounds.0)?,
        s.get_or("to", bounds.1)?,
        s.get_or("steps", 11)?,
        nominal,
    )
    .map_err(|e| usage(e.to_string()))?;
    let points = spec.points().map_err(|e| usage(e.to_string()))?;
    let rows = evaluate_points(&model, &points, &s.eval()?)?;
    let n_extra = rows.iter().filter(|r| r.extrapolating).count();
    write(s, &format!("sweep_{variable}.csv"), &points_csv(&rows, &nominal))?;
    if n_extra > 0 {
        say(s, format!("warning: {n_extra} sweep points lie outside the training range"));
    }
    Ok(())
}

pub fn decompose(s: &Settings) -> anyhow::Result<()> {
    let model = load_model(s)?;
    let ds = load_data(s, "conditions", "pressures", model.basis().grid())?;
    let d = decompose_data(&model, &ds)?;
    let n = model.n_pc();
    write(s, "pc_shapes.csv", &pc_shapes_csv(model.basis()))?;
    write(s, "weights.csv", &weights_csv(&d, n))?;
    write(s, "correlation.csv", &correlation_csv(&d, n))?;
    write(s, "correlation_report.txt", &correlation_report(&d))?;
    let degenerate = d.coupling.iter().filter(|c| c.correlation.is_none()).count();
    say(s, format!("{} conditions, {degenerate} degenerate", d.coupling.len()));
    Ok(())
}

