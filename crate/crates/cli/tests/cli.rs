use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cylpress"))
        .arg("--out-dir")
        .arg(dir)
        .arg("--quiet")
        .args(args)
        .output()
        .expect("spawn cylpress")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn trained(n_conditions: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--seed", "5", "generate", "--n-conditions", n_conditions, "--n-cyc", "4"]);
    ok(dir.path(), &["train", "--n-pc", "3", "--restarts", "2"]);
    dir
}

#[test]
fn generate_writes_one_row_per_cycle() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--n-conditions", "2", "--n-cyc", "3"]);
    assert_eq!(read(dir.path(), "pressure.csv").lines().count(), 1 + 6);
    assert_eq!(read(dir.path(), "conditions.csv").lines().count(), 1 + 2);
}

#[test]
fn generate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(d.path(), &["--seed", "9", "generate", "--n-conditions", "3", "--n-cyc", "2"]);
    }
    for f in ["conditions.csv", "pressure.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    ok(c.path(), &["--seed", "10", "generate", "--n-conditions", "3", "--n-cyc", "2"]);
    assert_ne!(read(a.path(), "pressure.csv"), read(c.path(), "pressure.csv"));
}

#[test]
fn config_file_and_set_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.cfg");
    std::fs::write(&cfg, "n_conditions = 4\nn_cyc = 2\n").unwrap();
    ok(dir.path(), &["--config", cfg.to_str().unwrap(), "--set", "n_cyc=3", "generate"]);
    assert_eq!(read(dir.path(), "pressure.csv").lines().count(), 1 + 12);
}

#[test]
fn usage_errors_exit_one() {
    let dir = trained("6");
    let p = dir.path();
    for args in [
        &["train", "--n-pc", "0"][..],
        &["train", "--kernel", "cubic"],
        &["sweep"],
        &["sweep", "--variable", "rpm"],
        &["predict", "--samples", "1"],
        &["frobnicate"],
        &["generate", "--set", "oops"],
    ] {
        assert_eq!(run(p, args).status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn data_errors_exit_two() {
    let dir = trained("6");
    let p = dir.path();
    std::fs::write(p.join("bad.txt"), "not a model\n").unwrap();
    let bad = p.join("bad.txt");
    assert_eq!(run(p, &["predict", "--model", bad.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(p.join("short.csv"), "condition_id,cycle,1,2\nc001,1,3,4\n").unwrap();
    let short = p.join("short.csv");
    assert_eq!(run(p, &["validate", "--pressures", short.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn ard_flag_gives_per_field_lengthscales() {
    let dir = trained("8");
    ok(dir.path(), &["train", "--n-pc", "2", "--restarts", "1", "--kernel", "se", "--ard"]);
    let model = read(dir.path(), "model.txt");
    let ls = model.lines().find(|l| l.starts_with("lengthscales,")).expect("lengthscales line");
    assert_eq!(ls.split(',').count() - 1, 6, "{ls}");
    assert!(model.lines().any(|l| l == "kernel,se+ard"));
}

#[test]
fn validate_single_and_all_kernels() {
    let dir = trained("8");
    let p = dir.path();
    ok(p, &["validate", "--samples", "8"]);
    let header = read(p, "validation_mean_mae.csv").lines().next().unwrap().to_string();
    assert_eq!(header, "metric,matern32");

    ok(
        p,
        &[
            "validate",
            "--all-kernels",
            "--train-conditions",
            p.join("conditions.csv").to_str().unwrap(),
            "--train-pressures",
            p.join("pressure.csv").to_str().unwrap(),
            "--n-pc",
            "2",
            "--restarts",
            "1",
            "--samples",
            "4",
        ],
    );
    for f in ["validation_mean_mae.csv", "validation_std_mae.csv"] {
        let text = read(p, f);
        let cols: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        assert_eq!(cols.len(), 9, "{f}: {cols:?}");
        assert_eq!(text.lines().count(), 7, "{f}");
    }
    assert!(read(p, "validation.txt").contains("best kernel:"));
}

#[test]
fn single_point_sweep_matches_predict() {
    let dir = trained("8");
    let p = dir.path();
    let icc = ["--q-total", "2300", "--soi-di", "44"];
    let mut a = vec!["predict", "--samples", "16"];
    a.extend(icc);
    ok(p, &a);
    let mut b = vec!["sweep", "--variable", "br", "--from", "0.8", "--to", "0.8", "--steps", "1", "--samples", "16"];
    b.extend(icc);
    ok(p, &b);
    assert_eq!(read(p, "predict.csv"), read(p, "sweep_br.csv"));
    let trace = read(p, "prediction_trace.csv");
    assert_eq!(trace.lines().next(), Some("theta,mean_pa,std_pa,variance_pa2"));
    assert_eq!(trace.lines().count(), 1 + 1801);
}

#[test]
fn sweep_defaults_to_training_range() {
    let dir = trained("8");
    ok(dir.path(), &["sweep", "--variable", "x_egr", "--steps", "3", "--samples", "4"]);
    let rows: Vec<Vec<String>> = read(dir.path(), "sweep_x_egr.csv")
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    let conds = read(dir.path(), "conditions.csv");
    let egr: Vec<f64> = conds.lines().skip(1).map(|l| l.split(',').nth(6).unwrap().parse().unwrap()).collect();
    let lo = egr.iter().cloned().fold(f64::INFINITY, f64::min);
    let first: f64 = rows[0][5].parse().unwrap();
    assert!((first - lo).abs() < 1e-12, "{first} vs {lo}");
    assert!(rows.iter().all(|r| r[6] == "true" || r[6] == "false"));
}

#[test]
fn decompose_writes_all_outputs() {
    let dir = trained("6");
    ok(dir.path(), &["decompose"]);
    for f in ["pc_shapes.csv", "weights.csv", "correlation.csv", "correlation_report.txt"] {
        assert!(!read(dir.path(), f).is_empty(), "{f}");
    }
    assert!(read(dir.path(), "correlation_report.txt").contains("det(R) ="));
    assert_eq!(read(dir.path(), "weights.csv").lines().count(), 1 + 24);
}
