use std::fs;
use std::path::Path;
use std::process::Command;

use plvc::cli::{fmt_f64, read_table};
use plvc::montecarlo::{generate, stream_rng, Dgp, DgpSpec};
use plvc::InterceptMode;
use serde_json::Value;

const ROLES: &str = "[data]\nresponse = \"y\"\nlinear = [\"w\"]\nvarying = [\"x\"]\nindex = \"z\"\n";

fn write_sample(dir: &Path, n: usize, noiseless: bool) {
    let spec = DgpSpec {
        intercept: InterceptMode::Varying,
        ..DgpSpec::new(Dgp::Dgp1, n)
    };
    let (ds, _) = generate(&spec, &mut stream_rng(21, 0));
    let mut csv = String::from("y,w,x,z\n");
    for i in 0..n {
        let (w, x, z) = (ds.w()[(i, 0)], ds.x()[(i, 1)], ds.z()[i]);
        // linear coefficient curves lie in every cubic spline space
        let y = if noiseless { 2.0 + 0.75 * w + x * (1.0 - z) } else { ds.y()[i] };
        csv.push_str(&format!("{},{},{},{}\n", fmt_f64(y), fmt_f64(w), fmt_f64(x), fmt_f64(z)));
    }
    fs::write(dir.join("sample.csv"), csv).unwrap();
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, format!("schema_version = 1\nseed = 4\n{extra}\n{ROLES}")).unwrap();
    path
}

fn plvc(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_plvc"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fit_is_deterministic_and_curves_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_sample(d, 150, false);
    write_config(d, "");
    for out in ["a", "b"] {
        let o = plvc(&["fit", "--config", "run.toml", "--data", "sample.csv", "--out", out], d);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["fit.json", "beta_curves.csv"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap());
    }

    let report = read_json(&d.join("a/fit.json"));
    assert_eq!(report["provenance"]["seed"], 4);
    assert_eq!(report["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
    let c = &report["coefficients"][0];
    let (est, se, t) = (
        c["estimate"].as_f64().unwrap(),
        c["std_error"].as_f64().unwrap(),
        c["t_statistic"].as_f64().unwrap(),
    );
    assert!((t - est / se).abs() < 1e-12 * t.abs());

    let table = read_table(&d.join("a/beta_curves.csv")).unwrap();
    assert_eq!(table.headers, vec!["z", "(intercept)", "x"]);
    assert_eq!(table.rows.len(), 201);
    for row in &table.rows {
        for cell in row {
            let v: f64 = cell.parse().unwrap();
            assert_eq!(&fmt_f64(v), cell);
        }
    }
}

#[test]
fn noiseless_fit_recovers_planted_values() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_sample(d, 80, true);
    write_config(d, "[fit]\ndimensions = [5]\n");
    let o = plvc(&["fit", "--config", "run.toml", "--data", "sample.csv"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&d.join("out/fit.json"));
    assert!((report["coefficients"][0]["estimate"].as_f64().unwrap() - 0.75).abs() < 1e-8);
    assert!((report["r_squared"].as_f64().unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn cv_and_test_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_sample(d, 120, false);
    write_config(d, "[fit]\ndimensions = [4, 6, 8]\n[test]\nbootstrap = 99\n");
    assert!(plvc(&["cv", "--config", "run.toml", "--data", "sample.csv"], d).status.success());
    let cv = read_table(&d.join("out/cv_curve.csv")).unwrap();
    assert_eq!(cv.rows.len(), 3);
    assert_eq!(cv.rows.iter().filter(|r| r[5] == "true").count(), 1);

    assert!(plvc(&["test", "--config", "run.toml", "--data", "sample.csv"], d).status.success());
    let t = read_json(&d.join("out/test.json"));
    assert_eq!(t["B"], 99);
    assert_eq!(t["bootstrap_stats"].as_array().unwrap().len(), 99);
    let p = t["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
}

#[test]
fn invalid_requests_fail_with_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_sample(d, 60, false);

    write_config(d, "[test]\nbootstrap = 98\n");
    let o = plvc(&["test", "--config", "run.toml", "--data", "sample.csv"], d);
    assert!(!o.status.success());
    assert_eq!(read_json(&d.join("out/error.json"))["kind"], "config");

    write_config(d, "[test]\nnull = \"plvc\"\nalt = \"plvc\"\n");
    let o = plvc(&["test", "--config", "run.toml", "--data", "sample.csv", "--out", "same"], d);
    assert!(!o.status.success());
    assert_eq!(read_json(&d.join("same/error.json"))["kind"], "not_nested");

    write_config(d, "typo = 1\n");
    let o = plvc(&["fit", "--config", "run.toml", "--data", "sample.csv", "--out", "typo"], d);
    assert!(!o.status.success());

    let o = plvc(&["fit", "--config", "run.toml", "--data", "missing.csv", "--out", "io"], d);
    assert!(!o.status.success());
    assert!(d.join("io/error.json").exists());
}

#[test]
fn simulate_tables_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("sim.toml"),
        "schema_version = 1\nseed = 77\n[simulate]\ndgps = [\"dgp1\", \"dgp2\"]\nsizes = [40, 60]\nreps = 4\n",
    )
    .unwrap();
    let o = plvc(&["simulate", "--config", "sim.toml", "--threads", "2"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sim = read_json(&d.join("out/sim.json"));
    assert_eq!(sim["provenance"]["seed"], 77);
    assert_eq!(sim["reports"][0]["seed"], 77);
    // dgp1 has one curve, dgp2 two; one mse row each
    let rows = read_table(&d.join("out/tables.csv")).unwrap().rows;
    assert_eq!(rows.len(), 2 * 2 * (2 + 3));
}

#[test]
fn seed_flag_overrides_and_absent_seed_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = plvc(&["basis-dump", "--seed", "12"], d);
    assert!(o.status.success());
    let basis = read_table(&d.join("out/basis.csv")).unwrap();
    assert_eq!(basis.headers.len(), 9);
    for row in &basis.rows {
        let s: f64 = row[1..].iter().map(|c| c.parse::<f64>().unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    write_sample(d, 60, false);
    fs::write(d.join("noseed.toml"), format!("schema_version = 1\n[fit]\ndimensions = [5]\n{ROLES}")).unwrap();
    assert!(plvc(&["fit", "--config", "noseed.toml", "--data", "sample.csv"], d).status.success());
    assert!(read_json(&d.join("out/fit.json"))["provenance"]["seed"].is_u64());
    assert!(plvc(&["fit", "--config", "noseed.toml", "--data", "sample.csv", "--seed", "3", "--out", "s"], d)
        .status
        .success());
    assert_eq!(read_json(&d.join("s/fit.json"))["provenance"]["seed"], 3);
}
