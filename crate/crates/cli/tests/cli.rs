// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples")
}

/// Temp dir holding a copy of the example configs.
fn workdir() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(examples()).unwrap() {
        let p = entry.unwrap().path();
        std::fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    dir
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rscusum"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest_lines(dir: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(dir.join("rscusum-manifest.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn help_and_usage_errors() {
    let dir = workdir();
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&run(dir.path(), &["sample", "--config", "sample.json"])), 1);
    let o = run(dir.path(), &["--jobs", "0", "sample", "--config", "sample.json", "--out", "s.csv"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bad_config_reports_field_path() {
    let dir = workdir();
    std::fs::write(dir.path().join("bad.json"), r#"{"pre": {"path": "pre.json"}, "post": {"path": "post.json"}, "length": "ten"}"#).unwrap();
    let o = run(dir.path(), &["sample", "--config", "bad.json", "--out", "s.csv"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("length"), "{}", stderr(&o));

    let o = run(dir.path(), &["sample", "--config", "missing.json", "--out", "s.csv"]);
    assert_eq!(code(&o), 1);
    let m = manifest_lines(dir.path());
    assert_eq!(m.len(), 2);
    assert!(m.iter().all(|l| l["exit_code"] == 1 && l["error"].is_string()));
}

#[test]
fn sample_is_seed_deterministic() {
    let dir = workdir();
    let d = dir.path();
    assert_eq!(code(&run(d, &["sample", "--config", "sample.json", "--out", "a.csv"])), 0);
    assert_eq!(code(&run(d, &["--jobs", "2", "sample", "--config", "sample.json", "--out", "b.csv"])), 0);
    assert_eq!(code(&run(d, &["--seed", "99", "sample", "--config", "sample.json", "--out", "c.csv"])), 0);
    let a = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(d.join("b.csv")).unwrap());
    assert_ne!(a, std::fs::read_to_string(d.join("c.csv")).unwrap());
    assert_eq!(a.lines().next().unwrap(), "t,x_1,x_2");
    assert_eq!(a.lines().count(), 501);

    let m = manifest_lines(d);
    assert_eq!(m.len(), 3);
    assert_eq!(m[0]["subcommand"], "sample");
    assert_eq!(m[0]["seeds"], serde_json::json!([4]));
    assert_eq!(m[2]["seeds"], serde_json::json!([99]));
    assert_eq!(m[0]["config"]["length"], 500);
    assert!(m.iter().all(|l| l["exit_code"] == 0));
}

#[test]
fn lfd_calibrate_detect() {
    let dir = workdir();
    let d = dir.path();
    assert_eq!(code(&run(d, &["lfd", "--config", "lfd.json", "--out", "lfd_out.json"])), 0);
    let lfd: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("lfd_out.json")).unwrap()).unwrap();
    assert_eq!(lfd["selected_index"], 0);
    assert_eq!(lfd["mode"], "basis_scan");

    assert_eq!(code(&run(d, &["lfd", "--config", "lfd_explicit.json", "--out", "simplex_out.json"])), 0);

    assert_eq!(code(&run(d, &["calibrate", "--config", "calibrate.json", "--out", "lambda.json"])), 0);
    let cal: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("lambda.json")).unwrap()).unwrap();
    assert_eq!(cal["status"], "root_found");
    let lambda = cal["lambda_star"].as_f64().unwrap();
    assert!(lambda > 1.0 && lambda < 2.0, "{lambda}");

    assert_eq!(code(&run(d, &["sample", "--config", "sample.json", "--out", "s.csv"])), 0);
    let lam = lambda.to_string();
    let o = run(d, &["detect", "--pre", "pre.json", "--post", "lfd_out.json", "--input", "s.csv", "--lambda", &lam, "--tau", "6.9"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let t = out["stopping_time"].as_u64().unwrap();
    assert!(t > 90 && t < 200, "{t}");
    assert_eq!(out["n_processed"].as_u64(), Some(t));

    let o = run(d, &["detect", "--kind", "cusum", "--pre", "pre.json", "--post", "post.json", "--input", "s.csv", "--tau", "6.9"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn detect_errors() {
    let dir = workdir();
    let d = dir.path();
    std::fs::write(d.join("s.csv"), "t,x_1,x_2\n1,0.1,0.2\n").unwrap();
    std::fs::write(d.join("short.csv"), "t,x_1\n1,0.1\n").unwrap();
    std::fs::write(d.join("huge.csv"), "t,x_1,x_2\n1,1e300,1e300\n").unwrap();
    let base = ["detect", "--pre", "pre.json", "--post", "post.json"];
    let with = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend_from_slice(extra);
        run(d, &a)
    };
    assert_eq!(code(&with(&["--input", "s.csv", "--tau", "-1"])), 1);
    assert_eq!(code(&with(&["--input", "s.csv", "--tau", "1", "--kind", "bogus"])), 1);
    assert_eq!(code(&with(&["--input", "short.csv", "--tau", "1"])), 1);
    assert_eq!(code(&with(&["--input", "nope.csv", "--tau", "1"])), 1);
    let o = with(&["--input", "huge.csv", "--tau", "1"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = with(&["--input", "s.csv", "--tau", "100"]);
    assert_eq!(code(&o), 0);
    let out: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(out["stopping_time"].is_null());
}

#[test]
fn bench_is_independent_of_jobs() {
    let dir = workdir();
    let d = dir.path();
    let a = run(d, &["--jobs", "1", "bench", "--config", "bench.json", "--out-dir", "a", "--trials", "20", "--gnuplot"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    let b = run(d, &["--jobs", "3", "bench", "--config", "bench.json", "--out-dir", "b", "--trials", "20", "--gnuplot"]);
    assert_eq!(code(&b), 0, "{}", stderr(&b));
    for f in ["sweep.csv", "summary.json", "edd_vs_logarl.dat"] {
        let x = std::fs::read(d.join("a").join(f)).unwrap();
        assert_eq!(x, std::fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    let m = manifest_lines(d);
    assert_eq!(m[0]["outputs"].as_array().unwrap().len(), 3);
    assert_eq!(m[0]["config"]["trials"], 20);
}
