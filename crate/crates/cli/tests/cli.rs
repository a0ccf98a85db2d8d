use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_dyson-rg");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn csv_column(dir: &Path, name: &str, col: usize) -> Vec<f64> {
    std::fs::read_to_string(dir.join(name))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn gaussian_fixed_point_has_predicted_variance() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["fixed-point", "--a", "1.5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(d.path(), "fixed_point.json")["variance"].as_f64().unwrap();
    assert!((v - (1.0 - 0.5f64.sqrt())).abs() < 1e-8, "{v}");
    let header = std::fs::read_to_string(d.path().join("fixed_point.csv")).unwrap();
    assert!(header.starts_with("s,p\n"));
}

#[test]
fn out_of_range_a_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["fixed-point", "--a", "2.5"])), 64);
}

#[test]
fn bad_flags_and_help() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["fixed-point", "--bogus"])), 64);
    assert_eq!(code(&run(d.path(), &["spectrum", "--k", "0"])), 64);
    assert_eq!(code(&run(d.path(), &["--help"])), 0);
}

#[test]
fn gaussian_spectrum_matches_formula() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["spectrum", "--a", "1.25", "--k", "5"]);
    assert_eq!(code(&out), 0);
    let ev = csv_column(d.path(), "spectrum.csv", 1);
    assert_eq!(ev.len(), 5);
    for (j, l) in ev.iter().enumerate() {
        let expect = 2f64.powf(1.0 - 0.75 * j as f64);
        assert!((l / expect - 1.0).abs() < 1e-3, "j={j}: {l}");
    }
    assert!(d.path().join("eigenfunction_4.csv").exists());
}

#[test]
fn missing_fixed_point_artifact() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["spectrum", "--a", "1.55", "--at", "non-gaussian"]);
    assert_eq!(code(&out), 66);
    assert_eq!(code(&run(d.path(), &["critical", "--a", "1.55", "--non-gaussian"])), 66);
}

#[test]
fn non_gaussian_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let grid = ["--grid-n", "1024"];
    let out = run(d.path(), &[&["fixed-point", "--a", "1.55", "--non-gaussian"][..], &grid].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(d.path(), "fixed_point.json")["residual_l1"].as_f64().unwrap() < 1e-8);

    let out = run(d.path(), &[&["spectrum", "--a", "1.55", "--at", "non-gaussian", "--k", "3"][..], &grid].concat());
    assert_eq!(code(&out), 0);
    let ev = json(d.path(), "spectrum.json")["eigenvalues"].clone();
    let l1 = ev[1].as_f64().unwrap();
    assert!((l1 - 2f64.sqrt()).abs() < 5.0 * 0.05, "{l1}");

    // The artifact is tied to its grid and its exponent.
    assert_eq!(code(&run(d.path(), &["spectrum", "--a", "1.55", "--at", "non-gaussian"])), 64);
    let out = run(d.path(), &[&["spectrum", "--a", "1.6", "--at", "non-gaussian"][..], &grid].concat());
    assert_eq!(code(&out), 2);
}

#[test]
fn critical_search_brackets_are_nested() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["critical", "--a", "1.25", "--grid-n", "1024", "--tol-t", "1e-5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(d.path(), "critical.json");
    let brackets: Vec<(f64, f64)> = v["brackets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| (b[0].as_f64().unwrap(), b[1].as_f64().unwrap()))
        .collect();
    assert!(brackets.len() > 10);
    for w in brackets.windows(2) {
        assert!(w[0].0 <= w[1].0 && w[1].1 <= w[0].1);
    }
    let t_c = v["t_c"].as_f64().unwrap();
    assert!((t_c + 0.1036).abs() < 1e-3, "{t_c}");
    let probes = std::fs::read_to_string(d.path().join("probes.csv")).unwrap();
    assert!(probes.starts_with("t,classification,steps,min_l1,steps_near_fixed_point\n"));
}

#[test]
fn susceptibility_exponent_is_classical() {
    let d = tempfile::tempdir().unwrap();
    let out = run(
        d.path(),
        &[
            "observables",
            "--a",
            "1.25",
            "--grid-n",
            "1024",
            "--t-c",
            "-0.10362",
            "--side",
            "high",
            "--t-values=-0.105,-0.11,-0.12,-0.14",
            "--n-max",
            "200",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(d.path(), "observables.json");
    let g = v["gamma_fit"].as_f64().unwrap();
    assert!((g - 1.0).abs() < 0.05, "{g}");
    assert!(v["beta_fit"].is_null());
    assert_eq!(v["lambda1_used"].as_f64().unwrap(), 2f64.powf(0.25));
    let tau = csv_column(d.path(), "susceptibility.csv", 1);
    assert_eq!(tau.len(), 4);
    assert!(tau.windows(2).all(|w| w[0] > w[1]));
    assert!(!d.path().join("magnetization.csv").exists());
}

#[test]
fn oracle_agrees_with_enumeration() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["oracle", "--n", "3", "--beta", "0.7", "--a", "1.5"])), 0);
    let v = json(d.path(), "oracle.json");
    assert!(v["passed"].as_bool().unwrap());
    assert_eq!(v["levels"].as_array().unwrap().len(), 3);
    assert_eq!(code(&run(d.path(), &["oracle", "--n", "3", "--seed", "7"])), 0);
    assert_eq!(code(&run(d.path(), &["oracle", "--n", "5"])), 64);
}

#[test]
fn flow_classifies_high_temperature_start() {
    let d = tempfile::tempdir().unwrap();
    let out = run(d.path(), &["flow", "--a", "1.25", "--t", "-0.2", "--grid-n", "1024"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(d.path(), "flow.json")["classification"], "collapsed_high_t");
    let text = std::fs::read_to_string(d.path().join("flow.csv")).unwrap();
    assert!(text.starts_with("m,variance,kurtosis,l1_to_fp,classification\n"));
}

#[test]
fn config_file_then_flags() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"a": 1.5, "k": 3, "grid": {"N": 512}}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let out = run(d.path(), &["spectrum", "--config", cfg, "--a", "1.25", "--print-config"]);
    assert_eq!(code(&out), 0);
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed["a"], 1.25);
    assert_eq!(printed["k"], 3);
    assert_eq!(printed["grid"]["N"], 512);
    assert_eq!(printed["grid"]["L"], 10.0);
    assert!(!d.path().join("spectrum.csv").exists());

    std::fs::write(d.path().join("bad.json"), r#"{"a": 1.5, "unknown": 1}"#).unwrap();
    let bad = d.path().join("bad.json");
    assert_eq!(code(&run(d.path(), &["spectrum", "--config", bad.to_str().unwrap()])), 64);
    let missing = d.path().join("missing.json");
    assert_eq!(code(&run(d.path(), &["spectrum", "--config", missing.to_str().unwrap()])), 66);
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let one = tempfile::tempdir().unwrap();
    let four = tempfile::tempdir().unwrap();
    let args = ["observables", "--a", "1.25", "--grid-n", "1024", "--t-c", "-0.10362", "--t-values=-0.12,-0.09"];
    let r1 = run(one.path(), &[&args[..], &["--threads", "1"]].concat());
    let r4 = run(four.path(), &[&args[..], &["--threads", "4"]].concat());
    assert_eq!(code(&r1), 0, "{}", String::from_utf8_lossy(&r1.stderr));
    assert_eq!(code(&r4), 0);
    for name in ["susceptibility.csv", "magnetization.csv", "observables.json"] {
        let a = std::fs::read(one.path().join(name)).unwrap();
        let b = std::fs::read(four.path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}
