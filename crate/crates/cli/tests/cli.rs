use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn hfa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hfa")).args(args).env_remove("HFA_CAP").output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn fixture(name: &str, body: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn value(v: &Value) -> f64 {
    v["value"].as_str().unwrap().parse().unwrap()
}

#[test]
fn constant_table_has_norm_one() {
    let v = json(&hfa(&["gowers", "--group", "2,6", "--constant", "-k", "4"]));
    assert_eq!(value(&v), 1.0);
}

#[test]
fn cubic_phase_table_on_z8() {
    let mut csv = String::from("index,re,im\n");
    for x in 0..8u64 {
        let t = std::f64::consts::TAU * ((x * x * x) % 8) as f64 / 8.0;
        csv += &format!("{x},{:.17e},{:.17e}\n", t.cos(), t.sin());
    }
    let p = fixture("cubic_z8.csv", &csv);
    let u4 = value(&json(&hfa(&["gowers", "--group", "8", "--input", p.to_str().unwrap(), "-k", "4"])));
    assert!((u4 - 1.0).abs() <= 1e-9, "{u4}");
    let u3 = value(&json(&hfa(&["gowers", "--group", "8", "--input", p.to_str().unwrap(), "-k", "3"])));
    assert!(u3 < 1.0 - 1e-3, "{u3}");
}

#[test]
fn exit_codes() {
    assert_eq!(hfa(&["gowers", "--group", "4096", "--constant", "-k", "4", "--cap", "1000"]).status.code(), Some(3));
    assert!(hfa(&["gowers", "--group", "4096", "--constant", "-k", "4", "--cap", "1000", "--sample", "300"]).status.success());
    assert_eq!(hfa(&["verify", "nonsense", "tiny"]).status.code(), Some(1));
    assert_eq!(hfa(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(hfa(&["gowers", "--group", "8", "--input", "/no/such/file.csv", "-k", "2"]).status.code(), Some(2));
    assert_eq!(hfa(&["bohr", "size", "--group", "12", "--freqs", "1", "--radius", "x/y"]).status.code(), Some(2));
}

#[test]
fn cap_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_hfa"))
        .args(["gowers", "--group", "4096", "--constant", "-k", "4"])
        .env("HFA_CAP", "1000")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bohr_size_on_z101() {
    let v = json(&hfa(&["bohr", "size", "--group", "101", "--freqs", "1", "--radius", "1/5"]));
    // |{x : ||x/101|| <= 1/5}| = 2 * 20 + 1
    assert_eq!(v["size"], 41);
    assert_eq!(v["lower_holds"], true);
}

#[test]
fn spectrum_csv_has_header_and_rows() {
    let out = hfa(&["bohr", "spectrum", "--group", "101", "--freqs", "1", "--radius", "1/5", "--eps", "0.05", "--eta", "1/200", "--taus", "0;1;50", "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "tau,re,im,approx_re,approx_im,gap");
    assert_eq!(lines.len(), 4);
}

#[test]
fn integrate_examples() {
    let b = fixture("bilinear.json", r#"{"d":2,"n":1,"arity":2,"coeffs":[1]}"#);
    let v = json(&hfa(&["integrate", "--form", b.to_str().unwrap(), "--arity", "2"]));
    assert!(v.get("Integrated").is_some(), "{v}");
    let t = fixture("trilinear.json", r#"{"d":2,"n":1,"arity":3,"coeffs":[1]}"#);
    let v = json(&hfa(&["integrate", "--form", t.to_str().unwrap(), "--arity", "3"]));
    assert!(v.get("Integrated").is_some(), "{v}");
    // x_1 y_2 / 4 is not symmetric, so no q has it as second derivative
    let a = fixture("asym.json", r#"{"d":2,"n":2,"arity":2,"coeffs":[0,1,0,0]}"#);
    let v = json(&hfa(&["integrate", "--form", a.to_str().unwrap(), "--arity", "2"]));
    assert!(v.get("Obstructed").is_some(), "{v}");
    assert_eq!(hfa(&["integrate", "--form", b.to_str().unwrap(), "--arity", "3"]).status.code(), Some(2));
}

#[test]
fn lattice_and_group() {
    let v = json(&hfa(&["lattice", "snf", "--matrix", "2,4;6,8"]));
    assert_eq!(v["diagonal"], serde_json::json!(["2", "4"]));
    let v = json(&hfa(&["group", "--n", "2", "--relations", "2,0;0,4"]));
    assert_eq!(v["order"], 8);
}

#[test]
fn out_flag_writes_file() {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("group.json");
    let _ = std::fs::remove_file(&p);
    let out = hfa(&["group", "--factors", "2,2", "--out", p.to_str().unwrap()]);
    assert!(out.status.success() && out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    assert_eq!(v["order"], 4);
}

#[test]
fn verify_poly_tiny_passes() {
    let v = json(&hfa(&["verify", "poly", "tiny"]));
    assert_eq!(v["passed"], true);
    assert_eq!(v["criteria"].as_array().unwrap().len(), 2);
}

#[test]
fn same_seed_same_bytes() {
    let a = hfa(&["verify", "forms", "tiny", "--seed", "5"]);
    let b = hfa(&["verify", "forms", "tiny", "--seed", "5", "--workers", "2"]);
    assert_eq!(a.stdout, b.stdout);
}
