use hfa_demo::{bohr_json, bump_json, gowers_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn bohr_members_match_direct_count() {
    let v = parse(bohr_json(101, "3", "1/5").unwrap());
    let direct: Vec<u64> = (0..101u64)
        .filter(|&x| {
            let r = (3 * x) % 101;
            5 * r.min(101 - r) <= 101
        })
        .collect();
    let got: Vec<u64> = v["members"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    assert_eq!(got, direct);
    assert_eq!(v["bounds"]["lower_holds"], true);
}

#[test]
fn bohr_rejects_bad_input() {
    assert!(bohr_json(0, "1", "1/5").is_err());
    assert!(bohr_json(12, "a", "1/5").is_err());
}

#[test]
fn quadratic_phase_norms() {
    let v = parse(gowers_json(r#"{"d":2,"n":1,"coeffs":{"sq(1)":1}}"#).unwrap());
    let norms: Vec<f64> = v["norms"].as_array().unwrap().iter().map(|r| r["value"].as_f64().unwrap()).collect();
    assert!(norms[0] < 1.0 - 1e-6);
    assert!((norms[1] - 1.0).abs() < 1e-9 && (norms[2] - 1.0).abs() < 1e-9);
}

#[test]
fn bump_stays_under_bound() {
    let v = parse(bump_json(0.2, 0.05, 200).unwrap());
    assert!((v["zero"].as_f64().unwrap() - 0.45).abs() < 1e-12);
    for r in v["rows"].as_array().unwrap() {
        assert!(r["abs"].as_f64().unwrap() <= r["bound"].as_f64().unwrap() + 1e-12);
    }
    assert!(bump_json(0.4, 0.2, 10).is_err());
}
