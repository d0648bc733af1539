//! Acceptance grid at desk scale. Prints one line per criterion and exits non-zero if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use hfa_cli::suites::{criterion_name, run_criterion, RunConfig};

const SEED: u64 = 20_261_016;

/// Wall-clock budgets in seconds, where one is stated.
fn budget(id: u8) -> Option<u64> {
    match id {
        1 => Some(30),
        2 => Some(120),
        4 | 11 => Some(300),
        7 => Some(60),
        8 | 10 => Some(600),
        _ => None,
    }
}

fn verify_all(workers: usize) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hfa"))
        .args(["verify", "all", "desk", "--seed", &SEED.to_string(), "--workers", &workers.to_string()])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn determinism() -> (bool, String) {
    let runs: Result<Vec<_>, _> = [1, 1, 3].into_iter().map(verify_all).collect();
    match runs {
        Err(e) => (false, e),
        Ok(r) if r[0] != r[1] => (false, "repeated runs differ".into()),
        Ok(r) if r[0] != r[2] => (false, "1 and 3 workers differ".into()),
        Ok(r) => (true, format!("3 runs, {} identical bytes", r[0].len())),
    }
}

fn line(id: u8, passed: bool, took: Duration, note: &str) -> bool {
    let verdict = if passed { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} {:<24} {verdict}  ({:.1}s) {note}", criterion_name(id), took.as_secs_f64());
    passed
}

fn main() {
    // `cargo test -- --list` and filtered runs expect no work from a custom harness
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let cfg = RunConfig::desk(SEED);
    let mut all = true;
    for id in 1..=11u8 {
        let start = Instant::now();
        let rep = run_criterion(id, &cfg);
        let took = start.elapsed();
        let in_budget = budget(id).map_or(true, |b| took.as_secs() <= b);
        let mut note = format!("{} checks, {} failures", rep.checks, rep.failures);
        if !in_budget {
            note += &format!(", over the {}s budget", budget(id).unwrap());
        }
        if let Some(first) = rep.failed_cases.first() {
            note += &format!("; first: {first}");
        }
        all &= line(id, rep.passed && in_budget, took, &note);
    }
    let start = Instant::now();
    let (ok, note) = determinism();
    all &= line(12, ok, start.elapsed(), &note);
    if !all {
        std::process::exit(1);
    }
}
