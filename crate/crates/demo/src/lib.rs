//! wasm-bindgen wrappers over `hfa-core` for the static page in `www/`.
//!
//! Each export takes plain strings and numbers and returns a JSON string, so the page
//! needs no bundler. The `*_json` functions are the same operations without the JS
//! boundary and are what the native tests call.

use hfa_core::bohr::{bohr_size_bounds, BohrSet, BohrSpec, BumpFn, RadiusSpec};
use hfa_core::fourier::{gowers_norm, GroupFn};
use hfa_core::poly_torsion::{PolyPhase, PolyPhaseSpec};
use hfa_core::FinAbGroup;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Keeps every request interactive.
const CAP: u64 = 1 << 22;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn parse_freqs(s: &str) -> Result<Vec<Vec<i64>>, String> {
    s.split(';')
        .filter(|r| !r.trim().is_empty())
        .map(|r| r.split(',').map(|t| t.trim().parse::<i64>().map_err(|_| format!("bad frequency {t:?}"))).collect())
        .collect()
}

/// Members and size bounds of `B(freqs; radius)` in `Z/n`.
pub fn bohr_json(n: u32, freqs: &str, radius: &str) -> Result<String, String> {
    if n == 0 || n > 100_000 {
        return Err("n must be in 1..=100000".into());
    }
    let g = FinAbGroup::cyclic(n as u64);
    let spec = BohrSpec { freqs: parse_freqs(freqs)?, radius: RadiusSpec::Const(radius.trim().to_string()) };
    let b = BohrSet::from_spec(&g, &spec).map_err(err)?;
    let members = b.members(CAP).map_err(err)?;
    let bounds = bohr_size_bounds(&b, CAP).map_err(err)?;
    Ok(json!({ "n": n, "members": members, "bounds": bounds }).to_string())
}

/// `U^2..U^4` norms of `e(q)` for a polynomial phase on `(Z/2^d)^m`.
pub fn gowers_json(spec: &str) -> Result<String, String> {
    let spec: PolyPhaseSpec = serde_json::from_str(spec).map_err(err)?;
    let q = PolyPhase::from_spec(&spec).map_err(err)?;
    let g = q.group();
    if g.order() > 64 {
        return Err(format!("group of order {} is too large for the page; keep 2^(d m) <= 64", g.order()));
    }
    let f = GroupFn::phase(&g, &q.table());
    let norms = (2..=4)
        .map(|k| gowers_norm(&f, k, CAP, None).map(|r| json!({ "k": k, "value": r.value })))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    Ok(json!({ "group": g.to_string(), "norms": norms }).to_string())
}

/// `|b^(xi)|` against `1/(eta xi^2)` for `1 <= xi <= max_xi`.
pub fn bump_json(rho: f64, eta: f64, max_xi: u32) -> Result<String, String> {
    let b = BumpFn::new(rho, eta).map_err(err)?;
    let rows: Vec<_> = (1..=max_xi.min(2000) as i64)
        .map(|xi| json!({ "xi": xi, "abs": b.fourier(xi).abs(), "bound": b.fourier_bound(xi) }))
        .collect();
    Ok(json!({ "zero": b.fourier(0), "rows": rows }).to_string())
}

#[wasm_bindgen]
pub fn bohr(n: u32, freqs: &str, radius: &str) -> Result<String, JsValue> {
    bohr_json(n, freqs, radius).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn gowers(spec: &str) -> Result<String, JsValue> {
    gowers_json(spec).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn bump(rho: f64, eta: f64, max_xi: u32) -> Result<String, JsValue> {
    bump_json(rho, eta, max_xi).map_err(|e| JsValue::from_str(&e))
}
