//! Bohr sets: exact membership, size bounds, weak and dilation regularity, the bump
//! function and its Fourier series, spectral approximation and generated subgroups.

use std::collections::HashSet;

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{pre, HfaError, Result};
use crate::fourier::{dft, GroupFn};
use crate::group::{Character, FinAbGroup, GroupElement};
use crate::rng;

pub type Radius = Ratio<i64>;

/// `B(Gamma; rho) = { x : ||chi(x)|| <= rho(chi) for chi in Gamma }`.
#[derive(Clone, Debug, PartialEq)]
pub struct BohrSet {
    pub group: FinAbGroup,
    pub freqs: Vec<Character>,
    pub radii: Vec<Radius>,
}

/// JSON form: `{"freqs":[[1],[3]],"radius":"1/5"}`; `radius` may also be a list.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BohrSpec {
    pub freqs: Vec<Vec<i64>>,
    pub radius: RadiusSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RadiusSpec {
    Const(String),
    PerChar(Vec<String>),
}

pub fn parse_ratio(s: &str) -> Result<Radius> {
    let s = s.trim();
    let bad = || HfaError::Input(format!("cannot parse rational {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| bad())?;
        let d: i64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        Ok(Ratio::new(n, d))
    } else if let Ok(n) = s.parse::<i64>() {
        Ok(Ratio::from_integer(n))
    } else {
        // Decimal literal: exact via its digits.
        let (int, frac) = s.split_once('.').ok_or_else(bad)?;
        let neg = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches('-'), frac);
        let n: i64 = digits.parse().map_err(|_| bad())?;
        let d = 10i64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
        Ok(Ratio::new(if neg { -n } else { n }, d))
    }
}

pub fn fmt_ratio(r: &Radius) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl BohrSet {
    pub fn new(group: &FinAbGroup, freqs: Vec<Character>, radii: Vec<Radius>) -> Result<Self> {
        if freqs.len() != radii.len() {
            return Err(HfaError::Input("one radius per frequency is required".into()));
        }
        for c in &freqs {
            if !group.contains(&GroupElement(c.0.clone())) {
                return Err(HfaError::Structural(format!("character {:?} not in dual of {group}", c.0)));
            }
        }
        if radii.iter().any(|r| *r < Ratio::zero()) {
            return Err(HfaError::Input("radii must be nonnegative".into()));
        }
        Ok(BohrSet { group: group.clone(), freqs, radii })
    }

    pub fn constant(group: &FinAbGroup, freqs: Vec<Character>, rho: Radius) -> Result<Self> {
        let n = freqs.len();
        Self::new(group, freqs, vec![rho; n])
    }

    pub fn from_spec(group: &FinAbGroup, spec: &BohrSpec) -> Result<Self> {
        let freqs = spec.freqs.iter().map(|f| group.character(f)).collect::<Result<Vec<_>>>()?;
        let radii = match &spec.radius {
            RadiusSpec::Const(s) => vec![parse_ratio(s)?; freqs.len()],
            RadiusSpec::PerChar(v) => v.iter().map(|s| parse_ratio(s)).collect::<Result<_>>()?,
        };
        Self::new(group, freqs, radii)
    }

    pub fn codim(&self) -> usize {
        self.freqs.len()
    }

    /// Same frequencies, radii multiplied by `t`.
    pub fn dilate(&self, t: Radius) -> BohrSet {
        BohrSet { group: self.group.clone(), freqs: self.freqs.clone(), radii: self.radii.iter().map(|r| r * t).collect() }
    }

    pub fn with_radii(&self, radii: Vec<Radius>) -> BohrSet {
        BohrSet { group: self.group.clone(), freqs: self.freqs.clone(), radii }
    }

    /// Numerator of `||chi(x)||` over the group exponent.
    fn torus_dist_num(&self, i: usize, x: &[u64]) -> u64 {
        let l = self.group.exponent();
        let n = self.group.char_eval_num(&self.freqs[i].0, x);
        n.min(l - n)
    }

    pub fn contains(&self, x: &GroupElement) -> bool {
        let l = self.group.exponent() as i128;
        (0..self.codim()).all(|i| {
            let d = self.torus_dist_num(i, &x.0) as i128;
            let r = self.radii[i];
            d * (*r.denom() as i128) <= (*r.numer() as i128) * l
        })
    }

    pub fn contains_idx(&self, idx: u64) -> bool {
        self.contains(&self.group.element_at(idx))
    }

    /// Membership bitmap over element indices.
    pub fn indicator(&self, cap: u64) -> Result<Vec<bool>> {
        let _ = self.group.enumerate_capped(cap)?;
        Ok((0..self.group.order()).into_par_iter().map(|i| self.contains_idx(i)).collect())
    }

    pub fn members(&self, cap: u64) -> Result<Vec<u64>> {
        Ok(self.indicator(cap)?.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i as u64).collect())
    }

    pub fn size(&self, cap: u64) -> Result<u64> {
        Ok(self.indicator(cap)?.iter().filter(|&&b| b).count() as u64)
    }

    /// For each element, the least `t` with `x` in `B(Gamma; t rho)`, i.e. `max_i ||chi_i(x)|| / rho_i`.
    ///
    /// Sizes of every dilate then come from one sorted list. Zero radii with nonzero
    /// distance give `None` (never a member of any dilate).
    pub fn dilation_profile(&self, cap: u64) -> Result<Vec<Option<Ratio<i128>>>> {
        let _ = self.group.enumerate_capped(cap)?;
        let l = self.group.exponent() as i128;
        Ok((0..self.group.order())
            .into_par_iter()
            .map(|idx| {
                let x = self.group.element_at(idx);
                let mut worst = Some(Ratio::<i128>::zero());
                for i in 0..self.codim() {
                    let d = self.torus_dist_num(i, &x.0) as i128;
                    let r = self.radii[i];
                    let t = if r.is_zero() {
                        if d == 0 { Some(Ratio::zero()) } else { None }
                    } else {
                        Some(Ratio::new(d * *r.denom() as i128, l * *r.numer() as i128))
                    };
                    worst = match (worst, t) {
                        (Some(a), Some(b)) => Some(a.max(b)),
                        _ => None,
                    };
                }
                worst
            })
            .collect())
    }
}

/// Sorted dilation profile; `count(t) = |B(Gamma; t rho)|`.
pub struct DilationSizes {
    sorted: Vec<Ratio<i128>>,
}

impl DilationSizes {
    pub fn new(b: &BohrSet, cap: u64) -> Result<Self> {
        let mut sorted: Vec<Ratio<i128>> = b.dilation_profile(cap)?.into_iter().flatten().collect();
        sorted.sort_unstable();
        Ok(DilationSizes { sorted })
    }

    pub fn count(&self, t: Ratio<i128>) -> u64 {
        self.sorted.partition_point(|v| *v <= t) as u64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SizeBounds {
    pub size: u64,
    /// `prod rho * |G|`, exact.
    pub lower_bound: String,
    pub doubled_size: u64,
    /// `4^|Gamma| |B|`.
    pub upper_bound: u128,
    pub lower_holds: bool,
    pub doubling_holds: bool,
}

/// Both size bounds, compared as exact integers.
///
/// The lower bound is used with radii capped at 1, since `rho >= 1` imposes no condition
/// and the bound is stated for radii in `(0, 1)`.
pub fn bohr_size_bounds(b: &BohrSet, cap: u64) -> Result<SizeBounds> {
    let size = b.size(cap)?;
    let doubled_size = b.dilate(Ratio::from_integer(2)).size(cap)?;
    let mut prod = Ratio::<i128>::from_integer(b.group.order() as i128);
    for r in &b.radii {
        let r = Ratio::<i128>::new(*r.numer() as i128, *r.denom() as i128).min(Ratio::from_integer(1));
        prod *= r;
    }
    let upper_bound = 4u128.pow(b.codim() as u32) * size as u128;
    Ok(SizeBounds {
        size,
        lower_bound: format!("{}/{}", prod.numer(), prod.denom()),
        doubled_size,
        upper_bound,
        lower_holds: Ratio::from_integer(size as i128) >= prod,
        doubling_holds: doubled_size as u128 <= upper_bound,
    })
}

/// `A - A` contains `B(Gamma; rho/2)` whenever `|A| >= (1 - 4^(-k-1)) |B|`.
pub fn almost_full_difference_check(a: &[GroupElement], b: &BohrSet, cap: u64) -> Result<bool> {
    let g = &b.group;
    let ind = b.indicator(cap)?;
    let bsize = ind.iter().filter(|&&v| v).count() as u128;
    let mut ai: Vec<u64> = Vec::with_capacity(a.len());
    for x in a {
        if !g.contains(x) {
            return Err(HfaError::Structural(format!("{:?} not in {g}", x.0)));
        }
        let i = g.index_of(x);
        pre(ind[i as usize], || format!("{:?} is not in the Bohr set", x.0))?;
        ai.push(i);
    }
    ai.sort_unstable();
    ai.dedup();
    let k = b.codim() as u32;
    // |A| 4^(k+1) >= (4^(k+1) - 1) |B|
    let p = 4u128.pow(k + 1);
    pre(ai.len() as u128 * p >= (p - 1) * bsize, || {
        format!("|A| = {} below the density threshold for |B| = {bsize}", ai.len())
    })?;
    let mut diff = vec![false; g.order() as usize];
    for &x in &ai {
        let nx = g.neg_idx(x);
        for &y in &ai {
            diff[g.add_idx(y, nx) as usize] = true;
        }
    }
    let half = b.dilate(Ratio::new(1, 2));
    Ok((0..g.order()).all(|i| !half.contains_idx(i) || diff[i as usize]))
}

/// Attempts per round before `char_separation` gives up on random draws.
pub const SEPARATION_RETRIES: usize = 5;

/// Frequencies whose `1/10`-Bohr set has pairwise disjoint translates by `S`.
///
/// Each round draws random characters until one strictly separates (torus distance
/// above `1/5`) at least half of the remaining pairs; after the retry budget an
/// exhaustive scan of the dual is used when it fits in `cap`.
pub fn char_separation(g: &FinAbGroup, s: &[GroupElement], seed: u64, cap: u64) -> Result<Vec<Character>> {
    let idx: Vec<u64> = s.iter().map(|x| g.index_of(x)).collect();
    let distinct: HashSet<u64> = idx.iter().copied().collect();
    pre(distinct.len() == s.len(), || "elements of S must be distinct".into())?;
    for x in s {
        if !g.contains(x) {
            return Err(HfaError::Structural(format!("{:?} not in {g}", x.0)));
        }
    }
    let l = g.exponent();
    let mut pairs: Vec<GroupElement> = Vec::new();
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            pairs.push(g.sub(&s[i], &s[j]));
        }
    }
    // ||chi(z)|| > 1/5  <=>  5 * min(n, l - n) > l
    let separates = |chi: &[u64], z: &GroupElement| {
        let n = g.char_eval_num(chi, &z.0);
        5 * n.min(l - n) > l
    };
    let mut gamma = Vec::new();
    let mut r = rng::stream(seed, "char_separation", 0);
    let n = g.order();
    while !pairs.is_empty() {
        let need = pairs.len().div_ceil(2);
        let mut pick = None;
        for _ in 0..=SEPARATION_RETRIES {
            let chi = g.element_at(r.gen_range(0..n)).0;
            if pairs.iter().filter(|z| separates(&chi, z)).count() >= need {
                pick = Some(chi);
                break;
            }
        }
        if pick.is_none() && n <= cap {
            pick = (0..n)
                .map(|c| g.element_at(c).0)
                .find(|chi| pairs.iter().filter(|z| separates(chi, z)).count() >= need);
        }
        let chi = pick.ok_or_else(|| HfaError::Budget("character separation retry budget exhausted".into()))?;
        pairs.retain(|z| !separates(&chi, z));
        gamma.push(Character(chi));
    }
    Ok(gamma)
}

/// Verifies that translates `s + B(Gamma; 1/10)` are pairwise disjoint.
pub fn translates_disjoint(g: &FinAbGroup, s: &[GroupElement], gamma: &[Character], cap: u64) -> Result<bool> {
    let b = BohrSet::constant(g, gamma.to_vec(), Ratio::new(1, 10))?;
    let mem = b.members(cap)?;
    let mut owner = vec![usize::MAX; g.order() as usize];
    for (k, x) in s.iter().enumerate() {
        let xi = g.index_of(x);
        for &m in &mem {
            let y = g.add_idx(xi, m) as usize;
            if owner[y] != usize::MAX && owner[y] != k {
                return Ok(false);
            }
            owner[y] = k;
        }
    }
    Ok(true)
}

/// `|B(Gamma; rho + eta) \ B(Gamma; rho - eta)|` with per-character radii shifted by `eta`.
pub fn annulus_size(b: &BohrSet, eta: Radius, cap: u64) -> Result<u64> {
    let outer = b.with_radii(b.radii.iter().map(|r| r + eta).collect());
    let inner_radii: Vec<Radius> = b.radii.iter().map(|r| r - eta).collect();
    let oi = outer.indicator(cap)?;
    if inner_radii.iter().any(|r| *r < Ratio::zero()) {
        // A negative radius admits nothing.
        return Ok(oi.iter().filter(|&&v| v).count() as u64);
    }
    let ii = b.with_radii(inner_radii).indicator(cap)?;
    Ok(oi.iter().zip(&ii).filter(|(&o, &i)| o && !i).count() as u64)
}

/// Order of a character as an element of the dual group.
pub fn char_order(g: &FinAbGroup, chi: &Character) -> u64 {
    g.element_order(&GroupElement(chi.0.clone()))
}

/// Whether some value `j/s` (`0 <= j <= s/2`) lies in `(lo, hi]`.
fn hits_grid(s: u64, lo: Radius, hi: Radius) -> bool {
    (0..=s / 2).any(|j| {
        let v = Ratio::new(j as i64, s as i64);
        v > lo && v <= hi
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularizeReport {
    pub radii: Vec<String>,
    pub annulus: u64,
    pub allowed: String,
    /// Characters where the snapping rule needed the clamped fallback.
    pub fallbacks: Vec<usize>,
}

/// Adjusts a radius function without changing the Bohr set so that the `eta`-annulus has
/// at most `eps |G|` elements.
///
/// Characters of order above `4d/eps` keep their radius. For the others, with image
/// `{j/s}`, the radius lies in `[a, a + 1/s)` for `a = floor(rho s)/s` and is moved by
/// `eta` away from whichever end it is near. When `3 eta >= 1/s` that move can land on
/// a grid point; the radius is then clamped into `[a + eta, a + 1/s - eta]` instead.
pub fn weak_regularize_fn(b: &BohrSet, eps: Radius, eta: Radius, cap: u64) -> Result<(BohrSet, RegularizeReport)> {
    let d = b.codim() as i64;
    pre(eps > Ratio::zero() && eta > Ratio::zero(), || "eps and eta must be positive".into())?;
    if d == 0 {
        return Ok((b.clone(), RegularizeReport { radii: vec![], annulus: 0, allowed: fmt_ratio(&(eps * b.group.order() as i64)), fallbacks: vec![] }));
    }
    pre(eta <= eps / (8 * d), || "eta must be at most eps/(8d)".into())?;
    let big_k = Ratio::from_integer(4 * d) / eps;
    let mut radii = Vec::with_capacity(b.codim());
    let mut fallbacks = Vec::new();
    for (i, chi) in b.freqs.iter().enumerate() {
        let rho = b.radii[i];
        let s = char_order(&b.group, chi);
        if Ratio::from_integer(s as i64) > big_k || rho >= Ratio::new(1, 2) {
            radii.push(rho);
            continue;
        }
        let si = s as i64;
        let a = Ratio::new((rho * si).floor().to_integer(), si);
        let bb = a + Ratio::new(1, si);
        let literal = if rho <= a + eta {
            rho + eta
        } else if rho >= bb - eta {
            rho - eta
        } else {
            rho
        };
        let good = |r: Radius| r >= a && r < bb && (r - rho).abs() <= eta && !hits_grid(s, r - eta, r + eta);
        let r = if good(literal) {
            literal
        } else {
            let clamped = rho.max(a + eta).min(bb - eta);
            if good(clamped) {
                fallbacks.push(i);
                clamped
            } else {
                fallbacks.push(i);
                literal
            }
        };
        radii.push(r);
    }
    let nb = b.with_radii(radii);
    if nb.indicator(cap)? != b.indicator(cap)? {
        return Err(HfaError::Certificate("regularized radius changed the Bohr set".into()));
    }
    let ann = annulus_size(&nb, eta, cap)?;
    let allowed = eps * b.group.order() as i64;
    if Ratio::from_integer(ann as i64) > allowed {
        return Err(HfaError::Certificate(format!("annulus {ann} exceeds {}", fmt_ratio(&allowed))));
    }
    let report = RegularizeReport { radii: nb.radii.iter().map(fmt_ratio).collect(), annulus: ann, allowed: fmt_ratio(&allowed), fallbacks };
    Ok((nb, report))
}

/// Constant-radius version: returns `rho'` within `eta` of `rho` with a small `eta`-annulus.
pub fn weak_regularize_const(b: &BohrSet, eps: Radius, eta: Radius, cap: u64) -> Result<(Radius, u64)> {
    let d = b.codim() as i64;
    pre(eps > Ratio::zero() && eta > Ratio::zero(), || "eps and eta must be positive".into())?;
    let rho = b.radii.first().copied().unwrap_or(Ratio::zero());
    pre(b.radii.iter().all(|r| *r == rho), || "radius must be constant".into())?;
    if d == 0 {
        return Ok((rho, 0));
    }
    let e8 = eps / (8 * d);
    pre(eta <= e8 * e8, || "eta must be at most (eps/(8d))^2".into())?;
    let big_k = Ratio::from_integer(4 * d) / eps;
    let mut a = Ratio::zero();
    let mut bb = Ratio::from_integer(1);
    for chi in &b.freqs {
        let s = char_order(&b.group, chi) as i64;
        if Ratio::from_integer(s) <= big_k {
            let ai = Ratio::new((rho * s).floor().to_integer(), s);
            a = a.max(ai);
            bb = bb.min(ai + Ratio::new(1, s));
        }
    }
    let r = if rho < a + eta {
        a + eta
    } else if rho > bb - eta {
        bb - eta
    } else {
        rho
    };
    let nb = b.with_radii(vec![r; b.codim()]);
    let ann = annulus_size(&nb, eta, cap)?;
    if Ratio::from_integer(ann as i64) > eps * b.group.order() as i64 {
        return Err(HfaError::Certificate(format!("annulus {ann} exceeds eps |G|")));
    }
    Ok((r, ann))
}

/// Trapezoid on the circle: 1 on `[-rho, rho]`, linear ramps of width `eta`, 0 beyond.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BumpFn {
    pub rho: f64,
    pub eta: f64,
}

impl BumpFn {
    pub fn new(rho: f64, eta: f64) -> Result<Self> {
        pre(eta > 0.0 && rho >= 0.0, || "need rho >= 0 and eta > 0".into())?;
        pre(rho + eta <= 0.5, || "rho + eta must be at most 1/2 so the bump fits on the circle".into())?;
        Ok(BumpFn { rho, eta })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = x - x.round();
        let t = t.abs();
        if t <= self.rho {
            1.0
        } else if t <= self.rho + self.eta {
            (self.rho + self.eta - t) / self.eta
        } else {
            0.0
        }
    }

    /// `b^(xi) = int b(x) e(-xi x) dx`; real because `b` is even.
    ///
    /// From `b = eta^-1 I * J` with `I`, `J` indicators of intervals of lengths
    /// `2 rho + eta` and `eta`.
    pub fn fourier(&self, xi: i64) -> f64 {
        if xi == 0 {
            return 2.0 * self.rho + self.eta;
        }
        let pi = std::f64::consts::PI;
        let x = xi as f64;
        (pi * x * (2.0 * self.rho + self.eta)).sin() * (pi * x * self.eta).sin() / (self.eta * (pi * x).powi(2))
    }

    /// `eta^-1 / xi^2`.
    pub fn fourier_bound(&self, xi: i64) -> f64 {
        1.0 / (self.eta * (xi as f64).powi(2))
    }

    /// Partial sum `sum_{|xi| <= l} b^(xi) e(xi x)`.
    pub fn partial_sum(&self, l: i64, x: f64) -> f64 {
        let mut s = self.fourier(0);
        for xi in 1..=l {
            s += 2.0 * self.fourier(xi) * (std::f64::consts::TAU * xi as f64 * x).cos();
        }
        s
    }

    /// `2 eta^-1 / L`.
    pub fn truncation_bound(&self, l: i64) -> f64 {
        2.0 / (self.eta * l as f64)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumRow {
    pub tau: Vec<u64>,
    pub exact: Complex64,
    pub approx: Complex64,
    pub gap: f64,
}

/// `K = ceil(4 e r / (eps eta))`, the truncation length used in the spectral estimate.
pub fn spectrum_k(r: usize, eps: f64, eta: f64) -> i64 {
    (4.0 * std::f64::consts::E * r.max(1) as f64 / (eps * eta)).ceil() as i64
}

/// Compares `1_B^(tau)` with `sum_lambda 1(sum lambda_i gamma_i = tau) prod b^_i(lambda_i)`.
///
/// `lambda_i gamma_i` depends only on `lambda_i` mod the order `o_i` of `gamma_i`, so each
/// truncated bump series is first folded into `o_i` residue buckets and the tuple sum
/// runs over `prod o_i` residue tuples, scattering into every `tau` at once.
pub fn bohr_spectrum_approx(
    b: &BohrSet,
    eta: f64,
    eps: f64,
    lengths: &[i64],
    taus: &[Character],
    cap: u64,
) -> Result<Vec<SpectrumRow>> {
    let g = &b.group;
    let r = b.codim();
    pre(lengths.len() == r, || "one truncation length per frequency".into())?;
    let k = spectrum_k(r, eps, eta);
    pre(lengths.iter().all(|&l| l >= k), || format!("truncation lengths must be at least K = {k}"))?;
    // Hypothesis: |B(rho + eta) \ B(rho)| <= eps |G| / 2, checked with the exact radii below
    // against a rational eta no larger than the analytic one.
    let eta_r = Ratio::<i64>::approximate_float(eta).ok_or_else(|| HfaError::Input("bad eta".into()))?;
    let outer = b.with_radii(b.radii.iter().map(|x| x + eta_r).collect()).size(cap)?;
    let inner = b.size(cap)?;
    pre((outer - inner) as f64 <= eps * g.order() as f64 / 2.0, || {
        format!("weak-regularity hypothesis fails: annulus {} > eps|G|/2", outer - inner)
    })?;
    let bumps: Vec<BumpFn> = b.radii.iter().map(|x| BumpFn::new(x.to_f64().unwrap(), eta)).collect::<Result<_>>()?;
    let orders: Vec<u64> = b.freqs.iter().map(|c| char_order(g, c)).collect();
    let work: u64 = orders.iter().product();
    pre(work <= cap, || "residue tuple count exceeds cap".into())?;
    let buckets: Vec<Vec<f64>> = bumps
        .iter()
        .zip(&orders)
        .zip(lengths)
        .map(|((bump, &o), &l)| {
            let mut c = vec![0.0; o as usize];
            // Fixed order: ascending |xi|, so the float result is schedule-independent.
            c[0] += bump.fourier(0);
            for xi in 1..=l {
                let v = bump.fourier(xi);
                c[(xi as u64 % o) as usize] += v;
                c[((o - xi as u64 % o) % o) as usize] += v;
            }
            c
        })
        .collect();
    let n = g.order();
    let mut approx_by_tau = vec![0.0f64; n as usize];
    for mut t in 0..work {
        let mut prod = 1.0;
        let mut tau = 0u64;
        for i in (0..r).rev() {
            let u = t % orders[i];
            t /= orders[i];
            prod *= buckets[i][u as usize];
            let ui = g.scale(u as i64, &GroupElement(b.freqs[i].0.clone()));
            tau = g.add_idx(tau, g.index_of(&ui));
        }
        approx_by_tau[tau as usize] += prod;
    }
    let ind = b.indicator(cap)?;
    let f = GroupFn::new(g.clone(), ind.iter().map(|&v| Complex64::new(v as u8 as f64, 0.0)).collect())?;
    let exact = dft(&f);
    Ok(taus
        .iter()
        .map(|tau| {
            let ti = g.index_of(&GroupElement(tau.0.clone())) as usize;
            let e = exact.coeffs[ti];
            let a = Complex64::new(approx_by_tau[ti], 0.0);
            SpectrumRow { tau: tau.0.clone(), exact: e, approx: a, gap: (e - a).norm() }
        })
        .collect())
}

/// Direct evaluation of the approximant over the whole box; only for small lengths.
pub fn spectrum_approximant_bruteforce(b: &BohrSet, eta: f64, lengths: &[i64], tau: &Character) -> Result<f64> {
    let g = &b.group;
    let bumps: Vec<BumpFn> = b.radii.iter().map(|x| BumpFn::new(x.to_f64().unwrap(), eta)).collect::<Result<_>>()?;
    let tau_i = g.index_of(&GroupElement(tau.0.clone()));
    let sides: Vec<u64> = lengths.iter().map(|&l| (2 * l + 1) as u64).collect();
    let total: u64 = sides.iter().product();
    let mut s = 0.0;
    for mut t in 0..total {
        let mut prod = 1.0;
        let mut acc = 0u64;
        for i in (0..b.codim()).rev() {
            let lam = (t % sides[i]) as i64 - lengths[i];
            t /= sides[i];
            prod *= bumps[i].fourier(lam);
            acc = g.add_idx(acc, g.index_of(&g.scale(lam, &GroupElement(b.freqs[i].0.clone()))));
        }
        if acc == tau_i {
            s += prod;
        }
    }
    Ok(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularDilate {
    pub delta: String,
    pub checked_points: usize,
}

/// Finds `delta` in `[1/2, 1]` (scanning upward in steps of `1/(1000 d)`) such that
/// `1 - 100 d |t| <= |B_{(1+t) delta}| / |B_delta| <= 1 + 100 d |t|` for every grid `t`
/// with `|t| <= 1/(100 d)`, the grid step being `1/(steps_per_unit d)`.
pub fn bourgain_regular_dilate(b: &BohrSet, steps_per_unit: i64, cap: u64) -> Result<RegularDilate> {
    let d = b.codim().max(1) as i64;
    if b.codim() == 0 {
        return Ok(RegularDilate { delta: "1/2".into(), checked_points: 0 });
    }
    let sizes = DilationSizes::new(b, cap)?;
    let step = Ratio::<i128>::new(1, (steps_per_unit * d) as i128);
    let tmax = Ratio::<i128>::new(1, (100 * d) as i128);
    let mut ts = Vec::new();
    let mut t = -tmax;
    while t <= tmax {
        ts.push(t);
        t += step;
    }
    let dstep = Ratio::<i128>::new(1, (1000 * d) as i128);
    let mut delta = Ratio::<i128>::new(1, 2);
    while delta <= Ratio::from_integer(1) {
        let base = sizes.count(delta) as i128;
        let ok = base > 0
            && ts.iter().all(|&t| {
                let sz = Ratio::from_integer(sizes.count((Ratio::from_integer(1) + t) * delta) as i128);
                let slack = Ratio::from_integer(100 * d as i128) * t.abs();
                let ratio = sz / Ratio::from_integer(base);
                ratio >= Ratio::from_integer(1) - slack && ratio <= Ratio::from_integer(1) + slack
            });
        if ok {
            return Ok(RegularDilate { delta: format!("{}/{}", delta.numer(), delta.denom()), checked_points: ts.len() });
        }
        delta += dstep;
    }
    Err(HfaError::Budget("no regular dilate found on the search grid".into()))
}

#[derive(Clone, Debug, Serialize)]
pub struct GeneratedSubgroup {
    pub generators: Vec<GroupElement>,
    pub subgroup_size: u64,
    pub r: usize,
    /// `(y, [x_1, ..., x_r])` with `y = x_1 + 2 x_2 + ... + 2^(r-1) x_r`.
    pub witnesses: Vec<(GroupElement, Vec<GroupElement>)>,
}

/// `<B>` by closure, plus binary-digit decompositions of every element of `B(rho/2)`.
///
/// For `i >= 2` the digit `x_i` is drawn from `B(2^(-2i-1) rho)`, and `x_1` is solved for;
/// the decomposition is then checked to have every digit in `B`.
pub fn bohr_generated_subgroup(b: &BohrSet, r: usize, seed: u64, cap: u64) -> Result<GeneratedSubgroup> {
    pre(r >= 1, || "r must be at least 1".into())?;
    let g = &b.group;
    let members = b.members(cap)?;
    let mut gens: Vec<GroupElement> = Vec::new();
    let mut sub: HashSet<u64> = [0].into_iter().collect();
    for &m in &members {
        if !sub.contains(&m) {
            gens.push(g.element_at(m));
            sub = g.span(&gens).into_iter().collect();
        }
    }
    let digit_sets: Vec<Vec<u64>> = (2..=r)
        .map(|i| b.dilate(Ratio::new(1, 1i64 << (2 * i + 1))).members(cap))
        .collect::<Result<_>>()?;
    let half = b.dilate(Ratio::new(1, 2)).members(cap)?;
    let ind = b.indicator(cap)?;
    let mut rg = rng::stream(seed, "bohr_generated_subgroup", 0);
    let mut witnesses = Vec::with_capacity(half.len());
    for &y in &half {
        let mut digits = vec![0u64; r];
        let mut acc = 0u64;
        for i in 2..=r {
            let x = *digit_sets[i - 2].choose(&mut rg).expect("Bohr sets contain 0");
            digits[i - 1] = x;
            acc = g.add_idx(acc, g.index_of(&g.scale(1 << (i - 1), &g.element_at(x))));
        }
        digits[0] = g.add_idx(y, g.neg_idx(acc));
        if digits.iter().any(|&x| !ind[x as usize]) {
            return Err(HfaError::Certificate(format!("digit outside B for {:?}", g.element_at(y).0)));
        }
        witnesses.push((g.element_at(y), digits.iter().map(|&x| g.element_at(x)).collect()));
    }
    Ok(GeneratedSubgroup { generators: gens, subgroup_size: sub.len() as u64, r, witnesses })
}
