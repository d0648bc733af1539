//! Polynomials of degree at most 3 on `(Z/2^d)^n`, multilinear forms, and their integration.
//!
//! Values of the polynomial part have denominator `3 * 2^(d+2)`; every monomial is stored as
//! an integer numerator over that modulus.

use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{pre, HfaError, Result};
use crate::group::{FinAbGroup, GroupElement, TorusValue};
use crate::rng;

/// Monomials of the classification basis, 0-based indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Monomial {
    /// `(2|x_i|^3 - 3|x_i|^2 + 4|x_i|) / (3 * 2^(d+2))`
    Cube(usize),
    /// `(|x_i|^2 |x_j| + |x_i| |x_j|^2 - |x_i| |x_j|) / 2^(d+1)`, `i < j`
    Mu(usize, usize),
    /// `|x_i|^2 |x_j| / 2^d`, `i != j`
    SqLin(usize, usize),
    /// `|x_i| |x_j| |x_k| / 2^d`, `i < j < k`
    Triple(usize, usize, usize),
    /// `|x_i|^2 / 2^(d+1)`
    Sq(usize),
    /// `|x_i| |x_j| / 2^d`, `i < j`
    Mixed(usize, usize),
    /// `|x_i| / 2^d`
    Lin(usize),
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        match self {
            Monomial::Cube(_) | Monomial::Mu(..) | Monomial::SqLin(..) | Monomial::Triple(..) => 3,
            Monomial::Sq(_) | Monomial::Mixed(..) => 2,
            Monomial::Lin(_) => 1,
        }
    }

    /// Numerator over `3 * 2^(d+2)` at the integer representatives `u`.
    fn numerator(&self, u: &[i128]) -> i128 {
        match *self {
            Monomial::Cube(i) => 2 * u[i].pow(3) - 3 * u[i].pow(2) + 4 * u[i],
            Monomial::Mu(i, j) => 6 * (u[i] * u[i] * u[j] + u[i] * u[j] * u[j] - u[i] * u[j]),
            Monomial::SqLin(i, j) => 12 * u[i] * u[i] * u[j],
            Monomial::Triple(i, j, k) => 12 * u[i] * u[j] * u[k],
            Monomial::Sq(i) => 6 * u[i] * u[i],
            Monomial::Mixed(i, j) => 12 * u[i] * u[j],
            Monomial::Lin(i) => 12 * u[i],
        }
    }

    fn valid(&self, n: usize) -> bool {
        match *self {
            Monomial::Cube(i) | Monomial::Sq(i) | Monomial::Lin(i) => i < n,
            Monomial::Mu(i, j) | Monomial::Mixed(i, j) => i < j && j < n,
            Monomial::SqLin(i, j) => i != j && i < n && j < n,
            Monomial::Triple(i, j, k) => i < j && j < k && k < n,
        }
    }

    /// Range of the canonical coefficient: `[0, period)`.
    pub fn period(&self, d: u32) -> i64 {
        match self {
            Monomial::Mu(..) => 2,
            Monomial::SqLin(..) => 1 << (d - 1),
            _ => 1 << d,
        }
    }

    pub fn key(&self) -> String {
        match *self {
            Monomial::Cube(i) => format!("cube({})", i + 1),
            Monomial::Mu(i, j) => format!("mu({},{})", i + 1, j + 1),
            Monomial::SqLin(i, j) => format!("sqlin({},{})", i + 1, j + 1),
            Monomial::Triple(i, j, k) => format!("triple({},{},{})", i + 1, j + 1, k + 1),
            Monomial::Sq(i) => format!("sq({})", i + 1),
            Monomial::Mixed(i, j) => format!("mixed({},{})", i + 1, j + 1),
            Monomial::Lin(i) => format!("lin({})", i + 1),
        }
    }

    pub fn parse(key: &str) -> Result<Self> {
        let bad = || HfaError::Input(format!("unknown monomial key {key:?}"));
        let (name, rest) = key.split_once('(').ok_or_else(bad)?;
        let args: Vec<usize> = rest
            .strip_suffix(')')
            .ok_or_else(bad)?
            .split(',')
            .map(|t| t.trim().parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1).ok_or_else(bad))
            .collect::<Result<_>>()?;
        Ok(match (name, args.as_slice()) {
            ("cube", [i]) => Monomial::Cube(*i),
            ("mu", [i, j]) => Monomial::Mu(*i, *j),
            ("sqlin", [i, j]) => Monomial::SqLin(*i, *j),
            ("triple", [i, j, k]) => Monomial::Triple(*i, *j, *k),
            ("sq", [i]) => Monomial::Sq(*i),
            ("mixed", [i, j]) => Monomial::Mixed(*i, *j),
            ("lin", [i]) => Monomial::Lin(*i),
            _ => return Err(bad()),
        })
    }

    /// Every monomial for `n` variables, in basis order.
    pub fn all(n: usize) -> Vec<Monomial> {
        let mut out = Vec::new();
        out.extend((0..n).map(Monomial::Cube));
        for i in 0..n {
            for j in i + 1..n {
                out.push(Monomial::Mu(i, j));
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    out.push(Monomial::SqLin(i, j));
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    out.push(Monomial::Triple(i, j, k));
                }
            }
        }
        out.extend((0..n).map(Monomial::Sq));
        for i in 0..n {
            for j in i + 1..n {
                out.push(Monomial::Mixed(i, j));
            }
        }
        out.extend((0..n).map(Monomial::Lin));
        out
    }
}

/// Polynomial phase of degree at most 3 on `(Z/2^d)^n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyPhase {
    pub d: u32,
    pub n: usize,
    pub coeffs: BTreeMap<Monomial, i64>,
    pub alpha: TorusValue,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyPhaseSpec {
    pub d: u32,
    pub n: usize,
    #[serde(default)]
    pub coeffs: BTreeMap<String, i64>,
    #[serde(default)]
    pub alpha: Option<String>,
}

/// Largest `d` accepted; keeps numerators inside `i128` comfortably.
pub const MAX_D: u32 = 16;

impl PolyPhase {
    pub fn new(d: u32, n: usize, coeffs: impl IntoIterator<Item = (Monomial, i64)>, alpha: TorusValue) -> Result<Self> {
        pre(d >= 2, || "d = 1 is the non-classical case and is not handled".into())?;
        pre(d <= MAX_D && n >= 1, || format!("need 2 <= d <= {MAX_D} and n >= 1"))?;
        let mut map = BTreeMap::new();
        for (m, c) in coeffs {
            pre(m.valid(n), || format!("monomial {} out of range for n = {n}", m.key()))?;
            *map.entry(m).or_insert(0) += c;
        }
        map.retain(|_, c| *c != 0);
        Ok(PolyPhase { d, n, coeffs: map, alpha })
    }

    pub fn zero(d: u32, n: usize) -> Result<Self> {
        Self::new(d, n, [], TorusValue::ZERO)
    }

    pub fn group(&self) -> FinAbGroup {
        FinAbGroup::power(1 << self.d, self.n)
    }

    pub fn modulus(&self) -> i64 {
        3 << (self.d + 2)
    }

    pub fn get(&self, m: Monomial) -> i64 {
        self.coeffs.get(&m).copied().unwrap_or(0)
    }

    pub fn degree_bound(&self) -> u32 {
        self.coeffs.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    /// Exact evaluation at integer representatives in `[0, 2^d)`.
    pub fn eval(&self, x: &GroupElement) -> TorusValue {
        let u: Vec<i128> = x.0.iter().map(|&c| c as i128).collect();
        let m = self.modulus() as i128;
        let num = self.coeffs.iter().fold(0i128, |acc, (mono, &c)| (acc + (c as i128).rem_euclid(m) * mono.numerator(&u).rem_euclid(m)) % m);
        TorusValue::new(num as i64, self.modulus()) + self.alpha
    }

    pub fn table(&self) -> Vec<TorusValue> {
        let g = self.group();
        (0..g.order()).into_par_iter().map(|i| self.eval(&g.element_at(i))).collect()
    }

    pub fn to_spec(&self) -> PolyPhaseSpec {
        PolyPhaseSpec {
            d: self.d,
            n: self.n,
            coeffs: self.coeffs.iter().map(|(m, &c)| (m.key(), c)).collect(),
            alpha: (self.alpha != TorusValue::ZERO).then(|| self.alpha.to_string()),
        }
    }

    pub fn from_spec(s: &PolyPhaseSpec) -> Result<Self> {
        let coeffs = s.coeffs.iter().map(|(k, &c)| Ok((Monomial::parse(k)?, c))).collect::<Result<Vec<_>>>()?;
        let alpha = match &s.alpha {
            None => TorusValue::ZERO,
            Some(a) => TorusValue::from_ratio(crate::bohr::parse_ratio(a)?),
        };
        Self::new(s.d, s.n, coeffs, alpha)
    }

    /// Well-definedness on the group: adding `2^d` to one coordinate of the integer
    /// representative leaves the value unchanged. Checked on every element and coordinate.
    pub fn periodicity_check(&self, cap: u64) -> Result<bool> {
        let g = self.group();
        pre(g.order() * self.n as u64 <= cap, || "periodicity check exceeds cap".into())?;
        let m = self.modulus() as i128;
        let q = 1i128 << self.d;
        Ok((0..g.order()).into_par_iter().all(|i| {
            let u: Vec<i128> = g.element_at(i).0.iter().map(|&c| c as i128).collect();
            let base = self.coeffs.iter().map(|(mono, &c)| c as i128 * mono.numerator(&u)).sum::<i128>().rem_euclid(m);
            (0..self.n).all(|j| {
                let mut v = u.clone();
                v[j] += q;
                self.coeffs.iter().map(|(mono, &c)| c as i128 * mono.numerator(&v)).sum::<i128>().rem_euclid(m) == base
            })
        }))
    }
}

/// `Delta_{a_1 ... a_m} f(x)` from a value table, as the signed sum over subsets.
pub fn delta_at(g: &FinAbGroup, f: &[TorusValue], x: u64, dirs: &[u64]) -> TorusValue {
    let m = dirs.len();
    let mut acc = TorusValue::ZERO;
    for mask in 0u32..(1 << m) {
        let mut p = x;
        for (i, &a) in dirs.iter().enumerate() {
            if mask >> i & 1 == 1 {
                p = g.add_idx(p, a);
            }
        }
        let v = f[p as usize];
        acc = if (m as u32 - mask.count_ones()) % 2 == 0 { acc + v } else { acc - v };
    }
    acc
}

/// Table of `Delta_a f`.
pub fn derivative_table(g: &FinAbGroup, f: &[TorusValue], a: u64) -> Vec<TorusValue> {
    (0..g.order()).map(|x| f[g.add_idx(x, a) as usize] - f[x as usize]).collect()
}

/// Table of `Delta_{a_1} ... Delta_{a_m} f`.
pub fn derivative_iter(g: &FinAbGroup, f: &[TorusValue], dirs: &[u64]) -> Vec<TorusValue> {
    dirs.iter().fold(f.to_vec(), |t, &a| derivative_table(g, &t, a))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeWitness {
    pub x: GroupElement,
    pub dirs: Vec<GroupElement>,
    pub value: String,
}

fn unit(g: &FinAbGroup, i: usize) -> u64 {
    let mut c = vec![0i64; g.rank()];
    c[i] = 1;
    g.index_of(&g.element(&c).expect("unit vector"))
}

/// Exact degree certificate: `f` has degree at most `m` iff every `(m+1)`-fold derivative along
/// standard basis directions vanishes at every point. Returns the first nonvanishing one.
pub fn degree_witness(g: &FinAbGroup, f: &[TorusValue], m: usize, cap: u64) -> Result<Option<DerivativeWitness>> {
    let r = g.rank();
    let work = g.order() as u128 * (r as u128).pow(m as u32 + 1) << (m + 1);
    pre(work <= cap as u128, || "degree certificate exceeds cap".into()).map_err(|e| HfaError::Budget(e.to_string()))?;
    let units: Vec<u64> = (0..r).map(|i| unit(g, i)).collect();
    let mut dir_lists: Vec<Vec<u64>> = vec![vec![]];
    for _ in 0..=m {
        dir_lists = dir_lists.iter().flat_map(|l| units.iter().filter(move |&&u| l.last().is_none_or(|&p| u >= p)).map(move |&u| [l.clone(), vec![u]].concat())).collect();
    }
    let hit = (0..g.order()).into_par_iter().find_map_first(|x| {
        dir_lists.iter().find_map(|dirs| {
            let v = delta_at(g, f, x, dirs);
            (v != TorusValue::ZERO).then(|| DerivativeWitness {
                x: g.element_at(x),
                dirs: dirs.iter().map(|&a| g.element_at(a)).collect(),
                value: v.to_string(),
            })
        })
    });
    Ok(hit)
}

/// Least `m <= max` with degree at most `m`, or `None`.
pub fn degree(g: &FinAbGroup, f: &[TorusValue], max: usize, cap: u64) -> Result<Option<usize>> {
    for m in 0..=max {
        if degree_witness(g, f, m, cap)?.is_none() {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

/// Random `(m+1)`-fold derivatives in arbitrary directions; the independent cross-check of
/// [`degree_witness`].
pub fn degree_sampled(g: &FinAbGroup, f: &[TorusValue], m: usize, samples: u64, seed: u64) -> Option<DerivativeWitness> {
    (0..samples).into_par_iter().find_map_first(|i| {
        let mut r = rng::stream(seed, "degree_sampled", i);
        let x = r.gen_range(0..g.order());
        let dirs: Vec<u64> = (0..=m).map(|_| r.gen_range(0..g.order())).collect();
        let v = delta_at(g, f, x, &dirs);
        (v != TorusValue::ZERO).then(|| DerivativeWitness {
            x: g.element_at(x),
            dirs: dirs.iter().map(|&a| g.element_at(a)).collect(),
            value: v.to_string(),
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Refutation {
    /// A derivative of order `m + 1` that does not vanish.
    Derivative(DerivativeWitness),
    /// The table is of low degree but not representable with 2-power denominators.
    Residual { x: GroupElement, value: String },
}

/// Recovers basis coefficients of a table of degree at most `m <= 3`, in canonical ranges.
pub fn classify(d: u32, n: usize, f: &[TorusValue], m: usize, cap: u64) -> Result<std::result::Result<PolyPhase, Refutation>> {
    pre(d >= 2, || "d = 1 is the non-classical case and is not handled".into())?;
    pre(m <= 3, || "degree above 3 is not classified".into())?;
    let g = FinAbGroup::power(1 << d, n);
    pre(f.len() as u64 == g.order(), || "table length does not match the group".into())?;
    if let Some(w) = degree_witness(&g, f, m, cap)? {
        return Ok(Err(Refutation::Derivative(w)));
    }
    let e: Vec<u64> = (0..n).map(|i| unit(&g, i)).collect();
    let q = 1i64 << d;
    // 2^d * Delta(...) g(0) as an integer mod 2^d; a non-integer means f is not classical
    let probe = |t: &[TorusValue], dirs: &[u64]| -> Option<i64> {
        let v = delta_at(&g, t, 0, dirs);
        (v.scale(q) == TorusValue::ZERO).then(|| v.numer() * (q / v.denom()))
    };
    let alpha = f[0];
    let mut rest: Vec<TorusValue> = f.iter().map(|&v| v - alpha).collect();
    let mut coeffs: Vec<(Monomial, i64)> = Vec::new();
    let residual = |t: &[TorusValue]| -> Option<Refutation> {
        t.iter().position(|&v| v != TorusValue::ZERO).map(|i| Refutation::Residual { x: g.element_at(i as u64), value: t[i].to_string() })
    };
    let subtract = |rest: &mut Vec<TorusValue>, part: &[(Monomial, i64)]| {
        let p = PolyPhase::new(d, n, part.iter().copied(), TorusValue::ZERO).expect("valid monomials");
        for (r, v) in rest.iter_mut().zip(p.table()) {
            *r = *r - v;
        }
    };
    if m >= 3 {
        let mut part = Vec::new();
        for i in 0..n {
            let Some(v) = probe(&rest, &[e[i], e[i], e[i]]) else { return Ok(Err(residual(&rest).expect("nonzero"))) };
            part.push((Monomial::Cube(i), v));
        }
        for i in 0..n {
            for j in i + 1..n {
                let (Some(a), Some(b)) = (probe(&rest, &[e[i], e[i], e[j]]), probe(&rest, &[e[i], e[j], e[j]])) else {
                    return Ok(Err(residual(&rest).expect("nonzero")));
                };
                // Delta_{iij} = (2 c_ij + mu) / 2^d and Delta_{ijj} = (2 c_ji + mu) / 2^d
                if (a - b).rem_euclid(2) != 0 {
                    let w = DerivativeWitness {
                        x: g.zero(),
                        dirs: vec![g.element_at(e[i]), g.element_at(e[i]), g.element_at(e[j])],
                        value: format!("{a}/{q}"),
                    };
                    return Ok(Err(Refutation::Derivative(w)));
                }
                let mu = a.rem_euclid(2);
                part.push((Monomial::Mu(i, j), mu));
                part.push((Monomial::SqLin(i, j), ((a - mu) / 2).rem_euclid(q / 2)));
                part.push((Monomial::SqLin(j, i), ((b - mu) / 2).rem_euclid(q / 2)));
                for k in j + 1..n {
                    let Some(c) = probe(&rest, &[e[i], e[j], e[k]]) else { return Ok(Err(residual(&rest).expect("nonzero"))) };
                    part.push((Monomial::Triple(i, j, k), c));
                }
            }
        }
        subtract(&mut rest, &part);
        coeffs.extend(part);
    }
    if m >= 2 {
        let mut part = Vec::new();
        for i in 0..n {
            let Some(v) = probe(&rest, &[e[i], e[i]]) else { return Ok(Err(residual(&rest).expect("nonzero"))) };
            part.push((Monomial::Sq(i), v));
            for j in i + 1..n {
                let Some(v) = probe(&rest, &[e[i], e[j]]) else { return Ok(Err(residual(&rest).expect("nonzero"))) };
                part.push((Monomial::Mixed(i, j), v));
            }
        }
        subtract(&mut rest, &part);
        coeffs.extend(part);
    }
    if m >= 1 {
        let mut part = Vec::new();
        for i in 0..n {
            let Some(v) = probe(&rest, &[e[i]]) else { return Ok(Err(residual(&rest).expect("nonzero"))) };
            part.push((Monomial::Lin(i), v));
        }
        subtract(&mut rest, &part);
        coeffs.extend(part);
    }
    if let Some(r) = residual(&rest) {
        return Ok(Err(r));
    }
    Ok(Ok(PolyPhase::new(d, n, coeffs, alpha)?))
}

/// `phi(x_1, ..., x_k) = sum lambda_{i_1..i_k} x_{1,i_1} ... x_{k,i_k} / 2^d`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultilinearForm {
    pub d: u32,
    pub n: usize,
    pub arity: usize,
    /// Row-major over `(i_1, ..., i_k)`, values in `[0, 2^d)`.
    pub coeffs: Vec<u64>,
}

impl MultilinearForm {
    pub fn new(d: u32, n: usize, arity: usize, coeffs: Vec<u64>) -> Result<Self> {
        pre(d >= 1 && d <= MAX_D && n >= 1 && arity >= 1, || "need 1 <= d <= 16, n >= 1, arity >= 1".into())?;
        pre(coeffs.len() == n.pow(arity as u32), || format!("expected {} coefficients", n.pow(arity as u32)))?;
        let q = 1u64 << d;
        Ok(MultilinearForm { d, n, arity, coeffs: coeffs.into_iter().map(|c| c % q).collect() })
    }

    pub fn from_fn(d: u32, n: usize, arity: usize, f: impl Fn(&[usize]) -> u64) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(n.pow(arity as u32));
        for flat in 0..n.pow(arity as u32) {
            coeffs.push(f(&Self::unflatten(n, arity, flat)));
        }
        Self::new(d, n, arity, coeffs)
    }

    fn unflatten(n: usize, arity: usize, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; arity];
        for s in (0..arity).rev() {
            idx[s] = flat % n;
            flat /= n;
        }
        idx
    }

    fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn coeff(&self, idx: &[usize]) -> u64 {
        self.coeffs[self.flatten(idx)]
    }

    pub fn group(&self) -> FinAbGroup {
        FinAbGroup::power(1 << self.d, self.n)
    }

    pub fn eval(&self, args: &[&GroupElement]) -> TorusValue {
        let q = 1i128 << self.d;
        let mut acc = 0i128;
        for (flat, &c) in self.coeffs.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let mut f = flat;
            let mut prod = c as i128;
            for x in args.iter().rev() {
                prod = prod * x.0[f % self.n] as i128 % q;
                f /= self.n;
            }
            acc = (acc + prod) % q;
        }
        TorusValue::new(acc as i64, q as i64)
    }

    /// First index tuple whose coefficient differs from a permuted one.
    pub fn symmetry_witness(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        for flat in 0..self.coeffs.len() {
            let idx = Self::unflatten(self.n, self.arity, flat);
            for s in 0..self.arity {
                for t in s + 1..self.arity {
                    let mut p = idx.clone();
                    p.swap(s, t);
                    if self.coeff(&p) != self.coeffs[flat] {
                        return Some((idx, p));
                    }
                }
            }
        }
        None
    }

    /// `2^d phi(e_{i_1}, ..., e_{i_k})` recovers every coefficient.
    pub fn coefficients_from_basis(&self) -> Vec<u64> {
        let g = self.group();
        (0..self.coeffs.len())
            .map(|flat| {
                let idx = Self::unflatten(self.n, self.arity, flat);
                let args: Vec<GroupElement> = idx.iter().map(|&i| g.element_at(unit(&g, i))).collect();
                let v = self.eval(&args.iter().collect::<Vec<_>>());
                (v.to_ratio() * (1i64 << self.d)).to_integer() as u64
            })
            .collect()
    }

    /// Exhaustive additivity in every slot when `|G|^(k+1) <= cap`, sampled otherwise.
    pub fn linearity_check(&self, cap: u64, samples: u64, seed: u64) -> bool {
        let g = self.group();
        let k = self.arity;
        let check = |args: &[u64], extra: u64, slot: usize| {
            let el: Vec<GroupElement> = args.iter().map(|&a| g.element_at(a)).collect();
            let mut sum = el.clone();
            sum[slot] = g.add(&el[slot], &g.element_at(extra));
            let mut other = el.clone();
            other[slot] = g.element_at(extra);
            let v = |xs: &[GroupElement]| self.eval(&xs.iter().collect::<Vec<_>>());
            v(&sum) == v(&el) + v(&other)
        };
        let total = (g.order() as u128).pow(k as u32 + 1);
        if total <= cap as u128 {
            (0..total as u64).into_par_iter().all(|mut t| {
                let extra = t % g.order();
                t /= g.order();
                let args: Vec<u64> = (0..k).map(|_| {
                    let a = t % g.order();
                    t /= g.order();
                    a
                }).collect();
                (0..k).all(|s| check(&args, extra, s))
            })
        } else {
            (0..samples).into_par_iter().all(|i| {
                let mut r = rng::stream(seed, "linearity_check", i);
                let args: Vec<u64> = (0..k).map(|_| r.gen_range(0..g.order())).collect();
                let extra = r.gen_range(0..g.order());
                (0..k).all(|s| check(&args, extra, s))
            })
        }
    }
}

/// `phi(a_1, ..., a_k) = Delta_{a_1 ... a_k} q`; checks independence of `x` on sampled points.
pub fn multilinear_from_poly(q: &PolyPhase, k: usize, samples: u64, seed: u64, cap: u64) -> Result<MultilinearForm> {
    let g = q.group();
    let t = q.table();
    if let Some(w) = degree_witness(&g, &t, k, cap)? {
        return Err(HfaError::Precondition(format!("degree exceeds {k}: nonzero derivative {w:?}")));
    }
    let qd = 1i64 << q.d;
    let e: Vec<u64> = (0..q.n).map(|i| unit(&g, i)).collect();
    let form = MultilinearForm::from_fn(q.d, q.n, k, |idx| {
        let dirs: Vec<u64> = idx.iter().map(|&i| e[i]).collect();
        let v = delta_at(&g, &t, 0, &dirs);
        (v.to_ratio() * qd).to_integer().rem_euclid(qd) as u64
    })?;
    // coefficients must be exact multiples of 1/2^d
    for flat in 0..form.coeffs.len() {
        let idx = MultilinearForm::unflatten(q.n, k, flat);
        let dirs: Vec<u64> = idx.iter().map(|&i| e[i]).collect();
        let v = delta_at(&g, &t, 0, &dirs);
        if v.scale(qd) != TorusValue::ZERO {
            return Err(HfaError::Certificate(format!("derivative {v} is not a multiple of 1/{qd}")));
        }
    }
    let bad = (0..samples).into_par_iter().find_map_first(|i| {
        let mut r = rng::stream(seed, "multilinear_from_poly", i);
        let x = r.gen_range(0..g.order());
        let dirs: Vec<u64> = (0..k).map(|_| r.gen_range(0..g.order())).collect();
        let lhs = delta_at(&g, &t, x, &dirs);
        let args: Vec<GroupElement> = dirs.iter().map(|&a| g.element_at(a)).collect();
        (lhs != form.eval(&args.iter().collect::<Vec<_>>())).then_some((x, dirs))
    });
    if let Some((x, dirs)) = bad {
        return Err(HfaError::Certificate(format!("derivative depends on x at {x} with {dirs:?}")));
    }
    if let Some(w) = form.symmetry_witness() {
        return Err(HfaError::Certificate(format!("derivative form not symmetric at {w:?}")));
    }
    Ok(form)
}

#[derive(Clone, Debug, Serialize)]
pub enum Integration {
    Integrated {
        #[serde(serialize_with = "ser_poly")]
        q: PolyPhase,
        tuples_checked: u64,
        exhaustive: bool,
    },
    Obstructed {
        criterion: String,
        witness: Vec<GroupElement>,
    },
}

fn ser_poly<S: serde::Serializer>(q: &PolyPhase, s: S) -> std::result::Result<S::Ok, S::Error> {
    q.to_spec().serialize(s)
}

impl Integration {
    pub fn poly(&self) -> Option<&PolyPhase> {
        match self {
            Integration::Integrated { q, .. } => Some(q),
            Integration::Obstructed { .. } => None,
        }
    }
}

/// Verifies `Delta_{a_1..a_k} q(x) = phi(a_1..a_k)` on all tuples when `|G|^(k+1) <= cap`,
/// otherwise on all `(a_1..a_k)` at sampled `x`.
fn verify_integral(q: &PolyPhase, phi: &MultilinearForm, cap: u64, samples: u64, seed: u64) -> Result<(u64, bool)> {
    let g = q.group();
    let t = q.table();
    let k = phi.arity;
    let n = g.order();
    let dir_total = (n as u128).pow(k as u32);
    pre(dir_total <= cap as u128, || "direction tuples exceed cap".into()).map_err(|e| HfaError::Budget(e.to_string()))?;
    let exhaustive = dir_total * n as u128 <= cap as u128;
    let xs: Vec<u64> = if exhaustive {
        (0..n).collect()
    } else {
        let mut r = rng::stream(seed, "verify_integral", 0);
        (0..samples.max(1)).map(|_| r.gen_range(0..n)).collect()
    };
    let els: Vec<GroupElement> = (0..n).map(|i| g.element_at(i)).collect();
    let bad = (0..dir_total as u64).into_par_iter().find_map_any(|mut flat| {
        let dirs: Vec<u64> = (0..k).map(|_| {
            let a = flat % n;
            flat /= n;
            a
        }).collect();
        let args: Vec<&GroupElement> = dirs.iter().map(|&a| &els[a as usize]).collect();
        let want = phi.eval(&args);
        xs.iter().find(|&&x| delta_at(&g, &t, x, &dirs) != want).map(|&x| (x, dirs.clone()))
    });
    if let Some((x, dirs)) = bad {
        return Err(HfaError::Certificate(format!("integral fails at x = {x}, directions {dirs:?}")));
    }
    Ok((dir_total as u64 * xs.len() as u64, exhaustive))
}

/// A quadratic `q` with `Delta_{a,b} q = beta`, or the asymmetry that rules it out.
pub fn integrate_bilinear(beta: &MultilinearForm, cap: u64, samples: u64, seed: u64) -> Result<Integration> {
    pre(beta.arity == 2, || "integrate_bilinear needs arity 2".into())?;
    pre(beta.d >= 2, || "d = 1 is the non-classical case and is not handled".into())?;
    let g = beta.group();
    if let Some((i, j)) = beta.symmetry_witness() {
        let e = |v: &[usize]| v.iter().map(|&k| g.element_at(unit(&g, k))).collect::<Vec<_>>();
        let _ = j;
        return Ok(Integration::Obstructed { criterion: "symmetry".into(), witness: e(&i) });
    }
    let mut coeffs = Vec::new();
    for i in 0..beta.n {
        coeffs.push((Monomial::Sq(i), beta.coeff(&[i, i]) as i64));
        for j in i + 1..beta.n {
            coeffs.push((Monomial::Mixed(i, j), beta.coeff(&[i, j]) as i64));
        }
    }
    let q = PolyPhase::new(beta.d, beta.n, coeffs, TorusValue::ZERO)?;
    let (tuples_checked, exhaustive) = verify_integral(&q, beta, cap, samples, seed)?;
    Ok(Integration::Integrated { q, tuples_checked, exhaustive })
}

/// `2^(d-1) phi(a, a, b)` against `2^(d-1) phi(b, b, a)` and additivity in `a`; returns the
/// first failing tuple.
pub fn half_bilinear_witness(phi: &MultilinearForm, cap: u64, samples: u64, seed: u64) -> Option<(String, Vec<GroupElement>)> {
    let g = phi.group();
    let half = 1i64 << (phi.d - 1);
    let n = g.order();
    let h = |a: &GroupElement, b: &GroupElement| phi.eval(&[a, a, b]).scale(half);
    let sym = |a: u64, b: u64| {
        let (ea, eb) = (g.element_at(a), g.element_at(b));
        (h(&ea, &eb) != h(&eb, &ea)).then(|| ("2^(d-1) phi(a,a,b) symmetric".to_string(), vec![ea, eb]))
    };
    let add = |a: u64, a2: u64, b: u64| {
        let (ea, ea2, eb) = (g.element_at(a), g.element_at(a2), g.element_at(b));
        let s = g.add(&ea, &ea2);
        (h(&s, &eb) != h(&ea, &eb) + h(&ea2, &eb)).then(|| ("2^(d-1) phi(a,a,b) additive in a".to_string(), vec![ea, ea2, eb]))
    };
    if (n as u128).pow(3) <= cap as u128 {
        let s = (0..n * n).find_map(|t| sym(t / n, t % n));
        s.or_else(|| (0..n * n * n).into_par_iter().find_map_first(|t| add(t / (n * n), t / n % n, t % n)))
    } else {
        (0..samples).find_map(|i| {
            let mut r = rng::stream(seed, "half_bilinear", i);
            let (a, a2, b) = (r.gen_range(0..n), r.gen_range(0..n), r.gen_range(0..n));
            sym(a, b).or_else(|| add(a, a2, b))
        })
    }
}

/// A cubic `q` with `Delta_{a,b,c} q = phi`, or the failing criterion with a witness.
///
/// The cubic part is read off the triangular system `Delta_{e_i e_i e_i} q = lambda_iii / 2^d`,
/// `Delta_{e_i e_i e_j} q = (2 c_ij + mu_ij) / 2^d`, `Delta_{e_i e_j e_k} q = lambda_ijk / 2^d`.
pub fn integrate_trilinear(phi: &MultilinearForm, cap: u64, samples: u64, seed: u64) -> Result<Integration> {
    pre(phi.arity == 3, || "integrate_trilinear needs arity 3".into())?;
    pre(phi.d >= 2, || "d = 1 is the non-classical case and is not handled".into())?;
    let g = phi.group();
    let e = |v: &[usize]| v.iter().map(|&k| g.element_at(unit(&g, k))).collect::<Vec<_>>();
    if let Some((i, _)) = phi.symmetry_witness() {
        return Ok(Integration::Obstructed { criterion: "symmetry".into(), witness: e(&i) });
    }
    if let Some((criterion, witness)) = half_bilinear_witness(phi, cap, samples, seed) {
        return Ok(Integration::Obstructed { criterion, witness });
    }
    let n = phi.n;
    let q2 = 1i64 << (phi.d - 1);
    let mut coeffs = Vec::new();
    for i in 0..n {
        coeffs.push((Monomial::Cube(i), phi.coeff(&[i, i, i]) as i64));
        for j in i + 1..n {
            let a = phi.coeff(&[i, i, j]) as i64;
            let b = phi.coeff(&[i, j, j]) as i64;
            if (a - b).rem_euclid(2) != 0 {
                return Ok(Integration::Obstructed { criterion: "parity lambda_iij = lambda_jji mod 2".into(), witness: e(&[i, j]) });
            }
            let mu = a.rem_euclid(2);
            coeffs.push((Monomial::Mu(i, j), mu));
            coeffs.push((Monomial::SqLin(i, j), ((a - mu) / 2).rem_euclid(q2)));
            coeffs.push((Monomial::SqLin(j, i), ((b - mu) / 2).rem_euclid(q2)));
            for k in j + 1..n {
                coeffs.push((Monomial::Triple(i, j, k), phi.coeff(&[i, j, k]) as i64));
            }
        }
    }
    let q = PolyPhase::new(phi.d, n, coeffs, TorusValue::ZERO)?;
    let (tuples_checked, exhaustive) = verify_integral(&q, phi, cap, samples, seed)?;
    Ok(Integration::Integrated { q, tuples_checked, exhaustive })
}

#[derive(Clone, Debug, Serialize)]
pub enum BiasSubgroup {
    Found {
        /// Generators of `H`.
        gens: Vec<GroupElement>,
        size: u64,
        density: f64,
        bias: f64,
        /// Triples checked for vanishing on `H^3`.
        checked: u64,
    },
    BelowThreshold {
        bias: f64,
    },
}

/// Largest dimension of the `F_2`-spaces searched exhaustively at the base of the recursion.
pub const MAX_BASE_DIM: usize = 5;

/// `E_{x,y,z} e(phi) = P_{x,y}[phi(x, y, .) = 0]`, exactly.
pub fn trilinear_bias(phi: &MultilinearForm) -> f64 {
    let g = phi.group();
    let n = g.order();
    let e: Vec<GroupElement> = (0..phi.n).map(|i| g.element_at(unit(&g, i))).collect();
    let zeros: u64 = (0..n * n)
        .into_par_iter()
        .filter(|&t| {
            let (x, y) = (g.element_at(t / n), g.element_at(t % n));
            e.iter().all(|ez| phi.eval(&[&x, &y, ez]) == TorusValue::ZERO)
        })
        .count() as u64;
    zeros as f64 / (n * n) as f64
}

/// A subgroup `H` with `phi = 0` on `H^3`, built as in the structure argument: recurse on
/// `2 phi` over `G / 2^(d-1) G`, then search subspaces of `U' / 2U'` exhaustively.
pub fn trilinear_bias_subgroup(phi: &MultilinearForm, c: f64, cap: u64) -> Result<BiasSubgroup> {
    pre(phi.arity == 3, || "need a trilinear form".into())?;
    let bias = trilinear_bias(phi);
    if bias < c {
        return Ok(BiasSubgroup::BelowThreshold { bias });
    }
    let g = phi.group();
    let h = vanishing_subgroup(phi, cap)?;
    let hs = g.span(&h);
    pre((hs.len() as u128).pow(3) <= cap as u128, || "H^3 exceeds cap".into()).map_err(|e| HfaError::Budget(e.to_string()))?;
    let els: Vec<GroupElement> = hs.iter().map(|&x| g.element_at(x)).collect();
    let ok = els.par_iter().all(|x| els.iter().all(|y| els.iter().all(|z| phi.eval(&[x, y, z]) == TorusValue::ZERO)));
    if !ok {
        return Err(HfaError::Certificate("phi does not vanish on H^3".into()));
    }
    Ok(BiasSubgroup::Found {
        gens: h,
        size: hs.len() as u64,
        density: hs.len() as f64 / g.order() as f64,
        bias,
        checked: (hs.len() as u64).pow(3),
    })
}

fn vanishing_subgroup(phi: &MultilinearForm, cap: u64) -> Result<Vec<GroupElement>> {
    let g = phi.group();
    let q = 1u64 << phi.d;
    // U' = preimage of the subgroup found for 2 phi on G / 2^(d-1) G
    let u_prime: Vec<GroupElement> = if phi.d == 1 {
        (0..phi.n).map(|i| g.element_at(unit(&g, i))).collect()
    } else {
        let theta = MultilinearForm::new(phi.d - 1, phi.n, 3, phi.coeffs.clone())?;
        let u = vanishing_subgroup(&theta, cap)?;
        let mut gens: Vec<GroupElement> = u.into_iter().map(|x| GroupElement(x.0)).collect();
        for i in 0..phi.n {
            let mut c = vec![0i64; phi.n];
            c[i] = (q / 2) as i64;
            gens.push(g.element(&c)?);
        }
        gens
    };
    let up = g.span(&u_prime);
    pre(up.len() as u64 <= cap, || "U' exceeds cap".into())?;
    let two_up: Vec<GroupElement> = u_prime.iter().map(|x| g.scale(2, x)).collect();
    // F_2-basis of U' / 2U', lifted
    let mut basis: Vec<GroupElement> = Vec::new();
    let mut span_now = g.span(&two_up);
    for &x in &up {
        if span_now.binary_search(&x).is_err() {
            basis.push(g.element_at(x));
            let gens: Vec<GroupElement> = two_up.iter().cloned().chain(basis.iter().cloned()).collect();
            span_now = g.span(&gens);
        }
    }
    let m = basis.len();
    pre(m <= MAX_BASE_DIM, || format!("U'/2U' has dimension {m}, above {MAX_BASE_DIM}")).map_err(|e| HfaError::Budget(e.to_string()))?;
    let lift = |v: u32| -> GroupElement {
        basis.iter().enumerate().filter(|(i, _)| v >> i & 1 == 1).fold(g.zero(), |acc, (_, b)| g.add(&acc, b))
    };
    // psi vanishes on W^3 iff it vanishes on triples of a basis of W
    let vanishes = |w: &[u32]| {
        let l: Vec<GroupElement> = w.iter().map(|&v| lift(v)).collect();
        l.iter().all(|x| l.iter().all(|y| l.iter().all(|z| phi.eval(&[x, y, z]) == TorusValue::ZERO)))
    };
    let mut best: Vec<u32> = vec![];
    // subspaces by reduced echelon bases, largest dimension first
    for dim in (1..=m).rev() {
        if let Some(w) = echelon_bases(m, dim).into_iter().find(|w| vanishes(w)) {
            best = w;
            break;
        }
    }
    Ok(best.iter().map(|&v| lift(v)).chain(two_up).collect())
}

/// Reduced row echelon bases of all `dim`-dimensional subspaces of `F_2^m`, as bitmasks.
fn echelon_bases(m: usize, dim: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut pivots = vec![0usize; dim];
    fn rec(m: usize, dim: usize, start: usize, k: usize, pivots: &mut Vec<usize>, out: &mut Vec<Vec<u32>>) {
        if k == dim {
            let free: Vec<(usize, usize)> = (0..dim)
                .flat_map(|r| (pivots[r] + 1..m).filter(|c| !pivots.contains(c)).map(move |c| (r, c)))
                .collect();
            for mask in 0u64..(1 << free.len()) {
                let mut rows: Vec<u32> = pivots.iter().map(|&p| 1u32 << p).collect();
                for (b, &(r, c)) in free.iter().enumerate() {
                    if mask >> b & 1 == 1 {
                        rows[r] |= 1 << c;
                    }
                }
                out.push(rows);
            }
            return;
        }
        for p in start..m {
            pivots[k] = p;
            rec(m, dim, p + 1, k + 1, pivots, out);
        }
    }
    rec(m, dim, 0, 0, &mut pivots, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{gowers_norm, GroupFn};
    use proptest::prelude::*;

    const CAP: u64 = 1 << 26;

    fn tv(n: i64, d: i64) -> TorusValue {
        TorusValue::new(n, d)
    }

    fn el(g: &FinAbGroup, c: &[i64]) -> GroupElement {
        g.element(c).unwrap()
    }

    #[test]
    fn eval_examples() {
        let q = PolyPhase::new(2, 1, [(Monomial::Sq(0), 1)], TorusValue::ZERO).unwrap();
        assert_eq!(q.eval(&el(&q.group(), &[3])), tv(1, 8));
        let c = PolyPhase::new(3, 2, [], tv(2, 7)).unwrap();
        assert!(c.table().iter().all(|&v| v == tv(2, 7)));
        let cube = PolyPhase::new(3, 1, [(Monomial::Cube(0), 1)], TorusValue::ZERO).unwrap();
        assert_eq!(cube.eval(&el(&cube.group(), &[0])), TorusValue::ZERO);
    }

    #[test]
    fn derivative_examples() {
        let q = PolyPhase::new(2, 1, [(Monomial::Sq(0), 1)], TorusValue::ZERO).unwrap();
        let g = q.group();
        let t = q.table();
        assert_eq!(delta_at(&g, &t, 0, &[1, 1]), tv(1, 4));
        let c = PolyPhase::new(2, 1, [], tv(1, 3)).unwrap();
        assert!(derivative_table(&g, &c.table(), 1).iter().all(|&v| v == TorusValue::ZERO));
        let d = 3;
        let cube = PolyPhase::new(d, 1, [(Monomial::Cube(0), 1)], TorusValue::ZERO).unwrap();
        let g = cube.group();
        let t = cube.table();
        for x in 0..8 {
            for a in 0..8 {
                for b in 0..8 {
                    for c in 0..8 {
                        assert_eq!(delta_at(&g, &t, x, &[a, b, c]), tv((a * b * c) as i64, 8));
                    }
                }
            }
        }
    }

    /// Brute-force degree: every `(m+1)`-fold derivative at every point.
    fn degree_oracle(g: &FinAbGroup, t: &[TorusValue], m: usize) -> bool {
        let n = g.order();
        let total = n.pow(m as u32 + 2);
        (0..total).into_par_iter().all(|mut flat| {
            let x = flat % n;
            flat /= n;
            let dirs: Vec<u64> = (0..=m).map(|_| {
                let a = flat % n;
                flat /= n;
                a
            }).collect();
            delta_at(g, t, x, &dirs) == TorusValue::ZERO
        })
    }

    fn random_poly(d: u32, n: usize, max_deg: u32, r: &mut crate::rng::Rng) -> PolyPhase {
        let coeffs: Vec<(Monomial, i64)> = Monomial::all(n)
            .into_iter()
            .filter(|m| m.degree() <= max_deg)
            .map(|m| (m, r.gen_range(0..m.period(d))))
            .collect();
        let alpha = tv(r.gen_range(0..12), 12);
        PolyPhase::new(d, n, coeffs, alpha).unwrap()
    }

    #[test]
    fn degree_certificate_matches_oracle() {
        let mut r = rng::stream(1, "deg", 0);
        for (d, n) in [(2u32, 1usize), (2, 2), (3, 1)] {
            let g = FinAbGroup::power(1 << d, n);
            for _ in 0..3 {
                let q = random_poly(d, n, 3, &mut r);
                let t = q.table();
                for m in 0..4 {
                    assert_eq!(degree_witness(&g, &t, m, CAP).unwrap().is_none(), degree_oracle(&g, &t, m), "{q:?} m={m}");
                }
            }
            let noise: Vec<TorusValue> = (0..g.order()).map(|_| tv(r.gen_range(0..16), 16)).collect();
            for m in 0..4 {
                assert_eq!(degree_witness(&g, &noise, m, CAP).unwrap().is_none(), degree_oracle(&g, &noise, m));
            }
        }
    }

    #[test]
    fn polys_have_degree_three_and_are_periodic() {
        let mut r = rng::stream(2, "poly", 0);
        for (d, n) in [(2u32, 1usize), (2, 2), (3, 1), (2, 3), (3, 2), (5, 1)] {
            let g = FinAbGroup::power(1 << d, n);
            for _ in 0..8 {
                let q = random_poly(d, n, 3, &mut r);
                assert!(q.periodicity_check(CAP).unwrap());
                let t = q.table();
                if g.order().pow(5) <= 1 << 16 {
                    assert!(degree_oracle(&g, &t, 3));
                } else {
                    assert!(degree_witness(&g, &t, 3, CAP).unwrap().is_none());
                    assert!(degree_sampled(&g, &t, 3, 2000, 7).is_none());
                }
            }
        }
    }

    #[test]
    fn classify_examples() {
        let q = PolyPhase::new(2, 1, [(Monomial::Sq(0), 1)], TorusValue::ZERO).unwrap();
        let back = classify(2, 1, &q.table(), 3, CAP).unwrap().unwrap();
        assert_eq!(back, q);
        let c = vec![tv(3, 5); 16];
        let back = classify(2, 2, &c, 3, CAP).unwrap().unwrap();
        assert!(back.coeffs.is_empty() && back.alpha == tv(3, 5));
        // planted degree-4 term: binomial(x, 4) / 2 on Z/16 is periodic but quartic
        let g = FinAbGroup::cyclic(16);
        let quartic: Vec<TorusValue> = (0..16i64).map(|x| tv(x * (x - 1) * (x - 2) * (x - 3) / 24, 2)).collect();
        assert!(degree_witness(&g, &quartic, 4, CAP).unwrap().is_none());
        assert!(degree_witness(&g, &quartic, 3, CAP).unwrap().is_some());
        match classify(4, 1, &quartic, 3, CAP).unwrap() {
            Err(Refutation::Derivative(w)) => assert_ne!(w.value, "0"),
            other => panic!("expected a refutation, got {other:?}"),
        }
        // a degree-1 table with a denominator of 3 is not classical
        let third: Vec<TorusValue> = (0..4).map(|x| tv(x, 3)).collect();
        assert!(classify(2, 1, &third, 3, CAP).unwrap().is_err());
        assert!(classify(1, 1, &[TorusValue::ZERO; 2], 3, CAP).is_err());
    }

    #[test]
    fn classify_round_trip() {
        let mut r = rng::stream(3, "classify", 0);
        let mut count = 0;
        for (d, n) in [(2u32, 1usize), (2, 2), (3, 1), (3, 2), (2, 3)] {
            for _ in 0..200 {
                let q = random_poly(d, n, 3, &mut r);
                let back = classify(d, n, &q.table(), 3, CAP).unwrap().unwrap();
                assert_eq!(back, q);
                count += 1;
            }
        }
        assert_eq!(count, 1000);
        // a non-canonical coefficient classifies to the same function
        let big = PolyPhase::new(2, 1, [(Monomial::Cube(0), 5), (Monomial::Sq(0), 7)], TorusValue::ZERO).unwrap();
        let back = classify(2, 1, &big.table(), 3, CAP).unwrap().unwrap();
        assert_eq!(back.table(), big.table());
        assert!(back.coeffs.iter().all(|(m, &c)| c >= 0 && c < m.period(2)));
    }

    #[test]
    fn multilinear_examples() {
        let q = PolyPhase::new(2, 1, [(Monomial::Sq(0), 1)], TorusValue::ZERO).unwrap();
        let f = multilinear_from_poly(&q, 2, 200, 1, CAP).unwrap();
        assert_eq!(f.coeffs, vec![1]);
        let g = f.group();
        assert_eq!(f.eval(&[&el(&g, &[3]), &el(&g, &[2])]), tv(6, 4));
        let lin = PolyPhase::new(3, 2, [(Monomial::Lin(0), 3), (Monomial::Lin(1), 1)], tv(1, 2)).unwrap();
        assert!(multilinear_from_poly(&lin, 2, 100, 1, CAP).unwrap().coeffs.iter().all(|&c| c == 0));
        let cube = PolyPhase::new(3, 1, [(Monomial::Cube(0), 5)], TorusValue::ZERO).unwrap();
        assert_eq!(multilinear_from_poly(&cube, 3, 100, 1, CAP).unwrap().coeffs, vec![5]);
        assert!(multilinear_from_poly(&cube, 2, 100, 1, CAP).is_err());
        assert!(f.linearity_check(CAP, 100, 1));
        assert_eq!(f.coefficients_from_basis(), f.coeffs);
    }

    #[test]
    fn integrate_bilinear_examples() {
        let beta = MultilinearForm::new(2, 1, 2, vec![1]).unwrap();
        let r = integrate_bilinear(&beta, CAP, 100, 1).unwrap();
        let q = r.poly().unwrap();
        assert_eq!(q, &PolyPhase::new(2, 1, [(Monomial::Sq(0), 1)], TorusValue::ZERO).unwrap());
        let g = q.group();
        let t = q.table();
        assert_eq!(delta_at(&g, &t, 1, &[1, 3]), tv(3, 4));
        let zero = MultilinearForm::new(3, 2, 2, vec![0; 4]).unwrap();
        assert!(integrate_bilinear(&zero, CAP, 100, 1).unwrap().poly().unwrap().coeffs.is_empty());
        let mixed = MultilinearForm::new(3, 2, 2, vec![0, 1, 1, 0]).unwrap();
        let q = integrate_bilinear(&mixed, CAP, 100, 1).unwrap();
        assert_eq!(q.poly().unwrap(), &PolyPhase::new(3, 2, [(Monomial::Mixed(0, 1), 1)], TorusValue::ZERO).unwrap());
        let asym = MultilinearForm::new(3, 2, 2, vec![0, 1, 2, 0]).unwrap();
        assert!(matches!(integrate_bilinear(&asym, CAP, 100, 1).unwrap(), Integration::Obstructed { .. }));
    }

    #[test]
    fn integrate_trilinear_examples() {
        let phi = MultilinearForm::new(2, 1, 3, vec![1]).unwrap();
        let q = integrate_trilinear(&phi, CAP, 100, 1).unwrap();
        assert_eq!(q.poly().unwrap(), &PolyPhase::new(2, 1, [(Monomial::Cube(0), 1)], TorusValue::ZERO).unwrap());
        let zero = MultilinearForm::new(2, 2, 3, vec![0; 8]).unwrap();
        assert!(integrate_trilinear(&zero, CAP, 100, 1).unwrap().poly().unwrap().coeffs.is_empty());
        let half = MultilinearForm::new(2, 1, 3, vec![2]).unwrap();
        assert!(integrate_trilinear(&half, CAP, 100, 1).unwrap().poly().is_some());
        // lambda_112 = 1, lambda_122 = 0 breaks the parity condition
        let bad = MultilinearForm::from_fn(2, 2, 3, |idx| {
            let ones = idx.iter().filter(|&&i| i == 0).count();
            (ones == 2) as u64
        })
        .unwrap();
        match integrate_trilinear(&bad, CAP, 100, 1).unwrap() {
            Integration::Obstructed { criterion, .. } => assert!(criterion.contains("symmetric")),
            other => panic!("expected obstruction, got {other:?}"),
        }
    }

    /// Every `Delta^3` reachable from the cubic basis with full coefficient ranges, by direct
    /// evaluation at `x = 0`.
    fn reachable_trilinear(d: u32, n: usize) -> std::collections::HashSet<Vec<TorusValue>> {
        let g = FinAbGroup::power(1 << d, n);
        let cubic: Vec<Monomial> = Monomial::all(n).into_iter().filter(|m| m.degree() == 3).collect();
        let full = |m: &Monomial| if matches!(m, Monomial::Mu(..)) { 2 } else { 1i64 << d };
        let mut out = std::collections::HashSet::new();
        let sizes: Vec<i64> = cubic.iter().map(full).collect();
        let total: i64 = sizes.iter().product();
        let no = g.order();
        for mut t in 0..total {
            let coeffs: Vec<(Monomial, i64)> = cubic.iter().zip(&sizes).map(|(&m, &s)| {
                let c = t % s;
                t /= s;
                (m, c)
            }).collect();
            let q = PolyPhase::new(d, n, coeffs, TorusValue::ZERO).unwrap();
            let tab = q.table();
            let key: Vec<TorusValue> = (0..no.pow(3)).map(|f| delta_at(&g, &tab, 0, &[f / (no * no), f / no % no, f % no])).collect();
            out.insert(key);
        }
        out
    }

    fn form_table(phi: &MultilinearForm) -> Vec<TorusValue> {
        let g = phi.group();
        let no = g.order();
        (0..no.pow(3))
            .map(|f| phi.eval(&[&g.element_at(f / (no * no)), &g.element_at(f / no % no), &g.element_at(f % no)]))
            .collect()
    }

    fn check_trilinear_verdict(phi: &MultilinearForm, reach: &std::collections::HashSet<Vec<TorusValue>>) -> bool {
        let verdict = integrate_trilinear(phi, CAP, 100, 1).unwrap();
        let oracle = reach.contains(&form_table(phi));
        assert_eq!(verdict.poly().is_some(), oracle, "{phi:?}");
        oracle
    }

    #[test]
    fn trilinear_verdicts_match_oracle() {
        let reach = reachable_trilinear(2, 1);
        let hits = (0..4).filter(|&c| check_trilinear_verdict(&MultilinearForm::new(2, 1, 3, vec![c]).unwrap(), &reach)).count();
        assert_eq!(hits, 4);
        // (Z/4)^2: every symmetric tensor, plus random asymmetric ones
        let reach = reachable_trilinear(2, 2);
        let mut integrable = 0;
        for t in 0..256u64 {
            let l = [t % 4, t / 4 % 4, t / 16 % 4, t / 64];
            let phi = MultilinearForm::from_fn(2, 2, 3, |idx| l[idx.iter().sum::<usize>()]).unwrap();
            integrable += check_trilinear_verdict(&phi, &reach) as u32;
        }
        assert!(integrable > 0 && integrable < 256);
        let mut r = rng::stream(7, "asym", 0);
        for _ in 0..50 {
            let phi = MultilinearForm::new(2, 2, 3, (0..8).map(|_| r.gen_range(0..4)).collect()).unwrap();
            check_trilinear_verdict(&phi, &reach);
        }
    }

    #[test]
    fn gowers_norms_of_polynomial_phases() {
        let mut r = rng::stream(4, "gowers", 0);
        for (d, n) in [(2u32, 1usize), (2, 2), (3, 1)] {
            let g = FinAbGroup::power(1 << d, n);
            for deg in 1..=3u32 {
                let q = random_poly(d, n, deg, &mut r);
                let f = GroupFn::phase(&g, &q.table());
                let u = gowers_norm(&f, deg + 1, CAP, None).unwrap();
                assert!((u.value - 1.0).abs() < 1e-9, "{q:?}: {}", u.value);
            }
        }
    }

    #[test]
    fn bias_subgroup_examples() {
        let zero = MultilinearForm::new(2, 2, 3, vec![0; 8]).unwrap();
        match trilinear_bias_subgroup(&zero, 0.5, CAP).unwrap() {
            BiasSubgroup::Found { size, .. } => assert_eq!(size, 16),
            other => panic!("{other:?}"),
        }
        // x1 y1 z1 / 4 on (Z/4)^2
        let one = MultilinearForm::from_fn(2, 2, 3, |idx| idx.iter().all(|&i| i == 0) as u64).unwrap();
        let g = one.group();
        match trilinear_bias_subgroup(&one, 0.1, CAP).unwrap() {
            BiasSubgroup::Found { gens, bias, .. } => {
                assert_eq!(bias, 0.5);
                let h = g.span(&gens);
                let kernel = g.span(&[el(&g, &[0, 1])]);
                assert!(kernel.iter().all(|x| h.binary_search(x).is_ok()));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(trilinear_bias_subgroup(&one, 0.9, CAP).unwrap(), BiasSubgroup::BelowThreshold { .. }));
        let mut r = rng::stream(5, "bias", 0);
        for _ in 0..5 {
            let phi = MultilinearForm::new(3, 2, 3, (0..8).map(|_| r.gen_range(0..8)).collect()).unwrap();
            let b = trilinear_bias(&phi);
            match trilinear_bias_subgroup(&phi, b, CAP).unwrap() {
                BiasSubgroup::Found { density, .. } => assert!(density > 0.0),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn bias_matches_exponential_sum() {
        let mut r = rng::stream(6, "bias", 0);
        let phi = MultilinearForm::new(2, 2, 3, (0..8).map(|_| r.gen_range(0..4)).collect()).unwrap();
        let g = phi.group();
        let n = g.order();
        let mut s = 0.0;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let v = phi.eval(&[&g.element_at(x), &g.element_at(y), &g.element_at(z)]);
                    s += (2.0 * std::f64::consts::PI * v.to_f64()).cos();
                }
            }
        }
        assert!((s / (n * n * n) as f64 - trilinear_bias(&phi)).abs() < 1e-12);
    }

    #[test]
    fn spec_round_trip() {
        let q = PolyPhase::new(3, 2, [(Monomial::Mu(0, 1), 1), (Monomial::SqLin(1, 0), 2), (Monomial::Lin(1), 5)], tv(1, 3)).unwrap();
        let s = serde_json::to_string(&q.to_spec()).unwrap();
        assert!(s.contains("\"mu(1,2)\":1"));
        let back = PolyPhase::from_spec(&serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(back, q);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn bilinear_round_trip(a in 0u64..8, b in 0u64..8, c in 0u64..8) {
            let beta = MultilinearForm::new(3, 2, 2, vec![a, b, b, c]).unwrap();
            let q = integrate_bilinear(&beta, CAP, 100, 1).unwrap();
            let back = multilinear_from_poly(q.poly().unwrap(), 2, 200, 1, CAP).unwrap();
            prop_assert_eq!(back, beta);
        }

        #[test]
        fn fourth_derivative_vanishes(seed in 0u64..1000) {
            let mut r = rng::stream(seed, "prop", 0);
            let q = random_poly(2, 2, 3, &mut r);
            let g = q.group();
            let t = q.table();
            let dirs: Vec<u64> = (0..4).map(|_| r.gen_range(0..16)).collect();
            let x = r.gen_range(0..16);
            prop_assert_eq!(delta_at(&g, &t, x, &dirs), TorusValue::ZERO);
        }
    }
}
