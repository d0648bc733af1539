//! Freiman and E-homomorphisms on finite sets, respected additive quadruples, naive and
//! subgroup extensions, and the length-6 walk primitive on graphs.

use std::collections::{HashMap, HashSet};

use num_rational::Ratio;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bohr::{BohrSet, Radius};
use crate::error::{pre, HfaError, Result};
use crate::group::{Character, FinAbGroup, GroupElement};
use crate::progression::{bohr_to_progression, box_iter, SHORT_VECTOR_BUDGET};
use crate::rng;

/// A map from a finite subset of `G` into another finite abelian group `K`.
///
/// Torus-valued maps with a common denominator `L` are represented with `K = Z/L`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialMap {
    pub domain_group: FinAbGroup,
    pub codomain: FinAbGroup,
    /// Domain element index -> codomain element index.
    pub table: HashMap<u64, u64>,
}

/// JSON form: a list of `[x, phi(x)]` coordinate pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartialMapSpec {
    pub pairs: Vec<(Vec<i64>, Vec<i64>)>,
}

impl PartialMap {
    pub fn new(domain_group: &FinAbGroup, codomain: &FinAbGroup, pairs: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let mut table = HashMap::new();
        for (x, y) in pairs {
            pre(x < domain_group.order() && y < codomain.order(), || "map entry outside its group".into())?;
            if let Some(old) = table.insert(x, y) {
                pre(old == y, || format!("element {x} mapped twice"))?;
            }
        }
        Ok(PartialMap { domain_group: domain_group.clone(), codomain: codomain.clone(), table })
    }

    pub fn from_fn(domain_group: &FinAbGroup, codomain: &FinAbGroup, domain: &[u64], f: impl Fn(u64) -> u64) -> Result<Self> {
        Self::new(domain_group, codomain, domain.iter().map(|&x| (x, f(x))))
    }

    pub fn from_spec(domain_group: &FinAbGroup, codomain: &FinAbGroup, s: &PartialMapSpec) -> Result<Self> {
        let pairs = s
            .pairs
            .iter()
            .map(|(x, y)| Ok((domain_group.index_of(&domain_group.element(x)?), codomain.index_of(&codomain.element(y)?))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(domain_group, codomain, pairs)
    }

    pub fn to_spec(&self) -> PartialMapSpec {
        let coords = |g: &FinAbGroup, i: u64| g.element_at(i).0.iter().map(|&c| c as i64).collect();
        PartialMapSpec {
            pairs: self
                .domain()
                .into_iter()
                .map(|x| (coords(&self.domain_group, x), coords(&self.codomain, self.table[&x])))
                .collect(),
        }
    }

    /// Sorted domain indices.
    pub fn domain(&self) -> Vec<u64> {
        let mut d: Vec<u64> = self.table.keys().copied().collect();
        d.sort_unstable();
        d
    }

    pub fn get(&self, x: u64) -> Option<u64> {
        self.table.get(&x).copied()
    }

    /// `phi(a) + phi(b) - phi(c) - phi(d)` in `K`.
    fn residual(&self, a: u64, b: u64, c: u64, d: u64) -> u64 {
        let k = &self.codomain;
        let s = k.add_idx(self.table[&a], self.table[&b]);
        let t = k.add_idx(self.table[&c], self.table[&d]);
        k.add_idx(s, k.neg_idx(t))
    }

    fn check_budget(&self, cap: u64) -> Result<()> {
        let n = self.table.len() as u128;
        if n * n * n > cap as u128 {
            return Err(HfaError::Budget(format!("{} triples exceed cap {cap}", n * n * n)));
        }
        Ok(())
    }

    /// Calls `f(a, b, c, d)` for every `(a, b, c)` in the domain with `d = a + b - c` also in it,
    /// in lexicographic order of `(a, b, c)`; stops at the first `Some`.
    fn find_quadruple<T: Send>(&self, f: impl Fn(u64, u64, u64, u64) -> Option<T> + Sync) -> Option<T> {
        let g = &self.domain_group;
        let dom = self.domain();
        dom.par_iter().find_map_first(|&a| {
            for &b in &dom {
                let ab = g.add_idx(a, b);
                for &c in &dom {
                    let d = g.add_idx(ab, g.neg_idx(c));
                    if self.table.contains_key(&d) {
                        if let Some(t) = f(a, b, c, d) {
                            return Some(t);
                        }
                    }
                }
            }
            None
        })
    }
}

/// `E = <S>_{-1,0,1}` inside `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSet {
    pub group: FinAbGroup,
    pub gens: Vec<u64>,
}

/// Rank limit for the meet-in-the-middle membership search.
pub const MAX_ERROR_RANK: usize = 25;

impl ErrorSet {
    pub fn new(group: &FinAbGroup, gens: Vec<u64>) -> Result<Self> {
        pre(gens.iter().all(|&x| x < group.order()), || "generator outside K".into())?;
        Ok(ErrorSet { group: group.clone(), gens })
    }

    pub fn zero(group: &FinAbGroup) -> Self {
        ErrorSet { group: group.clone(), gens: vec![] }
    }

    pub fn rank(&self) -> usize {
        self.gens.len()
    }

    fn half_sums(&self, gens: &[u64]) -> Vec<u64> {
        let k = &self.group;
        let mut sums = vec![0u64];
        for &s in gens {
            let ns = k.neg_idx(s);
            sums = sums.iter().flat_map(|&t| [t, k.add_idx(t, s), k.add_idx(t, ns)]).collect();
        }
        sums
    }

    /// Membership by splitting the generators into two halves (`3^13 * 3^12` at rank 25).
    pub fn contains(&self, x: u64) -> Result<bool> {
        pre(self.rank() <= MAX_ERROR_RANK, || format!("error set rank {} above {MAX_ERROR_RANK}", self.rank()))?;
        let k = &self.group;
        let (left, right) = self.gens.split_at(self.rank().div_ceil(2));
        let ls: HashSet<u64> = self.half_sums(left).into_iter().collect();
        Ok(self.half_sums(right).into_iter().any(|r| ls.contains(&k.add_idx(x, k.neg_idx(r)))))
    }

    /// All of `E` as a bitmap over `K`, by closing under `+-s` one generator at a time.
    pub fn bitmap(&self, cap: u64) -> Result<Vec<bool>> {
        let k = &self.group;
        pre(k.order() <= cap, || "codomain exceeds cap".into())?;
        let mut cur = vec![false; k.order() as usize];
        cur[0] = true;
        for &s in &self.gens {
            let ns = k.neg_idx(s);
            let mut next = cur.clone();
            for (t, &on) in cur.iter().enumerate() {
                if on {
                    next[k.add_idx(t as u64, s) as usize] = true;
                    next[k.add_idx(t as u64, ns) as usize] = true;
                }
            }
            cur = next;
        }
        Ok(cur)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QuadrupleCheck {
    pub holds: bool,
    /// First `(a, b, c, d)` with `a + b = c + d` and `phi(a) + phi(b) != phi(c) + phi(d)`.
    pub witness: Option<[GroupElement; 4]>,
    pub residual: Option<GroupElement>,
}

fn witness(g: &FinAbGroup, q: [u64; 4]) -> [GroupElement; 4] {
    q.map(|x| g.element_at(x))
}

pub fn freiman_check(phi: &PartialMap, cap: u64) -> Result<QuadrupleCheck> {
    phi.check_budget(cap)?;
    let bad = phi.find_quadruple(|a, b, c, d| (phi.residual(a, b, c, d) != 0).then_some([a, b, c, d]));
    Ok(QuadrupleCheck {
        holds: bad.is_none(),
        residual: bad.map(|q| phi.codomain.element_at(phi.residual(q[0], q[1], q[2], q[3]))),
        witness: bad.map(|q| witness(&phi.domain_group, q)),
    })
}

/// Every quadruple residual must lie in `E`; reports the first residual outside it.
pub fn e_hom_check(phi: &PartialMap, e: &ErrorSet, cap: u64) -> Result<QuadrupleCheck> {
    phi.check_budget(cap)?;
    pre(phi.codomain == e.group, || "E lives in a different group".into())?;
    pre(e.rank() <= MAX_ERROR_RANK, || format!("error set rank {} above {MAX_ERROR_RANK}", e.rank()))?;
    let member: Vec<bool> = if e.group.order() <= cap {
        e.bitmap(cap)?
    } else {
        return Err(HfaError::Budget("codomain too large for an E-membership table".into()));
    };
    let bad = phi.find_quadruple(|a, b, c, d| {
        let r = phi.residual(a, b, c, d);
        (!member[r as usize]).then_some(([a, b, c, d], r))
    });
    Ok(QuadrupleCheck {
        holds: bad.is_none(),
        witness: bad.map(|(q, _)| witness(&phi.domain_group, q)),
        residual: bad.map(|(_, r)| phi.codomain.element_at(r)),
    })
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct QuadrupleCount {
    pub respected: u64,
    /// Additive energy of the domain.
    pub total: u64,
}

pub fn respected_quadruple_count(phi: &PartialMap, cap: u64) -> Result<QuadrupleCount> {
    phi.check_budget(cap)?;
    let g = &phi.domain_group;
    let dom = phi.domain();
    let (respected, total) = dom
        .par_iter()
        .map(|&a| {
            let mut r = 0u64;
            let mut t = 0u64;
            for &b in &dom {
                let ab = g.add_idx(a, b);
                for &c in &dom {
                    let d = g.add_idx(ab, g.neg_idx(c));
                    if phi.table.contains_key(&d) {
                        t += 1;
                        r += (phi.residual(a, b, c, d) == 0) as u64;
                    }
                }
            }
            (r, t)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    Ok(QuadrupleCount { respected, total })
}

/// Quadruple `(a1, a2, a3, a4)` with signs `(-, +, +, -)`: `a1 + a4 = a2 + a3`.
pub type Quadruple = [u64; 4];

pub fn s1(q: Quadruple) -> Quadruple {
    [q[2], q[3], q[0], q[1]]
}

pub fn s2(q: Quadruple) -> Quadruple {
    [q[1], q[0], q[3], q[2]]
}

pub fn s3(q: Quadruple) -> Quadruple {
    [q[0], q[2], q[1], q[3]]
}

/// Quadruples in the domain respected by `phi`, in the signed convention.
pub fn respected_quadruples(phi: &PartialMap, cap: u64) -> Result<HashSet<Quadruple>> {
    phi.check_budget(cap)?;
    let g = &phi.domain_group;
    let dom = phi.domain();
    let mut out = HashSet::new();
    for &a1 in &dom {
        for &a2 in &dom {
            for &a3 in &dom {
                let a4 = g.add_idx(g.add_idx(a2, a3), g.neg_idx(a1));
                if phi.table.contains_key(&a4) && phi.residual(a1, a4, a2, a3) == 0 {
                    out.insert([a1, a2, a3, a4]);
                }
            }
        }
    }
    Ok(out)
}

/// Closure of a quadruple collection under the three symmetries.
pub fn symmetry_closed(q: &HashSet<Quadruple>) -> bool {
    q.iter().all(|&x| q.contains(&s1(x)) && q.contains(&s2(x)) && q.contains(&s3(x)))
}

/// `|Q| >= c |X|^3`.
pub fn largeness(q: &HashSet<Quadruple>, c: f64, x_size: u64) -> bool {
    q.len() as f64 >= c * (x_size as f64).powi(3)
}

/// Weak transitivity for one pair `(Q_i, Q_j)` into `Q_ij`, with the pair-count threshold
/// `c' |X|` supplied by the caller; returns the first quadruple that should be in `Q_ij`
/// but is not.
pub fn weak_transitivity_violation(
    g: &FinAbGroup,
    a: &[u64],
    qi: &HashSet<Quadruple>,
    qj: &HashSet<Quadruple>,
    qij: &HashSet<Quadruple>,
    threshold: f64,
) -> Option<Quadruple> {
    let aset: HashSet<u64> = a.iter().copied().collect();
    for &a1 in a {
        for &a2 in a {
            for &a3 in a {
                let a4 = g.add_idx(g.add_idx(a2, a3), g.neg_idx(a1));
                if !aset.contains(&a4) || qij.contains(&[a1, a2, a3, a4]) {
                    continue;
                }
                let mut count = 0usize;
                for &b in a {
                    // (a1, a2, b, b') additive: b' = a2 + b - a1
                    let bp = g.add_idx(g.add_idx(a2, b), g.neg_idx(a1));
                    if aset.contains(&bp) && qi.contains(&[a1, a2, b, bp]) && qj.contains(&[b, bp, a3, a4]) {
                        count += 1;
                    }
                }
                if count as f64 >= threshold {
                    return Some([a1, a2, a3, a4]);
                }
            }
        }
    }
    None
}

/// Image size of `sum sign_i phi_i` on the intersection of the domains.
pub fn range_of_combination(maps: &[(i8, &PartialMap)]) -> Result<u64> {
    pre(!maps.is_empty(), || "at least one map".into())?;
    let k = &maps[0].1.codomain;
    pre(maps.iter().all(|(s, m)| &m.codomain == k && (*s == 1 || *s == -1)), || "maps must share a codomain; signs are +-1".into())?;
    let mut dom = maps[0].1.domain();
    for (_, m) in &maps[1..] {
        dom.retain(|x| m.table.contains_key(x));
    }
    let vals: HashSet<u64> = dom
        .iter()
        .map(|&x| {
            maps.iter().fold(0u64, |acc, (s, m)| {
                let v = m.table[&x];
                k.add_idx(acc, if *s == 1 { v } else { k.neg_idx(v) })
            })
        })
        .collect();
    Ok(vals.len() as u64)
}

#[derive(Clone, Debug, Serialize)]
pub struct SmallRange {
    pub zero_fraction: f64,
    pub values_on_half: u64,
    pub bound: f64,
    pub holds: bool,
}

/// Values of a Freiman-linear `phi` on `B(rho/2)` against `(200 d / c)^(d+1) (prod rho)^-d`.
pub fn small_range_check(phi: &PartialMap, b: &BohrSet, cap: u64) -> Result<SmallRange> {
    let members = b.members(cap)?;
    pre(members.iter().all(|x| phi.table.contains_key(x)), || "phi must be defined on all of B".into())?;
    let zeros = members.iter().filter(|x| phi.table[x] == 0).count();
    pre(zeros > 0, || "phi has no zeroes on B".into())?;
    let c = zeros as f64 / members.len() as f64;
    let half = b.dilate(Ratio::new(1, 2)).members(cap)?;
    let vals: HashSet<u64> = half.iter().map(|x| phi.table[x]).collect();
    let d = b.codim() as f64;
    let prod: f64 = b.radii.iter().map(|r| *r.numer() as f64 / *r.denom() as f64).product();
    let bound = (200.0 * d.max(1.0) / c).powf(d + 1.0) * prod.powf(-d);
    Ok(SmallRange { zero_fraction: c, values_on_half: vals.len() as u64, bound, holds: vals.len() as f64 <= bound })
}

/// Naive extension of a Freiman-linear map from `B(Gamma, rho)` to `<B(Gamma, rho')>`.
#[derive(Clone, Debug, Serialize)]
pub struct NaiveExtension {
    pub m: usize,
    pub rho_prime: String,
    pub subgroup_size: u64,
    /// Dissociated lattice vectors `mu_i`.
    pub mu: Vec<Vec<i64>>,
    pub sigma: Vec<u64>,
    pub sigma_prime: Vec<u64>,
    /// `2 d (2 d ln d + 10 + ln m)`.
    pub ell_bound: f64,
    pub lattice_points: u64,
    /// Extension values by element index of `G'`.
    #[serde(skip)]
    pub values: HashMap<u64, u64>,
    #[serde(skip)]
    pub inner: Vec<u64>,
    #[serde(skip)]
    pub codomain: Option<FinAbGroup>,
    #[serde(skip)]
    phi: HashMap<u64, u64>,
}

impl NaiveExtension {
    pub fn ell(&self) -> usize {
        self.mu.len()
    }

    /// `S = {sigma_i} ∪ {sigma'_i}`.
    pub fn error_set(&self) -> ErrorSet {
        let k = self.codomain.clone().expect("codomain set at construction");
        ErrorSet { group: k, gens: self.sigma.iter().chain(&self.sigma_prime).copied().collect() }
    }

    pub fn value(&self, y: u64) -> Option<u64> {
        self.values.get(&y).copied()
    }
}

/// Reachable-set cap for the dissociated-set construction.
pub const DISSOCIATED_SPAN_CAP: usize = 4_000_000;

/// Builds `phi~(y) = phi(x_1) + ... + phi(x_m)` from a fixed decomposition per `y`, and the
/// error generators `sigma_i = sum mu_ij phi(e_j)`, `sigma'_i = phi(sum mu_ij e_j)`.
///
/// Decompositions come from a breadth-first search over `k`-fold sums of `B(rho')`, taking
/// the first parent found in index order. The dissociated set is greedy in lexicographic
/// order over the lattice box.
pub fn naive_extension(phi: &PartialMap, b: &BohrSet, m: usize, cap: u64) -> Result<NaiveExtension> {
    let g = &b.group;
    let k = &phi.codomain;
    pre(phi.domain_group == *g, || "phi and B live in different groups".into())?;
    pre(m >= 1, || "m must be positive".into())?;
    let members = b.members(cap)?;
    pre(members.len() == phi.table.len() && members.iter().all(|x| phi.table.contains_key(x)), || {
        "phi must be defined exactly on B".into()
    })?;
    pre(phi.table[&0] == 0, || "phi must be Freiman-linear (phi(0) = 0)".into())?;
    let d = b.codim();
    let f = if d == 0 { 1 } else { (d as i64).pow(2 * d as u32) };
    let rho_prime: Vec<Radius> = b.radii.iter().map(|r| r / f).collect();
    let inner = b.with_radii(rho_prime.clone()).members(cap)?;
    let span = g.span(&inner.iter().map(|&x| g.element_at(x)).collect::<Vec<_>>());
    // parent[y] = (previous partial sum, summand)
    let mut parent: HashMap<u64, (u64, u64)> = HashMap::new();
    let mut reached: Vec<u64> = vec![0];
    let mut seen: HashSet<u64> = [0].into_iter().collect();
    for _ in 0..m {
        let mut next = Vec::new();
        for &y in &reached {
            for &x in &inner {
                let z = g.add_idx(y, x);
                if seen.insert(z) {
                    parent.insert(z, (y, x));
                    next.push(z);
                }
            }
        }
        reached.extend(next);
        reached.sort_unstable();
    }
    if reached.len() != span.len() {
        return Err(HfaError::Precondition(format!(
            "closure fails: {m}-fold sums of B(rho') reach {} of {} elements",
            reached.len(),
            span.len()
        )));
    }
    let mut values = HashMap::with_capacity(reached.len());
    for &y in &reached {
        let mut acc = 0u64;
        let mut cur = y;
        while cur != 0 {
            let (prev, x) = parent[&cur];
            acc = k.add_idx(acc, phi.table[&x]);
            cur = prev;
        }
        values.insert(y, acc);
    }
    let ell_bound = if d == 0 {
        0.0
    } else {
        let df = d as f64;
        2.0 * df * (2.0 * df * df.ln() + 10.0 + (m as f64).ln())
    };
    let mut ext = NaiveExtension {
        m,
        rho_prime: rho_prime.first().map(crate::bohr::fmt_ratio).unwrap_or_else(|| "-".into()),
        subgroup_size: span.len() as u64,
        mu: vec![],
        sigma: vec![],
        sigma_prime: vec![],
        ell_bound,
        lattice_points: 0,
        values,
        inner,
        codomain: Some(k.clone()),
        phi: phi.table.clone(),
    };
    if d == 0 {
        return Ok(ext);
    }
    let sw = bohr_to_progression(b, cap, SHORT_VECTOR_BUDGET)?;
    if !sw.ok() {
        return Err(HfaError::Certificate("progression sandwich failed verification".into()));
    }
    let e_gens: Vec<u64> = sw.c.gens.iter().map(|v| g.index_of(&g.element(v).expect("valid"))).collect();
    let e = g.exponent() as i64;
    let dp = e_gens.len();
    if dp == 0 {
        return Ok(ext);
    }
    let ranges: Vec<(i64, i64)> = sw.big.lens.iter().map(|&l| {
        let r = 2 * m as i64 * l as i64;
        (-r, r)
    }).collect();
    let box_size: u128 = ranges.iter().map(|&(lo, hi)| (hi - lo + 1) as u128).product();
    pre(box_size <= cap as u128, || format!("lattice box of {box_size} points exceeds cap"))?;
    // lambda in Lambda  <=>  sum lambda_j w_j = 0 mod exponent in every coordinate
    let in_h = |lam: &[i64]| (0..sw.w[0].len()).all(|i| (0..dp).map(|j| lam[j] * sw.w[j][i]).sum::<i64>().rem_euclid(e) == 0);
    let mut reach: HashSet<Vec<i64>> = [vec![0; dp]].into_iter().collect();
    let mut mu: Vec<Vec<i64>> = Vec::new();
    let mut points = 0u64;
    for lam in box_iter(&ranges) {
        if lam.iter().all(|&v| v == 0) || !in_h(&lam) {
            continue;
        }
        points += 1;
        if reach.contains(&lam) {
            continue;
        }
        let mut next = reach.clone();
        for r in &reach {
            next.insert(r.iter().zip(&lam).map(|(a, b)| a + b).collect());
            next.insert(r.iter().zip(&lam).map(|(a, b)| a - b).collect());
        }
        if next.len() > DISSOCIATED_SPAN_CAP {
            return Err(HfaError::Budget("dissociated span exceeds its cap".into()));
        }
        reach = next;
        mu.push(lam);
    }
    let phi_at = |x: u64| phi.table.get(&x).copied().ok_or_else(|| HfaError::Certificate(format!("phi undefined at {x}")));
    for row in &mu {
        let mut s = 0u64;
        let mut arg = 0u64;
        for (j, &c) in row.iter().enumerate() {
            s = k.add_idx(s, k.index_of(&k.scale(c, &k.element_at(phi_at(e_gens[j])?))));
            arg = g.add_idx(arg, g.index_of(&g.scale(c, &g.element_at(e_gens[j]))));
        }
        ext.sigma.push(s);
        ext.sigma_prime.push(phi_at(arg)?);
    }
    ext.mu = mu;
    ext.lattice_points = points;
    Ok(ext)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtensionAudit {
    pub samples: u64,
    pub failures: u64,
    pub ell: usize,
    pub s_size: usize,
    pub ell_bound: f64,
    pub size_ok: bool,
}

/// Samples `m`-tuples from `B(rho')` and checks `phi~(sum x_i) - sum phi(x_i)` lies in `<S>`.
pub fn audit_naive_extension(ext: &NaiveExtension, g: &FinAbGroup, samples: u64, seed: u64, cap: u64) -> Result<ExtensionAudit> {
    let s = ext.error_set();
    let k = &s.group;
    let member = s.bitmap(cap)?;
    let failures: u64 = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, "naive_extension", i);
            let mut y = 0u64;
            let mut sum = 0u64;
            for _ in 0..ext.m {
                let x = ext.inner[r.gen_range(0..ext.inner.len())];
                y = g.add_idx(y, x);
                sum = k.add_idx(sum, ext.phi[&x]);
            }
            let defect = k.add_idx(ext.values[&y], k.neg_idx(sum));
            (!member[defect as usize]) as u64
        })
        .sum();
    let s_size = 2 * ext.ell();
    Ok(ExtensionAudit {
        samples,
        failures,
        ell: ext.ell(),
        s_size,
        ell_bound: ext.ell_bound,
        size_ok: s_size as f64 <= 2.0 * ext.ell_bound || ext.ell() == 0,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SubgroupExtension {
    /// Index `M = [G : H]`.
    pub index: u64,
    /// Coset basis `x_i` of `G/H` with orders `d_i`.
    pub coset_basis: Vec<(GroupElement, u64)>,
    pub k_gens: Vec<u64>,
    /// Number of copies in `m(E + {0, phi(0)})`.
    pub m: usize,
    pub e_prime_size: u64,
    pub quadruples_checked: u64,
    pub failures: u64,
    #[serde(skip)]
    pub values: HashMap<u64, u64>,
}

/// Extends an `E`-homomorphism on `H ∩ B(Gamma, rho)`, `H = ker chi`, to `B(Gamma, rho/16)` by
/// `phi~ = phi ∘ pi`, with `pi(g) = g - sum lambda_i(g) x_i` for a coset basis `x_i` drawn from
/// `B(Gamma, rho/16M^2)`.
///
/// The independence condition is checked with the supplied span bound `r_span`.
#[allow(clippy::too_many_arguments)]
pub fn subgroup_e_extension(
    phi: &PartialMap,
    e: &ErrorSet,
    chi: &[Character],
    b: &BohrSet,
    r_span: i64,
    samples: u64,
    seed: u64,
    cap: u64,
) -> Result<SubgroupExtension> {
    let g = &b.group;
    let kk = &phi.codomain;
    pre(phi.domain_group == *g && e.group == *kk, || "groups do not match".into())?;
    let n = g.order();
    g.enumerate_capped(cap).map(|_| ())?;
    let in_h = |x: u64| {
        let xe = g.element_at(x);
        chi.iter().all(|c| g.char_eval_num(&c.0, &xe.0) == 0)
    };
    let h: Vec<u64> = (0..n).filter(|&x| in_h(x)).collect();
    let index = n / h.len() as u64;
    // <chi>_[-M, M] ∩ <Gamma>_R = {0}
    let left = crate::progression::bounded_char_span(g, chi, index as i64);
    let right = crate::progression::bounded_char_span(g, &b.freqs, r_span);
    let zero = vec![0u64; g.rank()];
    if let Some(bad) = left.iter().find(|v| **v != zero && right.contains(*v)) {
        return Err(HfaError::Precondition(format!("independence condition fails at {bad:?}")));
    }
    let domain: Vec<u64> = b.members(cap)?.into_iter().filter(|&x| in_h(x)).collect();
    pre(domain.iter().all(|x| phi.table.contains_key(x)), || "phi must be defined on H ∩ B".into())?;
    let hom = e_hom_check(phi, e, cap)?;
    pre(hom.holds, || "phi is not an E-homomorphism".into())?;
    // Coset basis: repeatedly take y of maximal order modulo S + H whose own order modulo H matches.
    let mut basis: Vec<(u64, u64)> = Vec::new();
    let mut sh: Vec<bool> = vec![false; n as usize];
    for &x in &h {
        sh[x as usize] = true;
    }
    let order_mod = |y: u64, set: &[bool]| -> u64 {
        let mut acc = y;
        let mut k = 1;
        while !set[acc as usize] {
            acc = g.add_idx(acc, y);
            k += 1;
        }
        k
    };
    let mut h_ind = vec![false; n as usize];
    for &x in &h {
        h_ind[x as usize] = true;
    }
    loop {
        let best = (0..n).map(|y| order_mod(y, &sh)).max().unwrap_or(1);
        if best == 1 {
            break;
        }
        let y = (0..n)
            .find(|&y| order_mod(y, &sh) == best && order_mod(y, &h_ind) == best)
            .ok_or_else(|| HfaError::Certificate("no pure lift for the coset basis".into()))?;
        basis.push((y, best));
        let gens: Vec<GroupElement> = h.iter().chain(basis.iter().map(|(y, _)| y)).map(|&x| g.element_at(x)).collect();
        sh = vec![false; n as usize];
        for x in g.span(&gens) {
            sh[x as usize] = true;
        }
    }
    // Move each x_i into B(rho / 16 M^2) within its H-coset.
    let tiny = b.dilate(Ratio::new(1, 16 * (index * index) as i64)).indicator(cap)?;
    for (x, _) in basis.iter_mut() {
        let rep = h
            .iter()
            .map(|&hh| g.add_idx(*x, hh))
            .filter(|&z| tiny[z as usize])
            .min()
            .ok_or_else(|| HfaError::Certificate("a coset of H misses B(rho/16M^2)".into()))?;
        *x = rep;
    }
    // lambda(g) for every coset, keyed by the least element of g + H.
    let coset_key = |x: u64| h.iter().map(|&hh| g.add_idx(x, hh)).min().expect("0 in H");
    let mut lambda_of: HashMap<u64, Vec<i64>> = HashMap::new();
    for lam in box_iter(&basis.iter().map(|&(_, d)| (0, d as i64 - 1)).collect::<Vec<_>>()) {
        let mut acc = 0u64;
        for (l, (x, _)) in lam.iter().zip(&basis) {
            acc = g.add_idx(acc, g.index_of(&g.scale(*l, &g.element_at(*x))));
        }
        lambda_of.insert(coset_key(acc), lam);
    }
    pre(lambda_of.len() as u64 == index, || "coset basis does not cover G/H".into())?;
    let pi = |x: u64| -> u64 {
        let lam = &lambda_of[&coset_key(x)];
        let mut acc = x;
        for (l, (xi, _)) in lam.iter().zip(&basis) {
            acc = g.add_idx(acc, g.index_of(&g.scale(-*l, &g.element_at(*xi))));
        }
        acc
    };
    let target = b.dilate(Ratio::new(1, 16)).members(cap)?;
    let mut values = HashMap::with_capacity(target.len());
    for &x in &target {
        let p = pi(x);
        let v = phi.get(p).ok_or_else(|| HfaError::Certificate(format!("pi({x}) = {p} falls outside the domain of phi")))?;
        values.insert(x, v);
    }
    let k_gens: Vec<u64> = basis
        .iter()
        .map(|&(x, d)| {
            let ht = g.index_of(&g.scale(d as i64, &g.element_at(x)));
            phi.get(ht).ok_or_else(|| HfaError::Certificate("d_i x_i outside the domain of phi".into()))
        })
        .collect::<Result<_>>()?;
    let m = basis.len() + 1;
    // E' = m(E + {0, phi(0)}) - m(E + {0, phi(0)}) + <k_i>
    let ebits = e.bitmap(cap)?;
    let phi0 = phi.get(0).ok_or_else(|| HfaError::Input("phi must be defined at 0".into()))?;
    let base: Vec<u64> = (0..kk.order()).filter(|&t| ebits[t as usize]).flat_map(|t| [t, kk.add_idx(t, phi0)]).collect();
    let mut acc: HashSet<u64> = [0].into_iter().collect();
    for _ in 0..m {
        acc = acc.iter().flat_map(|&a| base.iter().map(move |&t| kk.add_idx(a, t))).collect();
    }
    let diff: HashSet<u64> = acc.iter().flat_map(|&a| acc.iter().map(move |&c| kk.add_idx(a, kk.neg_idx(c)))).collect();
    let kspan = ErrorSet::new(kk, k_gens.clone())?.bitmap(cap)?;
    let kspan: Vec<u64> = (0..kk.order()).filter(|&t| kspan[t as usize]).collect();
    let mut e_prime = vec![false; kk.order() as usize];
    for &a in &diff {
        for &t in &kspan {
            e_prime[kk.add_idx(a, t) as usize] = true;
        }
    }
    let ext = PartialMap { domain_group: g.clone(), codomain: kk.clone(), table: values.clone() };
    let dom = ext.domain();
    let t = dom.len() as u64;
    let exhaustive = (t as u128).pow(3) <= cap as u128 && (t as u128).pow(3) <= samples as u128 * 8;
    let (checked, failures) = if exhaustive {
        let c = respected_or_in(&ext, &e_prime);
        (c.0, c.1)
    } else {
        (0..samples)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(seed, "subgroup_e_extension", i);
                let a = dom[r.gen_range(0..dom.len())];
                let bb = dom[r.gen_range(0..dom.len())];
                let c = dom[r.gen_range(0..dom.len())];
                let d = g.add_idx(g.add_idx(a, bb), g.neg_idx(c));
                match values.get(&d) {
                    Some(_) => (1u64, (!e_prime[ext.residual(a, bb, c, d) as usize]) as u64),
                    None => (0, 0),
                }
            })
            .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1))
    };
    Ok(SubgroupExtension {
        index,
        coset_basis: basis.iter().map(|&(x, d)| (g.element_at(x), d)).collect(),
        k_gens,
        m,
        e_prime_size: e_prime.iter().filter(|&&v| v).count() as u64,
        quadruples_checked: checked,
        failures,
        values,
    })
}

fn respected_or_in(phi: &PartialMap, allowed: &[bool]) -> (u64, u64) {
    let g = &phi.domain_group;
    let dom = phi.domain();
    dom.par_iter()
        .map(|&a| {
            let mut n = 0;
            let mut bad = 0;
            for &b in &dom {
                let ab = g.add_idx(a, b);
                for &c in &dom {
                    let d = g.add_idx(ab, g.neg_idx(c));
                    if phi.table.contains_key(&d) {
                        n += 1;
                        bad += (!allowed[phi.residual(a, b, c, d) as usize]) as u64;
                    }
                }
            }
            (n, bad)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1))
}

/// Simple undirected graph on `0..n`, no loops.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub n: usize,
    adj: Vec<Vec<bool>>,
}

impl Graph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        pre(n <= 1000, || "graphs are limited to 1000 vertices".into())?;
        let mut adj = vec![vec![false; n]; n];
        for &(u, v) in edges {
            pre(u < n && v < n && u != v, || format!("bad edge {u}-{v}"))?;
            adj[u][v] = true;
            adj[v][u] = true;
        }
        Ok(Graph { n, adj })
    }

    /// Edge-list text: first line `n`, then one `u v` pair per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(|l| l.split('#').next().unwrap_or("").trim()).filter(|l| !l.is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| HfaError::Input("empty graph file".into()))?
            .parse()
            .map_err(|_| HfaError::Input("first line must be the vertex count".into()))?;
        let mut edges = Vec::new();
        for l in lines {
            let mut it = l.split_whitespace().map(|t| t.parse::<usize>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(u)), Some(Ok(v)), None) => edges.push((u, v)),
                _ => return Err(HfaError::Input(format!("bad edge line {l:?}"))),
            }
        }
        Self::new(n, &edges)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|r| r.iter().filter(|&&b| b).count()).sum::<usize>() / 2
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].iter().filter(|&&b| b).count()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u][v]
    }

    fn matrix(&self) -> Vec<Vec<u64>> {
        self.adj.iter().map(|r| r.iter().map(|&b| b as u64).collect()).collect()
    }
}

fn matmul(a: &[Vec<u64>], b: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let n = a.len();
    a.par_iter()
        .map(|row| {
            let mut out = vec![0u64; n];
            for (k, &x) in row.iter().enumerate() {
                if x != 0 {
                    for (o, &y) in out.iter_mut().zip(&b[k]) {
                        *o += x * y;
                    }
                }
            }
            out
        })
        .collect()
}

/// `A^6` for the adjacency matrix.
pub fn walks6_matrix(gr: &Graph) -> Vec<Vec<u64>> {
    let a = gr.matrix();
    let a2 = matmul(&a, &a);
    let a3 = matmul(&a2, &a);
    matmul(&a3, &a3)
}

/// `(A^6)_{uv}`: walks with 6 edges from `u` to `v`.
pub fn count_paths_len6(gr: &Graph, u: usize, v: usize) -> u64 {
    walks6_matrix(gr)[u][v]
}

#[derive(Clone, Debug, Serialize)]
pub struct RobustSubset {
    pub x: Vec<usize>,
    pub size_bound: f64,
    pub walk_bound: f64,
    pub min_walks: u64,
    pub size_ok: bool,
    pub walks_ok: bool,
    /// Vertices removed, in order.
    pub trace: Vec<usize>,
}

/// Vertex set in which every pair is joined by at least `2^-35 c^9 n^5` six-step walks.
///
/// Starts from vertices of degree at least `c n`, then repeatedly deletes the vertex with
/// the most deficient partners (ties to the larger index) until no deficient pair is left.
pub fn robust_subset(gr: &Graph, c: f64) -> Result<RobustSubset> {
    let n = gr.n;
    pre(n > 0 && c > 0.0, || "need a nonempty graph and c > 0".into())?;
    pre(gr.edge_count() as f64 >= c * (n * n) as f64, || format!("graph has {} edges, fewer than c n^2", gr.edge_count()))?;
    let w = walks6_matrix(gr);
    let nf = n as f64;
    let walk_bound = 2f64.powi(-35) * c.powi(9) * nf.powi(5);
    let size_bound = 2f64.powi(-5) * c * nf;
    let mut alive: Vec<bool> = (0..n).map(|v| gr.degree(v) as f64 >= c * nf).collect();
    let mut trace = Vec::new();
    loop {
        let xs: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
        let bad: Vec<usize> = xs.iter().map(|&u| xs.iter().filter(|&&v| (w[u][v] as f64) < walk_bound).count()).collect();
        let worst = bad.iter().enumerate().max_by_key(|&(i, &b)| (b, i));
        match worst {
            Some((i, &b)) if b > 0 => {
                alive[xs[i]] = false;
                trace.push(xs[i]);
            }
            _ => break,
        }
    }
    let x: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
    if x.is_empty() {
        return Err(HfaError::Certificate(format!("pruning emptied the graph; removed {trace:?}")));
    }
    let min_walks = x.iter().flat_map(|&u| x.iter().map(move |&v| (u, v))).map(|(u, v)| w[u][v]).min().unwrap_or(0);
    Ok(RobustSubset {
        size_ok: x.len() as f64 >= size_bound,
        walks_ok: min_walks as f64 >= walk_bound,
        x,
        size_bound,
        walk_bound,
        min_walks,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CAP: u64 = 1 << 26;

    fn z(n: u64) -> FinAbGroup {
        FinAbGroup::cyclic(n)
    }

    #[test]
    fn freiman_examples() {
        let g = z(5);
        let phi = PartialMap::new(&g, &g, [(0, 0), (1, 0), (2, 1)]).unwrap();
        let r = freiman_check(&phi, CAP).unwrap();
        assert!(!r.holds);
        let w: Vec<u64> = r.witness.unwrap().iter().map(|x| x.0[0]).collect();
        assert_eq!(w, vec![0, 2, 1, 1]);
        let hom = PartialMap::from_fn(&z(12), &z(4), &[0, 2, 3, 7, 9], |x| x % 4).unwrap();
        assert!(freiman_check(&hom, CAP).unwrap().holds);
        let two = PartialMap::new(&g, &g, [(0, 3), (4, 1)]).unwrap();
        // |A| <= 2: the only quadruples are trivial rearrangements
        assert!(freiman_check(&two, CAP).unwrap().holds);
    }

    #[test]
    fn e_hom_examples() {
        let g = z(7);
        let k = z(5);
        let phi = PartialMap::from_fn(&g, &k, &[0, 1, 2, 3], |x| (x * x) % 5).unwrap();
        let all = ErrorSet::new(&k, vec![1]).unwrap();
        let mut full = all.clone();
        full.gens.push(2);
        assert!(e_hom_check(&phi, &full, CAP).unwrap().holds);
        let lin = PartialMap::from_fn(&g, &k, &[0, 1, 2, 3], |x| (2 * x) % 5).unwrap();
        assert!(e_hom_check(&lin, &ErrorSet::zero(&k), CAP).unwrap().holds);
        // planted error in {-1, 0, 1}
        let big = z(101);
        let noisy = PartialMap::from_fn(&z(101), &big, &(0..20).collect::<Vec<_>>(), |x| (3 * x + (x % 2)) % 101).unwrap();
        let e = ErrorSet::new(&big, vec![1]).unwrap();
        assert!(!freiman_check(&noisy, CAP).unwrap().holds);
        let e2 = ErrorSet::new(&big, vec![1, 1]).unwrap();
        assert!(e_hom_check(&noisy, &e2, CAP).unwrap().holds);
        let r = e_hom_check(&noisy, &e, CAP).unwrap();
        assert!(!r.holds);
        assert!([2u64, 99].contains(&r.residual.unwrap().0[0]));
    }

    #[test]
    fn error_set_membership_agrees() {
        let k = z(1000);
        let e = ErrorSet::new(&k, vec![1, 10, 100, 7, 333]).unwrap();
        let bm = e.bitmap(CAP).unwrap();
        for x in 0..1000 {
            assert_eq!(e.contains(x).unwrap(), bm[x as usize]);
        }
        assert!(ErrorSet::new(&k, vec![1; 26]).unwrap().contains(0).is_err());
    }

    /// Independent four-loop oracle for respected and total counts.
    fn count_oracle(phi: &PartialMap) -> QuadrupleCount {
        let g = &phi.domain_group;
        let k = &phi.codomain;
        let dom = phi.domain();
        let (mut r, mut t) = (0, 0);
        for &a in &dom {
            for &b in &dom {
                for &c in &dom {
                    for &d in &dom {
                        if g.add_idx(a, b) == g.add_idx(c, d) {
                            t += 1;
                            if k.add_idx(phi.table[&a], phi.table[&b]) == k.add_idx(phi.table[&c], phi.table[&d]) {
                                r += 1;
                            }
                        }
                    }
                }
            }
        }
        QuadrupleCount { respected: r, total: t }
    }

    #[test]
    fn respected_counts() {
        let g = FinAbGroup::new(vec![2, 4]).unwrap();
        let sub: Vec<u64> = g.span(&[g.element(&[0, 2]).unwrap(), g.element(&[1, 0]).unwrap()]);
        let phi = PartialMap::from_fn(&g, &z(2), &sub, |x| g.element_at(x).0[0]).unwrap();
        let c = respected_quadruple_count(&phi, CAP).unwrap();
        assert_eq!(c, QuadrupleCount { respected: 64, total: 64 });
        let p = z(101);
        let interval: Vec<u64> = (0..30).collect();
        let lin = PartialMap::from_fn(&p, &z(1000), &interval, |x| 7 * x).unwrap();
        let c = respected_quadruple_count(&lin, CAP).unwrap();
        assert_eq!(c.respected, c.total);
        let mut r = rng::stream(3, "t", 0);
        for _ in 0..5 {
            let dom: Vec<u64> = (0..40).filter(|_| r.gen_bool(0.5)).collect();
            let vals: Vec<u64> = (0..40).map(|_| r.gen_range(0..3)).collect();
            let phi = PartialMap::from_fn(&z(40), &z(3), &dom, |x| vals[x as usize]).unwrap();
            assert_eq!(respected_quadruple_count(&phi, CAP).unwrap(), count_oracle(&phi));
        }
    }

    #[test]
    fn symmetries_preserve_respected_set() {
        let mut r = rng::stream(9, "sym", 0);
        for _ in 0..10 {
            let dom: Vec<u64> = (0..16).filter(|_| r.gen_bool(0.6)).collect();
            let vals: Vec<u64> = (0..16).map(|_| r.gen_range(0..2)).collect();
            let phi = PartialMap::from_fn(&z(16), &z(2), &dom, |x| vals[x as usize]).unwrap();
            let q = respected_quadruples(&phi, CAP).unwrap();
            assert!(symmetry_closed(&q));
            let c = respected_quadruple_count(&phi, CAP).unwrap();
            assert_eq!(q.len() as u64, c.respected);
            assert!(largeness(&q, 0.0, dom.len() as u64));
            // Q ⊆ Q with threshold 1: composing two respected quadruples is respected.
            assert!(weak_transitivity_violation(&z(16), &dom, &q, &q, &q, 1.0).is_none());
        }
    }

    #[test]
    fn range_examples() {
        let g = z(31);
        let dom: Vec<u64> = (0..10).chain(25..31).collect();
        let zero = PartialMap::from_fn(&g, &z(7), &dom, |_| 0).unwrap();
        assert_eq!(range_of_combination(&[(1, &zero)]).unwrap(), 1);
        let f = PartialMap::from_fn(&g, &z(7), &dom, |x| (x * 3) % 7).unwrap();
        assert_eq!(range_of_combination(&[(1, &f), (-1, &f)]).unwrap(), 1);
        let h = PartialMap::from_fn(&g, &z(7), &dom[..12], |x| (x * 5) % 7).unwrap();
        let oracle: HashSet<u64> = dom[..12].iter().map(|&x| (x * 3 + 7 * 7 - x * 5 % 7) % 7).collect();
        assert_eq!(range_of_combination(&[(1, &f), (-1, &h)]).unwrap(), oracle.len() as u64);
    }

    /// `x -> c * lift(gamma x)` with `lift` the centred representative; Freiman-linear below radius 1/4.
    fn lift_map(b: &BohrSet, k: &FinAbGroup, coefs: &[i64], cap: u64) -> PartialMap {
        let g = &b.group;
        let e = g.exponent() as i64;
        PartialMap::from_fn(g, k, &b.members(cap).unwrap(), |x| {
            let xe = g.element_at(x);
            let mut acc = 0i64;
            for (c, f) in coefs.iter().zip(&b.freqs) {
                let v = g.char_eval_num(&f.0, &xe.0) as i64;
                let l = if 2 * v > e { v - e } else { v };
                acc += c * l;
            }
            acc.rem_euclid(k.order() as i64) as u64
        })
        .unwrap()
    }

    #[test]
    fn small_range_extension() {
        let b = BohrSet::constant(&z(101), vec![Character(vec![1])], Ratio::new(1, 5)).unwrap();
        let phi = lift_map(&b, &z(3), &[1], CAP);
        assert!(freiman_check(&phi, CAP).unwrap().holds);
        let r = small_range_check(&phi, &b, CAP).unwrap();
        assert!(r.holds && r.values_on_half == 3);
    }

    #[test]
    fn naive_extension_examples() {
        // B a subgroup, phi a homomorphism: no defect
        let g = FinAbGroup::new(vec![2, 8]).unwrap();
        let b = BohrSet::constant(&g, vec![Character(vec![1, 0])], Ratio::new(1, 4)).unwrap();
        let k = z(8);
        let phi = PartialMap::from_fn(&g, &k, &b.members(CAP).unwrap(), |x| g.element_at(x).0[1]).unwrap();
        let ext = naive_extension(&phi, &b, 1, CAP).unwrap();
        assert_eq!(ext.ell(), 0);
        let a = audit_naive_extension(&ext, &g, 200, 1, CAP).unwrap();
        assert_eq!(a.failures, 0);
        // Z/16, interval-type Bohr set, lift map into Z/5
        let g = z(16);
        let b = BohrSet::constant(&g, vec![Character(vec![1])], Ratio::new(3, 16)).unwrap();
        let phi = lift_map(&b, &z(5), &[1], CAP);
        let ext = naive_extension(&phi, &b, 3, CAP).unwrap();
        let s = ext.error_set().bitmap(CAP).unwrap();
        // exhaustive over all triples of B(rho')
        let inner = ext.inner.clone();
        for &x in &inner {
            for &y in &inner {
                for &w in &inner {
                    let sum = g.add_idx(g.add_idx(x, y), w);
                    let k5 = z(5);
                    let parts = k5.add_idx(k5.add_idx(phi.table[&x], phi.table[&y]), phi.table[&w]);
                    let defect = k5.add_idx(ext.value(sum).unwrap(), k5.neg_idx(parts));
                    assert!(s[defect as usize]);
                }
            }
        }
        assert!((ext.ell() as f64) <= ext.ell_bound);
        // phi = 0
        let zero = PartialMap::from_fn(&g, &z(5), &b.members(CAP).unwrap(), |_| 0).unwrap();
        let ext = naive_extension(&zero, &b, 3, CAP).unwrap();
        assert!(ext.values.values().all(|&v| v == 0));
        assert!(naive_extension(&phi, &b, 1, CAP).is_err());
    }

    #[test]
    fn naive_extension_codim_two() {
        let g = z(64);
        let b = BohrSet::new(&g, vec![Character(vec![1]), Character(vec![8])], vec![Ratio::new(1, 5), Ratio::new(1, 5)]).unwrap();
        let phi = lift_map(&b, &z(7), &[2, 3], CAP);
        assert!(freiman_check(&phi, CAP).unwrap().holds);
        let ext = naive_extension(&phi, &b, 64, CAP).unwrap();
        let a = audit_naive_extension(&ext, &g, 1000, 5, CAP).unwrap();
        assert_eq!(a.failures, 0);
        assert!(a.size_ok, "{a:?}");
    }

    #[test]
    fn subgroup_extension_examples() {
        let g = z(8);
        let k = z(4);
        let all = BohrSet::constant(&g, vec![], Ratio::new(1, 4)).unwrap();
        let evens: Vec<u64> = (0..8).step_by(2).collect();
        let phi = PartialMap::from_fn(&g, &k, &evens, |x| x / 2).unwrap();
        let ext = subgroup_e_extension(&phi, &ErrorSet::zero(&k), &[Character(vec![4])], &all, 4, 1000, 1, CAP).unwrap();
        assert_eq!(ext.index, 2);
        assert_eq!(ext.failures, 0);
        assert!(ext.quadruples_checked > 0);
        // H = G
        let full = PartialMap::from_fn(&g, &k, &(0..8).collect::<Vec<_>>(), |x| x % 4).unwrap();
        let ext = subgroup_e_extension(&full, &ErrorSet::zero(&k), &[Character(vec![0])], &all, 4, 1000, 1, CAP).unwrap();
        assert_eq!((ext.index, ext.m), (1, 1));
        assert!((0..8).all(|x| ext.values[&x] == x % 4));
        // G = Z/2 x Z/64, H = {0} x Z/64, phi linear on H ∩ B
        let g = FinAbGroup::new(vec![2, 64]).unwrap();
        let k = z(64);
        let b = BohrSet::constant(&g, vec![Character(vec![0, 1])], Ratio::new(1, 4)).unwrap();
        let h_dom: Vec<u64> = b.members(CAP).unwrap().into_iter().filter(|&x| g.element_at(x).0[0] == 0).collect();
        let lin = PartialMap::from_fn(&g, &k, &h_dom, |x| g.element_at(x).0[1]).unwrap();
        let chi = [Character(vec![1, 0])];
        let ext = subgroup_e_extension(&lin, &ErrorSet::zero(&k), &chi, &b, 40, 2000, 1, CAP).unwrap();
        assert_eq!((ext.index, ext.failures), (2, 0));
        assert_eq!(ext.coset_basis[0].0 .0, vec![1, 0]);
        // <chi>_[-2,2] meets <(1,1), (0,1)>_1 at (1,0)
        let b2 = BohrSet::constant(&g, vec![Character(vec![1, 1]), Character(vec![0, 1])], Ratio::new(1, 4)).unwrap();
        let h2: Vec<u64> = b2.members(CAP).unwrap().into_iter().filter(|&x| g.element_at(x).0[0] == 0).collect();
        let lin2 = PartialMap::from_fn(&g, &k, &h2, |_| 0).unwrap();
        let r = subgroup_e_extension(&lin2, &ErrorSet::zero(&k), &chi, &b2, 1, 10, 1, CAP);
        assert!(matches!(r, Err(HfaError::Precondition(_))));
    }

    #[test]
    fn walk_counts() {
        let p = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(count_paths_len6(&p, 0, 2), 4);
        let iso = Graph::new(3, &[]).unwrap();
        assert_eq!(count_paths_len6(&iso, 0, 1), 0);
        let e = Graph::new(2, &[(0, 1)]).unwrap();
        assert_eq!(count_paths_len6(&e, 0, 1), walk_oracle(&e, 0, 1, 6));
        assert_eq!(count_paths_len6(&e, 0, 1), 0);
        assert_eq!(count_paths_len6(&e, 0, 0), 1);
    }

    fn walk_oracle(gr: &Graph, u: usize, v: usize, len: usize) -> u64 {
        if len == 0 {
            return (u == v) as u64;
        }
        (0..gr.n).filter(|&w| gr.has_edge(u, w)).map(|w| walk_oracle(gr, w, v, len - 1)).sum()
    }

    #[test]
    fn walk_counts_match_enumeration() {
        let mut r = rng::stream(4, "walks", 0);
        let edges: Vec<(usize, usize)> = (0..9).flat_map(|u| (u + 1..9).map(move |v| (u, v))).filter(|_| r.gen_bool(0.4)).collect();
        let gr = Graph::new(9, &edges).unwrap();
        let w = walks6_matrix(&gr);
        for u in 0..9 {
            for v in 0..9 {
                assert_eq!(w[u][v], walk_oracle(&gr, u, v, 6));
            }
        }
    }

    #[test]
    fn robust_subset_examples() {
        let k20: Vec<(usize, usize)> = (0..20).flat_map(|u| (u + 1..20).map(move |v| (u, v))).collect();
        let gr = Graph::new(20, &k20).unwrap();
        let c = gr.edge_count() as f64 / 400.0;
        let r = robust_subset(&gr, c).unwrap();
        assert_eq!(r.x.len(), 20);
        assert!(r.size_ok && r.walks_ok);
        let two: Vec<(usize, usize)> = (0..15)
            .flat_map(|u| (u + 1..15).map(move |v| (u, v)))
            .chain((15..40).flat_map(|u| (u + 1..40).map(move |v| (u, v))))
            .collect();
        let gr = Graph::new(40, &two).unwrap();
        let r = robust_subset(&gr, 0.2).unwrap();
        assert!(r.x.iter().all(|&v| v >= 15) || r.x.iter().all(|&v| v < 15));
        assert!(r.size_ok && r.walks_ok);
        let text = "3\n0 1 # edge\n1 2\n";
        assert_eq!(Graph::parse(text).unwrap().edge_count(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn e_hom_zero_matches_freiman(vals in proptest::collection::vec(0u64..3, 12), mask in 0u32..4096) {
            let dom: Vec<u64> = (0..12).filter(|i| mask >> i & 1 == 1).collect();
            let phi = PartialMap::from_fn(&z(12), &z(3), &dom, |x| vals[x as usize]).unwrap();
            let f = freiman_check(&phi, CAP).unwrap();
            let e = e_hom_check(&phi, &ErrorSet::zero(&z(3)), CAP).unwrap();
            prop_assert_eq!(f.holds, e.holds);
            if f.holds {
                let c = respected_quadruple_count(&phi, CAP).unwrap();
                prop_assert_eq!(c.respected, c.total);
            }
        }
    }
}
