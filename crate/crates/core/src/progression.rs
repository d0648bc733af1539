//! Coset progressions `a + [.]·v_1 + ... + [.]·v_r + H`: properness, shrinking, tiling,
//! Freiman-subgroup extraction and the passage between Bohr sets and progressions.

use std::collections::{HashMap, HashSet};

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bohr::{BohrSet, Radius};
use crate::error::{pre, HfaError, Result};
use crate::group::{Character, FinAbGroup, GroupElement, TorusValue};

/// Symmetric progressions use `[-L_i, L_i]`; one-sided ones use `[0, N_i - 1]` with `lens = N`.
#[derive(Clone, Debug, PartialEq)]
pub struct CosetProgression {
    pub group: FinAbGroup,
    pub base: GroupElement,
    pub gens: Vec<GroupElement>,
    pub lens: Vec<u64>,
    pub symmetric: bool,
    pub h_gens: Vec<GroupElement>,
}

/// JSON form: `{"base":[0],"gens":[[3]],"lens":[2],"sym":true,"H":[]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProgressionSpec {
    pub base: Vec<i64>,
    pub gens: Vec<Vec<i64>>,
    pub lens: Vec<u64>,
    pub sym: bool,
    #[serde(rename = "H")]
    pub h: Vec<Vec<i64>>,
}

/// Iterates integer boxes `prod [lo_i, hi_i]` in lexicographic order, last coordinate fastest.
pub fn box_iter(ranges: &[(i64, i64)]) -> impl Iterator<Item = Vec<i64>> + '_ {
    let empty = ranges.iter().any(|&(lo, hi)| lo > hi);
    let mut cur: Option<Vec<i64>> = if empty { None } else { Some(ranges.iter().map(|r| r.0).collect()) };
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let mut next = out.clone();
        let mut i = ranges.len();
        loop {
            if i == 0 {
                cur = None;
                break;
            }
            i -= 1;
            if next[i] < ranges[i].1 {
                next[i] += 1;
                cur = Some(next);
                break;
            }
            next[i] = ranges[i].0;
        }
        Some(out)
    })
}

impl CosetProgression {
    pub fn new(
        group: &FinAbGroup,
        base: GroupElement,
        gens: Vec<GroupElement>,
        lens: Vec<u64>,
        symmetric: bool,
        h_gens: Vec<GroupElement>,
    ) -> Result<Self> {
        pre(gens.len() == lens.len(), || "one length per generator".into())?;
        for x in std::iter::once(&base).chain(&gens).chain(&h_gens) {
            if !group.contains(x) {
                return Err(HfaError::Structural(format!("{:?} not in {group}", x.0)));
            }
        }
        if !symmetric {
            pre(lens.iter().all(|&n| n >= 1), || "one-sided lengths must be at least 1".into())?;
        }
        Ok(CosetProgression { group: group.clone(), base, gens, lens, symmetric, h_gens })
    }

    pub fn from_spec(group: &FinAbGroup, s: &ProgressionSpec) -> Result<Self> {
        let el = |v: &Vec<i64>| group.element(v);
        Self::new(
            group,
            el(&s.base)?,
            s.gens.iter().map(el).collect::<Result<_>>()?,
            s.lens.clone(),
            s.sym,
            s.h.iter().map(el).collect::<Result<_>>()?,
        )
    }

    pub fn to_spec(&self) -> ProgressionSpec {
        let v = |x: &GroupElement| x.0.iter().map(|&c| c as i64).collect();
        ProgressionSpec {
            base: v(&self.base),
            gens: self.gens.iter().map(v).collect(),
            lens: self.lens.clone(),
            sym: self.symmetric,
            h: self.h_gens.iter().map(v).collect(),
        }
    }

    /// `H` alone, as a rank-0 progression.
    pub fn subgroup(group: &FinAbGroup, h_gens: Vec<GroupElement>) -> Result<Self> {
        Self::new(group, group.zero(), vec![], vec![], true, h_gens)
    }

    pub fn rank(&self) -> usize {
        self.gens.len()
    }

    pub fn ranges(&self) -> Vec<(i64, i64)> {
        self.lens
            .iter()
            .map(|&l| if self.symmetric { (-(l as i64), l as i64) } else { (0, l as i64 - 1) })
            .collect()
    }

    pub fn interval_sizes(&self) -> Vec<u64> {
        self.lens.iter().map(|&l| if self.symmetric { 2 * l + 1 } else { l }).collect()
    }

    pub fn subgroup_elements(&self) -> Vec<u64> {
        self.group.span(&self.h_gens)
    }

    /// `prod |L_i| * |H|`, the size when proper.
    pub fn claimed_size(&self) -> u128 {
        self.interval_sizes().iter().map(|&s| s as u128).product::<u128>() * self.subgroup_elements().len() as u128
    }

    /// `base + sum lambda_i v_i` as an index.
    pub fn point(&self, lambda: &[i64]) -> u64 {
        let g = &self.group;
        let mut acc = g.index_of(&self.base);
        for (l, v) in lambda.iter().zip(&self.gens) {
            acc = g.add_idx(acc, g.index_of(&g.scale(*l, v)));
        }
        acc
    }

    fn check_cap(&self, cap: u64) -> Result<()> {
        self.group.enumerate_capped(cap).map(|_| ())?;
        let c = self.claimed_size();
        if c > cap as u128 {
            return Err(HfaError::Budget(format!("progression has {c} tuples, cap is {cap}")));
        }
        Ok(())
    }

    pub fn indicator(&self, cap: u64) -> Result<Vec<bool>> {
        self.check_cap(cap)?;
        let g = &self.group;
        let h = self.subgroup_elements();
        let mut ind = vec![false; g.order() as usize];
        for lam in box_iter(&self.ranges()) {
            let p = self.point(&lam);
            for &x in &h {
                ind[g.add_idx(p, x) as usize] = true;
            }
        }
        Ok(ind)
    }

    pub fn members(&self, cap: u64) -> Result<Vec<u64>> {
        Ok(self.indicator(cap)?.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i as u64).collect())
    }

    /// Centers a one-sided progression with odd lengths: `a + sum floor(N_i/2) v_i`.
    pub fn to_symmetric(&self) -> Result<Self> {
        if self.symmetric {
            return Ok(self.clone());
        }
        pre(self.lens.iter().all(|n| n % 2 == 1), || "only odd one-sided lengths have a symmetric form".into())?;
        let half: Vec<i64> = self.lens.iter().map(|&n| (n / 2) as i64).collect();
        let base = self.group.element_at(self.point(&half));
        Self::new(&self.group, base, self.gens.clone(), half.iter().map(|&l| l as u64).collect(), true, self.h_gens.clone())
    }

    /// `a - sum L_i v_i + [0, 2 L_i]·v_i + H`.
    pub fn to_one_sided(&self) -> Self {
        if !self.symmetric {
            return self.clone();
        }
        let neg: Vec<i64> = self.lens.iter().map(|&l| -(l as i64)).collect();
        let base = self.group.element_at(self.point(&neg));
        CosetProgression {
            group: self.group.clone(),
            base,
            gens: self.gens.clone(),
            lens: self.lens.iter().map(|&l| 2 * l + 1).collect(),
            symmetric: false,
            h_gens: self.h_gens.clone(),
        }
    }
}

/// A progression whose properness has been checked; operations needing properness take this.
#[derive(Clone, Debug)]
pub struct ProperProgression {
    prog: CosetProgression,
    size: u64,
}

impl ProperProgression {
    pub fn prog(&self) -> &CosetProgression {
        &self.prog
    }

    pub fn size(&self) -> u64 {
        self.size
    }
}

#[derive(Clone, Debug)]
pub enum Properness {
    Proper(ProperProgression),
    /// Two distinct coefficient tuples whose points agree modulo `H`.
    Collision { first: Vec<i64>, second: Vec<i64>, element: GroupElement },
}

pub fn properness_check(c: &CosetProgression, cap: u64) -> Result<Properness> {
    c.check_cap(cap)?;
    let g = &c.group;
    let h = c.subgroup_elements();
    let mut seen: HashMap<u64, Vec<i64>> = HashMap::new();
    for lam in box_iter(&c.ranges()) {
        let p = c.point(&lam);
        let key = h.iter().map(|&x| g.add_idx(p, x)).min().expect("H contains 0");
        if let Some(prev) = seen.insert(key, lam.clone()) {
            return Ok(Properness::Collision { first: prev, second: lam, element: g.element_at(p) });
        }
    }
    let size = (seen.len() * h.len()) as u64;
    Ok(Properness::Proper(ProperProgression { prog: c.clone(), size }))
}

pub fn certify(c: &CosetProgression, cap: u64) -> Result<ProperProgression> {
    match properness_check(c, cap)? {
        Properness::Proper(p) => Ok(p),
        Properness::Collision { first, second, .. } => {
            Err(HfaError::Precondition(format!("progression is not proper: {first:?} and {second:?} collide")))
        }
    }
}

/// `eps·C`: lengths `floor(eps L_i)`, same subgroup. Properness is inherited.
pub fn shrink(c: &ProperProgression, eps: Ratio<i64>) -> Result<ProperProgression> {
    let p = &c.prog;
    pre(p.symmetric, || "shrinking needs a symmetric progression".into())?;
    pre(eps >= Ratio::zero() && eps <= Ratio::from_integer(1), || "eps must lie in [0, 1]".into())?;
    let lens: Vec<u64> = p.lens.iter().map(|&l| (eps * l as i64).floor().to_integer() as u64).collect();
    let prog = CosetProgression { lens, ..p.clone() };
    let size = prog.claimed_size() as u64;
    Ok(ProperProgression { prog, size })
}

#[derive(Clone, Debug, Serialize)]
pub struct TileReport {
    pub translates: Vec<GroupElement>,
    pub s_size: u64,
    pub st_size: u64,
    pub c_size: u64,
    pub contained: bool,
    pub exact: bool,
    pub covers: bool,
}

impl TileReport {
    pub fn ok(&self) -> bool {
        self.contained && self.exact && self.covers
    }
}

/// Translates `T` with `S + T` inside `C`, disjoint, and covering all but `eta |C|`.
///
/// `c` is one-sided, `S = [0, N'_i - 1]·l_i v_i + H_0` is given by `(n_prime, ell)`.
pub fn tile(c: &ProperProgression, n_prime: &[u64], ell: &[u64], eta: Ratio<i64>, cap: u64) -> Result<TileReport> {
    let p = &c.prog;
    let d = p.rank();
    pre(!p.symmetric, || "tiling takes a one-sided progression".into())?;
    pre(n_prime.len() == d && ell.len() == d, || "one (N', l) pair per generator".into())?;
    pre(n_prime.iter().all(|&n| n >= 1) && ell.iter().all(|&l| l >= 1), || "N' and l must be positive".into())?;
    for i in 0..d {
        // l_i N'_i <= (eta / d) N_i
        let ok = n_prime[i] == 1 || Ratio::from_integer((ell[i] * n_prime[i]) as i64) * d as i64 <= eta * p.lens[i] as i64;
        pre(ok, || format!("step condition fails at generator {i}"))?;
    }
    let g = &p.group;
    let active: Vec<bool> = n_prime.iter().map(|&n| n > 1).collect();
    // T = a + sum_{i in I} ([0, l_i - 1] + l_i N'_i [0, k_i - 1]) v_i + sum_{i not in I} [0, N_i - 1] v_i
    let mut offsets: Vec<Vec<i64>> = Vec::with_capacity(d);
    for i in 0..d {
        if active[i] {
            let step = (ell[i] * n_prime[i]) as i64;
            let k = p.lens[i] as i64 / step;
            offsets.push((0..k).flat_map(|j| (0..ell[i] as i64).map(move |t| j * step + t)).collect());
        } else {
            offsets.push((0..p.lens[i] as i64).collect());
        }
    }
    let idx_ranges: Vec<(i64, i64)> = offsets.iter().map(|o| (0, o.len() as i64 - 1)).collect();
    let translates: Vec<u64> = box_iter(&idx_ranges)
        .map(|ix| {
            let lam: Vec<i64> = ix.iter().enumerate().map(|(i, &j)| offsets[i][j as usize]).collect();
            p.point(&lam)
        })
        .collect();
    let s = CosetProgression {
        group: g.clone(),
        base: g.zero(),
        gens: p.gens.iter().zip(ell).map(|(v, &l)| g.scale(l as i64, v)).collect(),
        lens: n_prime.to_vec(),
        symmetric: false,
        h_gens: p.h_gens.clone(),
    };
    let s_members = s.members(cap)?;
    let c_ind = p.indicator(cap)?;
    let mut hit = vec![false; g.order() as usize];
    let mut exact = true;
    let mut contained = true;
    for &t in &translates {
        for &x in &s_members {
            let y = g.add_idx(t, x) as usize;
            if hit[y] {
                exact = false;
            }
            hit[y] = true;
            contained &= c_ind[y];
        }
    }
    let st_size = hit.iter().filter(|&&b| b).count() as u64;
    exact &= st_size as u128 == s_members.len() as u128 * translates.len() as u128;
    let covers = Ratio::from_integer(st_size as i64) >= (Ratio::from_integer(1) - eta) * c.size as i64;
    Ok(TileReport {
        translates: translates.iter().map(|&t| g.element_at(t)).collect(),
        s_size: s_members.len() as u64,
        st_size,
        c_size: c.size,
        contained,
        exact,
        covers,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetricPiece {
    pub s: ProgressionSpec,
    pub t: GroupElement,
    pub hits: u64,
    pub s_size: u64,
    pub x_size: u64,
    pub c_size: u64,
    /// `|S| >= (alpha / 100kd)^d |C|`.
    pub size_bound_holds: bool,
}

/// Symmetric proper `S` and `t` with `t + kS` inside `C` and `t + S` meeting `X` in at least
/// `(alpha/2)|S|` points, where `alpha = |X|/|C|`.
///
/// Among translates reaching that density, the one with least element index is returned.
pub fn centered_symmetric_piece(c: &ProperProgression, x: &[GroupElement], k: u64, cap: u64) -> Result<SymmetricPiece> {
    pre(k >= 1, || "k must be positive".into())?;
    let p = c.prog.to_one_sided();
    let g = &p.group;
    let c_ind = p.indicator(cap)?;
    let mut xs: Vec<u64> = x.iter().map(|e| g.index_of(e)).collect();
    xs.sort_unstable();
    xs.dedup();
    pre(!xs.is_empty(), || "X must be nonempty".into())?;
    pre(xs.iter().all(|&e| c_ind[e as usize]), || "X must lie inside C".into())?;
    let d = p.rank().max(1) as i64;
    let alpha = Ratio::new(xs.len() as i64, c.size as i64);
    let kd = k as i64 * d;
    // N'_i = floor(alpha N_i / 100kd) when N_i >= 200kd/alpha, else 0
    let np: Vec<u64> = p
        .lens
        .iter()
        .map(|&n| {
            let n = n as i64;
            if alpha * n >= Ratio::from_integer(200 * kd) {
                (alpha * n / (100 * kd)).floor().to_integer() as u64
            } else {
                0
            }
        })
        .collect();
    let inner_base = g.element_at(p.point(&np.iter().map(|&v| (k * v) as i64).collect::<Vec<_>>()));
    let inner = CosetProgression {
        group: g.clone(),
        base: inner_base,
        gens: p.gens.clone(),
        lens: p.lens.iter().zip(&np).map(|(&n, &m)| n - 2 * k * m).collect(),
        symmetric: false,
        h_gens: p.h_gens.clone(),
    };
    let inner = certify(&inner, cap)?;
    let ones = vec![1u64; p.rank()];
    let widths: Vec<u64> = np.iter().map(|&m| 2 * m + 1).collect();
    let tiling = tile(&inner, &widths, &ones, alpha / 4, cap)?;
    if !tiling.ok() {
        return Err(HfaError::Certificate("tiling of the shrunk progression failed".into()));
    }
    let s = CosetProgression {
        group: g.clone(),
        base: g.zero(),
        gens: p.gens.clone(),
        lens: np.clone(),
        symmetric: true,
        h_gens: p.h_gens.clone(),
    };
    let s_members = s.members(cap)?;
    let x_ind: HashSet<u64> = xs.iter().copied().collect();
    let centre = p.point(&np.iter().map(|&m| m as i64).collect::<Vec<_>>());
    let shift = g.add_idx(centre, g.neg_idx(g.index_of(&p.base)));
    let mut best: Option<(u64, u64)> = None;
    for t1 in &tiling.translates {
        let t = g.add_idx(g.index_of(t1), shift);
        let hits = s_members.iter().filter(|&&y| x_ind.contains(&g.add_idx(t, y))).count() as u64;
        // hits >= (alpha/2)|S|  <=>  2 hits |C| >= |X| |S|
        if 2 * hits as u128 * c.size as u128 >= xs.len() as u128 * s_members.len() as u128 && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, hits));
        }
    }
    let (t, hits) = best.ok_or_else(|| HfaError::Certificate("no translate reached the density bound".into()))?;
    // t + kS inside C
    let ks = CosetProgression { lens: np.iter().map(|&m| k * m).collect(), ..s.clone() };
    for y in ks.members(cap)? {
        if !c_ind[g.add_idx(t, y) as usize] {
            return Err(HfaError::Certificate("t + kS leaves C".into()));
        }
    }
    let bound = Ratio::<i128>::new(xs.len() as i128, c.size as i128 * 100 * kd as i128);
    let lhs = Ratio::<i128>::from_integer(s_members.len() as i128);
    let size_bound_holds = lhs >= num_traits::pow(bound, p.rank()) * c.size as i128;
    Ok(SymmetricPiece {
        s: s.to_spec(),
        t: g.element_at(t),
        hits,
        s_size: s_members.len() as u64,
        x_size: xs.len() as u64,
        c_size: c.size,
        size_bound_holds,
    })
}

/// `a, b in A` and `a - b in C` imply `a - b in A`; on failure returns the offending pair.
pub fn freiman_subgroup_violation(a: &[u64], c_ind: &[bool], g: &FinAbGroup) -> Option<(u64, u64)> {
    let mut a_ind = vec![false; g.order() as usize];
    for &x in a {
        a_ind[x as usize] = true;
    }
    a.par_iter()
        .find_map_first(|&x| a.iter().find(|&&y| {
            let z = g.add_idx(x, g.neg_idx(y)) as usize;
            c_ind[z] && !a_ind[z]
        }).map(|&y| (x, y)))
}

#[derive(Clone, Debug, Serialize)]
pub struct FreimanExtract {
    pub ell: Vec<u64>,
    pub m: Vec<u64>,
    pub h_prime: Vec<GroupElement>,
    pub h_prime_size: u64,
    pub h_size: u64,
    pub alpha: String,
    /// `l_i <= 20 / alpha` and `|H'| >= alpha |H|`.
    pub bounds_hold: bool,
}

/// `[-M_i, M_i]·l_i v_i + H'` inside a Freiman-subgroup `A` of a symmetric proper `C`.
///
/// `H' = A ∩ H`, and `l_i` is the least positive multiple of `v_i` lying in `A`
/// (or `N_i + 1` when none does, making `M_i = 0`).
pub fn freiman_subgroup_extract(a: &[GroupElement], c: &ProperProgression, cap: u64) -> Result<FreimanExtract> {
    let p = &c.prog;
    pre(p.symmetric && p.base == p.group.zero(), || "C must be symmetric and centred at 0".into())?;
    let g = &p.group;
    let c_ind = p.indicator(cap)?;
    let mut ai: Vec<u64> = a.iter().map(|x| g.index_of(x)).collect();
    ai.sort_unstable();
    ai.dedup();
    pre(!ai.is_empty(), || "A must be nonempty".into())?;
    if let Some(&x) = ai.iter().find(|&&x| !c_ind[x as usize]) {
        return Err(HfaError::Precondition(format!("{:?} is in A but not in C", g.element_at(x).0)));
    }
    if let Some((x, y)) = freiman_subgroup_violation(&ai, &c_ind, g) {
        return Err(HfaError::Precondition(format!(
            "A is not a Freiman-subgroup: {:?} - {:?} lies in C but not in A",
            g.element_at(x).0,
            g.element_at(y).0
        )));
    }
    let a_set: HashSet<u64> = ai.iter().copied().collect();
    let h = p.subgroup_elements();
    let hp: Vec<u64> = h.iter().copied().filter(|x| a_set.contains(x)).collect();
    let mut ell = Vec::with_capacity(p.rank());
    let mut m = Vec::with_capacity(p.rank());
    for (v, &n) in p.gens.iter().zip(&p.lens) {
        let l = (1..=n).find(|&l| a_set.contains(&g.index_of(&g.scale(l as i64, v)))).unwrap_or(n + 1);
        ell.push(l);
        m.push(n / l);
    }
    let mut h_prime_gens = Vec::new();
    let mut span: HashSet<u64> = [0].into_iter().collect();
    for &x in &hp {
        if !span.contains(&x) {
            h_prime_gens.push(g.element_at(x));
            span = g.span(&h_prime_gens).into_iter().collect();
        }
    }
    let sub = CosetProgression {
        group: g.clone(),
        base: g.zero(),
        gens: p.gens.iter().zip(&ell).map(|(v, &l)| g.scale(l as i64, v)).collect(),
        lens: m.clone(),
        symmetric: true,
        h_gens: h_prime_gens.clone(),
    };
    if let Some(x) = sub.members(cap)?.into_iter().find(|x| !a_set.contains(x)) {
        return Err(HfaError::Certificate(format!("extracted progression leaves A at {:?}", g.element_at(x).0)));
    }
    let alpha = Ratio::new(ai.len() as i64, c.size as i64);
    let bounds_hold = ell.iter().all(|&l| alpha * l as i64 <= Ratio::from_integer(20))
        && Ratio::from_integer(hp.len() as i64) >= alpha * h.len() as i64;
    Ok(FreimanExtract {
        ell,
        m,
        h_prime: h_prime_gens,
        h_prime_size: hp.len() as u64,
        h_size: h.len() as u64,
        alpha: format!("{}/{}", alpha.numer(), alpha.denom()),
        bounds_hold,
    })
}

/// Tuples tried by the short-vector search before giving up.
pub const SHORT_VECTOR_BUDGET: u64 = 200_000;

#[derive(Clone, Debug, Serialize)]
pub struct Sandwich {
    /// `C` with closed lengths `L_i - 1`.
    pub c: ProgressionSpec,
    /// The `r^(2r)` dilate in open form: closed lengths `r^(2r) L_i - 1`.
    pub big: ProgressionSpec,
    /// Lattice generators `w_i`, scaled by the group exponent.
    pub w: Vec<Vec<i64>>,
    pub open_lengths: Vec<i64>,
    pub factor: i64,
    pub tuples_tried: u64,
    pub containments: [bool; 4],
    pub c_proper: bool,
    pub big_proper: bool,
    /// Shrink clause at `c = 1/4` and `c = 1/8`.
    pub shrink_clause: [bool; 2],
}

impl Sandwich {
    pub fn ok(&self) -> bool {
        self.containments.iter().all(|&b| b) && self.c_proper && self.big_proper && self.shrink_clause.iter().all(|&b| b)
    }
}

fn det_i128(m: &[Vec<i128>]) -> i128 {
    // Bareiss, exact for integer input.
    let n = m.len();
    if n == 0 {
        return 1;
    }
    let mut a = m.to_vec();
    let mut sign = 1;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

/// Integer coordinates of `y` in the independent vectors `w`, if `y` is an integral combination.
struct Coordinates {
    w: Vec<Vec<i64>>,
    rows: Vec<usize>,
    det: i128,
}

impl Coordinates {
    fn new(w: &[Vec<i64>]) -> Option<Self> {
        let k = w.len();
        let r = w.first().map_or(0, |v| v.len());
        let mut rows: Vec<usize> = (0..k).collect();
        loop {
            let m: Vec<Vec<i128>> = rows.iter().map(|&ri| (0..k).map(|j| w[j][ri] as i128).collect()).collect();
            let det = det_i128(&m);
            if det != 0 {
                return Some(Coordinates { w: w.to_vec(), rows, det });
            }
            // next k-combination of 0..r
            let mut i = k;
            loop {
                if i == 0 {
                    return None;
                }
                i -= 1;
                if rows[i] < r - k + i {
                    rows[i] += 1;
                    for j in i + 1..k {
                        rows[j] = rows[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn solve(&self, y: &[i64]) -> Option<Vec<i64>> {
        let k = self.w.len();
        let mut lam = Vec::with_capacity(k);
        for col in 0..k {
            let m: Vec<Vec<i128>> = self
                .rows
                .iter()
                .map(|&ri| (0..k).map(|j| if j == col { y[ri] as i128 } else { self.w[j][ri] as i128 }).collect())
                .collect();
            let num = det_i128(&m);
            if num % self.det != 0 {
                return None;
            }
            lam.push((num / self.det) as i64);
        }
        let ok = (0..y.len()).all(|i| (0..k).map(|j| lam[j] * self.w[j][i]).sum::<i64>() == y[i]);
        ok.then_some(lam)
    }
}

fn rank_of(vs: &[Vec<i64>], r: usize) -> usize {
    let mut basis: Vec<Vec<i64>> = Vec::new();
    for v in vs {
        let mut cand = basis.clone();
        cand.push(v.clone());
        if Coordinates::new(&cand).is_some() {
            basis = cand;
            if basis.len() == r {
                break;
            }
        }
    }
    basis.len()
}

/// Progression `C` with `B(r^-4r rho) ⊆ C ⊆ B(r^-2r rho) ⊆ r^2r C ⊆ B(rho)`.
///
/// Works in the lattice `chi(G) + Z^r`, scaled by the exponent so all coordinates are
/// integers. Candidate generators are lattice points of the middle cube in order of
/// sup-norm; for each independent tuple the lengths are the least ones covering the
/// small cube, and the remaining containments are checked on lattice points. The
/// result is then verified in `G` by enumeration.
pub fn bohr_to_progression(b: &BohrSet, cap: u64, budget: u64) -> Result<Sandwich> {
    let g = &b.group;
    let r = b.codim();
    pre(b.radii.iter().all(|x| *x < Ratio::new(1, 2)), || "radii must be below 1/2".into())?;
    pre(r <= 4, || "codimension above 4 is beyond the exhaustive search".into())?;
    g.enumerate_capped(cap).map(|_| ())?;
    let e = g.exponent() as i64;
    let factor = if r == 0 { 1 } else { (r as i64).pow(2 * r as u32) };
    let n = g.order();
    let lifts: Vec<Vec<i64>> = (0..n)
        .into_par_iter()
        .map(|x| {
            let xe = g.element_at(x);
            b.freqs
                .iter()
                .map(|c| {
                    let v = g.char_eval_num(&c.0, &xe.0) as i64;
                    if 2 * v > e { v - e } else { v }
                })
                .collect()
        })
        .collect();
    let scale = |t: Ratio<i64>| -> Vec<Radius> { b.radii.iter().map(|x| x * t).collect() };
    let small_r = scale(Ratio::new(1, factor * factor));
    let mid_r = scale(Ratio::new(1, factor));
    let in_cube = |y: &[i64], radii: &[Radius]| {
        y.iter().zip(radii).all(|(&v, rad)| (v.abs() as i128) * (*rad.denom() as i128) <= (*rad.numer() as i128) * e as i128)
    };
    let collect = |radii: &[Radius]| -> Vec<Vec<i64>> {
        let mut pts: Vec<Vec<i64>> = lifts.iter().filter(|y| in_cube(y, radii)).cloned().collect();
        pts.sort();
        pts.dedup();
        pts
    };
    let small_pts = collect(&small_r);
    let mid_pts = collect(&mid_r);
    let mut cands: Vec<Vec<i64>> = mid_pts.iter().filter(|y| y.iter().any(|&v| v != 0)).cloned().collect();
    cands.sort_by_key(|y| (y.iter().map(|v| v.abs()).max().unwrap_or(0), y.clone()));
    let k = rank_of(&cands, r);
    let mut tried = 0u64;
    let mut found: Option<(Vec<Vec<i64>>, Vec<i64>)> = None;
    let mut combo: Vec<usize> = (0..k).collect();
    let m = cands.len();
    'search: loop {
        if k > m {
            break;
        }
        tried += 1;
        if tried > budget {
            return Err(HfaError::Budget(format!("short-vector search exhausted after {budget} tuples")));
        }
        let w: Vec<Vec<i64>> = combo.iter().map(|&i| cands[i].clone()).collect();
        if let Some(co) = Coordinates::new(&w).or_else(|| (k == 0).then(|| Coordinates { w: vec![], rows: vec![], det: 1 })) {
            let small_c: Option<Vec<Vec<i64>>> = small_pts.iter().map(|y| co.solve(y)).collect();
            let mid_c: Option<Vec<Vec<i64>>> = mid_pts.iter().map(|y| co.solve(y)).collect();
            if let (Some(sc), Some(mc)) = (small_c, mid_c) {
                let lens: Vec<i64> = (0..k).map(|j| sc.iter().map(|l| l[j].abs()).max().unwrap_or(0) + 1).collect();
                let corner_ok = |mult: i64, radii: &[Radius]| {
                    box_iter(&vec![(-1i64, 1i64); k]).all(|s| {
                        let y: Vec<i64> = (0..r).map(|i| (0..k).map(|j| s[j] * (mult * lens[j] - 1) * w[j][i]).sum()).collect();
                        in_cube(&y, radii)
                    })
                };
                let mid_inside_big = mc.iter().all(|l| l.iter().zip(&lens).all(|(&a, &len)| a.abs() < factor * len));
                if corner_ok(1, &mid_r) && mid_inside_big && corner_ok(factor, &b.radii) {
                    found = Some((w, lens));
                    break 'search;
                }
            }
        }
        // next k-combination of 0..m
        let mut i = k;
        loop {
            if i == 0 {
                break 'search;
            }
            i -= 1;
            if combo[i] < m - k + i {
                combo[i] += 1;
                for j in i + 1..k {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
    let (w, open_lengths) = found.ok_or_else(|| HfaError::Budget("no generator tuple satisfies the sandwich".into()))?;
    let preimage = |y: &Vec<i64>| g.element_at(lifts.iter().position(|l| l == y).expect("w is a lift") as u64);
    let gens: Vec<GroupElement> = w.iter().map(preimage).collect();
    let kernel: Vec<u64> = (0..n).filter(|&x| lifts[x as usize].iter().all(|&v| v == 0)).collect();
    let mut h_gens = Vec::new();
    let mut span: HashSet<u64> = [0].into_iter().collect();
    for &x in &kernel {
        if !span.contains(&x) {
            h_gens.push(g.element_at(x));
            span = g.span(&h_gens).into_iter().collect();
        }
    }
    let mk = |lens: Vec<u64>| CosetProgression {
        group: g.clone(),
        base: g.zero(),
        gens: gens.clone(),
        lens,
        symmetric: true,
        h_gens: h_gens.clone(),
    };
    let c = mk(open_lengths.iter().map(|&l| (l - 1) as u64).collect());
    let big = mk(open_lengths.iter().map(|&l| (factor * l - 1) as u64).collect());
    let c_proper = matches!(properness_check(&c, cap)?, Properness::Proper(_));
    let big_proper = matches!(properness_check(&big, cap)?, Properness::Proper(_));
    let subset = |a: &[bool], bb: &[bool]| a.iter().zip(bb).all(|(&x, &y)| !x || y);
    let b_small = b.with_radii(small_r.clone()).indicator(cap)?;
    let b_mid = b.with_radii(mid_r.clone()).indicator(cap)?;
    let b_full = b.indicator(cap)?;
    let c_ind = c.indicator(cap)?;
    let big_ind = big.indicator(cap)?;
    let containments = [
        subset(&b_small, &c_ind),
        subset(&c_ind, &b_mid),
        subset(&b_mid, &big_ind),
        subset(&big_ind, &b_full),
    ];
    let mut shrink_clause = [false; 2];
    for (slot, cc) in [Ratio::new(1, 4), Ratio::new(1, 8)].into_iter().enumerate() {
        let inner = b.with_radii(small_r.iter().map(|x| x * cc).collect()).indicator(cap)?;
        let lens = c.lens.iter().map(|&l| (cc * 2 * l as i64).floor().to_integer() as u64).collect();
        shrink_clause[slot] = subset(&inner, &mk(lens).indicator(cap)?);
    }
    Ok(Sandwich {
        c: c.to_spec(),
        big: big.to_spec(),
        w,
        open_lengths,
        factor,
        tuples_tried: tried,
        containments,
        c_proper,
        big_proper,
        shrink_clause,
    })
}

/// Whether `B ⊆ C`, by enumeration.
pub fn progression_to_bohr_check(c: &CosetProgression, b: &BohrSet, cap: u64) -> Result<bool> {
    pre(c.group == b.group, || "C and B live in different groups".into())?;
    let ci = c.indicator(cap)?;
    let bi = b.indicator(cap)?;
    Ok(bi.iter().zip(&ci).all(|(&x, &y)| !x || y))
}

/// `<Gamma>_[-R, R]`: all combinations with coefficients in `[-R, R]`.
pub fn bounded_char_span(g: &FinAbGroup, gamma: &[Character], r: i64) -> HashSet<Vec<u64>> {
    let mut out = HashSet::new();
    for lam in box_iter(&vec![(-r, r); gamma.len()]) {
        let mut acc = g.zero();
        for (l, c) in lam.iter().zip(gamma) {
            acc = g.add(&acc, &g.scale(*l, &GroupElement(c.0.clone())));
        }
        out.insert(acc.0);
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct SumContainment {
    pub r: i64,
    pub holds: bool,
    /// Least `R <= max_r` for which the containment holds.
    pub least_r: Option<i64>,
}

/// `B(<G1>_R ∩ <G2>_R, 1/4) ⊆ B(G1, rho1) + B(G2, rho2)`, for `R = 1..=max_r`.
pub fn bohr_sum_containment_check(b1: &BohrSet, b2: &BohrSet, r: i64, max_r: i64, cap: u64) -> Result<SumContainment> {
    pre(b1.group == b2.group, || "Bohr sets live in different groups".into())?;
    pre(r >= 1 && max_r >= 1, || "R must be positive".into())?;
    let g = &b1.group;
    let m1 = b1.members(cap)?;
    let m2 = b2.members(cap)?;
    pre(m1.len() as u128 * m2.len() as u128 <= cap as u128, || "sumset exceeds cap".into())?;
    let mut sum = vec![false; g.order() as usize];
    for &x in &m1 {
        for &y in &m2 {
            sum[g.add_idx(x, y) as usize] = true;
        }
    }
    let holds_at = |rr: i64| -> Result<bool> {
        let s1 = bounded_char_span(g, &b1.freqs, rr);
        let s2 = bounded_char_span(g, &b2.freqs, rr);
        let mut both: Vec<Vec<u64>> = s1.intersection(&s2).cloned().collect();
        both.sort();
        let bb = BohrSet::constant(g, both.into_iter().map(Character).collect(), Ratio::new(1, 4))?;
        Ok(bb.indicator(cap)?.iter().zip(&sum).all(|(&x, &y)| !x || y))
    };
    let mut least_r = None;
    for rr in 1..=max_r {
        if holds_at(rr)? {
            least_r = Some(rr);
            break;
        }
    }
    Ok(SumContainment { r, holds: holds_at(r)?, least_r })
}

/// `|sum_{k=1}^N e(k alpha)|`, summed directly.
pub fn exp_sum(n: u64, alpha: f64) -> f64 {
    let mut s = num_complex::Complex64::new(0.0, 0.0);
    for k in 1..=n {
        s += crate::group::exp_phase_f64(k as f64 * alpha);
    }
    s.norm()
}

/// `min(N, 1/||alpha||)`.
pub fn exp_sum_bound(n: u64, alpha: f64) -> f64 {
    let d = (alpha - alpha.round()).abs();
    if d == 0.0 { n as f64 } else { (n as f64).min(1.0 / d) }
}

/// `phi(sum lambda_i v_i + h) = c + sum lambda_i alpha_i + chi_h(h)` on a symmetric `P + H`.
#[derive(Clone, Debug)]
pub struct ProgressionForm {
    pub constant: TorusValue,
    pub alphas: Vec<TorusValue>,
    pub chi_h: Character,
}

#[derive(Clone, Debug, Serialize)]
pub enum BiasedForm {
    Shrunk {
        bias: f64,
        lens: Vec<u64>,
        /// `|P'| >= delta (10^5 r)^-r |P|`.
        size_bound_holds: bool,
        /// Checked shrink factors and whether `||phi(x) - phi(0)|| < eps` held on all of `eps·P' + H`.
        verified: Vec<(String, bool)>,
    },
    NoWitness { bias: f64 },
}

/// Shrinks `P` to `L'_i = min(floor(1/(1000 r ||alpha_i||)), L_i)` when `phi` has bias at least `delta`.
pub fn biased_progression_form(c: &ProperProgression, phi: &ProgressionForm, delta: f64, cap: u64) -> Result<BiasedForm> {
    let p = &c.prog;
    let g = &p.group;
    pre(p.symmetric && p.base == g.zero(), || "P + H must be symmetric and centred at 0".into())?;
    pre(phi.alphas.len() == p.rank(), || "one slope per generator".into())?;
    let h = p.subgroup_elements();
    let eval = |lam: &[i64], hx: u64| -> TorusValue {
        let mut v = phi.constant;
        for (l, a) in lam.iter().zip(&phi.alphas) {
            v = v + a.scale(*l);
        }
        v + g.char_eval(&phi.chi_h, &g.element_at(hx)).expect("character of G")
    };
    p.check_cap(cap)?;
    let total: num_complex::Complex64 = box_iter(&p.ranges())
        .flat_map(|lam| h.iter().map(move |&x| (lam.clone(), x)).collect::<Vec<_>>())
        .map(|(lam, x)| eval(&lam, x).exp())
        .sum();
    let bias = total.norm() / c.size as f64;
    if bias < delta {
        return Ok(BiasedForm::NoWitness { bias });
    }
    let r = p.rank().max(1) as i64;
    let lens: Vec<u64> = phi
        .alphas
        .iter()
        .zip(&p.lens)
        .map(|(a, &l)| {
            let nrm = a.norm();
            if nrm.is_zero() {
                l
            } else {
                (Ratio::from_integer(1) / (nrm * 1000 * r)).floor().to_integer().min(l as i64) as u64
            }
        })
        .collect();
    let phi0 = eval(&vec![0; p.rank()], 0);
    let mut verified = Vec::new();
    for eps in [Ratio::from_integer(1), Ratio::new(1, 2), Ratio::new(1, 10), Ratio::new(1, 100)] {
        let ranges: Vec<(i64, i64)> = lens
            .iter()
            .map(|&l| {
                let m = (eps * l as i64).floor().to_integer();
                (-m, m)
            })
            .collect();
        let ok = box_iter(&ranges).all(|lam| h.iter().all(|&x| (eval(&lam, x) - phi0).norm() < eps));
        verified.push((format!("{}/{}", eps.numer(), eps.denom()), ok));
    }
    let p_size: f64 = p.interval_sizes().iter().map(|&s| s as f64).product();
    let p_prime: f64 = lens.iter().map(|&l| (2 * l + 1) as f64).product();
    let size_bound_holds = p_prime >= delta * (1e5 * r as f64).powi(-(r as i32)) * p_size;
    Ok(BiasedForm::Shrunk { bias, lens, size_bound_holds, verified })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bohr::BohrSet;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    const CAP: u64 = 1 << 24;

    fn cyc_prog(n: u64, base: i64, gens: &[i64], lens: &[u64], sym: bool) -> CosetProgression {
        let g = FinAbGroup::cyclic(n);
        CosetProgression::new(
            &g,
            g.element(&[base]).unwrap(),
            gens.iter().map(|&v| g.element(&[v]).unwrap()).collect(),
            lens.to_vec(),
            sym,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn box_iter_order() {
        let v: Vec<_> = box_iter(&[(0, 1), (-1, 0)]).collect();
        assert_eq!(v, vec![vec![0, -1], vec![0, 0], vec![1, -1], vec![1, 0]]);
        assert_eq!(box_iter(&[]).count(), 1);
        assert_eq!(box_iter(&[(1, 0)]).count(), 0);
    }

    #[test]
    fn properness_examples() {
        let c = cyc_prog(15, 0, &[3], &[2], true);
        match properness_check(&c, CAP).unwrap() {
            Properness::Proper(p) => assert_eq!(p.size(), 5),
            _ => panic!("expected proper"),
        }
        let c = cyc_prog(12, 0, &[3], &[2], true);
        match properness_check(&c, CAP).unwrap() {
            Properness::Collision { first, second, element } => {
                assert_eq!((first, second, element.0), (vec![-2], vec![2], vec![6]));
            }
            _ => panic!("expected collision"),
        }
        let g = FinAbGroup::new(vec![2, 4]).unwrap();
        let h = CosetProgression::subgroup(&g, vec![g.element(&[1, 0]).unwrap(), g.element(&[0, 1]).unwrap()]).unwrap();
        assert_eq!(certify(&h, CAP).unwrap().size(), 8);
    }

    #[test]
    fn spec_json_round_trip() {
        let g = FinAbGroup::cyclic(15);
        let s: ProgressionSpec = serde_json::from_str(r#"{"base":[0],"gens":[[3]],"lens":[2],"sym":true,"H":[]}"#).unwrap();
        let c = CosetProgression::from_spec(&g, &s).unwrap();
        assert_eq!(c.members(CAP).unwrap(), vec![0, 3, 6, 9, 12]);
        assert_eq!(serde_json::to_string(&c.to_spec()).unwrap(), r#"{"base":[0],"gens":[[3]],"lens":[2],"sym":true,"H":[]}"#);
    }

    #[test]
    fn shrink_examples() {
        let g = FinAbGroup::cyclic(1009);
        let c = CosetProgression::new(&g, g.zero(), vec![g.element(&[1]).unwrap(), g.element(&[100]).unwrap()], vec![7, 4], true, vec![]).unwrap();
        let c = certify(&c, CAP).unwrap();
        assert_eq!(shrink(&c, Ratio::new(1, 3)).unwrap().prog().lens, vec![2, 1]);
        assert_eq!(shrink(&c, Ratio::from_integer(1)).unwrap().prog(), c.prog());
        let zero = shrink(&c, Ratio::zero()).unwrap();
        assert_eq!(zero.prog().members(CAP).unwrap(), vec![0]);
    }

    #[test]
    fn symmetric_forms() {
        let c = cyc_prog(100, 10, &[1], &[5], false);
        let s = c.to_symmetric().unwrap();
        assert_eq!((s.base.0.clone(), s.lens.clone()), (vec![12], vec![2]));
        assert_eq!(s.members(CAP).unwrap(), c.members(CAP).unwrap());
        assert_eq!(s.to_one_sided().members(CAP).unwrap(), c.members(CAP).unwrap());
        assert!(cyc_prog(100, 0, &[1], &[4], false).to_symmetric().is_err());
    }

    #[test]
    fn tile_examples() {
        let c = certify(&cyc_prog(100, 0, &[1], &[10], false), CAP).unwrap();
        let t = tile(&c, &[2], &[2], Ratio::new(1, 2), CAP).unwrap();
        let mut ts: Vec<u64> = t.translates.iter().map(|x| x.0[0]).collect();
        ts.sort();
        assert_eq!(ts, vec![0, 1, 4, 5]);
        assert_eq!((t.s_size, t.st_size), (2, 8));
        assert!(t.ok());
        // N'_i = 1: S is a coset of H
        let g = FinAbGroup::new(vec![2, 50]).unwrap();
        let c = CosetProgression::new(&g, g.zero(), vec![g.element(&[0, 1]).unwrap()], vec![7], false, vec![g.element(&[1, 0]).unwrap()]).unwrap();
        let c = certify(&c, CAP).unwrap();
        let t = tile(&c, &[1], &[1], Ratio::new(1, 10), CAP).unwrap();
        assert_eq!((t.translates.len(), t.st_size, t.c_size), (7, 14, 14));
        assert!(t.ok());
        assert!(matches!(tile(&certify(&cyc_prog(100, 0, &[1], &[10], false), CAP).unwrap(), &[5], &[1], Ratio::new(1, 10), CAP), Err(HfaError::Precondition(_))));
    }

    /// Random fixtures meeting the step condition; all three conclusions must hold.
    #[test]
    fn tile_seeded_fixtures() {
        let mut rg = rng::stream(7, "tile", 0);
        for _ in 0..40 {
            let n = rg.gen_range(200u64..2000);
            let g = FinAbGroup::cyclic(n);
            let d = rg.gen_range(1..=2usize);
            let lens: Vec<u64> = (0..d).map(|_| rg.gen_range(4..20)).collect();
            let v1 = 1i64;
            let v2 = lens[0] as i64 + rg.gen_range(0..3);
            let gens: Vec<GroupElement> = [v1, v2][..d].iter().map(|&v| g.element(&[v]).unwrap()).collect();
            let c = CosetProgression::new(&g, g.element(&[rg.gen_range(0..n as i64)]).unwrap(), gens, lens.clone(), false, vec![]).unwrap();
            let Properness::Proper(c) = properness_check(&c, CAP).unwrap() else { continue };
            let eta = Ratio::new(rg.gen_range(1..=4), 4);
            let mut np = Vec::new();
            let mut ell = Vec::new();
            for &nl in &lens {
                let l = rg.gen_range(1..=3u64);
                let max_np = (eta * nl as i64 / d as i64 / l as i64).floor().to_integer().max(1) as u64;
                np.push(rg.gen_range(1..=max_np));
                ell.push(l);
            }
            let t = tile(&c, &np, &ell, eta, CAP).unwrap();
            assert!(t.ok(), "{t:?}");
        }
    }

    #[test]
    fn symmetric_piece_examples() {
        let g = FinAbGroup::cyclic(5000);
        let c = certify(&CosetProgression::new(&g, g.zero(), vec![g.element(&[1]).unwrap()], vec![2000], false, vec![]).unwrap(), CAP).unwrap();
        let all: Vec<GroupElement> = c.prog().members(CAP).unwrap().iter().map(|&i| g.element_at(i)).collect();
        let piece = centered_symmetric_piece(&c, &all, 1, CAP).unwrap();
        assert_eq!(piece.s.lens, vec![20]);
        assert!(2 * piece.hits * piece.c_size >= piece.x_size * piece.s_size);
        assert!(piece.size_bound_holds);
        // X concentrated near 1500: the returned translate must be there
        let x: Vec<GroupElement> = (1400..1600).map(|v| g.element(&[v]).unwrap()).collect();
        let piece = centered_symmetric_piece(&c, &x, 2, CAP).unwrap();
        let t = piece.t.0[0] as i64;
        assert!((1400 - 2..1600 + 2).contains(&t));
        // C = H
        let g = FinAbGroup::new(vec![2, 4]).unwrap();
        let h = certify(&CosetProgression::subgroup(&g, vec![g.element(&[0, 2]).unwrap()]).unwrap(), CAP).unwrap();
        let piece = centered_symmetric_piece(&h, &[g.element(&[0, 2]).unwrap()], 3, CAP).unwrap();
        assert_eq!((piece.s_size, piece.t.0.clone()), (2, vec![0, 0]));
    }

    #[test]
    fn freiman_extract_examples() {
        let g = FinAbGroup::cyclic(1009);
        let c = certify(&CosetProgression::new(&g, g.zero(), vec![g.element(&[1]).unwrap()], vec![30], true, vec![]).unwrap(), CAP).unwrap();
        let all: Vec<GroupElement> = c.prog().members(CAP).unwrap().iter().map(|&i| g.element_at(i)).collect();
        let r = freiman_subgroup_extract(&all, &c, CAP).unwrap();
        assert_eq!((r.ell.clone(), r.m.clone()), (vec![1], vec![30]));
        let evens: Vec<GroupElement> = (-15..=15).map(|k| g.element(&[2 * k]).unwrap()).collect();
        let r = freiman_subgroup_extract(&evens, &c, CAP).unwrap();
        assert_eq!((r.ell.clone(), r.m.clone()), (vec![2], vec![15]));
        assert!(r.bounds_hold);
        let odd = vec![g.element(&[0]).unwrap(), g.element(&[1]).unwrap()];
        assert!(matches!(freiman_subgroup_extract(&odd, &c, CAP), Err(HfaError::Precondition(_))));
        // A = H' inside H
        let g = FinAbGroup::new(vec![4, 1000]).unwrap();
        let c = CosetProgression::new(&g, g.zero(), vec![g.element(&[0, 1]).unwrap()], vec![5], true, vec![g.element(&[1, 0]).unwrap()]).unwrap();
        let c = certify(&c, CAP).unwrap();
        let a = vec![g.zero(), g.element(&[2, 0]).unwrap()];
        let r = freiman_subgroup_extract(&a, &c, CAP).unwrap();
        assert_eq!((r.m.clone(), r.h_prime_size), (vec![0], 2));
    }

    fn bohr(n: u64, freqs: &[u64], rho: Radius) -> BohrSet {
        let g = FinAbGroup::cyclic(n);
        BohrSet::constant(&g, freqs.iter().map(|&f| Character(vec![f])).collect(), rho).unwrap()
    }

    #[test]
    fn bohr_to_progression_examples() {
        let s = bohr_to_progression(&bohr(12, &[], Ratio::new(1, 5)), CAP, SHORT_VECTOR_BUDGET).unwrap();
        assert!(s.ok());
        assert_eq!(s.c.gens.len(), 0);
        let s = bohr_to_progression(&bohr(101, &[1], Ratio::new(1, 5)), CAP, SHORT_VECTOR_BUDGET).unwrap();
        assert!(s.ok(), "{s:?}");
        assert_eq!(s.c.lens, vec![20]);
        let s = bohr_to_progression(&bohr(64, &[8], Ratio::new(1, 5)), CAP, SHORT_VECTOR_BUDGET).unwrap();
        assert!(s.ok());
        // kernel of x -> 8x/64 has 8 elements
        assert_eq!(FinAbGroup::cyclic(64).span(&s.c.h.iter().map(|v| GroupElement(v.iter().map(|&c| c as u64).collect())).collect::<Vec<_>>()).len(), 8);
    }

    #[test]
    fn bohr_to_progression_desk_grid() {
        for n in [12u64, 31, 64, 101, 256, 499, 1009, 2000] {
            for f in [1u64, 3, 7] {
                for rho in [Ratio::new(1, 10), Ratio::new(1, 5), Ratio::new(1, 3)] {
                    let s = bohr_to_progression(&bohr(n, &[f], rho), CAP, SHORT_VECTOR_BUDGET).unwrap();
                    assert!(s.ok(), "n={n} f={f} rho={rho} {s:?}");
                }
            }
        }
        for n in [101u64, 499, 1009] {
            for (f1, f2) in [(1u64, 2u64), (3, 17), (1, n / 3)] {
                let s = bohr_to_progression(&bohr(n, &[f1, f2], Ratio::new(2, 5)), CAP, SHORT_VECTOR_BUDGET).unwrap();
                assert!(s.ok(), "n={n} {s:?}");
            }
        }
    }

    #[test]
    fn bohr_in_progression_check() {
        let c = cyc_prog(101, 0, &[1], &[20], true);
        assert!(progression_to_bohr_check(&c, &bohr(101, &[1], Ratio::zero()), CAP).unwrap());
        assert!(progression_to_bohr_check(&c, &bohr(101, &[1], Ratio::new(1, 5)), CAP).unwrap());
        assert!(!progression_to_bohr_check(&c, &bohr(101, &[1], Ratio::new(1, 4)), CAP).unwrap());
    }

    #[test]
    fn bohr_sum_examples() {
        let b1 = bohr(101, &[1], Ratio::new(1, 5));
        let r = bohr_sum_containment_check(&b1, &b1, 2, 20, CAP).unwrap();
        assert!(r.least_r.is_some());
        let b2 = bohr(101, &[3], Ratio::new(1, 5));
        let r = bohr_sum_containment_check(&b1, &b2, 3, 20, CAP).unwrap();
        assert!(r.holds);
        let b3 = bohr(64, &[1], Ratio::new(1, 10));
        let b4 = bohr(64, &[2], Ratio::new(1, 10));
        let r = bohr_sum_containment_check(&b3, &b4, 5, 20, CAP).unwrap();
        assert_eq!(r.holds, r.least_r.is_some_and(|l| l <= 5));
    }

    #[test]
    fn biased_form_examples() {
        let g = FinAbGroup::cyclic(1009);
        let c = certify(&CosetProgression::new(&g, g.zero(), vec![g.element(&[1]).unwrap()], vec![50], true, vec![]).unwrap(), CAP).unwrap();
        let zero = ProgressionForm { constant: TorusValue::ZERO, alphas: vec![TorusValue::ZERO], chi_h: Character(vec![0]) };
        match biased_progression_form(&c, &zero, 0.5, CAP).unwrap() {
            BiasedForm::Shrunk { lens, verified, .. } => {
                assert_eq!(lens, vec![50]);
                assert!(verified.iter().all(|v| v.1));
            }
            _ => panic!(),
        }
        let slope = ProgressionForm { constant: TorusValue::new(1, 3), alphas: vec![TorusValue::new(1, 20000)], chi_h: Character(vec![0]) };
        match biased_progression_form(&c, &slope, 0.5, CAP).unwrap() {
            BiasedForm::Shrunk { lens, verified, size_bound_holds, .. } => {
                assert_eq!(lens, vec![20]);
                assert!(verified.iter().all(|v| v.1) && size_bound_holds);
            }
            _ => panic!(),
        }
        let steep = ProgressionForm { constant: TorusValue::ZERO, alphas: vec![TorusValue::new(1, 2)], chi_h: Character(vec![0]) };
        assert!(matches!(biased_progression_form(&c, &steep, 0.5, CAP).unwrap(), BiasedForm::NoWitness { .. }));
        // phi vanishing on H
        let g = FinAbGroup::new(vec![2, 1000]).unwrap();
        let c = CosetProgression::new(&g, g.zero(), vec![g.element(&[0, 1]).unwrap()], vec![40], true, vec![g.element(&[1, 0]).unwrap()]).unwrap();
        let c = certify(&c, CAP).unwrap();
        let f = ProgressionForm { constant: TorusValue::ZERO, alphas: vec![TorusValue::new(1, 100000)], chi_h: Character(vec![0, 10]) };
        match biased_progression_form(&c, &f, 0.5, CAP).unwrap() {
            BiasedForm::Shrunk { lens, verified, .. } => {
                assert_eq!(lens, vec![40]);
                assert!(verified.iter().all(|v| v.1));
            }
            _ => panic!(),
        }
        let twist = ProgressionForm { chi_h: Character(vec![1, 0]), ..f };
        assert!(matches!(biased_progression_form(&c, &twist, 0.5, CAP).unwrap(), BiasedForm::NoWitness { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn exp_sum_estimate(n in 1u64..300, a in -2.0f64..2.0) {
            prop_assert!(exp_sum(n, a) <= exp_sum_bound(n, a) * (1.0 + 1e-9) + 1e-9);
        }

        #[test]
        fn shrink_monotone(n in 50u64..400, v in 1i64..50, l in 0u64..12, e1 in 0i64..=12, e2 in 0i64..=12) {
            let c = cyc_prog(n, 0, &[v], &[l], true);
            let Properness::Proper(c) = properness_check(&c, CAP).unwrap() else { return Ok(()) };
            let (lo, hi) = (e1.min(e2), e1.max(e2));
            let a = shrink(&c, Ratio::new(lo, 12)).unwrap().prog().indicator(CAP).unwrap();
            let b = shrink(&c, Ratio::new(hi, 12)).unwrap().prog().indicator(CAP).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(&x, &y)| !x || y));
        }

        #[test]
        fn properness_matches_count(n in 2u64..120, v in 0i64..120, l in 0u64..10) {
            let c = cyc_prog(n, 0, &[v], &[l], true);
            let distinct = c.members(CAP).unwrap().len() as u128;
            let proper = matches!(properness_check(&c, CAP).unwrap(), Properness::Proper(_));
            prop_assert_eq!(proper, distinct == c.claimed_size());
        }
    }
}
