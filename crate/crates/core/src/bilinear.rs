//! Bilinear Bohr varieties, directional difference operators, bihomomorphism checks,
//! arrangements and quasirandomness statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_complex::Complex64;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bohr::{BohrSet, Radius};
use crate::error::{pre, HfaError, Result};
use crate::fourier::box_norm;
use crate::freiman::{e_hom_check, freiman_check, ErrorSet, PartialMap};
use crate::group::{Character, FinAbGroup, GroupElement};
use crate::rng;

/// A finite subset of `G1 x G2`, points stored as element indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointSet {
    pub g1: FinAbGroup,
    pub g2: FinAbGroup,
    pub points: BTreeSet<(u64, u64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dir {
    #[serde(rename = "h")]
    Hor,
    #[serde(rename = "v")]
    Ver,
}

impl PointSet {
    pub fn new(g1: &FinAbGroup, g2: &FinAbGroup, points: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let points: BTreeSet<(u64, u64)> = points.into_iter().collect();
        pre(points.iter().all(|&(x, y)| x < g1.order() && y < g2.order()), || "point outside G1 x G2".into())?;
        Ok(PointSet { g1: g1.clone(), g2: g2.clone(), points })
    }

    pub fn product(g1: &FinAbGroup, g2: &FinAbGroup, s: &[u64], t: &[u64]) -> Result<Self> {
        Self::new(g1, g2, s.iter().flat_map(|&x| t.iter().map(move |&y| (x, y))))
    }

    pub fn full(g1: &FinAbGroup, g2: &FinAbGroup) -> Self {
        let pts = (0..g1.order()).flat_map(|x| (0..g2.order()).map(move |y| (x, y))).collect();
        PointSet { g1: g1.clone(), g2: g2.clone(), points: pts }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, x: u64, y: u64) -> bool {
        self.points.contains(&(x, y))
    }

    fn rows(&self) -> BTreeMap<u64, Vec<u64>> {
        let mut rows: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for &(x, y) in &self.points {
            rows.entry(y).or_default().push(x);
        }
        rows
    }

    fn cols(&self) -> BTreeMap<u64, Vec<u64>> {
        let mut cols: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for &(x, y) in &self.points {
            cols.entry(x).or_default().push(y);
        }
        cols
    }

    fn check_budget(&self, cap: u64) -> Result<()> {
        let worst = self.rows().values().chain(self.cols().values()).map(|v| (v.len() as u128).pow(2)).sum::<u128>();
        if worst > cap as u128 {
            return Err(HfaError::Budget(format!("difference set work {worst} exceeds cap {cap}")));
        }
        Ok(())
    }
}

/// `D_hor A = {(x1 - x2, y) : (x1, y), (x2, y) in A}`.
pub fn d_hor(a: &PointSet, cap: u64) -> Result<PointSet> {
    a.check_budget(cap)?;
    let g = &a.g1;
    let pts: Vec<(u64, u64)> = a
        .rows()
        .into_par_iter()
        .flat_map_iter(|(y, xs)| {
            let mut out = BTreeSet::new();
            for &x1 in &xs {
                for &x2 in &xs {
                    out.insert((g.add_idx(x1, g.neg_idx(x2)), y));
                }
            }
            out
        })
        .collect();
    PointSet::new(&a.g1, &a.g2, pts)
}

/// `D_ver A = {(x, y1 - y2) : (x, y1), (x, y2) in A}`.
pub fn d_ver(a: &PointSet, cap: u64) -> Result<PointSet> {
    a.check_budget(cap)?;
    let g = &a.g2;
    let pts: Vec<(u64, u64)> = a
        .cols()
        .into_par_iter()
        .flat_map_iter(|(x, ys)| {
            let mut out = BTreeSet::new();
            for &y1 in &ys {
                for &y2 in &ys {
                    out.insert((x, g.add_idx(y1, g.neg_idx(y2))));
                }
            }
            out
        })
        .collect();
    PointSet::new(&a.g1, &a.g2, pts)
}

/// Applies a word of operators left to right, e.g. `"hvh"` is `D_hor` then `D_ver` then `D_hor`.
pub fn apply_word(a: &PointSet, word: &str, cap: u64) -> Result<PointSet> {
    let mut cur = a.clone();
    for ch in word.chars() {
        cur = match ch {
            'h' | 'H' => d_hor(&cur, cap)?,
            'v' | 'V' => d_ver(&cur, cap)?,
            _ => return Err(HfaError::Input(format!("unknown operator {ch:?} in word"))),
        };
    }
    Ok(cur)
}

/// A map on a subset of `G1 x G2` with values in `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiMap {
    pub g1: FinAbGroup,
    pub g2: FinAbGroup,
    pub codomain: FinAbGroup,
    pub table: BTreeMap<(u64, u64), u64>,
}

impl BiMap {
    pub fn from_fn(dom: &PointSet, k: &FinAbGroup, f: impl Fn(u64, u64) -> u64) -> Result<Self> {
        let table: BTreeMap<(u64, u64), u64> = dom.points.iter().map(|&(x, y)| ((x, y), f(x, y))).collect();
        pre(table.values().all(|&v| v < k.order()), || "value outside K".into())?;
        Ok(BiMap { g1: dom.g1.clone(), g2: dom.g2.clone(), codomain: k.clone(), table })
    }

    pub fn domain(&self) -> PointSet {
        PointSet { g1: self.g1.clone(), g2: self.g2.clone(), points: self.table.keys().copied().collect() }
    }

    /// `x -> phi(x, y)` for a fixed `y`.
    pub fn row(&self, y: u64) -> PartialMap {
        let table: HashMap<u64, u64> = self.table.iter().filter(|((_, b), _)| *b == y).map(|(&(a, _), &v)| (a, v)).collect();
        PartialMap { domain_group: self.g1.clone(), codomain: self.codomain.clone(), table }
    }

    /// `y -> phi(x, y)` for a fixed `x`.
    pub fn column(&self, x: u64) -> PartialMap {
        let table: HashMap<u64, u64> = self.table.iter().filter(|((a, _), _)| *a == x).map(|(&(_, b), &v)| (b, v)).collect();
        PartialMap { domain_group: self.g2.clone(), codomain: self.codomain.clone(), table }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BihomWitness {
    pub dir: Dir,
    /// The fixed coordinate of the offending row or column.
    pub fixed: GroupElement,
    pub quadruple: [GroupElement; 4],
}

#[derive(Clone, Debug, Serialize)]
pub struct BihomCheck {
    pub holds: bool,
    pub witness: Option<BihomWitness>,
}

fn bihom_generic(phi: &BiMap, cap: u64, check: impl Fn(&PartialMap) -> Result<Option<[GroupElement; 4]>>) -> Result<BihomCheck> {
    let dom = phi.domain();
    for (y, _) in dom.rows() {
        if let Some(q) = check(&phi.row(y))? {
            let w = BihomWitness { dir: Dir::Hor, fixed: phi.g2.element_at(y), quadruple: q };
            return Ok(BihomCheck { holds: false, witness: Some(w) });
        }
    }
    for (x, _) in dom.cols() {
        if let Some(q) = check(&phi.column(x))? {
            let w = BihomWitness { dir: Dir::Ver, fixed: phi.g1.element_at(x), quadruple: q };
            return Ok(BihomCheck { holds: false, witness: Some(w) });
        }
    }
    let _ = cap;
    Ok(BihomCheck { holds: true, witness: None })
}

/// Freiman bihomomorphism: every row and every column is a Freiman homomorphism.
pub fn bihom_check(phi: &BiMap, cap: u64) -> Result<BihomCheck> {
    bihom_generic(phi, cap, |m| Ok(freiman_check(m, cap)?.witness))
}

pub fn e_bihom_check(phi: &BiMap, e: &ErrorSet, cap: u64) -> Result<BihomCheck> {
    bihom_generic(phi, cap, |m| Ok(e_hom_check(m, e, cap)?.witness))
}

/// Whether `phi_1 - phi_2 + phi_3 - phi_4` vanishes on the common domain; returns the first
/// point where it does not.
pub fn bohr_respected_check(maps: [&PartialMap; 4]) -> Result<Option<GroupElement>> {
    let k = &maps[0].codomain;
    let g = &maps[0].domain_group;
    pre(maps.iter().all(|m| &m.codomain == k && &m.domain_group == g), || "maps must share groups".into())?;
    let mut dom = maps[0].domain();
    for m in &maps[1..] {
        dom.retain(|y| m.table.contains_key(y));
    }
    for y in dom {
        let v = |i: usize| maps[i].table[&y];
        let s = k.add_idx(k.add_idx(v(0), k.neg_idx(v(1))), k.add_idx(v(2), k.neg_idx(v(3))));
        if s != 0 {
            return Ok(Some(g.element_at(y)));
        }
    }
    Ok(None)
}

/// Arrangement shape `(d_1, ..., d_r)`; each level concatenates `d_i` lower arrangements along
/// the given direction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape(pub Vec<(usize, Dir)>);

impl Shape {
    pub fn points(&self) -> usize {
        self.0.iter().map(|&(d, _)| d).product()
    }

    /// Sign of each point in the alternating sum, in arrangement order.
    pub fn signs(&self) -> Vec<i8> {
        let mut s = vec![1i8];
        for &(d, _) in &self.0 {
            s = (0..d).flat_map(|i| {
                let sg = if i % 2 == 0 { 1 } else { -1 };
                s.iter().map(move |&t| t * sg)
            }).collect();
        }
        s
    }
}

/// Maximum number of points per arrangement.
pub const MAX_ARRANGEMENT_POINTS: usize = 64;

/// Counts of arrangements by length, one table per level.
pub struct Arrangements<'a> {
    dom: &'a PointSet,
    shape: Shape,
    /// `tables[r][(x, y)]`: number of arrangements of the first `r` levels with length `(x, y)`.
    tables: Vec<Vec<u128>>,
}

impl<'a> Arrangements<'a> {
    pub fn new(dom: &'a PointSet, shape: Shape, cap: u64) -> Result<Self> {
        pre(shape.points() <= MAX_ARRANGEMENT_POINTS, || format!("shape has more than {MAX_ARRANGEMENT_POINTS} points"))?;
        pre(shape.0.iter().all(|&(d, _)| d >= 1), || "shape entries must be positive".into())?;
        let (n1, n2) = (dom.g1.order(), dom.g2.order());
        let work: u128 = shape.0.iter().map(|&(d, dir)| {
            let side = if dir == Dir::Hor { n1 } else { n2 } as u128;
            d as u128 * side * (n1 * n2) as u128
        }).sum();
        pre(work <= cap as u128 || shape.0.is_empty(), || "arrangement table work exceeds cap".into())
            .map_err(|e| HfaError::Budget(e.to_string()))?;
        let idx = |x: u64, y: u64| (x * n2 + y) as usize;
        let mut base = vec![0u128; (n1 * n2) as usize];
        for &(x, y) in &dom.points {
            base[idx(x, y)] = 1;
        }
        let mut tables = vec![base];
        for &(d, dir) in &shape.0 {
            let prev = tables.last().expect("base table");
            let (g, other) = match dir {
                Dir::Hor => (&dom.g1, n2),
                Dir::Ver => (&dom.g2, n1),
            };
            let n = g.order();
            let line = |fixed: u64, t: u64| match dir {
                Dir::Hor => prev[idx(t, fixed)],
                Dir::Ver => prev[idx(fixed, t)],
            };
            // alternating convolution along each line
            let lines: Vec<Vec<u128>> = (0..other)
                .into_par_iter()
                .map(|fixed| {
                    let v: Vec<u128> = (0..n).map(|t| line(fixed, t)).collect();
                    let mut h = v.clone();
                    for i in 1..d {
                        let mut next = vec![0u128; n as usize];
                        for (s, &hs) in h.iter().enumerate() {
                            if hs == 0 {
                                continue;
                            }
                            for (a, &va) in v.iter().enumerate() {
                                if va == 0 {
                                    continue;
                                }
                                let a = a as u64;
                                let term = if i % 2 == 0 { a } else { g.neg_idx(a) };
                                next[g.add_idx(s as u64, term) as usize] += hs * va;
                            }
                        }
                        h = next;
                    }
                    h
                })
                .collect();
            let mut t = vec![0u128; (n1 * n2) as usize];
            for (fixed, h) in lines.iter().enumerate() {
                for (s, &c) in h.iter().enumerate() {
                    let (x, y) = match dir {
                        Dir::Hor => (s as u64, fixed as u64),
                        Dir::Ver => (fixed as u64, s as u64),
                    };
                    t[idx(x, y)] = c;
                }
            }
            tables.push(t);
        }
        Ok(Arrangements { dom, shape, tables })
    }

    pub fn count(&self, x: u64, y: u64) -> u128 {
        self.tables.last().expect("base table")[(x * self.dom.g2.order() + y) as usize]
    }

    fn count_at(&self, level: usize, x: u64, y: u64) -> u128 {
        self.tables[level][(x * self.dom.g2.order() + y) as usize]
    }

    /// Every arrangement of length `(x, y)`, depth first, pruning blocks with no completions.
    pub fn enumerate(&self, x: u64, y: u64, cap: u64) -> Result<Vec<Vec<(u64, u64)>>> {
        if self.count(x, y) > cap as u128 {
            return Err(HfaError::Budget(format!("{} arrangements exceed cap", self.count(x, y))));
        }
        Ok(self.enum_level(self.shape.0.len(), x, y))
    }

    fn enum_level(&self, level: usize, x: u64, y: u64) -> Vec<Vec<(u64, u64)>> {
        if self.count_at(level, x, y) == 0 {
            return vec![];
        }
        if level == 0 {
            return vec![vec![(x, y)]];
        }
        let (d, dir) = self.shape.0[level - 1];
        let g = if dir == Dir::Hor { &self.dom.g1 } else { &self.dom.g2 };
        let target = if dir == Dir::Hor { x } else { y };
        let len_at = |a: u64| if dir == Dir::Hor { (a, y) } else { (x, a) };
        let mut out = Vec::new();
        // choose a_1..a_{d-1}; a_d is forced by the alternating sum
        let mut stack: Vec<(Vec<u64>, u64)> = vec![(vec![], 0)];
        while let Some((chosen, partial)) = stack.pop() {
            let i = chosen.len();
            if i + 1 == d {
                let rest = g.add_idx(target, g.neg_idx(partial));
                let last = if i % 2 == 0 { rest } else { g.neg_idx(rest) };
                let (lx, ly) = len_at(last);
                if self.count_at(level - 1, lx, ly) == 0 {
                    continue;
                }
                let mut lens = chosen.clone();
                lens.push(last);
                let mut acc: Vec<Vec<(u64, u64)>> = vec![vec![]];
                for &a in &lens {
                    let (ax, ay) = len_at(a);
                    let subs = self.enum_level(level - 1, ax, ay);
                    acc = acc.iter().flat_map(|p| subs.iter().map(move |s| [p.clone(), s.clone()].concat())).collect();
                }
                out.extend(acc);
                continue;
            }
            for a in (0..g.order()).rev() {
                let (ax, ay) = len_at(a);
                if self.count_at(level - 1, ax, ay) == 0 {
                    continue;
                }
                let term = if i % 2 == 0 { a } else { g.neg_idx(a) };
                let mut c = chosen.clone();
                c.push(a);
                stack.push((c, g.add_idx(partial, term)));
            }
        }
        out
    }
}

/// Bilinear Bohr variety: points `(x, y)` with `x in C` and `y in B(Gamma ∪ {Theta_i(x)}, rho)`.
#[derive(Clone, Debug)]
pub struct BilinearVariety {
    pub g1: FinAbGroup,
    pub g2: FinAbGroup,
    pub c: Vec<u64>,
    pub gamma: Vec<Character>,
    /// `theta[i][x]` as a character of `G2`.
    pub theta: Vec<HashMap<u64, Character>>,
    pub rho: Radius,
}

impl BilinearVariety {
    pub fn new(
        g1: &FinAbGroup,
        g2: &FinAbGroup,
        c: Vec<u64>,
        gamma: Vec<Character>,
        theta: Vec<HashMap<u64, Character>>,
        rho: Radius,
        cap: u64,
    ) -> Result<Self> {
        let mut c = c;
        c.sort_unstable();
        c.dedup();
        for (i, t) in theta.iter().enumerate() {
            pre(c.iter().all(|x| t.contains_key(x)), || format!("Theta_{i} is not defined on all of C"))?;
            let pm = PartialMap::new(g1, g2, c.iter().map(|&x| (x, g2.index_of(&GroupElement(t[&x].0.clone())))))?;
            let chk = freiman_check(&pm, cap)?;
            pre(chk.holds, || format!("Theta_{i} is not Freiman-linear on C"))?;
        }
        // validates radius and frequencies
        BohrSet::constant(g2, gamma.clone(), rho)?;
        Ok(BilinearVariety { g1: g1.clone(), g2: g2.clone(), c, gamma, theta, rho })
    }

    pub fn codim(&self) -> usize {
        self.gamma.len() + self.theta.len()
    }

    pub fn column_freqs(&self, x: u64) -> Vec<Character> {
        self.gamma.iter().cloned().chain(self.theta.iter().map(|t| t[&x].clone())).collect()
    }

    pub fn column(&self, x: u64) -> Result<BohrSet> {
        pre(self.c.binary_search(&x).is_ok(), || "x is not in C".into())?;
        BohrSet::constant(&self.g2, self.column_freqs(x), self.rho)
    }

    pub fn contains(&self, x: u64, y: u64) -> bool {
        self.c.binary_search(&x).is_ok() && self.column(x).map(|b| b.contains_idx(y)).unwrap_or(false)
    }

    pub fn points(&self, cap: u64) -> Result<PointSet> {
        pre((self.c.len() as u128) * (self.g2.order() as u128) <= cap as u128, || "variety exceeds cap".into())?;
        let mut pts = Vec::new();
        for &x in &self.c {
            for y in self.column(x)?.members(cap)? {
                pts.push((x, y));
            }
        }
        PointSet::new(&self.g1, &self.g2, pts)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QuasirandomStats {
    /// Median relative column density.
    pub delta: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub frac_i: f64,
    pub frac_ii: f64,
    pub eta: f64,
    /// Averaged deviations in the one-sided criterion, relative to the base size.
    pub eps_one_sided: f64,
    pub measured_density: f64,
    pub box_norm: f64,
    /// `3 eps^(1/8)`.
    pub box_bound: f64,
    pub certificate_holds: bool,
}

/// Quasirandomness of the piece of `V` over `xs`, centred at `t`, with shrunk radius `rho'`.
///
/// With `chi = Theta(t)` the base is `B(chi; rho')` and the neighbourhood of `x` is
/// `base ∩ B(Gamma ∪ (Theta(x) - chi); rho')`.
pub fn variety_quasirandomness(v: &BilinearVariety, rho_prime: Radius, t: u64, xs: &[u64], eta: f64, cap: u64) -> Result<QuasirandomStats> {
    pre(!xs.is_empty(), || "empty piece".into())?;
    pre(v.c.binary_search(&t).is_ok() && xs.iter().all(|x| v.c.binary_search(x).is_ok()), || "piece must lie in C".into())?;
    let g2 = &v.g2;
    pre((xs.len() as u128).pow(2) * g2.order() as u128 <= cap as u128, || "pair statistics exceed cap".into())
        .map_err(|e| HfaError::Budget(e.to_string()))?;
    let chi: Vec<Character> = v.theta.iter().map(|th| th[&t].clone()).collect();
    let base = BohrSet::constant(g2, chi.clone(), rho_prime)?.indicator(cap)?;
    let base_size = base.iter().filter(|&&b| b).count();
    let nbhd: Vec<Vec<bool>> = xs
        .par_iter()
        .map(|&x| {
            let mut freqs = v.gamma.clone();
            for (th, c) in v.theta.iter().zip(&chi) {
                freqs.push(g2.char_add(&th[&x], &Character(g2.neg(&GroupElement(c.0.clone())).0)));
            }
            let b = BohrSet::constant(g2, freqs, rho_prime).expect("valid frequencies").indicator(cap).expect("checked cap");
            b.iter().zip(&base).map(|(&p, &q)| p && q).collect()
        })
        .collect();
    let sizes: Vec<usize> = nbhd.iter().map(|n| n.iter().filter(|&&b| b).count()).collect();
    let mut dens: Vec<f64> = sizes.iter().map(|&s| s as f64 / base_size as f64).collect();
    dens.sort_by(|a, b| a.total_cmp(b));
    let delta = dens[(dens.len() - 1) / 2];
    let gsize = g2.order() as f64;
    let bsize = base_size as f64;
    let dev_i: Vec<f64> = sizes.iter().map(|&s| (s as f64 - delta * bsize).abs()).collect();
    let frac_i = dev_i.iter().filter(|&&d| d > eta * gsize).count() as f64 / xs.len() as f64;
    let pair_dev: Vec<f64> = (0..xs.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let nbhd = &nbhd;
            (0..xs.len()).map(move |j| {
                let c = nbhd[i].iter().zip(&nbhd[j]).filter(|(&a, &b)| a && b).count();
                (c as f64 - delta * delta * bsize).abs()
            })
        })
        .collect();
    let frac_ii = pair_dev.iter().filter(|&&d| d > eta * gsize).count() as f64 / pair_dev.len() as f64;
    let eps1 = dev_i.iter().sum::<f64>() / xs.len() as f64 / bsize;
    let eps2 = pair_dev.iter().sum::<f64>() / pair_dev.len() as f64 / bsize;
    let eps = eps1.max(eps2);
    let ys: Vec<usize> = (0..base.len()).filter(|&y| base[y]).collect();
    let total: usize = sizes.iter().sum();
    let dprime = total as f64 / (xs.len() * ys.len()) as f64;
    let m: Vec<Vec<Complex64>> = nbhd
        .iter()
        .map(|n| ys.iter().map(|&y| Complex64::new(n[y] as u8 as f64 - dprime, 0.0)).collect())
        .collect();
    let bn = box_norm(&m)?;
    let box_bound = 3.0 * eps.powf(0.125);
    Ok(QuasirandomStats {
        delta,
        delta_min: dens[0],
        delta_max: *dens.last().expect("nonempty"),
        frac_i,
        frac_ii,
        eta,
        eps_one_sided: eps,
        measured_density: dprime,
        box_norm: bn,
        box_bound,
        certificate_holds: (delta - dprime).abs() <= eps + 1e-12 && bn <= box_bound + 1e-12,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct NeighborhoodStats {
    pub density: f64,
    pub eps: f64,
    pub samples: u64,
    pub exceed_fraction: f64,
    /// `4 k eta^-2 eps`.
    pub bound: f64,
    /// Three standard deviations of a proportion, at worst case `p = 1/2`.
    pub slack: f64,
    pub holds: bool,
}

/// Samples `k`-tuples of left vertices and counts common neighbourhoods deviating from
/// `delta^k |Y|` by at least `eta |Y|`.
pub fn neighborhood_statistics(adj: &[Vec<bool>], k: usize, eta: f64, samples: u64, seed: u64) -> Result<NeighborhoodStats> {
    pre(!adj.is_empty() && !adj[0].is_empty(), || "empty graph".into())?;
    pre(k >= 1 && eta > 0.0 && samples > 0, || "need k >= 1, eta > 0, samples > 0".into())?;
    let (nx, ny) = (adj.len(), adj[0].len());
    let edges: usize = adj.iter().map(|r| r.iter().filter(|&&b| b).count()).sum();
    let delta = edges as f64 / (nx * ny) as f64;
    let m: Vec<Vec<Complex64>> = adj.iter().map(|r| r.iter().map(|&b| Complex64::new(b as u8 as f64 - delta, 0.0)).collect()).collect();
    let eps = box_norm(&m)?;
    let target = delta.powi(k as i32) * ny as f64;
    let exceed: u64 = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, "neighborhood_statistics", i);
            let xs: Vec<usize> = (0..k).map(|_| r.gen_range(0..nx)).collect();
            let common = (0..ny).filter(|&y| xs.iter().all(|&x| adj[x][y])).count();
            ((common as f64 - target).abs() >= eta * ny as f64) as u64
        })
        .sum();
    let frac = exceed as f64 / samples as f64;
    let bound = 4.0 * k as f64 * eps / (eta * eta);
    let slack = 3.0 * (0.25 / samples as f64).sqrt();
    Ok(NeighborhoodStats { density: delta, eps, samples, exceed_fraction: frac, bound, slack, holds: frac <= bound + slack })
}
