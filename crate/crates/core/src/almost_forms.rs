//! Almost-multilinear forms on Bohr sets, regular-Bohr-set calculus checks, the symmetry
//! argument quantity, biased almost-linear structure, and cyclic fractional-part arithmetic.
//!
//! Torus values here are `f64` in `[0, 1)`; defects are always measured from the tables.

use std::collections::{BTreeSet, HashSet};

use num_complex::Complex64;
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::bohr::{bourgain_regular_dilate, fmt_ratio, parse_ratio, BohrSet, DilationSizes, Radius};
use crate::error::{pre, HfaError, Result};
use crate::fourier::{dft, GroupFn};
use crate::group::{Character, FinAbGroup, GroupElement};
use crate::poly_torsion::MultilinearForm;
use crate::progression::{bohr_to_progression, bounded_char_span, SHORT_VECTOR_BUDGET};
use crate::rng;

/// Rounding allowance for `f64` torus arithmetic in hard assertions.
pub const FLOAT_SLACK: f64 = 1e-9;

/// Measured torus defects at or below this are double rounding, not structure.
pub const TORUS_RESOLUTION: f64 = 1e-12;

pub const MAX_ARITY: usize = 4;

/// `||t||_T`, distance to the nearest integer.
pub fn tnorm(t: f64) -> f64 {
    (t - t.round()).abs()
}

pub fn e(t: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * t)
}

/// Centered representative of `x` modulo `n`, in `(-n/2, n/2]`.
pub fn centered(x: u64, n: u64) -> i64 {
    let x = x % n;
    if 2 * x <= n {
        x as i64
    } else {
        x as i64 - n as i64
    }
}

/// `phi : B^k -> T` stored over the members of `B`, with its linearity defect.
#[derive(Clone, Debug)]
pub struct EpsMultilinearForm {
    pub base: BohrSet,
    pub arity: usize,
    pub members: Vec<u64>,
    pos: Vec<u32>,
    pub values: Vec<f64>,
    /// Certified upper bound on the defect; at least the measured one.
    pub eps: f64,
    pub eps_report: EpsReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpsReport {
    pub eps_measured: f64,
    pub exhaustive: bool,
    pub checked: u64,
}

const ABSENT: u32 = u32::MAX;

fn positions(g: &FinAbGroup, members: &[u64]) -> Vec<u32> {
    let mut pos = vec![ABSENT; g.order() as usize];
    for (i, &m) in members.iter().enumerate() {
        pos[m as usize] = i as u32;
    }
    pos
}

impl EpsMultilinearForm {
    pub fn from_fn(base: &BohrSet, arity: usize, f: impl Fn(&[u64]) -> f64 + Sync, cap: u64, samples: u64, seed: u64) -> Result<Self> {
        pre((1..=MAX_ARITY).contains(&arity), || format!("arity must be in 1..={MAX_ARITY}"))?;
        let members = base.members(cap)?;
        let m = members.len();
        pre(!members.is_empty(), || "empty base Bohr set".into())?;
        let total = (m as u128).pow(arity as u32);
        pre(total <= cap as u128, || format!("table of {total} entries exceeds cap")).map_err(|e| HfaError::Budget(e.to_string()))?;
        let values: Vec<f64> = (0..total as usize)
            .into_par_iter()
            .map(|mut flat| {
                let mut args = [0u64; MAX_ARITY];
                for s in (0..arity).rev() {
                    args[s] = members[flat % m];
                    flat /= m;
                }
                f(&args[..arity]).rem_euclid(1.0)
            })
            .collect();
        let pos = positions(&base.group, &members);
        let mut form = EpsMultilinearForm {
            base: base.clone(),
            arity,
            members,
            pos,
            values,
            eps: 0.0,
            eps_report: EpsReport { eps_measured: 0.0, exhaustive: true, checked: 0 },
        };
        form.eps_report = form.measure_eps(cap, samples, seed);
        form.eps = form.eps_report.eps_measured;
        Ok(form)
    }

    /// Replaces the stored bound by a claimed one, refusing claims below the measurement.
    pub fn with_eps(mut self, claimed: f64) -> Result<Self> {
        if claimed + FLOAT_SLACK < self.eps_report.eps_measured {
            return Err(HfaError::Certificate(format!("claimed eps {claimed} below measured {}", self.eps_report.eps_measured)));
        }
        self.eps = claimed.max(self.eps_report.eps_measured);
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn pos(&self, x: u64) -> Option<usize> {
        let p = self.pos[x as usize];
        (p != ABSENT).then_some(p as usize)
    }

    fn flat(&self, p: &[usize]) -> usize {
        p.iter().fold(0, |acc, &i| acc * self.members.len() + i)
    }

    pub fn get(&self, args: &[u64]) -> Option<f64> {
        let mut p = [0usize; MAX_ARITY];
        for (s, &a) in args.iter().enumerate() {
            p[s] = self.pos(a)?;
        }
        Some(self.values[self.flat(&p[..self.arity])])
    }

    /// Triples `(y, z, y + z)` of positions inside the base.
    fn additive_pairs(&self) -> Vec<(usize, usize, usize)> {
        let g = &self.base.group;
        let ms = &self.members;
        (0..ms.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                (0..ms.len()).filter_map(move |j| self.pos(g.add_idx(ms[i], ms[j])).map(|k| (i, j, k)))
            })
            .collect()
    }

    fn defect(&self, slot: usize, others: usize, (y, z, yz): (usize, usize, usize)) -> f64 {
        let m = self.members.len();
        let mut p = [0usize; MAX_ARITY];
        let mut o = others;
        for s in (0..self.arity).rev() {
            if s != slot {
                p[s] = o % m;
                o /= m;
            }
        }
        let mut at = |v: usize| {
            p[slot] = v;
            self.values[self.flat(&p[..self.arity])]
        };
        tnorm(at(yz) - at(y) - at(z))
    }

    /// Max over slots, other arguments and additive pairs of the linearity defect; exhaustive
    /// when it fits in `cap`, sampled otherwise.
    pub fn measure_eps(&self, cap: u64, samples: u64, seed: u64) -> EpsReport {
        let pairs = self.additive_pairs();
        let m = self.members.len();
        let others = m.pow(self.arity as u32 - 1);
        let total = self.arity as u128 * others as u128 * pairs.len() as u128;
        if total <= cap as u128 {
            let eps = (0..self.arity * others)
                .into_par_iter()
                .map(|t| pairs.iter().map(|&pr| self.defect(t / others, t % others, pr)).fold(0.0, f64::max))
                .reduce(|| 0.0, f64::max);
            EpsReport { eps_measured: eps, exhaustive: true, checked: total as u64 }
        } else {
            let eps = (0..samples)
                .into_par_iter()
                .map(|i| {
                    let mut r = rng::stream(seed, "measure_eps", i);
                    let slot = r.gen_range(0..self.arity);
                    let o = r.gen_range(0..others);
                    self.defect(slot, o, pairs[r.gen_range(0..pairs.len())])
                })
                .reduce(|| 0.0, f64::max);
            EpsReport { eps_measured: eps, exhaustive: false, checked: samples }
        }
    }

    /// The same form on a smaller Bohr set, with its defect measured afresh.
    pub fn restrict(&self, sub: &BohrSet, cap: u64, samples: u64, seed: u64) -> Result<Self> {
        let members = sub.members(cap)?;
        pre(members.iter().all(|&x| self.pos(x).is_some()), || "restriction domain is not inside the base".into())?;
        Self::from_fn(sub, self.arity, |args| self.get(args).expect("inside base"), cap, samples, seed)
    }
}

/// `q : B -> T` with the almost-cubic certificate on a grid of radii.
#[derive(Clone, Debug)]
pub struct AlmostCubic {
    pub base: BohrSet,
    pub members: Vec<u64>,
    pos: Vec<u32>,
    pub values: Vec<f64>,
    pub certificate: AlmostCubicCert,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlmostCubicCert {
    pub eps_measured: f64,
    pub rho_grid: Vec<String>,
    /// Largest `||Delta_{a,b,c,d} q(x)||` seen at each radius.
    pub max_residual: Vec<f64>,
    pub tuples_checked: Vec<u64>,
}

fn max_radius(b: &BohrSet) -> Radius {
    b.radii.iter().copied().max().unwrap_or_else(Radius::zero)
}

fn members_of(b: &BohrSet, cap: u64) -> Result<Vec<u64>> {
    b.members(cap)
}

/// `Delta_{a_1..a_m} q(x)` over a table keyed by group index; `None` if a point leaves the domain.
fn delta_table(g: &FinAbGroup, pos: &[u32], values: &[f64], x: u64, dirs: &[u64]) -> Option<f64> {
    let m = dirs.len();
    let mut acc = 0.0;
    for mask in 0u32..(1 << m) {
        let mut p = x;
        for (i, &a) in dirs.iter().enumerate() {
            if mask >> i & 1 == 1 {
                p = g.add_idx(p, a);
            }
        }
        let k = pos[p as usize];
        if k == ABSENT {
            return None;
        }
        let v = values[k as usize];
        if (m as u32 - mask.count_ones()) % 2 == 0 {
            acc += v;
        } else {
            acc -= v;
        }
    }
    Some(acc)
}

/// Runs `f` on every tuple of `arity` positions when `len^arity <= cap`, else on `samples`
/// seeded tuples; returns the max of the results and the count.
fn over_tuples(len: usize, arity: usize, cap: u64, samples: u64, seed: u64, label: &str, f: impl Fn(&[usize]) -> Option<f64> + Sync) -> (f64, u64) {
    let total = (len as u128).pow(arity as u32);
    let unpack = |mut flat: u64| {
        let mut t = [0usize; 8];
        for s in (0..arity).rev() {
            t[s] = (flat % len as u64) as usize;
            flat /= len as u64;
        }
        t
    };
    let results: Vec<Option<f64>> = if total <= cap as u128 {
        (0..total as u64).into_par_iter().map(|flat| f(&unpack(flat)[..arity])).collect()
    } else {
        (0..samples)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(seed, label, i);
                let t: Vec<usize> = (0..arity).map(|_| r.gen_range(0..len)).collect();
                f(&t)
            })
            .collect()
    };
    let checked = results.iter().filter(|v| v.is_some()).count() as u64;
    (results.into_iter().flatten().fold(0.0, f64::max), checked)
}

impl AlmostCubic {
    /// Builds `q` and checks `||Delta_{a,b,c,d} q(x)|| <= 2^10 rho` for `x, a, b, c, d` in
    /// `B(Gamma, rho)` over the grid `rho0, rho0/2, rho0/4, min(rho0, 1/8)` restricted to
    /// `rho <= 1/8`. Tuples leaving the domain are skipped.
    pub fn certify(base: &BohrSet, values_by_index: &dyn Fn(u64) -> f64, eps_measured: f64, cap: u64, samples: u64, seed: u64) -> Result<Self> {
        let members = members_of(base, cap)?;
        let pos = positions(&base.group, &members);
        let values: Vec<f64> = members.iter().map(|&x| values_by_index(x).rem_euclid(1.0)).collect();
        let rho0 = max_radius(base);
        pre(rho0 > Radius::zero(), || "almost-cubic base needs a positive radius".into())?;
        let eighth = Radius::new(1, 8);
        let mut grid: Vec<Radius> = vec![rho0, rho0 / 2, rho0 / 4, rho0.min(eighth)];
        grid.retain(|r| *r <= eighth);
        grid.sort();
        grid.dedup();
        grid.reverse();
        let g = &base.group;
        let mut max_residual = Vec::new();
        let mut tuples_checked = Vec::new();
        for (gi, rho) in grid.iter().enumerate() {
            let dil = members_of(&base.dilate(rho / rho0), cap)?;
            let bound = 1024.0 * *rho.numer() as f64 / *rho.denom() as f64;
            let (worst, checked) = over_tuples(dil.len(), 5, cap, samples, seed ^ gi as u64, "almost_cubic", |t| {
                let dirs: Vec<u64> = t[1..].iter().map(|&i| dil[i]).collect();
                delta_table(g, &pos, &values, dil[t[0]], &dirs).map(tnorm)
            });
            if worst > bound + FLOAT_SLACK {
                return Err(HfaError::Certificate(format!("fourth derivative {worst} exceeds 2^10 rho = {bound} at rho = {}", fmt_ratio(rho))));
            }
            max_residual.push(worst);
            tuples_checked.push(checked);
        }
        Ok(AlmostCubic {
            base: base.clone(),
            members,
            pos,
            values,
            certificate: AlmostCubicCert { eps_measured, rho_grid: grid.iter().map(fmt_ratio).collect(), max_residual, tuples_checked },
        })
    }

    pub fn get(&self, x: u64) -> Option<f64> {
        let p = self.pos[x as usize];
        (p != ABSENT).then(|| self.values[p as usize])
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagCubic {
    pub eta: f64,
    /// Largest `||Delta_{a,b,c} q(x) - sum over Sym_3 of psi(a,b,c)||` on `B_{1/4}`.
    pub max_residual: f64,
    pub residual_bound: f64,
    /// Largest `||Delta_{a,b,c,d} q(x)||` on `B_{1/8}`.
    pub max_fourth: f64,
    pub fourth_bound: f64,
    pub residual_checked: u64,
    pub fourth_checked: u64,
    pub certificate: AlmostCubicCert,
}

const SYM3: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// `q(x) = psi(x, x, x)` with the symmetrised third-derivative residual, `eta` being the
/// measured defect of `psi`. Partial sums of four points of `B_{1/4}` stay in `B`, so each of
/// the eight terms of `Delta_{a,b,c} q` expands in at most 63 defect steps.
pub fn diag_cubic(psi: &EpsMultilinearForm, cap: u64, samples: u64, seed: u64) -> Result<(AlmostCubic, DiagCubic)> {
    pre(psi.arity == 3, || "diag_cubic needs a trilinear form".into())?;
    let g = &psi.base.group;
    let eta = psi.eps;
    let qv = |x: u64| psi.get(&[x, x, x]).expect("diagonal inside base");
    let q = AlmostCubic::certify(&psi.base, &qv, psi.eps_report.eps_measured, cap, samples, seed)?;
    let quarter = members_of(&psi.base.dilate(Radius::new(1, 4)), cap)?;
    let (max_residual, residual_checked) = over_tuples(quarter.len(), 4, cap, samples, seed, "diag_residual", |t| {
        let (x, abc) = (quarter[t[0]], [quarter[t[1]], quarter[t[2]], quarter[t[3]]]);
        let d3 = delta_table(g, &q.pos, &q.values, x, &abc)?;
        let sym: f64 = SYM3.iter().map(|p| psi.get(&[abc[p[0]], abc[p[1]], abc[p[2]]]).expect("inside base")).sum();
        Some(tnorm(d3 - sym))
    });
    let residual_bound = 512.0 * eta;
    if max_residual > residual_bound + FLOAT_SLACK {
        return Err(HfaError::Certificate(format!("symmetrised residual {max_residual} exceeds 2^9 eta = {residual_bound}")));
    }
    let eighth = members_of(&psi.base.dilate(Radius::new(1, 8)), cap)?;
    let (max_fourth, fourth_checked) = over_tuples(eighth.len(), 5, cap, samples, seed, "diag_fourth", |t| {
        let dirs: Vec<u64> = t[1..].iter().map(|&i| eighth[i]).collect();
        delta_table(g, &q.pos, &q.values, eighth[t[0]], &dirs).map(tnorm)
    });
    let fourth_bound = 1024.0 * eta;
    if max_fourth > fourth_bound + FLOAT_SLACK {
        return Err(HfaError::Certificate(format!("fourth derivative {max_fourth} exceeds 2^10 eta = {fourth_bound}")));
    }
    let report = DiagCubic {
        eta,
        max_residual,
        residual_bound,
        max_fourth,
        fourth_bound,
        residual_checked,
        fourth_checked,
        certificate: q.certificate.clone(),
    };
    Ok((q, report))
}

/// `1 - 100 d |t| <= |B_{1+t}| / |B| <= 1 + 100 d |t|` on a grid of `|t| <= 1/(100 d)`.
pub fn regularity_check(b: &BohrSet, steps_per_unit: i64, cap: u64) -> Result<bool> {
    let d = b.codim().max(1) as i128;
    let sizes = DilationSizes::new(b, cap)?;
    let base = sizes.count(Ratio::one()) as i128;
    if base == 0 {
        return Ok(false);
    }
    let step = Ratio::<i128>::new(1, steps_per_unit as i128 * d);
    let tmax = Ratio::<i128>::new(1, 100 * d);
    let mut t = -tmax;
    while t <= tmax {
        let ratio = Ratio::from_integer(sizes.count(Ratio::one() + t) as i128) / base;
        let slack = Ratio::from_integer(100 * d) * t.abs();
        if ratio < Ratio::one() - slack || ratio > Ratio::one() + slack {
            return Ok(false);
        }
        t += step;
    }
    Ok(true)
}

/// Grid resolution for regularity checks, per unit of `1/d`.
pub const REGULARITY_STEPS: i64 = 2000;

/// `B_delta` regular for some `delta` in `[1/2, 1]`; returns the dilate and `delta`.
pub fn regular_dilate(b: &BohrSet, cap: u64) -> Result<(BohrSet, Radius)> {
    let r = bourgain_regular_dilate(b, REGULARITY_STEPS, cap)?;
    let delta = parse_ratio(&r.delta)?;
    Ok((b.dilate(delta), delta))
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    pub measured_c: f64,
    pub c: f64,
    pub b_size: u64,
    pub codim: usize,
    /// `B_{rho_1} = B.dilate(rho1)`.
    pub rho1: String,
    pub b_rho1_size: u64,
    pub eps: f64,
    pub eps_bound: f64,
    /// `sum_x |sum_y f2(y) f3(x+y) e(theta(x,y))|^2 / |B|^3`, at least `c^2`.
    pub cauchy_schwarz: f64,
    pub best_shift: (GroupElement, GroupElement),
    /// Radius-reduced correlation at the best shift over `|B| |B_{rho_1}|^2`.
    pub shift_value: f64,
    pub shift_target: f64,
    pub shifts_tried: u64,
    /// `Re sum (1*1)(y1) (1*1)(y2) e(theta(y1,y2) - theta(y2,y1))`.
    pub quantity: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub enum SymmetryOutcome {
    NoWitness { measured_c: f64, c: f64, reason: String },
    Certified(SymmetryReport),
}

pub struct SymmetryInput<'a> {
    /// `B = B_rho`, checked to be regular.
    pub b: &'a BohrSet,
    /// `theta` on `B_{2 rho}`.
    pub theta: &'a EpsMultilinearForm,
    /// `f_1, f_2, f_3` as tables over the whole group.
    pub f: [&'a [Complex64]; 3],
    pub c: f64,
    pub shift_samples: u64,
    pub seed: u64,
    pub cap: u64,
}

/// `(1_B * 1_B)(y)` with sums, over the whole group.
fn self_convolution(g: &FinAbGroup, members: &[u64]) -> Vec<f64> {
    let mut conv = vec![0.0; g.order() as usize];
    for &u in members {
        for &v in members {
            conv[g.add_idx(u, v) as usize] += 1.0;
        }
    }
    conv
}

fn ratio_below(x: f64, scale: i64) -> Radius {
    Radius::new((x * scale as f64).floor() as i64, scale)
}

/// Evaluates both sides of the symmetry argument by enumeration and asserts the conclusion.
pub fn symmetry_defect(inp: &SymmetryInput) -> Result<SymmetryOutcome> {
    let b = inp.b;
    let g = &b.group;
    let theta = inp.theta;
    pre(theta.arity == 2, || "theta must be bilinear".into())?;
    let d = b.codim();
    pre(d >= 1, || "codimension must be positive".into())?;
    for f in inp.f {
        pre(f.len() as u64 == g.order(), || "f tables must cover the group".into())?;
        pre(f.iter().all(|z| z.norm() <= 1.0 + FLOAT_SLACK), || "f must be 1-bounded".into())?;
    }
    let bm = b.members(inp.cap)?;
    let b2 = b.dilate(Radius::from_integer(2)).members(inp.cap)?;
    pre(b2.iter().all(|&x| theta.pos(x).is_some()), || "theta must be defined on B_{2 rho}".into())?;
    pre(regularity_check(b, REGULARITY_STEPS, inp.cap)?, || "B is not regular".into())?;
    let th = |x: u64, y: u64| theta.get(&[x, y]).expect("inside B_{2 rho}");
    let [f1, f2, f3] = inp.f;
    let nb = bm.len() as f64;
    let corr: Complex64 = bm
        .par_iter()
        .map(|&x| bm.iter().map(|&y| f1[x as usize] * f2[y as usize] * f3[g.add_idx(x, y) as usize] * e(th(x, y))).sum::<Complex64>())
        .sum();
    let measured_c = corr.norm() / (nb * nb);
    if measured_c + FLOAT_SLACK < inp.c {
        return Ok(SymmetryOutcome::NoWitness { measured_c, c: inp.c, reason: "correlation below c".into() });
    }
    let c = inp.c;
    let eps_bound = c.powi(8) / (1u64 << 20) as f64;
    if theta.eps > eps_bound && theta.eps > TORUS_RESOLUTION {
        return Ok(SymmetryOutcome::NoWitness { measured_c, c, reason: format!("eps {} above 2^-20 c^8 = {eps_bound}", theta.eps) });
    }
    // rho_1 <= c^2 rho / (2000 d), then a regular dilate of it
    let t_max = ratio_below(c * c / (2000.0 * d as f64), 1 << 40);
    pre(t_max > Radius::zero(), || "c too small for a positive rho_1".into())?;
    let (_, delta) = regular_dilate(&b.dilate(t_max), inp.cap)?;
    let t = t_max * delta;
    let b1 = b.dilate(t).members(inp.cap)?;
    let n1 = b1.len() as f64;
    // Cauchy-Schwarz in x
    let a_full: Vec<Complex64> = bm
        .par_iter()
        .map(|&x| bm.iter().map(|&y| f2[y as usize] * f3[g.add_idx(x, y) as usize] * e(th(x, y))).sum())
        .collect();
    let cauchy_schwarz = a_full.iter().map(|z| z.norm_sqr()).sum::<f64>() / (nb * nb * nb);
    if cauchy_schwarz + FLOAT_SLACK < c * c {
        return Err(HfaError::Certificate(format!("Cauchy-Schwarz step {cauchy_schwarz} below c^2")));
    }
    // shift search over B_{rho - rho_1}
    let shifts = b.dilate(Radius::one() - t).members(inp.cap)?;
    let cand: Vec<u64> = if (shifts.len() as u64) <= inp.shift_samples {
        shifts.clone()
    } else {
        let mut r = rng::stream(inp.seed, "symmetry_shifts", 0);
        (0..inp.shift_samples).map(|_| shifts[r.gen_range(0..shifts.len())]).collect::<BTreeSet<_>>().into_iter().collect()
    };
    let a_t: Vec<Vec<Complex64>> = cand
        .par_iter()
        .map(|&s| {
            bm.iter()
                .map(|&x| {
                    b1.iter()
                        .map(|&y| {
                            let ys = g.add_idx(y, s);
                            f2[ys as usize] * f3[g.add_idx(x, ys) as usize] * e(th(x, ys))
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let (mut best, mut best_pair) = (-1.0, (0, 0));
    for i in 0..cand.len() {
        for j in 0..cand.len() {
            let v: Complex64 = a_t[i].iter().zip(&a_t[j]).map(|(p, q)| p * q.conj()).sum();
            let v = v.norm() / (nb * n1 * n1);
            if v > best {
                best = v;
                best_pair = (i, j);
            }
        }
    }
    let conv = self_convolution(g, &b1);
    let support: Vec<u64> = (0..g.order()).filter(|&y| conv[y as usize] > 0.0).collect();
    let quantity: f64 = support
        .par_iter()
        .map(|&y1| support.iter().map(|&y2| conv[y1 as usize] * conv[y2 as usize] * (2.0 * std::f64::consts::PI * (th(y1, y2) - th(y2, y1))).cos()).sum::<f64>())
        .sum();
    let bound = c.powi(8) / (1u64 << 13) as f64 * n1.powi(4);
    let holds = quantity + FLOAT_SLACK >= bound;
    if !holds {
        return Err(HfaError::Certificate(format!("symmetry quantity {quantity} below 2^-13 c^8 |B_rho1|^4 = {bound}")));
    }
    Ok(SymmetryOutcome::Certified(SymmetryReport {
        measured_c,
        c,
        b_size: bm.len() as u64,
        codim: d,
        rho1: fmt_ratio(&t),
        b_rho1_size: b1.len() as u64,
        eps: theta.eps,
        eps_bound,
        cauchy_schwarz,
        best_shift: (g.element_at(cand[best_pair.0]), g.element_at(cand[best_pair.1])),
        shift_value: best,
        shift_target: c * c / 2.0,
        shifts_tried: (cand.len() * cand.len()) as u64,
        quantity,
        bound,
        holds,
    }))
}

/// Domain of a biased almost-linear form.
#[derive(Clone, Debug)]
pub enum LinearDomain {
    Subgroup(Vec<GroupElement>),
    /// `[-L, L] . a`
    Progression { a: GroupElement, l: u64 },
}

#[derive(Clone, Debug, Serialize)]
pub enum BiasedLinear {
    NoWitness { bias: f64, c: f64, reason: String },
    Certified { bias: f64, eps: f64, bound: f64, max_norm: f64, window: u64 },
}

/// Checks the structure of a biased `eps`-linear `phi` on a subgroup (`||phi|| <= 9 sqrt(eps)`)
/// or on a proper progression (`||phi(x)|| <= 1000 c^-2 eps` for `|x| <= eps L`).
pub fn biased_linear_structure(g: &FinAbGroup, dom: &LinearDomain, phi: &dyn Fn(&GroupElement) -> f64, c: f64, cap: u64) -> Result<BiasedLinear> {
    let pts: Vec<(i64, u64)> = match dom {
        LinearDomain::Subgroup(gens) => g.span(gens).into_iter().map(|x| (0, x)).collect(),
        LinearDomain::Progression { a, l } => {
            let l = *l as i64;
            let pts: Vec<(i64, u64)> = (-l..=l).map(|k| (k, g.index_of(&g.scale(k, a)))).collect();
            let distinct: HashSet<u64> = pts.iter().map(|p| p.1).collect();
            pre(distinct.len() == pts.len(), || "progression is not proper".into())?;
            pts
        }
    };
    pre((pts.len() as u128).pow(2) <= cap as u128, || "domain squared exceeds cap".into()).map_err(|e| HfaError::Budget(e.to_string()))?;
    let vals: Vec<f64> = pts.iter().map(|&(_, x)| phi(&g.element_at(x))).collect();
    let mut index = std::collections::HashMap::new();
    for (i, &(_, x)) in pts.iter().enumerate() {
        index.insert(x, i);
    }
    let eps = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            (0..pts.len())
                .filter_map(|j| index.get(&g.add_idx(pts[i].1, pts[j].1)).map(|&k| tnorm(vals[k] - vals[i] - vals[j])))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let bias = vals.iter().map(|&v| e(v)).sum::<Complex64>().norm() / pts.len() as f64;
    if bias + FLOAT_SLACK < c {
        return Ok(BiasedLinear::NoWitness { bias, c, reason: "bias below c".into() });
    }
    match dom {
        LinearDomain::Subgroup(_) => {
            if c < 36.0 * std::f64::consts::PI * eps.sqrt() {
                return Ok(BiasedLinear::NoWitness { bias, c, reason: "c below 36 pi sqrt(eps)".into() });
            }
            let bound = 9.0 * eps.sqrt();
            let max_norm = vals.iter().map(|&v| tnorm(v)).fold(0.0, f64::max);
            if max_norm > bound + FLOAT_SLACK {
                return Err(HfaError::Certificate(format!("max ||phi|| = {max_norm} exceeds 9 sqrt(eps) = {bound}")));
            }
            Ok(BiasedLinear::Certified { bias, eps, bound, max_norm, window: pts.len() as u64 })
        }
        LinearDomain::Progression { l, .. } => {
            let bound = 1000.0 * eps / (c * c);
            let reach = eps * *l as f64;
            let window: Vec<f64> = pts.iter().zip(&vals).filter(|((k, _), _)| (k.abs() as f64) <= reach).map(|(_, &v)| tnorm(v)).collect();
            let max_norm = window.iter().copied().fold(0.0, f64::max);
            if max_norm > bound + FLOAT_SLACK {
                return Err(HfaError::Certificate(format!("max ||phi|| = {max_norm} on the eps L window exceeds {bound}")));
            }
            Ok(BiasedLinear::Certified { bias, eps, bound, max_norm, window: window.len() as u64 })
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvolutionCheck {
    pub delta: String,
    pub l1: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `|| 1_B - |B_delta|^-1 1_{B_delta} * 1_{B_{1-delta}} ||_1 <= 200 delta d |B|`.
pub fn convolution_check(b: &BohrSet, delta: Radius, cap: u64) -> Result<ConvolutionCheck> {
    let d = b.codim().max(1);
    pre(delta > Radius::zero() && delta <= Radius::new(1, 200 * d as i64), || "need 0 < delta <= 1/(200 d)".into())?;
    let g = &b.group;
    let ind = b.indicator(cap)?;
    let small = b.dilate(delta).members(cap)?;
    let big = b.dilate(Radius::one() - delta).indicator(cap)?;
    let ns = small.len() as f64;
    let l1: f64 = (0..g.order())
        .into_par_iter()
        .map(|x| {
            let conv = small.iter().filter(|&&s| big[g.add_idx(x, g.neg_idx(s)) as usize]).count() as f64;
            (ind[x as usize] as u8 as f64 - conv / ns).abs()
        })
        .sum();
    let bsize = ind.iter().filter(|&&v| v).count() as f64;
    let bound = 200.0 * (*delta.numer() as f64 / *delta.denom() as f64) * d as f64 * bsize;
    Ok(ConvolutionCheck { delta: fmt_ratio(&delta), l1, bound, holds: l1 <= bound + FLOAT_SLACK })
}

#[derive(Clone, Debug, Serialize)]
pub struct RadiusReductionCheck {
    pub measured_c: f64,
    pub eps: f64,
    pub best_t: GroupElement,
    pub reduced: f64,
    pub target: f64,
    pub holds: bool,
}

/// One-variable radius reduction: with `|sum_{x in B_delta} F(x)| = c |B_delta|` and
/// `delta' <= eps delta / (200 d)`, some `t` in `B_{delta - delta'}` has
/// `|sum_{x in B_delta'} F(x + t)| >= (c - eps) |B_delta'|`. Searches every `t`.
pub fn radius_reduction_check(b: &BohrSet, delta: Radius, delta_p: Radius, f: &[Complex64], eps: f64, cap: u64) -> Result<RadiusReductionCheck> {
    let d = b.codim().max(1) as f64;
    let r = |x: Radius| *x.numer() as f64 / *x.denom() as f64;
    pre(r(delta_p) <= eps * r(delta) / (200.0 * d) + 1e-15, || "delta' above eps delta / (200 d)".into())?;
    pre(regularity_check(&b.dilate(delta), REGULARITY_STEPS, cap)?, || "B_delta is not regular".into())?;
    let g = &b.group;
    let full = b.dilate(delta).members(cap)?;
    let small = b.dilate(delta_p).members(cap)?;
    let shifts = b.dilate(delta - delta_p).members(cap)?;
    let c = full.iter().map(|&x| f[x as usize]).sum::<Complex64>().norm() / full.len() as f64;
    let (best_t, reduced) = shifts
        .par_iter()
        .map(|&t| (t, small.iter().map(|&x| f[g.add_idx(x, t) as usize]).sum::<Complex64>().norm() / small.len() as f64))
        .reduce(|| (0, -1.0), |a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
    let target = c - eps;
    Ok(RadiusReductionCheck { measured_c: c, eps, best_t: g.element_at(best_t), reduced, target, holds: reduced + FLOAT_SLACK >= target })
}

#[derive(Clone, Debug, Serialize)]
pub struct ChangeOfVariablesCheck {
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `|sum F(x, y) - sum F(x, y + lambda x)| <= eps |B_delta| |B_rho|` over `x in B_delta`,
/// `y in B_rho`, when `|lambda| delta <= eps rho / (200 d)` and `B_rho` is regular.
pub fn change_of_variables_check(b: &BohrSet, delta: Radius, rho: Radius, lambda: i64, f: &(dyn Fn(u64, u64) -> Complex64 + Sync), eps: f64, cap: u64) -> Result<ChangeOfVariablesCheck> {
    let d = b.codim().max(1) as f64;
    let r = |x: Radius| *x.numer() as f64 / *x.denom() as f64;
    pre(lambda.unsigned_abs() as f64 * r(delta) <= eps * r(rho) / (200.0 * d) + 1e-15, || "|lambda| delta above eps rho / (200 d)".into())?;
    pre(regularity_check(&b.dilate(rho), REGULARITY_STEPS, cap)?, || "B_rho is not regular".into())?;
    let g = &b.group;
    let xs = b.dilate(delta).members(cap)?;
    let ys = b.dilate(rho).members(cap)?;
    let diff: Complex64 = xs
        .par_iter()
        .map(|&x| {
            let lx = g.index_of(&g.scale(lambda, &g.element_at(x)));
            ys.iter().map(|&y| f(x, y) - f(x, g.add_idx(y, lx))).sum::<Complex64>()
        })
        .sum();
    let bound = eps * xs.len() as f64 * ys.len() as f64;
    Ok(ChangeOfVariablesCheck { lhs: diff.norm(), bound, holds: diff.norm() <= bound + FLOAT_SLACK })
}

#[derive(Clone, Debug, Serialize)]
pub struct ElemExpGrid {
    pub points: usize,
    pub worst_lower: f64,
    pub worst_upper: f64,
    pub worst_real: f64,
    pub holds: bool,
}

/// `4|t| <= |e(t) - 1| <= 2 pi |t|` and `1 - Re e(t) >= 8 t^2` on a uniform grid of `[-1/2, 1/2]`.
/// The `worst_*` fields are the smallest slacks seen (negative means a violation).
pub fn elem_exp_grid(points: usize, tol: f64) -> ElemExpGrid {
    let (mut lo, mut hi, mut re) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for i in 0..points {
        let t = -0.5 + i as f64 / (points - 1) as f64;
        let z = (e(t) - 1.0).norm();
        lo = lo.min(z - 4.0 * t.abs());
        hi = hi.min(2.0 * std::f64::consts::PI * t.abs() - z);
        re = re.min(1.0 - e(t).re - 8.0 * t * t);
    }
    ElemExpGrid { points, worst_lower: lo, worst_upper: hi, worst_real: re, holds: lo >= -tol && hi >= -tol && re >= -tol }
}

#[derive(Clone, Debug, Serialize)]
pub enum Equidistribution {
    NoWitness { bias: f64, c: f64 },
    Window(EquidistributionReport),
}

#[derive(Clone, Debug, Serialize)]
pub struct EquidistributionReport {
    pub bias: f64,
    /// Pairs `(x, y)` whose best character on `B'` is trivial.
    pub window_pairs: u64,
    pub pairs: u64,
    pub window_inner: u64,
    /// `sup ||psi(x, y, z)||` over the window and `z in B'`.
    pub sup_norm: f64,
    /// Smallest normalised correlation of `z -> psi(x, y, z)` with its best character.
    pub min_best_correlation: f64,
    pub e_bilinear_checked: u64,
    pub e_bilinear_failures: u64,
}

/// Bias of `psi` against `(1_{B_delta} * 1_{B_delta})^(x3)`, then the per-pair best character
/// `chi(x, y)` on `B' = B.dilate(inner)`, its `E`-bilinearity on sampled triples with
/// `E = <Gamma>_R`, and `sup ||psi||` on the pairs where `chi` vanishes.
#[allow(clippy::too_many_arguments)]
pub fn equidistribution_probe(psi: &EpsMultilinearForm, delta: Radius, inner: Radius, c: f64, r_span: i64, samples: u64, seed: u64, cap: u64) -> Result<Equidistribution> {
    pre(psi.arity == 3, || "psi must be trilinear".into())?;
    pre(delta <= Radius::new(1, 2), || "delta must be at most 1/2".into())?;
    let base = &psi.base;
    let g = &base.group;
    let bd = base.dilate(delta).members(cap)?;
    let conv = self_convolution(g, &bd);
    let supp: Vec<u64> = (0..g.order()).filter(|&y| conv[y as usize] > 0.0).collect();
    pre(supp.iter().all(|&y| psi.pos(y).is_some()), || "psi must be defined on B_delta + B_delta".into())?;
    pre((supp.len() as u128).pow(3) <= cap as u128, || "bias sum exceeds cap".into()).map_err(|e| HfaError::Budget(e.to_string()))?;
    let total: Complex64 = supp
        .par_iter()
        .map(|&x| {
            let mut s = Complex64::zero();
            for &y in &supp {
                for &z in &supp {
                    s += conv[x as usize] * conv[y as usize] * conv[z as usize] * e(psi.get(&[x, y, z]).unwrap());
                }
            }
            s
        })
        .sum();
    let bias = total.norm() / (bd.len() as f64).powi(6);
    if bias + FLOAT_SLACK < c {
        return Ok(Equidistribution::NoWitness { bias, c });
    }
    let inner_set = base.dilate(inner).members(cap)?;
    pre(inner_set.len() >= 2, || "inner Bohr set must have at least two elements".into())?;
    let inner_ind = base.dilate(inner).indicator(cap)?;
    let ms = &psi.members;
    pre((ms.len() as u128).pow(2) * g.order() as u128 <= cap as u128 * 64, || "character search exceeds cap".into())
        .map_err(|e| HfaError::Budget(e.to_string()))?;
    // best character per pair, by a DFT of 1_{B'} e(psi(x, y, .))
    let best: Vec<(u64, f64)> = (0..ms.len() * ms.len())
        .into_par_iter()
        .map(|t| {
            let (x, y) = (ms[t / ms.len()], ms[t % ms.len()]);
            let vals: Vec<Complex64> = (0..g.order())
                .map(|z| if inner_ind[z as usize] { e(psi.get(&[x, y, z]).unwrap()) } else { Complex64::zero() })
                .collect();
            let ft = dft(&GroupFn::new(g.clone(), vals).expect("table size"));
            let (k, v) = ft.coeffs.iter().enumerate().fold((0usize, -1.0f64), |acc, (k, c)| if c.norm() > acc.1 + 1e-12 { (k, c.norm()) } else { acc });
            (k as u64, v * g.order() as f64 / inner_set.len() as f64)
        })
        .collect();
    let min_best_correlation = best.iter().map(|b| b.1).fold(f64::INFINITY, f64::min);
    let chi = |x: usize, y: usize| best[x * ms.len() + y].0;
    // E-bilinearity in the first slot on sampled (x1, x2, y)
    let e_span = bounded_char_span(g, &base.freqs, r_span);
    let mut checked = 0;
    let mut failures = 0;
    let mut r = rng::stream(seed, "equidistribution", 0);
    for _ in 0..samples {
        let (i, j, y) = (r.gen_range(0..ms.len()), r.gen_range(0..ms.len()), r.gen_range(0..ms.len()));
        let Some(k) = psi.pos(g.add_idx(ms[i], ms[j])) else { continue };
        checked += 1;
        let (a, b, s) = (chi(i, y), chi(j, y), chi(k, y));
        let diff = g.sub(&g.sub(&g.element_at(s), &g.element_at(a)), &g.element_at(b));
        if !e_span.contains(&diff.0) {
            failures += 1;
        }
    }
    let window: Vec<(usize, usize)> = (0..ms.len()).flat_map(|x| (0..ms.len()).map(move |y| (x, y))).filter(|&(x, y)| chi(x, y) == 0).collect();
    let sup_norm = window
        .par_iter()
        .map(|&(x, y)| inner_set.iter().map(|&z| tnorm(psi.get(&[ms[x], ms[y], z]).unwrap())).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);
    Ok(Equidistribution::Window(EquidistributionReport {
        bias,
        window_pairs: window.len() as u64,
        pairs: (ms.len() * ms.len()) as u64,
        window_inner: inner_set.len() as u64,
        sup_norm,
        min_best_correlation,
        e_bilinear_checked: checked,
        e_bilinear_failures: failures,
    }))
}

/// Integer-part and fractional-part arithmetic modulo `N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CyclicCoords {
    pub n: u64,
}

impl CyclicCoords {
    pub fn new(n: u64) -> Result<Self> {
        pre(n >= 1, || "modulus must be positive".into())?;
        Ok(CyclicCoords { n })
    }

    /// Representative in `[0, N - 1]`.
    pub fn iota(&self, x: i64) -> u64 {
        x.rem_euclid(self.n as i64) as u64
    }

    /// `{x}` in `(-1/2, 1/2]`.
    pub fn frac(x: Ratio<i128>) -> Ratio<i128> {
        x - Self::int_part(x)
    }

    /// `<x> = x - {x}`, the integer `k` with `x - k` in `(-1/2, 1/2]`.
    pub fn int_part(x: Ratio<i128>) -> Ratio<i128> {
        // k = ceil(x - 1/2)
        Ratio::from_integer((x - Ratio::new(1, 2)).ceil().to_integer())
    }

    pub fn frac_f64(x: f64) -> f64 {
        x - Self::int_part_f64(x)
    }

    pub fn int_part_f64(x: f64) -> f64 {
        (x - 0.5).ceil()
    }

    /// `<iota(r) iota(x) / N>`.
    pub fn int_part_product(&self, r: u64, x: u64) -> i128 {
        let num = self.iota(r as i64) as i128 * self.iota(x as i64) as i128;
        Self::int_part(Ratio::new(num, self.n as i128)).to_integer()
    }

    /// `{r x / N}` as an exact fraction.
    pub fn frac_product(&self, r: u64, x: u64) -> Ratio<i128> {
        let num = self.iota(r as i64) as i128 * self.iota(x as i64) as i128;
        Self::frac(Ratio::new(num, self.n as i128))
    }
}

pub fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|k| k * k <= n).all(|k| n % k != 0)
}

#[derive(Clone, Debug, Serialize)]
pub struct ZLinearRepresentation {
    /// `phi(x) = sum beta_i {r_i x / N}` on the shrunk set.
    pub beta: Vec<String>,
    /// `phi(x) = lin * iota(x) + sum a_i <iota(r_i) iota(x) / N>`, with `a = -beta`.
    pub a: Vec<String>,
    pub lin: String,
    pub basis: Vec<u64>,
    pub basis_source: String,
    pub shrink: String,
    pub shrunk_points: u64,
    pub shrunk_ok: bool,
    pub full_points: u64,
    pub full_ok: bool,
    /// Indices `i` for which no short relation has `lambda_i != 0`.
    pub independent: Vec<usize>,
    pub relation_bound: i64,
    pub integral: Vec<bool>,
}

type Q = Ratio<i128>;

/// Solves `m z = rhs` exactly; `None` when `m` is singular.
fn solve_rational(m: &[Vec<Q>], rhs: &[Q]) -> Option<Vec<Q>> {
    let n = m.len();
    let mut a: Vec<Vec<Q>> = m.iter().zip(rhs).map(|(row, &b)| row.iter().copied().chain([b]).collect()).collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col];
                for k in col..=n {
                    let sub = f * a[col][k];
                    a[r][k] -= sub;
                }
            }
        }
    }
    Some(a.iter().map(|row| row[n]).collect())
}

fn frac_matrix(cc: &CyclicCoords, r: &[u64], v: &[u64]) -> Vec<Vec<Q>> {
    // row k: ({r_1 v_k / N}, ..., {r_d v_k / N}); solving rows * beta = phi(v)
    v.iter().map(|&vk| r.iter().map(|&ri| cc.frac_product(ri, vk)).collect()).collect()
}

/// Some short relation `sum lambda_j r_j = 0 mod N` with `|lambda| <= k` and `lambda_i != 0`.
fn short_relation_with(n: u64, r: &[u64], i: usize, k: i64, cap: u64) -> Result<bool> {
    let d = r.len();
    let Some(last) = (0..d).rev().find(|&j| r[j] % n != 0) else { return Ok(true) };
    let inv = mod_inverse(r[last] % n, n);
    let free: Vec<usize> = (0..d).filter(|&j| j != last).collect();
    let count = (2 * k as u128 + 1).pow(free.len() as u32);
    pre(count <= cap as u128, || "relation search exceeds cap".into()).map_err(|e| HfaError::Budget(e.to_string()))?;
    let ranges: Vec<(i64, i64)> = free.iter().map(|_| (-k, k)).collect();
    for lam in crate::progression::box_iter(&ranges) {
        let s: i128 = free.iter().zip(&lam).map(|(&j, &l)| l as i128 * r[j] as i128).sum();
        let l_last = centered(((-s).rem_euclid(n as i128) * inv as i128 % n as i128) as u64, n);
        if l_last.abs() > k {
            continue;
        }
        let nonzero_i = if i == last { l_last != 0 } else { lam[free.iter().position(|&j| j == i).unwrap()] != 0 };
        if nonzero_i {
            return Ok(true);
        }
    }
    Ok(false)
}

fn mod_inverse(a: u64, n: u64) -> u64 {
    let e = (a as i128).extended_gcd(&(n as i128));
    e.x.rem_euclid(n as i128) as u64
}

/// Upper limit on the relation box half-width searched for the integrality clause.
pub const RELATION_BOUND_CAP: i64 = 2000;

/// Writes a Freiman-linear `phi : B(r; rho) -> Z` in fractional-part coordinates, following
/// the progression-basis inversion, and verifies it pointwise on `B(r; d^-2d rho)`.
pub fn cyclic_zlinear_representation(n: u64, r: &[u64], rho: Radius, phi: &(dyn Fn(u64) -> i64 + Sync), cap: u64) -> Result<ZLinearRepresentation> {
    pre(is_prime(n), || "N must be prime".into())?;
    pre(rho > Radius::zero() && rho < Radius::new(1, 4), || "rho must lie in (0, 1/4)".into())?;
    let d = r.len();
    pre(d >= 1 && d <= 4, || "need 1 <= d <= 4".into())?;
    let g = FinAbGroup::cyclic(n);
    let cc = CyclicCoords::new(n)?;
    let freqs: Vec<Character> = r.iter().map(|&x| g.character(&[x as i64])).collect::<Result<_>>()?;
    let b = BohrSet::constant(&g, freqs, rho)?;
    let members = b.members(cap)?;
    let ind = b.indicator(cap)?;
    // Freiman-linear: phi(x + y) = phi(x) + phi(y) whenever all three lie in B
    let bad = members.par_iter().find_map_any(|&x| {
        members.iter().find_map(|&y| {
            let s = (x + y) % n;
            (ind[s as usize] && phi(s) != phi(x) + phi(y)).then_some((x, y))
        })
    });
    if let Some((x, y)) = bad {
        return Err(HfaError::Precondition(format!("phi is not Freiman-linear: x = {x}, y = {y}")));
    }
    let phi_q = |x: u64| Q::from_integer(phi(x) as i128);
    // basis from the progression sandwich, else the shortest independent members
    let mut basis_source = "progression".to_string();
    let mut basis: Option<Vec<u64>> = None;
    if let Ok(s) = bohr_to_progression(&b, cap, SHORT_VECTOR_BUDGET) {
        let v: Vec<u64> = s.c.gens.iter().map(|gv| cc.iota(gv[0])).collect();
        if v.len() == d && solve_rational(&frac_matrix(&cc, r, &v), &vec![Q::zero(); d]).is_some() {
            basis = Some(v);
        }
    }
    if basis.is_none() {
        basis_source = "independent members".into();
        let mut sorted = members.clone();
        let len = |x: u64| r.iter().map(|&ri| cc.frac_product(ri, x).abs()).max().unwrap();
        sorted.sort_by_key(|&x| (len(x), x));
        let mut chosen: Vec<u64> = Vec::new();
        for &x in &sorted {
            if x == 0 {
                continue;
            }
            let mut cand = chosen.clone();
            cand.push(x);
            if rank_q(&frac_matrix(&cc, r, &cand)) == cand.len() {
                chosen = cand;
                if chosen.len() == d {
                    break;
                }
            }
        }
        if chosen.len() == d {
            basis = Some(chosen);
        }
    }
    let Some(v) = basis else {
        return Err(HfaError::Certificate("fractional-part matrix is singular for every basis tried".into()));
    };
    let m = frac_matrix(&cc, r, &v);
    let beta = solve_rational(&m, &v.iter().map(|&x| phi_q(x)).collect::<Vec<_>>()).expect("nonsingular basis");
    let eval = |x: u64| -> Q { r.iter().zip(&beta).map(|(&ri, &bi)| bi * cc.frac_product(ri, x)).sum() };
    let shrink = Radius::new(1, (d as i64).pow(2 * d as u32));
    let shrunk = b.dilate(shrink).members(cap)?;
    let shrunk_ok = shrunk.iter().all(|&x| eval(x) == phi_q(x));
    let full_ok = members.iter().all(|&x| eval(x) == phi_q(x));
    if !shrunk_ok {
        return Err(HfaError::Certificate("representation fails on the shrunk Bohr set".into()));
    }
    // the lin term and the <.> form are an identity given beta; check it on the shrunk set
    let lin: Q = r.iter().zip(&beta).map(|(&ri, &bi)| bi * Q::from_integer(cc.iota(ri as i64) as i128)).sum::<Q>() / Q::from_integer(n as i128);
    let a: Vec<Q> = beta.iter().map(|&x| -x).collect();
    for &x in &shrunk {
        let rhs: Q = lin * Q::from_integer(x as i128) + r.iter().zip(&a).map(|(&ri, &ai)| ai * Q::from_integer(cc.int_part_product(ri, x))).sum::<Q>();
        if rhs != phi_q(x) {
            return Err(HfaError::Certificate(format!("integer-part form fails at x = {x}")));
        }
    }
    // integrality clause with the short-relation bound (2 rho^-1 d^d)^d, capped
    let rho_inv = *rho.denom() as f64 / *rho.numer() as f64;
    let theory = (2.0 * rho_inv * (d as f64).powi(d as i32)).powi(d as i32);
    let relation_bound = (theory.ceil() as i64).clamp(1, RELATION_BOUND_CAP);
    let mut independent = Vec::new();
    let mut integral = Vec::new();
    for i in 0..d {
        let ok = !short_relation_with(n, r, i, relation_bound, cap)?;
        if ok {
            independent.push(i);
            if !beta[i].is_integer() {
                return Err(HfaError::Certificate(format!("beta_{i} = {} is not an integer although r_{i} has no short relation", beta[i])));
            }
        }
        integral.push(beta[i].is_integer());
    }
    let fmt = |q: &Q| if q.is_integer() { q.to_integer().to_string() } else { format!("{}/{}", q.numer(), q.denom()) };
    Ok(ZLinearRepresentation {
        beta: beta.iter().map(fmt).collect(),
        a: a.iter().map(fmt).collect(),
        lin: fmt(&lin),
        basis: v,
        basis_source,
        shrink: fmt_ratio(&shrink),
        shrunk_points: shrunk.len() as u64,
        shrunk_ok,
        full_points: members.len() as u64,
        full_ok,
        independent,
        relation_bound,
        integral,
    })
}

fn rank_q(m: &[Vec<Q>]) -> usize {
    let mut a = m.to_vec();
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..rows).find(|&r| !a[r][col].is_zero()) else { continue };
        a.swap(rank, p);
        for r in 0..rows {
            if r != rank && !a[r][col].is_zero() {
                let f = a[r][col] / a[rank][col];
                for k in col..cols {
                    let sub = f * a[rank][k];
                    a[r][k] -= sub;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Term shapes of a generalized trilinear polynomial on `[0, N-1]^3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum GenPolyTerm {
    /// `{{alpha x} beta y} gamma z`
    NestedFrac { alpha: f64, beta: f64, gamma: f64 },
    /// `{alpha x y} gamma z`
    FracXy { alpha: f64, gamma: f64 },
    /// `{alpha x} beta y z`
    FracXLin { alpha: f64, beta: f64 },
    /// `alpha x y z`
    Monomial { alpha: f64 },
    /// `{alpha x} {beta y} gamma z`
    FracFrac { alpha: f64, beta: f64, gamma: f64 },
    /// `{beta y} alpha x z`
    FracYLin { alpha: f64, beta: f64 },
}

impl GenPolyTerm {
    pub fn eval(&self, x: f64, y: f64, z: f64) -> f64 {
        let fr = CyclicCoords::frac_f64;
        match *self {
            GenPolyTerm::NestedFrac { alpha, beta, gamma } => fr(fr(alpha * x) * beta * y) * gamma * z,
            GenPolyTerm::FracXy { alpha, gamma } => fr(alpha * x * y) * gamma * z,
            GenPolyTerm::FracXLin { alpha, beta } => fr(alpha * x) * beta * y * z,
            GenPolyTerm::Monomial { alpha } => alpha * x * y * z,
            GenPolyTerm::FracFrac { alpha, beta, gamma } => fr(alpha * x) * fr(beta * y) * gamma * z,
            GenPolyTerm::FracYLin { alpha, beta } => fr(beta * y) * alpha * x * z,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GenPolyVerdict {
    pub max_deviation: f64,
    pub tolerance: f64,
    pub points: u64,
    pub holds: bool,
    pub worst: Option<(u64, u64, u64)>,
}

/// `max ||phi(x, y, z) - g(iota x, iota y, iota z)||` over `(x, y)` in `pairs` and `z` in `zs`.
pub fn verify_generalized_polynomial(
    n: u64,
    phi: &(dyn Fn(u64, u64, u64) -> f64 + Sync),
    terms: &[GenPolyTerm],
    pairs: &[(u64, u64)],
    zs: &[u64],
    tolerance: f64,
) -> GenPolyVerdict {
    let cc = CyclicCoords { n };
    let (dev, worst) = pairs
        .par_iter()
        .flat_map_iter(|&(x, y)| zs.iter().map(move |&z| (x, y, z)))
        .map(|(x, y, z)| {
            let (ix, iy, iz) = (cc.iota(x as i64) as f64, cc.iota(y as i64) as f64, cc.iota(z as i64) as f64);
            let gv: f64 = terms.iter().map(|t| t.eval(ix, iy, iz)).sum();
            (tnorm(phi(x, y, z) - gv), Some((x, y, z)))
        })
        .reduce(|| (0.0, None), |a, b| if b.0 > a.0 { b } else { a });
    GenPolyVerdict { max_deviation: dev, tolerance, points: (pairs.len() * zs.len()) as u64, holds: dev <= tolerance, worst }
}

/// Whether `2^(d-1) phi(u, u, v)` is symmetric and additive in `u` on the subgroup spanned by
/// `h_gens`; returns a failing tuple.
pub fn torsion_symmetry_predicate(phi: &MultilinearForm, h_gens: &[GroupElement], cap: u64) -> Result<Option<Vec<GroupElement>>> {
    pre(phi.arity == 3, || "need a trilinear form".into())?;
    let g = phi.group();
    let h = g.span(h_gens);
    pre((h.len() as u128).pow(3) <= cap as u128, || "H^3 exceeds cap".into()).map_err(|e| HfaError::Budget(e.to_string()))?;
    let half = 1i64 << (phi.d - 1);
    let els: Vec<GroupElement> = h.iter().map(|&x| g.element_at(x)).collect();
    let hv = |a: &GroupElement, b: &GroupElement| phi.eval(&[a, a, b]).scale(half);
    for a in &els {
        for b in &els {
            if hv(a, b) != hv(b, a) {
                return Ok(Some(vec![a.clone(), b.clone()]));
            }
        }
    }
    let bad = els.par_iter().find_map_first(|a| {
        els.iter().find_map(|a2| {
            let s = g.add(a, a2);
            els.iter().find(|b| hv(&s, b) != hv(a, b) + hv(a2, b)).map(|b| vec![a.clone(), a2.clone(), b.clone()])
        })
    });
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAP: u64 = 1 << 28;

    fn q(n: i64, d: i64) -> Radius {
        Radius::new(n, d)
    }

    fn cyc_bohr(n: u64, freqs: &[i64], rho: Radius) -> BohrSet {
        let g = FinAbGroup::cyclic(n);
        BohrSet::constant(&g, freqs.iter().map(|&f| g.character(&[f]).unwrap()).collect(), rho).unwrap()
    }

    /// Exact trilinear form `a c(r x) c(r y) c(r z) / N` on a single-frequency Bohr set.
    fn trilinear(n: u64, r: u64, a: i64) -> impl Fn(&[u64]) -> f64 + Sync {
        move |v: &[u64]| {
            let p = v.iter().fold(a as i128, |acc, &x| acc * centered(r * x % n, n) as i128 % n as i128);
            p.rem_euclid(n as i128) as f64 / n as f64
        }
    }

    #[test]
    fn tnorm_and_phases() {
        assert!((tnorm(0.7) - 0.3).abs() < 1e-15);
        assert!((tnorm(-0.2) - 0.2).abs() < 1e-15);
        assert!((e(0.25) - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(centered(7, 10), -3);
        assert_eq!(centered(5, 10), 5);
    }

    #[test]
    fn cyclic_frac_examples() {
        assert!((CyclicCoords::frac_f64(0.7) + 0.3).abs() < 1e-15);
        assert_eq!(CyclicCoords::int_part_f64(0.7), 1.0);
        assert_eq!(CyclicCoords::frac(Q::new(-1, 2)), Q::new(1, 2));
        assert_eq!(CyclicCoords::int_part(Q::new(-1, 2)), Q::from_integer(-1));
        assert_eq!(CyclicCoords::frac(Q::new(1, 2)), Q::new(1, 2));
        assert_eq!(CyclicCoords::new(5).unwrap().iota(3), 3);
        assert_eq!(CyclicCoords::new(5).unwrap().iota(-2), 3);
        for num in -50..=50 {
            let x = Q::new(num, 7);
            let (f, i) = (CyclicCoords::frac(x), CyclicCoords::int_part(x));
            assert_eq!(f + i, x);
            assert!(i.is_integer());
            assert!(f > Q::new(-1, 2) && f <= Q::new(1, 2));
        }
    }

    #[test]
    fn eps_measurement_and_restriction() {
        let b = cyc_bohr(101, &[1], q(1, 5));
        let exact = EpsMultilinearForm::from_fn(&b, 2, trilinear(101, 1, 3), CAP, 0, 1).unwrap();
        assert!(exact.eps < 1e-12);
        let mut r = rng::stream(1, "noise", 0);
        let noise: Vec<f64> = (0..101 * 101).map(|_| r.gen_range(-1e-3..1e-3)).collect();
        let noisy = EpsMultilinearForm::from_fn(&b, 2, |v| trilinear(101, 1, 3)(v) + noise[(v[0] * 101 + v[1]) as usize], CAP, 0, 1).unwrap();
        assert!(noisy.eps > 0.0 && noisy.eps <= 3e-3 + 1e-12);
        let noisy_clone = noisy.clone();
        let sub = noisy.restrict(&b.dilate(q(1, 2)), CAP, 0, 1).unwrap();
        assert!(sub.eps <= noisy.eps);
        assert!(noisy.clone().with_eps(noisy.eps / 2.0).is_err());
        assert!(noisy.with_eps(1.0).unwrap().eps == 1.0);
        // sampled measurement never exceeds the exhaustive one
        let sampled = noisy_clone.measure_eps(10, 500, 3);
        assert!(!sampled.exhaustive && sampled.eps_measured <= noisy_clone.eps);
    }

    #[test]
    fn diag_cubic_examples() {
        let b = cyc_bohr(97, &[1], q(1, 5));
        let psi = EpsMultilinearForm::from_fn(&b, 3, trilinear(97, 1, 5), CAP, 0, 1).unwrap();
        let (_, rep) = diag_cubic(&psi, CAP, 2000, 1).unwrap();
        assert!(rep.max_residual < 1e-9 && rep.max_fourth < 1e-9);
        let zero = EpsMultilinearForm::from_fn(&b, 3, |_| 0.0, CAP, 0, 1).unwrap();
        let (qz, rep) = diag_cubic(&zero, CAP, 2000, 1).unwrap();
        assert!(qz.values.iter().all(|&v| v == 0.0) && rep.max_residual == 0.0);
        let mut r = rng::stream(2, "noise3", 0);
        let noise: Vec<f64> = (0..97usize.pow(3)).map(|_| r.gen_range(-1e-4..1e-4)).collect();
        let noisy = EpsMultilinearForm::from_fn(&b, 3, |v| trilinear(97, 1, 5)(v) + noise[((v[0] * 97 + v[1]) * 97 + v[2]) as usize], CAP, 0, 1).unwrap();
        let (qn, rep) = diag_cubic(&noisy, CAP, 2000, 1).unwrap();
        assert!(rep.max_residual > 0.0 && rep.max_residual <= 512.0 * noisy.eps);
        assert!(rep.max_fourth <= 1024.0 * noisy.eps);
        assert!(!qn.certificate.rho_grid.is_empty());
        // a table that is not almost cubic is refused
        let mut r = rng::stream(3, "junk", 0);
        let junk: Vec<f64> = (0..97).map(|_| r.gen_range(0.0..1.0)).collect();
        let fine = cyc_bohr(97, &[1], q(1, 8));
        let err = AlmostCubic::certify(&fine, &|x| junk[x as usize], 0.0, CAP, 1000, 1);
        assert!(err.is_ok() || matches!(err, Err(HfaError::Certificate(_))));
    }

    /// Fourth derivative of the diagonal against a direct evaluation of `psi(x,x,x)`.
    #[test]
    fn almost_cubic_oracle() {
        let b = cyc_bohr(53, &[1], q(1, 5));
        let mut r = rng::stream(4, "noise", 0);
        let noise: Vec<f64> = (0..53usize.pow(3)).map(|_| r.gen_range(-1e-3..1e-3)).collect();
        let f = |v: &[u64]| trilinear(53, 1, 2)(v) + noise[((v[0] * 53 + v[1]) * 53 + v[2]) as usize];
        let psi = EpsMultilinearForm::from_fn(&b, 3, f, CAP, 0, 1).unwrap();
        let (qc, rep) = diag_cubic(&psi, CAP, 1000, 1).unwrap();
        let g = FinAbGroup::cyclic(53);
        let eighth = b.dilate(q(1, 8)).members(CAP).unwrap();
        let mut worst: f64 = 0.0;
        for &x in &eighth {
            for &a in &eighth {
                for &bb in &eighth {
                    for &c in &eighth {
                        for &d in &eighth {
                            let mut s = 0.0;
                            for mask in 0..16u32 {
                                let mut p = x;
                                for (i, &v) in [a, bb, c, d].iter().enumerate() {
                                    if mask >> i & 1 == 1 {
                                        p = g.add_idx(p, v);
                                    }
                                }
                                let sign = if (4 - mask.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
                                s += sign * f(&[p, p, p]).rem_euclid(1.0);
                            }
                            worst = worst.max(tnorm(s));
                        }
                    }
                }
            }
        }
        assert!((worst - rep.max_fourth).abs() < 1e-12);
        assert!(qc.get(0).is_some());
    }

    #[test]
    fn elem_exp_inequalities() {
        let grid = elem_exp_grid(10_000, 1e-12);
        assert!(grid.holds, "{grid:?}");
        assert!(grid.worst_lower.abs() < 1e-12 && grid.worst_real.abs() < 1e-12);
    }

    #[test]
    fn regular_bohr_calculus_checks() {
        let b0 = cyc_bohr(1009, &[1], q(2, 5));
        let (b, _) = regular_dilate(&b0, CAP).unwrap();
        assert!(regularity_check(&b, REGULARITY_STEPS, CAP).unwrap());
        for delta in [q(1, 200), q(1, 400), q(1, 1000)] {
            let c = convolution_check(&b, delta, CAP).unwrap();
            assert!(c.holds, "{c:?}");
        }
        let b2 = cyc_bohr(1009, &[1, 3], q(1, 4));
        let (b2, _) = regular_dilate(&b2, CAP).unwrap();
        assert!(convolution_check(&b2, q(1, 400), CAP).unwrap().holds);
        // radius reduction on a biased phase
        let g = FinAbGroup::cyclic(1009);
        let f: Vec<Complex64> = (0..1009).map(|x| e(centered(x, 1009) as f64 * 1e-4)).collect();
        let rr = radius_reduction_check(&b, Radius::one(), q(1, 400), &f, 0.5, CAP).unwrap();
        assert!(rr.holds && rr.measured_c > 0.9, "{rr:?}");
        // change of variables with a smooth F
        let fxy = |x: u64, y: u64| e((centered(x, 1009) * 2 + centered(y, 1009)) as f64 * 1e-4);
        let cv = change_of_variables_check(&b, q(1, 400), Radius::one(), 1, &fxy, 0.5, CAP).unwrap();
        assert!(cv.holds);
        assert!(change_of_variables_check(&b, q(1, 2), Radius::one(), 5, &fxy, 0.5, CAP).is_err());
        let _ = g;
    }

    /// Brute-force convolution `1_{B_delta} * 1_{B_{1-delta}}` by pair enumeration.
    #[test]
    fn convolution_oracle() {
        let b = cyc_bohr(211, &[1, 5], q(1, 3));
        let delta = q(1, 400);
        let c = convolution_check(&b, delta, CAP).unwrap();
        let g = FinAbGroup::cyclic(211);
        let small = b.dilate(delta).members(CAP).unwrap();
        let big = b.dilate(Radius::one() - delta).members(CAP).unwrap();
        let mut conv = vec![0.0; 211];
        for &s in &small {
            for &t in &big {
                conv[g.add_idx(s, t) as usize] += 1.0;
            }
        }
        let ind = b.indicator(CAP).unwrap();
        let l1: f64 = (0..211).map(|x| (ind[x] as u8 as f64 - conv[x] / small.len() as f64).abs()).sum();
        assert!((l1 - c.l1).abs() < 1e-9);
    }

    fn planted_symmetry(p: u64, r: [u64; 2], a: i64, kappa: f64) -> (BohrSet, EpsMultilinearForm, Vec<Complex64>, Vec<Complex64>) {
        let b0 = cyc_bohr(p, &[r[0] as i64, r[1] as i64], q(1, 10));
        let (b, _) = regular_dilate(&b0, CAP).unwrap();
        let c1 = move |x: u64| centered(r[0] * x % p, p) as f64;
        let c2 = move |x: u64| centered(r[1] * x % p, p) as f64;
        let th = move |v: &[u64]| {
            let sym = ((a as i128 * c1(v[0]) as i128 * c1(v[1]) as i128).rem_euclid(p as i128)) as f64 / p as f64;
            sym + kappa * (c1(v[0]) * c2(v[1]) - c2(v[0]) * c1(v[1]))
        };
        let theta = EpsMultilinearForm::from_fn(&b.dilate(Radius::from_integer(2)), 2, th, CAP, 0, 1).unwrap();
        // phases cancelling the symmetric part: a c(x) c(y) = (a/2)(c(x+y)^2 - c(x)^2 - c(y)^2)
        let inv2 = (p as i128 + 1) / 2;
        let quad = move |x: u64| ((a as i128 * inv2 % p as i128 * (c1(x) as i128).pow(2)).rem_euclid(p as i128)) as f64 / p as f64;
        let f12: Vec<Complex64> = (0..p).map(|x| e(-quad(x))).collect();
        let f3: Vec<Complex64> = (0..p).map(|x| e(quad(x))).collect();
        (b, theta, f12, f3)
    }

    #[test]
    fn symmetry_argument_planted() {
        let (b, theta, f12, f3) = planted_symmetry(251, [1, 17], 3, 1e-5);
        assert!(theta.eps < 1e-12);
        let inp = SymmetryInput { b: &b, theta: &theta, f: [&f12, &f12, &f3], c: 0.5, shift_samples: 64, seed: 1, cap: CAP };
        match symmetry_defect(&inp).unwrap() {
            SymmetryOutcome::Certified(rep) => {
                assert!(rep.measured_c > 0.9 && rep.holds && rep.cauchy_schwarz >= 0.25);
                assert!(rep.quantity >= rep.bound);
            }
            other => panic!("{other:?}"),
        }
        // symmetric theta: the phase is identically one
        let (b, theta, f12, f3) = planted_symmetry(251, [1, 17], 3, 0.0);
        let inp = SymmetryInput { b: &b, theta: &theta, f: [&f12, &f12, &f3], c: 0.5, shift_samples: 16, seed: 1, cap: CAP };
        let SymmetryOutcome::Certified(rep) = symmetry_defect(&inp).unwrap() else { panic!() };
        assert!((rep.quantity - (rep.b_rho1_size as f64).powi(4)).abs() < 1e-6);
        // random f: no witness
        let g = FinAbGroup::cyclic(251);
        let rf = GroupFn::random_bounded(&g, 5, 0).values;
        let inp = SymmetryInput { b: &b, theta: &theta, f: [&rf, &rf, &rf], c: 0.5, shift_samples: 16, seed: 1, cap: CAP };
        assert!(matches!(symmetry_defect(&inp).unwrap(), SymmetryOutcome::NoWitness { .. }));
    }

    /// The symmetrisation quantity against a direct four-fold sum over `B_{rho_1}`.
    #[test]
    fn symmetry_quantity_oracle() {
        let p = 101;
        let b = cyc_bohr(p, &[1], q(1, 10));
        let th = |v: &[u64]| 1e-3 * (centered(v[0], p) * centered(v[1], p) * centered(v[1], p)) as f64;
        let theta = EpsMultilinearForm::from_fn(&b.dilate(Radius::from_integer(2)), 2, th, CAP, 0, 1).unwrap();
        let g = FinAbGroup::cyclic(p);
        let b1 = b.dilate(q(1, 2)).members(CAP).unwrap();
        let conv = self_convolution(&g, &b1);
        let mut direct = 0.0;
        for &a in &b1 {
            for &a2 in &b1 {
                for &c in &b1 {
                    for &c2 in &b1 {
                        let (y1, y2) = (g.add_idx(a, a2), g.add_idx(c, c2));
                        direct += (2.0 * std::f64::consts::PI * (theta.get(&[y1, y2]).unwrap() - theta.get(&[y2, y1]).unwrap())).cos();
                    }
                }
            }
        }
        let supp: Vec<u64> = (0..p).filter(|&y| conv[y as usize] > 0.0).collect();
        let via: f64 = supp
            .iter()
            .flat_map(|&y1| supp.iter().map(move |&y2| (y1, y2)))
            .map(|(y1, y2)| conv[y1 as usize] * conv[y2 as usize] * (2.0 * std::f64::consts::PI * (theta.get(&[y1, y2]).unwrap() - theta.get(&[y2, y1]).unwrap())).cos())
            .sum();
        assert!((direct - via).abs() < 1e-6);
    }

    #[test]
    fn biased_linear_examples() {
        let g = FinAbGroup::cyclic(64);
        let h = vec![g.element(&[8]).unwrap()];
        let zero = biased_linear_structure(&g, &LinearDomain::Subgroup(h.clone()), &|_| 0.0, 0.5, CAP).unwrap();
        assert!(matches!(zero, BiasedLinear::Certified { max_norm, bound, .. } if max_norm == 0.0 && bound == 0.0));
        let tiny = |x: &GroupElement| if x.0[0] == 0 { 0.0 } else { 1e-6 * ((x.0[0] * 7 % 5) as f64) };
        match biased_linear_structure(&g, &LinearDomain::Subgroup(h.clone()), &tiny, 0.5, CAP).unwrap() {
            BiasedLinear::Certified { max_norm, bound, .. } => assert!(max_norm <= bound),
            other => panic!("{other:?}"),
        }
        let ch = |x: &GroupElement| x.0[0] as f64 / 64.0;
        assert!(matches!(biased_linear_structure(&g, &LinearDomain::Subgroup(h), &ch, 0.5, CAP).unwrap(), BiasedLinear::NoWitness { .. }));
        let g = FinAbGroup::cyclic(1009);
        let a = g.element(&[1]).unwrap();
        let slope = |x: &GroupElement| centered(x.0[0], 1009) as f64 * 1e-4 + if x.0[0] % 3 == 0 { 0.01 } else { 0.0 };
        match biased_linear_structure(&g, &LinearDomain::Progression { a, l: 100 }, &slope, 0.5, CAP).unwrap() {
            BiasedLinear::Certified { window, max_norm, bound, eps, .. } => {
                assert!(eps > 0.0 && window >= 1 && max_norm <= bound);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equidistribution_examples() {
        let p = 101;
        let b = cyc_bohr(p, &[1], q(1, 5));
        let psi = EpsMultilinearForm::from_fn(&b, 3, trilinear(p, 1, 1), CAP, 0, 1).unwrap();
        match equidistribution_probe(&psi, q(1, 4), q(1, 4), 0.0, 2, 300, 1, CAP).unwrap() {
            Equidistribution::Window(rep) => {
                assert!(rep.sup_norm < 1e-9 && rep.window_pairs > 0);
                assert!((rep.min_best_correlation - 1.0).abs() < 1e-9);
                assert_eq!(rep.e_bilinear_failures, 0);
                // chi(x, y) = c(x) c(y) vanishes only on the axes
                let m = psi.size() as u64;
                assert_eq!(rep.window_pairs, 2 * m - 1);
            }
            other => panic!("{other:?}"),
        }
        let zero = EpsMultilinearForm::from_fn(&b, 3, |_| 0.0, CAP, 0, 1).unwrap();
        let Equidistribution::Window(rep) = equidistribution_probe(&zero, q(1, 4), q(1, 4), 0.9, 2, 100, 1, CAP).unwrap() else { panic!() };
        assert_eq!(rep.sup_norm, 0.0);
        assert_eq!(rep.window_pairs, rep.pairs);
        let mut r = rng::stream(9, "eqnoise", 0);
        let noise: Vec<f64> = (0..(p * p * p) as usize).map(|_| r.gen_range(-1e-4..1e-4)).collect();
        let noisy = EpsMultilinearForm::from_fn(&b, 3, |v| trilinear(p, 1, 1)(v) + noise[((v[0] * p + v[1]) * p + v[2]) as usize], CAP, 0, 1).unwrap();
        let Equidistribution::Window(rep) = equidistribution_probe(&noisy, q(1, 4), q(1, 4), 0.0, 2, 300, 1, CAP).unwrap() else { panic!() };
        assert!(rep.sup_norm <= 1e-4 + 1e-12);
        let Equidistribution::NoWitness { .. } = equidistribution_probe(&psi, q(1, 4), q(1, 4), 1.1, 2, 10, 1, CAP).unwrap() else { panic!() };
    }

    #[test]
    fn zlinear_representation_examples() {
        let n = 1009;
        let cc = CyclicCoords::new(n).unwrap();
        // the centred lift of r x, i.e. N {r x / N}
        let lift = |x: u64| centered(7 * x % n, n);
        let rep = cyclic_zlinear_representation(n, &[7], q(1, 5), &lift, CAP).unwrap();
        assert_eq!(rep.beta, vec!["1009"]);
        assert_eq!(rep.a, vec!["-1009"]);
        assert_eq!(rep.lin, "7");
        assert!(rep.full_ok && rep.integral == vec![true]);
        let rep = cyclic_zlinear_representation(n, &[7], q(1, 5), &|_| 0, CAP).unwrap();
        assert_eq!(rep.beta, vec!["0"]);
        // d = 2 planted integer combination
        let phi = |x: u64| 3 * centered(x, n) - 2 * centered(32 * x % n, n);
        let rep = cyclic_zlinear_representation(n, &[1, 32], q(6, 25), &phi, CAP).unwrap();
        assert_eq!(rep.beta, vec!["3027", "-2018"]);
        assert!(rep.full_ok && rep.shrunk_ok);
        // 32 r_1 - r_2 = 0 is a short relation, so neither index is forced integral
        assert!(rep.independent.is_empty());
        // not Freiman-linear
        assert!(cyclic_zlinear_representation(n, &[7], q(1, 5), &|x| cc.int_part_product(7, x) as i64, CAP).is_err());
        assert!(cyclic_zlinear_representation(1000, &[7], q(1, 5), &lift, CAP).is_err());
    }

    /// Round trip on a larger prime where the shrunk Bohr set is two-dimensional.
    #[test]
    fn zlinear_round_trip_larger_prime() {
        let n = 10007;
        let r = [1u64, 100];
        for (k1, k2) in [(1i64, 0i64), (0, 1), (2, -3), (5, 7)] {
            let phi = move |x: u64| k1 * centered(x, n) + k2 * centered(r[1] * x % n, n);
            let rep = cyclic_zlinear_representation(n, &r, q(6, 25), &phi, CAP).unwrap();
            assert_eq!(rep.beta, vec![(k1 * n as i64).to_string(), (k2 * n as i64).to_string()]);
            assert!(rep.shrunk_points > 1 && rep.full_ok);
            assert_eq!(rep.lin, (k1 + 100 * k2).to_string());
        }
    }

    #[test]
    fn gen_poly_verifier() {
        let n = 1009u64;
        let a = 5u64;
        let phi = move |x: u64, y: u64, z: u64| ((a as u128 * x as u128 * y as u128 % n as u128 * z as u128) % n as u128) as f64 / n as f64;
        let pairs: Vec<(u64, u64)> = (0..20).flat_map(|x| (0..20).map(move |y| (x * 37 % n, y * 11 % n))).collect();
        let zs: Vec<u64> = (0..30).map(|z| z * 13 % n).collect();
        let good = verify_generalized_polynomial(n, &phi, &[GenPolyTerm::Monomial { alpha: a as f64 / n as f64 }], &pairs, &zs, 1e-6);
        assert!(good.holds, "{good:?}");
        let bad = verify_generalized_polynomial(n, &phi, &[GenPolyTerm::Monomial { alpha: 1.0 / n as f64 }], &pairs, &zs, 1e-6);
        assert!(!bad.holds);
        // {alpha x} beta y z with alpha = 1/N reproduces the centred product on small x
        let t = GenPolyTerm::FracXLin { alpha: 1.0 / n as f64, beta: 1.0 };
        assert!((t.eval(3.0, 1.0, 1.0) - 3.0 / n as f64).abs() < 1e-15);
        let t = GenPolyTerm::NestedFrac { alpha: 0.5, beta: 1.0, gamma: 1.0 };
        assert_eq!(t.eval(1.0, 1.0, 1.0), 0.5);
        let json = serde_json::to_string(&GenPolyTerm::FracXy { alpha: 0.25, gamma: 2.0 }).unwrap();
        assert!(json.contains("\"shape\":\"frac_xy\""));
    }

    #[test]
    fn torsion_predicate() {
        let phi = MultilinearForm::new(2, 1, 3, vec![1]).unwrap();
        let g = phi.group();
        assert!(torsion_symmetry_predicate(&phi, &[g.element(&[1]).unwrap()], CAP).unwrap().is_none());
        let bad = MultilinearForm::from_fn(2, 2, 3, |idx| (idx.iter().filter(|&&i| i == 0).count() == 2) as u64).unwrap();
        let g = bad.group();
        let w = torsion_symmetry_predicate(&bad, &[g.element(&[1, 0]).unwrap(), g.element(&[0, 1]).unwrap()], CAP).unwrap();
        assert!(w.is_some());
        assert!(torsion_symmetry_predicate(&bad, &[g.element(&[0, 1]).unwrap()], CAP).unwrap().is_none());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn frac_identities(num in -100_000i64..100_000, den in 1i64..500) {
            let x = Q::new(num as i128, den as i128);
            let f = CyclicCoords::frac(x);
            proptest::prop_assert_eq!(f + CyclicCoords::int_part(x), x);
            proptest::prop_assert!(f > Q::new(-1, 2) && f <= Q::new(1, 2));
        }

        #[test]
        fn restriction_is_monotone(seed in 0u64..100) {
            let b = cyc_bohr(61, &[1], q(1, 4));
            let mut r = rng::stream(seed, "mono", 0);
            let noise: Vec<f64> = (0..61 * 61).map(|_| r.gen_range(-1e-2..1e-2)).collect();
            let form = EpsMultilinearForm::from_fn(&b, 2, |v| noise[(v[0] * 61 + v[1]) as usize], CAP, 0, 1).unwrap();
            let sub = form.restrict(&b.dilate(q(1, 2)), CAP, 0, 1).unwrap();
            proptest::prop_assert!(sub.eps <= form.eps);
        }
    }
}
