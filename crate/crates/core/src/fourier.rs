//! Fourier transform on finite abelian groups, Gowers norms, box norms and the
//! directional U^2 inverse construction.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng as _;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{pre, HfaError, Result};
use crate::group::{char_extend, Character, FinAbGroup, GroupElement, SubgroupCharacter, TorusValue};
use crate::rng;

/// Largest imaginary part tolerated in an average that must be real.
pub const IMAG_TOLERANCE: f64 = 1e-7;

/// Exponent in the correlation bound `2^-5 c^20` of the directional inverse.
pub const DIRECTIONAL_INVERSE_EXPONENT: i32 = 20;

/// Complex-valued function on a group, tabulated in enumeration order.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupFn {
    pub group: FinAbGroup,
    pub values: Vec<Complex64>,
}

impl GroupFn {
    pub fn new(group: FinAbGroup, values: Vec<Complex64>) -> Result<Self> {
        if values.len() as u64 != group.order() {
            return Err(HfaError::Input(format!(
                "table has {} values, group {group} has order {}",
                values.len(),
                group.order()
            )));
        }
        Ok(GroupFn { group, values })
    }

    pub fn from_fn(group: &FinAbGroup, f: impl Fn(&GroupElement) -> Complex64) -> Self {
        let values = (0..group.order()).map(|i| f(&group.element_at(i))).collect();
        GroupFn { group: group.clone(), values }
    }

    pub fn constant(group: &FinAbGroup, c: Complex64) -> Self {
        GroupFn { group: group.clone(), values: vec![c; group.order() as usize] }
    }

    /// `x -> e(chi(x))`.
    pub fn character(group: &FinAbGroup, chi: &Character) -> Self {
        let l = group.exponent() as i64;
        Self::from_fn(group, |x| TorusValue::new(group.char_eval_num(&chi.0, &x.0) as i64, l).exp())
    }

    /// `x -> e(phase[x])` for an exact phase table.
    pub fn phase(group: &FinAbGroup, phase: &[TorusValue]) -> Self {
        GroupFn { group: group.clone(), values: phase.iter().map(|t| t.exp()).collect() }
    }

    /// Random function with values uniform in the unit disc.
    pub fn random_bounded(group: &FinAbGroup, seed: u64, index: u64) -> Self {
        let mut r = rng::stream(seed, "random_bounded", index);
        let values = (0..group.order())
            .map(|_| {
                let rad: f64 = r.gen::<f64>().sqrt();
                let ang: f64 = r.gen::<f64>() * std::f64::consts::TAU;
                Complex64::from_polar(rad, ang)
            })
            .collect();
        GroupFn { group: group.clone(), values }
    }

    pub fn is_one_bounded(&self) -> bool {
        self.values.iter().all(|v| v.norm() <= 1.0 + 1e-12)
    }

    pub fn mean(&self) -> Complex64 {
        kahan_sum(self.values.iter().copied()) / self.values.len() as f64
    }

    pub fn l2_squared(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }

    pub fn translate(&self, t: &GroupElement) -> Self {
        let perm = translation(&self.group, self.group.index_of(t));
        GroupFn { group: self.group.clone(), values: perm.iter().map(|&j| self.values[j as usize]).collect() }
    }

    pub fn pointwise_mul(&self, o: &GroupFn) -> Result<Self> {
        if self.group != o.group {
            return Err(HfaError::Structural("functions on different groups".into()));
        }
        Ok(GroupFn {
            group: self.group.clone(),
            values: self.values.iter().zip(&o.values).map(|(a, b)| a * b).collect(),
        })
    }
}

/// Compensated summation in a fixed order, so parallel callers can reduce deterministically.
pub fn kahan_sum(it: impl Iterator<Item = Complex64>) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    let mut c = Complex64::new(0.0, 0.0);
    for v in it {
        let y = v - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

/// `perm[x] = index of x + a`, built with an odometer over coordinates.
pub fn translation(g: &FinAbGroup, a: u64) -> Vec<u32> {
    let n = g.order() as usize;
    let r = g.rank();
    let a = g.element_at(a).0;
    let f = g.factors();
    let mut strides = vec![1u64; r];
    for i in (0..r.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * f[i + 1];
    }
    let mut cur: Vec<u64> = a.clone();
    let mut idx: u64 = cur.iter().zip(&strides).map(|(c, s)| c * s).sum();
    let mut out = Vec::with_capacity(n);
    let mut x = vec![0u64; r];
    for _ in 0..n {
        out.push(idx as u32);
        // advance x by one in lexicographic order, keeping cur = x + a
        for i in (0..r).rev() {
            x[i] += 1;
            let old = cur[i];
            cur[i] = if cur[i] + 1 == f[i] { 0 } else { cur[i] + 1 };
            idx = idx + cur[i] * strides[i] - old * strides[i];
            if x[i] < f[i] {
                break;
            }
            x[i] = 0;
        }
    }
    out
}

/// `(d_a f)(x) = f(x + a) conj(f(x))`.
pub fn derivative(f: &GroupFn, a: &GroupElement) -> Result<GroupFn> {
    if !f.group.contains(a) {
        return Err(HfaError::Structural(format!("shift {:?} not in {}", a.0, f.group)));
    }
    Ok(derivative_idx(f, f.group.index_of(a)))
}

fn derivative_idx(f: &GroupFn, a: u64) -> GroupFn {
    let perm = translation(&f.group, a);
    GroupFn {
        group: f.group.clone(),
        values: perm.iter().zip(&f.values).map(|(&j, v)| f.values[j as usize] * v.conj()).collect(),
    }
}

/// Iterated derivative `d_{a_1} ... d_{a_m} f`.
pub fn derivative_iter(f: &GroupFn, shifts: &[GroupElement]) -> Result<GroupFn> {
    let mut g = f.clone();
    for a in shifts {
        g = derivative(&g, a)?;
    }
    Ok(g)
}

/// How a Gowers norm was obtained.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum NormMethod {
    Exact,
    Sampled { samples: u64, std_error: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormReport {
    pub value: f64,
    /// The `2^k`-th power before taking the root.
    pub power: f64,
    pub method: NormMethod,
    /// Number of table entries touched (exact) or samples drawn.
    pub work: u64,
}

/// `||f||_{U^k}^{2^k}` by the derivative recursion, exactly.
fn gowers_power(f: &GroupFn, k: u32) -> Complex64 {
    if k == 1 {
        let m = f.mean();
        return Complex64::new(m.norm_sqr(), 0.0);
    }
    let n = f.group.order();
    let terms: Vec<Complex64> = (0..n).into_par_iter().map(|a| gowers_power(&derivative_idx(f, a), k - 1)).collect();
    kahan_sum(terms.into_iter()) / n as f64
}

/// Gowers `U^k` norm, exact when `|G|^(k+1) <= cap`, otherwise sampled if `samples` is given.
pub fn gowers_norm(f: &GroupFn, k: u32, cap: u64, samples: Option<(u64, u64)>) -> Result<NormReport> {
    pre(k >= 1, || "k must be at least 1".into())?;
    let n = f.group.order();
    let work = n.checked_pow(k + 1);
    if work.map_or(false, |w| w <= cap) {
        if k == 1 {
            let v = f.mean().norm();
            return Ok(NormReport { value: v, power: v, method: NormMethod::Exact, work: n });
        }
        let p = gowers_power(f, k);
        if p.im.abs() > IMAG_TOLERANCE {
            return Err(HfaError::Numerical(format!("U^{k} average has imaginary part {:e}", p.im)));
        }
        if p.re < -1e-9 {
            return Err(HfaError::Numerical(format!("U^{k} average is negative: {:e}", p.re)));
        }
        let power = p.re.max(0.0);
        return Ok(NormReport {
            value: power.powf(1.0 / (1u64 << k) as f64),
            power,
            method: NormMethod::Exact,
            work: work.unwrap(),
        });
    }
    let Some((count, seed)) = samples else {
        return Err(HfaError::Budget(format!(
            "exact U^{k} on a group of order {n} exceeds cap {cap}; enable sampling"
        )));
    };
    sampled_gowers(f, k, count, seed)
}

/// Monte Carlo estimate of `||f||_{U^k}^{2^k}` over uniformly random `(x, a_1..a_k)`.
pub fn sampled_gowers(f: &GroupFn, k: u32, count: u64, seed: u64) -> Result<NormReport> {
    pre(count >= 2, || "need at least two samples".into())?;
    let g = &f.group;
    let n = g.order();
    const CHUNK: u64 = 4096;
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, "sampled_gowers", c);
            let m = CHUNK.min(count - c * CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..m {
                let x = r.gen_range(0..n);
                let a: Vec<u64> = (0..k).map(|_| r.gen_range(0..n)).collect();
                let mut prod = Complex64::new(1.0, 0.0);
                for w in 0u32..(1 << k) {
                    let mut p = x;
                    for (i, &ai) in a.iter().enumerate() {
                        if w >> i & 1 == 1 {
                            p = g.add_idx(p, ai);
                        }
                    }
                    let v = f.values[p as usize];
                    prod *= if w.count_ones() % 2 == 1 { v.conj() } else { v };
                }
                s += prod.re;
                s2 += prod.re * prod.re;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = parts.iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    let cf = count as f64;
    let mean = s / cf;
    let var = (s2 / cf - mean * mean).max(0.0) * cf / (cf - 1.0);
    let power = mean.max(0.0);
    Ok(NormReport {
        value: power.powf(1.0 / (1u64 << k) as f64),
        power,
        method: NormMethod::Sampled { samples: count, std_error: (var / cf).sqrt() },
        work: count,
    })
}

/// `(E_{x, b in G, a in H} d_{a,b} f(x))^(1/4)` with `H = <h_gens>`.
///
/// The inner average over `x, b` equals `|E_x d_a f(x)|^2`, so the cost is `|H| |G|`.
pub fn directional_norm(f: &GroupFn, h_gens: &[GroupElement]) -> Result<f64> {
    for h in h_gens {
        if !f.group.contains(h) {
            return Err(HfaError::Structural(format!("{:?} not in {}", h.0, f.group)));
        }
    }
    let h = f.group.span(h_gens);
    let terms: Vec<Complex64> =
        h.par_iter().map(|&a| Complex64::new(derivative_idx(f, a).mean().norm_sqr(), 0.0)).collect();
    let p = kahan_sum(terms.into_iter()).re / h.len() as f64;
    Ok(p.max(0.0).powf(0.25))
}

/// Fourier coefficients `f^(chi) = E_x f(x) e(-chi(x))`, indexed like the elements.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierTable {
    pub group: FinAbGroup,
    pub coeffs: Vec<Complex64>,
}

impl FourierTable {
    pub fn sum_abs_pow(&self, p: i32) -> f64 {
        self.coeffs.iter().map(|c| c.norm().powi(p)).sum()
    }
}

/// Applies a cyclic DFT along every axis. `inverse` selects the `+` sign.
fn tensor_fft(g: &FinAbGroup, data: &mut [Complex64], inverse: bool) {
    let f = g.factors();
    let r = g.rank();
    let mut planner = FftPlanner::<f64>::new();
    let mut inner = 1usize;
    for axis in (0..r).rev() {
        let q = f[axis] as usize;
        let outer = data.len() / (q * inner);
        if q > 1 {
            let fft = if inverse { planner.plan_fft_inverse(q) } else { planner.plan_fft_forward(q) };
            let mut buf = vec![Complex64::new(0.0, 0.0); q];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * q * inner + i;
                    for (t, b) in buf.iter_mut().enumerate() {
                        *b = data[base + t * inner];
                    }
                    fft.process(&mut buf);
                    for (t, b) in buf.iter().enumerate() {
                        data[base + t * inner] = *b;
                    }
                }
            }
        }
        inner *= q;
    }
}

pub fn dft(f: &GroupFn) -> FourierTable {
    let mut data = f.values.clone();
    tensor_fft(&f.group, &mut data, false);
    let n = f.group.order() as f64;
    for v in data.iter_mut() {
        *v /= n;
    }
    FourierTable { group: f.group.clone(), coeffs: data }
}

/// `f(x) = sum_chi f^(chi) e(chi(x))`.
pub fn inverse_dft(t: &FourierTable) -> GroupFn {
    let mut data = t.coeffs.clone();
    tensor_fft(&t.group, &mut data, true);
    GroupFn { group: t.group.clone(), values: data }
}

/// Quadratic-time DFT straight from the definition, used as a cross-check.
pub fn dft_naive(f: &GroupFn) -> FourierTable {
    let g = &f.group;
    let n = g.order();
    let l = g.exponent() as i64;
    let coeffs = (0..n)
        .map(|c| {
            let chi = g.element_at(c).0;
            let s = kahan_sum((0..n).map(|x| {
                let ph = TorusValue::new(-(g.char_eval_idx(&chi, x) as i64), l);
                f.values[x as usize] * ph.exp()
            }));
            s / n as f64
        })
        .collect();
    FourierTable { group: g.clone(), coeffs }
}

#[derive(Clone, Debug, Serialize)]
pub struct U2Identity {
    pub u2_fourth: f64,
    pub fourier_fourth: f64,
    pub gap: f64,
}

/// Both sides of `||f||_{U^2}^4 = sum |f^|^4`, the left side by enumeration.
pub fn u2_identity_check(f: &GroupFn) -> Result<U2Identity> {
    let p = gowers_power(f, 2);
    if p.im.abs() > IMAG_TOLERANCE {
        return Err(HfaError::Numerical(format!("U^2 average has imaginary part {:e}", p.im)));
    }
    let s = dft(f).sum_abs_pow(4);
    Ok(U2Identity { u2_fourth: p.re, fourier_fourth: s, gap: (p.re - s).abs() })
}

/// Output of the directional inverse construction.
#[derive(Clone, Debug)]
pub enum DirectionalInverse {
    Witness {
        /// Character of `G` with `|E f(x) conj(h(x+H)) e(chi(x))|` large.
        chi: Character,
        /// `h` on coset representatives, indexed by representative element index.
        h: Vec<(u64, Complex64)>,
        correlation: f64,
        norm: f64,
        bound: f64,
    },
    /// `||f||_{U(H,G)}` is below the requested threshold.
    NoWitness { norm: f64 },
}

/// Follows the coset-spectrum argument: pick a frequency popular among the large spectra
/// of the restrictions `f_t(x) = f(t + x)` to `H`, extend it to `G`, and build `h` from the
/// per-coset Fourier coefficients.
pub fn u2_directional_inverse(f: &GroupFn, h_gens: &[GroupElement], c: f64) -> Result<DirectionalInverse> {
    pre(c > 0.0 && c <= 1.0, || "threshold must lie in (0, 1]".into())?;
    pre(f.is_one_bounded(), || "function must be 1-bounded".into())?;
    let g = &f.group;
    let norm = directional_norm(f, h_gens)?;
    if norm < c {
        return Ok(DirectionalInverse::NoWitness { norm });
    }
    let h = g.span(h_gens);
    let n = g.order();
    let l = g.exponent() as i64;
    // Coset representatives: the least index in each coset.
    let mut rep_of = vec![u64::MAX; n as usize];
    let mut reps = Vec::new();
    for x in 0..n {
        if rep_of[x as usize] == u64::MAX {
            reps.push(x);
            for &y in &h {
                rep_of[g.add_idx(x, y) as usize] = x;
            }
        }
    }
    // Characters of H as distinct restrictions of characters of G, keeping the first lift.
    let mut dual_h: Vec<(Character, Vec<u64>)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for c_idx in 0..n {
        let chi = g.element_at(c_idx).0;
        let restr: Vec<u64> = h.iter().map(|&y| g.char_eval_idx(&chi, y)).collect();
        if seen.insert(restr.clone()) {
            dual_h.push((Character(chi), restr));
        }
    }
    debug_assert_eq!(dual_h.len(), h.len());
    let hn = h.len() as f64;
    // f_t^(chi) for every representative t and chi in H^.
    let spectra: Vec<Vec<Complex64>> = reps
        .par_iter()
        .map(|&t| {
            dual_h
                .iter()
                .map(|(_, restr)| {
                    kahan_sum(h.iter().zip(restr).map(|(&y, &v)| {
                        f.values[g.add_idx(t, y) as usize] * TorusValue::new(-(v as i64), l).exp()
                    })) / hn
                })
                .collect()
        })
        .collect();
    let thr = c.powi(4) / 2.0;
    let mut best = (0usize, 0usize);
    for j in 0..dual_h.len() {
        let cnt = spectra.iter().filter(|s| s[j].norm() >= thr).count();
        if cnt > best.1 {
            best = (j, cnt);
        }
    }
    let j = best.0;
    // Extend chi|_H to G through the one-generator-at-a-time construction.
    let table: SubgroupCharacter = h
        .iter()
        .zip(&dual_h[j].1)
        .map(|(&y, &v)| (g.element_at(y), TorusValue::new(v as i64, l)))
        .collect();
    let (chi_ext, ext) = char_extend(g, h_gens, &table)?;
    let hvals: Vec<(u64, Complex64)> = reps
        .iter()
        .zip(&spectra)
        .map(|(&t, s)| (t, s[j] * (-ext[t as usize]).exp()))
        .collect();
    let mut h_of_rep = vec![Complex64::new(0.0, 0.0); n as usize];
    for &(t, v) in &hvals {
        h_of_rep[t as usize] = v;
    }
    let corr = kahan_sum((0..n).map(|x| {
        f.values[x as usize] * h_of_rep[rep_of[x as usize] as usize].conj() * (-ext[x as usize]).exp()
    })) / n as f64;
    let neg = Character(g.neg(&GroupElement(chi_ext.0.clone())).0);
    Ok(DirectionalInverse::Witness {
        chi: neg,
        h: hvals,
        correlation: corr.norm(),
        norm,
        bound: 2f64.powi(-5) * c.powi(DIRECTIONAL_INVERSE_EXPONENT),
    })
}

/// Box norm of a matrix over `X x Y`, via `E_{x0,x1} |E_y M(x0,y) conj(M(x1,y))|^2`.
pub fn box_norm(m: &[Vec<Complex64>]) -> Result<f64> {
    pre(!m.is_empty() && !m[0].is_empty(), || "empty matrix".into())?;
    let ny = m[0].len();
    pre(m.iter().all(|r| r.len() == ny), || "ragged matrix".into())?;
    let nx = m.len();
    let rows: Vec<f64> = (0..nx)
        .into_par_iter()
        .map(|a| {
            (0..nx)
                .map(|b| {
                    let s = kahan_sum((0..ny).map(|y| m[a][y] * m[b][y].conj())) / ny as f64;
                    s.norm_sqr()
                })
                .sum::<f64>()
        })
        .collect();
    let p = rows.iter().sum::<f64>() / (nx * nx) as f64;
    Ok(p.max(0.0).powf(0.25))
}

const MAGIC: &[u8; 4] = b"HFAT";
const VERSION: u32 = 1;

/// Hash of the group spec stored in binary table headers.
pub fn group_hash(g: &FinAbGroup) -> u64 {
    let mut bytes = Vec::with_capacity(8 * g.rank());
    for q in g.factors() {
        bytes.extend_from_slice(&q.to_le_bytes());
    }
    rng::fnv1a(&bytes)
}

/// Binary layout: `"HFAT"`, `u32` version, `u64` group hash, then `(re, im)` pairs, all little-endian.
pub fn write_binary(f: &GroupFn, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&group_hash(&f.group).to_le_bytes())?;
    for v in &f.values {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary(g: &FinAbGroup, mut r: impl Read) -> Result<GroupFn> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| HfaError::Input(e.to_string()))?;
    if buf.len() < 16 || &buf[0..4] != MAGIC {
        return Err(HfaError::Input("missing table header".into()));
    }
    let ver = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if ver != VERSION {
        return Err(HfaError::Input(format!("unsupported table version {ver}")));
    }
    let hash = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    if hash != group_hash(g) {
        return Err(HfaError::Input("table was written for a different group".into()));
    }
    let body = &buf[16..];
    if body.len() % 16 != 0 {
        return Err(HfaError::Input("truncated table body".into()));
    }
    let values = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect();
    GroupFn::new(g.clone(), values)
}

/// CSV with header `index,re,im`; doubles use 17 significant digits.
pub fn write_csv(f: &GroupFn, w: impl Write) -> std::io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["index", "re", "im"])?;
    for (i, v) in f.values.iter().enumerate() {
        wr.write_record([i.to_string(), fmt_f64(v.re), fmt_f64(v.im)])?;
    }
    wr.flush()
}

pub fn read_csv(g: &FinAbGroup, r: impl Read) -> Result<GroupFn> {
    let mut rd = csv::Reader::from_reader(r);
    let mut values = vec![None; g.order() as usize];
    for rec in rd.records() {
        let rec = rec.map_err(|e| HfaError::Input(e.to_string()))?;
        let parse = |i: usize| -> Result<&str> {
            rec.get(i).ok_or_else(|| HfaError::Input(format!("short record {rec:?}")))
        };
        let idx: usize = parse(0)?.trim().parse().map_err(|_| HfaError::Input("bad index".into()))?;
        let re: f64 = parse(1)?.trim().parse().map_err(|_| HfaError::Input("bad real part".into()))?;
        let im: f64 = parse(2)?.trim().parse().map_err(|_| HfaError::Input("bad imaginary part".into()))?;
        let slot = values.get_mut(idx).ok_or_else(|| HfaError::Input(format!("index {idx} out of range")))?;
        if slot.is_some() {
            return Err(HfaError::Input(format!("duplicate index {idx}")));
        }
        *slot = Some(Complex64::new(re, im));
    }
    let values: Option<Vec<_>> = values.into_iter().collect();
    GroupFn::new(g.clone(), values.ok_or_else(|| HfaError::Input("table is missing indices".into()))?)
}

/// Round-trippable decimal with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    format!("{:.16e}", x)
}
