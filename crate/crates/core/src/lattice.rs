//! Integer lattices: Smith normal form, annihilator lattices, chain audits and
//! direct summands of `(Z/2^d)^n`.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{pre, HfaError, Result};
use crate::group::{Character, FinAbGroup, GroupElement, TorusValue};

/// Dense integer matrix with arbitrary-precision entries, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<BigInt>,
}

impl Serialize for IntMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<String>> =
            (0..self.rows).map(|i| (0..self.cols).map(|j| self[(i, j)].to_string()).collect()).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IntMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<String>> = Vec::deserialize(d)?;
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::new();
        for r in &rows {
            if r.len() != cols {
                return Err(serde::de::Error::custom("ragged matrix"));
            }
            for e in r {
                data.push(e.parse::<BigInt>().map_err(serde::de::Error::custom)?);
            }
        }
        Ok(IntMatrix { rows: rows.len(), cols, data })
    }
}

impl std::ops::Index<(usize, usize)> for IntMatrix {
    type Output = BigInt;
    fn index(&self, (i, j): (usize, usize)) -> &BigInt {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for IntMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut BigInt {
        &mut self.data[i * self.cols + j]
    }
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix { rows, cols, data: vec![BigInt::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = BigInt::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged matrix");
            for (j, &v) in r.iter().enumerate() {
                m[(i, j)] = BigInt::from(v);
            }
        }
        m
    }

    pub fn row(&self, i: usize) -> &[BigInt] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_i64_rows(&self) -> Option<Vec<Vec<i64>>> {
        (0..self.rows).map(|i| self.row(i).iter().map(|v| v.to_i64()).collect()).collect()
    }

    pub fn mul(&self, o: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, o.rows);
        let mut out = IntMatrix::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    let p = a * &o[(k, j)];
                    out[(i, j)] += p;
                }
            }
        }
        out
    }

    /// Determinant by fraction-free Bareiss elimination.
    pub fn det(&self) -> BigInt {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        if n == 0 {
            return BigInt::one();
        }
        let mut a = self.clone();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n - 1 {
            if a[(k, k)].is_zero() {
                let Some(p) = (k + 1..n).find(|&i| !a[(i, k)].is_zero()) else {
                    return BigInt::zero();
                };
                a.swap_rows(k, p);
                sign = -sign;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = (&a[(i, j)] * &a[(k, k)] - &a[(i, k)] * &a[(k, j)]) / &prev;
                    a[(i, j)] = v;
                }
            }
            prev = a[(k, k)].clone();
        }
        sign * &a[(n - 1, n - 1)]
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    /// row[dst] += k * row[src]
    fn add_row(&mut self, dst: usize, src: usize, k: &BigInt) {
        for j in 0..self.cols {
            let v = &self[(src, j)] * k;
            self[(dst, j)] += v;
        }
    }

    fn add_col(&mut self, dst: usize, src: usize, k: &BigInt) {
        for i in 0..self.rows {
            let v = &self[(i, src)] * k;
            self[(i, dst)] += v;
        }
    }

    fn negate_row(&mut self, r: usize) {
        for j in 0..self.cols {
            let v = -&self[(r, j)];
            self[(r, j)] = v;
        }
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self[(i, j)].is_zero()))
    }

    pub fn diagonal(&self) -> Vec<BigInt> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)].clone()).collect()
    }
}

/// Result of `smith_normal_form`: `u * m * v == d`.
#[derive(Clone, Debug)]
pub struct Smith {
    pub u: IntMatrix,
    pub d: IntMatrix,
    pub v: IntMatrix,
}

impl Smith {
    pub fn diagonal(&self) -> Vec<BigInt> {
        self.d.diagonal()
    }

    pub fn rank(&self) -> usize {
        self.diagonal().iter().filter(|x| !x.is_zero()).count()
    }
}

/// Smith normal form by elementary operations, pivoting on the entry of least absolute value.
///
/// The result is checked before returning: `U M V = D`, `D` diagonal with nonnegative entries
/// forming a divisibility chain, and `|det U| = |det V| = 1`.
pub fn smith_normal_form(m: &IntMatrix) -> Smith {
    let (rows, cols) = (m.rows, m.cols);
    let mut d = m.clone();
    let mut u = IntMatrix::identity(rows);
    let mut v = IntMatrix::identity(cols);
    let lim = rows.min(cols);
    for t in 0..lim {
        loop {
            // least nonzero |entry| in the trailing block
            let mut best: Option<(usize, usize)> = None;
            for i in t..rows {
                for j in t..cols {
                    let e = &d[(i, j)];
                    if !e.is_zero() && best.map_or(true, |(bi, bj)| e.abs() < d[(bi, bj)].abs()) {
                        best = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = best else { break };
            d.swap_rows(t, pi);
            u.swap_rows(t, pi);
            d.swap_cols(t, pj);
            v.swap_cols(t, pj);
            let mut clean = true;
            for i in t + 1..rows {
                if d[(i, t)].is_zero() {
                    continue;
                }
                let q = -d[(i, t)].div_floor(&d[(t, t)]);
                d.add_row(i, t, &q);
                u.add_row(i, t, &q);
                if !d[(i, t)].is_zero() {
                    clean = false;
                }
            }
            for j in t + 1..cols {
                if d[(t, j)].is_zero() {
                    continue;
                }
                let q = -d[(t, j)].div_floor(&d[(t, t)]);
                d.add_col(j, t, &q);
                v.add_col(j, t, &q);
                if !d[(t, j)].is_zero() {
                    clean = false;
                }
            }
            if !clean {
                continue;
            }
            // Pivot must divide the rest of the block; otherwise fold an offending row in.
            let piv = d[(t, t)].clone();
            let bad = (t + 1..rows).find(|&i| (t + 1..cols).any(|j| !d[(i, j)].is_multiple_of(&piv)));
            match bad {
                Some(i) => {
                    let one = BigInt::one();
                    d.add_row(t, i, &one);
                    u.add_row(t, i, &one);
                }
                None => break,
            }
        }
        if d[(t, t)].is_negative() {
            d.negate_row(t);
            u.negate_row(t);
        }
    }
    let s = Smith { u, d, v };
    debug_assert!(verify_smith(m, &s).is_ok());
    s
}

/// Checks all postconditions of a Smith decomposition.
pub fn verify_smith(m: &IntMatrix, s: &Smith) -> Result<()> {
    if s.u.mul(m).mul(&s.v) != s.d {
        return Err(HfaError::Certificate("U M V != D".into()));
    }
    if !s.d.is_diagonal() {
        return Err(HfaError::Certificate("D is not diagonal".into()));
    }
    let diag = s.d.diagonal();
    for w in diag.windows(2) {
        let ok = if w[0].is_zero() { w[1].is_zero() } else { w[1].is_multiple_of(&w[0]) };
        if !ok || w[0].is_negative() {
            return Err(HfaError::Certificate("diagonal is not a divisibility chain".into()));
        }
    }
    if s.u.det().abs() != BigInt::one() || s.v.det().abs() != BigInt::one() {
        return Err(HfaError::Certificate("transform is not unimodular".into()));
    }
    Ok(())
}

/// Invariant factors of `Z^n / <relations>`, dropping trivial factors.
pub fn quotient_invariants(n: usize, relations: &[Vec<i64>]) -> Result<Vec<u64>> {
    if relations.iter().any(|r| r.len() != n) {
        return Err(HfaError::Input("relation length differs from generator count".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut m = IntMatrix::from_rows(relations);
    if relations.is_empty() {
        m = IntMatrix::zeros(0, n);
    }
    let s = smith_normal_form(&m);
    let mut diag = s.diagonal();
    diag.resize(n, BigInt::zero());
    if diag.iter().any(|x| x.is_zero()) {
        return Err(HfaError::Input("presentation has free rank; only finite groups are supported".into()));
    }
    diag.iter()
        .filter(|x| !x.is_one())
        .map(|x| x.to_u64().ok_or_else(|| HfaError::Budget("invariant factor too large".into())))
        .collect()
}

/// Membership test for the row lattice of `basis` via its Smith form.
#[derive(Clone, Debug)]
pub struct LatticeMembership {
    v: IntMatrix,
    diag: Vec<BigInt>,
    dim: usize,
}

impl LatticeMembership {
    pub fn new(basis: &[Vec<i64>], dim: usize) -> Self {
        let m = if basis.is_empty() { IntMatrix::zeros(0, dim) } else { IntMatrix::from_rows(basis) };
        let s = smith_normal_form(&m);
        let mut diag = s.diagonal();
        diag.resize(dim, BigInt::zero());
        LatticeMembership { v: s.v, diag, dim }
    }

    /// `x` lies in the row span iff `x V = y D` is solvable over the integers.
    pub fn contains(&self, x: &[i64]) -> bool {
        assert_eq!(x.len(), self.dim);
        for j in 0..self.dim {
            let mut w = BigInt::zero();
            for (i, &xi) in x.iter().enumerate() {
                if xi != 0 {
                    w += &self.v[(i, j)] * xi;
                }
            }
            let dj = &self.diag[j];
            let ok = if dj.is_zero() { w.is_zero() } else { w.is_multiple_of(dj) };
            if !ok {
                return false;
            }
        }
        true
    }
}

/// Lattice of integer relations `lambda` with `sum lambda_i chi_i = 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnnihilatorLattice {
    pub group: FinAbGroup,
    pub chis: Vec<Character>,
    /// `r` basis vectors of the rank-`r` lattice.
    pub basis: Vec<Vec<i64>>,
    pub covolume: u64,
}

impl AnnihilatorLattice {
    pub fn contains(&self, lambda: &[i64]) -> bool {
        annihilates(&self.group, &self.chis, lambda)
    }

    /// Values of the tuple `(chi_1(x), ..., chi_r(x))` as numerators over the group exponent.
    pub fn image_point(&self, x: &GroupElement) -> Vec<u64> {
        self.chis.iter().map(|c| self.group.char_eval_num(&c.0, &x.0)).collect()
    }
}

pub fn annihilates(g: &FinAbGroup, chis: &[Character], lambda: &[i64]) -> bool {
    (0..g.rank()).all(|j| {
        let q = g.factors()[j] as i128;
        let s: i128 = chis.iter().zip(lambda).map(|(c, &l)| c.0[j] as i128 * l as i128).sum();
        s.rem_euclid(q) == 0
    })
}

/// Basis of the annihilator lattice from the left kernel of `[chi; diag(q)]`.
pub fn annihilator_lattice(g: &FinAbGroup, chis: &[Character]) -> Result<AnnihilatorLattice> {
    for c in chis {
        if !g.contains(&GroupElement(c.0.clone())) {
            return Err(HfaError::Structural(format!("character {:?} not in dual of {g}", c.0)));
        }
    }
    let r = chis.len();
    let d = g.rank();
    let basis: Vec<Vec<i64>> = if d == 0 {
        (0..r).map(|i| (0..r).map(|j| (i == j) as i64).collect()).collect()
    } else {
        let mut a = IntMatrix::zeros(r + d, d);
        for (i, c) in chis.iter().enumerate() {
            for j in 0..d {
                a[(i, j)] = BigInt::from(c.0[j]);
            }
        }
        for j in 0..d {
            a[(r + j, j)] = BigInt::from(g.factors()[j]);
        }
        let s = smith_normal_form(&a);
        let rank = s.rank();
        debug_assert_eq!(rank, d);
        (rank..r + d)
            .map(|i| {
                s.u.row(i)[..r]
                    .iter()
                    .map(|x| x.to_i64().ok_or_else(|| HfaError::Budget("lattice basis entry overflows".into())))
                    .collect::<Result<Vec<i64>>>()
            })
            .collect::<Result<_>>()?
    };
    let cov = if r == 0 { BigInt::one() } else { IntMatrix::from_rows(&basis).det().abs() };
    let lat = AnnihilatorLattice {
        group: g.clone(),
        chis: chis.to_vec(),
        covolume: cov.to_u64().ok_or_else(|| HfaError::Budget("covolume overflows".into()))?,
        basis,
    };
    for b in &lat.basis {
        if !lat.contains(b) {
            return Err(HfaError::Certificate("basis vector does not annihilate".into()));
        }
    }
    Ok(lat)
}

/// `|Im chi|` by enumerating the group.
pub fn image_size(g: &FinAbGroup, chis: &[Character], cap: u64) -> Result<u64> {
    let lat = AnnihilatorLattice { group: g.clone(), chis: chis.to_vec(), basis: vec![], covolume: 0 };
    let img: HashSet<Vec<u64>> = g.enumerate_capped(cap)?.map(|x| lat.image_point(&x)).collect();
    Ok(img.len() as u64)
}

/// Torus vectors annihilated by every lattice vector (`Lambda^perp`), for small images.
///
/// Candidates have denominators dividing the group exponent, which contains `Lambda^perp`
/// because `exp * e_i` lies in `Lambda`.
pub fn dual_of_lattice(lat: &AnnihilatorLattice) -> Vec<Vec<u64>> {
    let n = lat.group.exponent();
    let r = lat.chis.len();
    let total = n.pow(r as u32);
    let mut out = Vec::new();
    for mut idx in 0..total {
        let mut v = vec![0u64; r];
        for k in (0..r).rev() {
            v[k] = idx % n;
            idx /= n;
        }
        let ok = lat.basis.iter().all(|b| {
            let s: i128 = b.iter().zip(&v).map(|(&l, &x)| l as i128 * x as i128).sum();
            s.rem_euclid(n as i128) == 0
        });
        if ok {
            out.push(v);
        }
    }
    out
}

/// Iterates `[-k, k]^dim` in lexicographic order.
pub fn box_points(dim: usize, k: i64) -> impl Iterator<Item = Vec<i64>> {
    let side = (2 * k + 1) as u64;
    let total = side.checked_pow(dim as u32).unwrap_or(u64::MAX);
    (0..total).map(move |mut idx| {
        let mut v = vec![0i64; dim];
        for j in (0..dim).rev() {
            v[j] = (idx % side) as i64 - k;
            idx /= side;
        }
        v
    })
}

/// Outcome of `approximate_image_witness`.
#[derive(Clone, Debug, PartialEq)]
pub enum ImageWitness {
    Found(GroupElement),
    /// No element is within `delta`; only possible on inputs outside the hypotheses.
    Refuted,
}

/// Constant in the box-size requirement `K >= C r (2/delta)^(2r+1)` used for the precondition.
pub const APPROX_IMAGE_C: f64 = 1.0;

/// Searches for `x` with `||chi(x) - v|| <= delta` in every coordinate.
///
/// The hypothesis is checked first: `v` must be annihilated by every lattice vector in
/// `[-K, K]^r`, and `K` must be at least `C r (2/delta)^(2r+1)`.
pub fn approximate_image_witness(
    g: &FinAbGroup,
    chis: &[Character],
    v: &[TorusValue],
    delta: f64,
    k: i64,
    cap: u64,
) -> Result<ImageWitness> {
    let r = chis.len();
    pre(v.len() == r, || "target vector length differs from character count".into())?;
    pre(delta > 0.0, || "delta must be positive".into())?;
    let need = APPROX_IMAGE_C * r as f64 * (2.0 / delta).powi(2 * r as i32 + 1);
    pre(k as f64 >= need, || format!("box size {k} below required {need:.3e}"))?;
    let side = (2 * k + 1) as u64;
    let pts = side.checked_pow(r as u32).filter(|&p| p <= cap);
    pre(pts.is_some() || r == 0, || "lattice box exceeds enumeration cap".into())?;
    if r == 1 {
        // One dimension: the lattice is a multiple of its generator.
        let lat = annihilator_lattice(g, chis)?;
        let m = lat.basis[0][0].abs();
        let mut t = m;
        while t <= k {
            if v[0].scale(t) != TorusValue::ZERO {
                return Err(HfaError::Precondition(format!("v is not annihilated by lattice vector {t}")));
            }
            t += m;
        }
    } else {
        for lam in box_points(r, k) {
            if annihilates(g, chis, &lam) {
                let s: TorusValue = lam.iter().zip(v).map(|(&l, t)| t.scale(l)).sum();
                if s != TorusValue::ZERO {
                    return Err(HfaError::Precondition(format!("v is not annihilated by {lam:?}")));
                }
            }
        }
    }
    let n = g.exponent() as i64;
    for x in g.enumerate_capped(cap)? {
        let ok = chis.iter().zip(v).all(|(c, t)| {
            let cv = TorusValue::new(g.char_eval_num(&c.0, &x.0) as i64, n);
            let dist = (cv - *t).norm();
            (*dist.numer() as f64) <= delta * (*dist.denom() as f64)
        });
        if ok {
            return Ok(ImageWitness::Found(x));
        }
    }
    Ok(ImageWitness::Refuted)
}

/// Pinned constant for the nested-chain length bound.
pub const NESTED_CHAIN_C: f64 = 64.0;

/// `C k^2 (log2(2k) + log2(2K))`; the doubled arguments keep the bound positive at `k = K = 1`.
pub fn nested_chain_bound(k: usize, big_k: i64) -> f64 {
    let k = k as f64;
    NESTED_CHAIN_C * k * k * ((2.0 * k).log2() + (2.0 * big_k as f64).log2())
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainAudit {
    pub length: usize,
    pub bound: f64,
    /// For each step, the lexicographically least box vector in the new lattice but not the old.
    pub witnesses: Vec<Vec<i64>>,
    pub within_bound: bool,
}

/// Audits an increasing chain of lattices in `Z^k`, each given by generating rows.
pub fn nested_chain_audit(chain: &[Vec<Vec<i64>>], k: usize, big_k: i64, cap: u64) -> Result<ChainAudit> {
    pre(!chain.is_empty(), || "empty chain".into())?;
    pre(big_k >= 1, || "box radius must be positive".into())?;
    let side = (2 * big_k + 1) as u64;
    pre(side.checked_pow(k as u32).map_or(false, |p| p <= cap), || "box exceeds enumeration cap".into())?;
    let mems: Vec<LatticeMembership> = chain.iter().map(|b| LatticeMembership::new(b, k)).collect();
    let mut witnesses = Vec::new();
    for i in 0..chain.len() - 1 {
        for b in &chain[i] {
            if !mems[i + 1].contains(b) {
                return Err(HfaError::Precondition(format!("lattice {i} is not contained in lattice {}", i + 1)));
            }
        }
        let w = box_points(k, big_k).find(|p| mems[i + 1].contains(p) && !mems[i].contains(p));
        match w {
            Some(w) => witnesses.push(w),
            None => {
                return Err(HfaError::Precondition(format!("step {i} has no witness in the box")));
            }
        }
    }
    let bound = nested_chain_bound(k, big_k);
    Ok(ChainAudit { length: chain.len(), bound, within_bound: chain.len() as f64 <= bound, witnesses })
}

/// `<a>_R`: all sums `sum l_i a_i` with `|l_i| <= R`, as a membership bitmap over element indices.
pub fn bounded_span(g: &FinAbGroup, a: &[GroupElement], r: u64) -> Vec<bool> {
    let n = g.order() as usize;
    let mut cur = vec![false; n];
    cur[0] = true;
    for x in a {
        let xi = g.index_of(x);
        let mut mults = vec![0u64];
        let (mut p, mut m) = (0u64, 0u64);
        for _ in 0..r {
            p = g.add_idx(p, xi);
            m = g.add_idx(m, g.neg_idx(xi));
            mults.push(p);
            mults.push(m);
        }
        mults.sort_unstable();
        mults.dedup();
        let mut next = vec![false; n];
        for (i, _) in cur.iter().enumerate().filter(|(_, &b)| b) {
            for &t in &mults {
                next[g.add_idx(i as u64, t) as usize] = true;
            }
        }
        cur = next;
    }
    cur
}

#[derive(Clone, Debug, Serialize)]
pub struct GenerationReport {
    pub b: Vec<GroupElement>,
    pub s: u64,
    /// `k^2 (log k + log R)` with unit constant, for comparison only.
    pub ell_reference: f64,
    /// `(2Rk)^(k+3)` with unit constant, for comparison only.
    pub s_reference: f64,
}

/// Greedy generating subset of `B` with the least coefficient bound that covers `B`.
pub fn quantitative_generation(
    g: &FinAbGroup,
    a: &[GroupElement],
    r: u64,
    b_set: &[GroupElement],
) -> Result<GenerationReport> {
    pre(!b_set.is_empty(), || "B must be nonempty".into())?;
    let span = bounded_span(g, a, r);
    for x in b_set {
        pre(span[g.index_of(x) as usize], || format!("{:?} is not in <a>_R", x.0))?;
    }
    let mut chosen: Vec<GroupElement> = Vec::new();
    let mut sub: HashSet<u64> = [0].into_iter().collect();
    for x in b_set {
        if !sub.contains(&g.index_of(x)) {
            chosen.push(x.clone());
            sub = g.span(&chosen).into_iter().collect();
        }
    }
    let mut s = 0u64;
    loop {
        let cover = bounded_span(g, &chosen, s);
        if b_set.iter().all(|x| cover[g.index_of(x) as usize]) {
            break;
        }
        s += 1;
        if s > g.exponent() {
            return Err(HfaError::Certificate("greedy generators fail to cover B".into()));
        }
    }
    let k = a.len().max(1) as f64;
    let rr = r.max(1) as f64;
    Ok(GenerationReport {
        b: chosen,
        s,
        ell_reference: k * k * (k.ln() + rr.ln()),
        s_reference: (2.0 * rr * k).powf(k + 3.0),
    })
}

/// A splitting `G = U + V` together with the projection onto `U` along `V`.
#[derive(Clone, Debug, Serialize)]
pub struct Summand {
    pub u_gens: Vec<GroupElement>,
    pub v_gens: Vec<GroupElement>,
    pub u_size: u64,
    pub v_size: u64,
    /// `pi(x)` as element index, indexed by element index.
    pub projection: Vec<u64>,
}

/// Returns `d` when `g = (Z/2^d)^n` with `n >= 1`.
fn two_power_exponent(g: &FinAbGroup) -> Result<u32> {
    let q = g.exponent();
    if g.rank() == 0 || !q.is_power_of_two() || q < 2 || g.factors().iter().any(|&f| f != q) {
        return Err(HfaError::Precondition(format!("{g} is not of the form (Z/2^d)^n")));
    }
    Ok(q.trailing_zeros())
}

struct AdaptedBasis {
    /// Rows `a_i` of the adapted basis.
    a: Vec<Vec<i64>>,
    /// Coefficients `k_i` with `b_i = k_i a_i` generating `H` (zero past the rank).
    k: Vec<BigInt>,
    /// Change of coordinates: `x = mu A` iff `mu = x V`.
    v: IntMatrix,
}

fn adapted_basis(g: &FinAbGroup, h_gens: &[GroupElement]) -> Result<AdaptedBasis> {
    let n = g.rank();
    let q = g.exponent() as i64;
    for h in h_gens {
        if !g.contains(h) {
            return Err(HfaError::Structural(format!("{:?} is not in {g}", h.0)));
        }
    }
    let m = if h_gens.is_empty() {
        IntMatrix::zeros(0, n)
    } else {
        IntMatrix::from_rows(&h_gens.iter().map(|h| h.0.iter().map(|&c| c as i64).collect()).collect::<Vec<_>>())
    };
    let s = smith_normal_form(&m);
    // A = V^{-1} modulo q; computed as the integer inverse, which exists since det V = +-1.
    let a_inv = integer_inverse(&s.v)?;
    let a: Vec<Vec<i64>> = (0..n)
        .map(|i| a_inv.row(i).iter().map(|x| x.mod_floor(&BigInt::from(q)).to_i64().unwrap()).collect())
        .collect();
    let mut k = s.diagonal();
    k.resize(n, BigInt::zero());
    Ok(AdaptedBasis { a, k, v: s.v })
}

/// Inverse of a unimodular matrix via its adjugate-free Gauss-Jordan over the integers.
pub fn integer_inverse(m: &IntMatrix) -> Result<IntMatrix> {
    let n = m.rows;
    let s = smith_normal_form(m);
    if s.diagonal().iter().any(|x| !x.is_one()) || s.diagonal().len() != n {
        return Err(HfaError::Precondition("matrix is not unimodular".into()));
    }
    // U M V = I  =>  M^{-1} = V U
    Ok(s.v.mul(&s.u))
}

fn build_summand(g: &FinAbGroup, basis: &AdaptedBasis, in_u: &[bool]) -> Summand {
    let n = g.rank();
    let q = g.exponent() as i64;
    let elem = |row: &Vec<i64>| g.element(row).unwrap();
    let u_gens: Vec<GroupElement> = (0..n).filter(|&i| in_u[i]).map(|i| elem(&basis.a[i])).collect();
    let v_gens: Vec<GroupElement> = (0..n).filter(|&i| !in_u[i]).map(|i| elem(&basis.a[i])).collect();
    let mut projection = Vec::with_capacity(g.order() as usize);
    for idx in 0..g.order() {
        let x = g.element_at(idx);
        let mut out = vec![0i64; n];
        for i in (0..n).filter(|&i| in_u[i]) {
            // mu_i = (x V)_i
            let mut mu = BigInt::zero();
            for (j, &xj) in x.0.iter().enumerate() {
                mu += &basis.v[(j, i)] * xj;
            }
            let mu = mu.mod_floor(&BigInt::from(q)).to_i64().unwrap();
            for (o, &aij) in out.iter_mut().zip(&basis.a[i]) {
                *o = (*o + mu * aij).rem_euclid(q);
            }
        }
        projection.push(g.index_of(&elem(&out)));
    }
    let u_size = g.span(&u_gens).len() as u64;
    let v_size = g.span(&v_gens).len() as u64;
    Summand { u_gens, v_gens, u_size, v_size, projection }
}

fn check_direct_sum(g: &FinAbGroup, s: &Summand) -> Result<()> {
    let u: HashSet<u64> = g.span(&s.u_gens).into_iter().collect();
    let v: HashSet<u64> = g.span(&s.v_gens).into_iter().collect();
    if s.u_size * s.v_size != g.order() || u.intersection(&v).count() != 1 {
        return Err(HfaError::Certificate("U and V do not split G".into()));
    }
    for idx in 0..g.order() {
        let p = s.projection[idx as usize];
        if !u.contains(&p) {
            return Err(HfaError::Certificate("projection leaves U".into()));
        }
        let diff = g.add_idx(idx, g.neg_idx(p));
        if !v.contains(&diff) {
            return Err(HfaError::Certificate("x - pi(x) is not in V".into()));
        }
    }
    Ok(())
}

/// Large direct summand inside `H <= (Z/2^d)^n`, with `|U| >= (|H|/|G|)^d |G|` checked exactly.
pub fn direct_summand_below(g: &FinAbGroup, h_gens: &[GroupElement]) -> Result<Summand> {
    let d = two_power_exponent(g)?;
    let basis = adapted_basis(g, h_gens)?;
    let two = BigInt::from(2);
    let in_u: Vec<bool> = basis.k.iter().map(|k| !k.is_zero() && !k.is_multiple_of(&two)).collect();
    let s = build_summand(g, &basis, &in_u);
    check_direct_sum(g, &s)?;
    let h: HashSet<u64> = g.span(h_gens).into_iter().collect();
    if g.span(&s.u_gens).iter().any(|x| !h.contains(x)) {
        return Err(HfaError::Certificate("U is not contained in H".into()));
    }
    // |U| |G|^(d-1) >= |H|^d
    let lhs = BigInt::from(s.u_size) * BigInt::from(g.order()).pow(d - 1);
    let rhs = BigInt::from(h.len()).pow(d);
    if lhs < rhs {
        return Err(HfaError::Certificate(format!("|U| = {} below density bound", s.u_size)));
    }
    Ok(s)
}

/// Small direct summand containing `H`, with `|U| <= |H|^d`; the projection onto `V` vanishes on `H`.
pub fn envelope_summand_above(g: &FinAbGroup, h_gens: &[GroupElement]) -> Result<Summand> {
    let d = two_power_exponent(g)?;
    let basis = adapted_basis(g, h_gens)?;
    let q = BigInt::from(g.exponent());
    let in_u: Vec<bool> = basis.k.iter().map(|k| !k.is_multiple_of(&q)).collect();
    let s = build_summand(g, &basis, &in_u);
    check_direct_sum(g, &s)?;
    let h = g.span(h_gens);
    let u: HashSet<u64> = g.span(&s.u_gens).into_iter().collect();
    if h.iter().any(|x| !u.contains(x)) {
        return Err(HfaError::Certificate("H is not contained in U".into()));
    }
    if BigInt::from(s.u_size) > BigInt::from(h.len()).pow(d) {
        return Err(HfaError::Certificate(format!("|U| = {} above |H|^d", s.u_size)));
    }
    Ok(s)
}

/// Every subgroup of `g`, each as a sorted list of element indices, in a canonical order.
///
/// Subgroups of a rank-`r` group are `r`-generated, so `r`-tuples of generators suffice.
pub fn all_subgroups(g: &FinAbGroup, cap: u64) -> Result<Vec<(Vec<GroupElement>, Vec<u64>)>> {
    let r = g.rank().max(1) as u32;
    let n = g.order();
    let tuples = n.checked_pow(r).filter(|&t| t <= cap).ok_or_else(|| HfaError::Budget("too many generator tuples".into()))?;
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut out = Vec::new();
    for mut t in 0..tuples {
        let mut gens = Vec::with_capacity(r as usize);
        for _ in 0..r {
            gens.push(g.element_at(t % n));
            t /= n;
        }
        let sub = g.span(&gens);
        if seen.insert(sub.clone()) {
            out.push((gens, sub));
        }
    }
    out.sort_by(|a, b| a.1.len().cmp(&b.1.len()).then(a.1.cmp(&b.1)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn diag_i64(s: &Smith) -> Vec<i64> {
        s.diagonal().iter().map(|x| x.to_i64().unwrap()).collect()
    }

    #[test]
    fn snf_examples() {
        let m = IntMatrix::from_rows(&[vec![2, 4], vec![6, 8]]);
        let s = smith_normal_form(&m);
        verify_smith(&m, &s).unwrap();
        // d1 = gcd of entries, d1 d2 = |det|
        assert_eq!(diag_i64(&s), vec![2, 4]);
        let id = IntMatrix::identity(3);
        assert_eq!(smith_normal_form(&id).d, id);
        let z = IntMatrix::zeros(2, 3);
        assert_eq!(smith_normal_form(&z).d, z);
    }

    #[test]
    fn snf_large_entries_use_bigints() {
        let big = 1i64 << 40;
        let m = IntMatrix::from_rows(&[vec![big, big + 1, 3], vec![big - 7, 5, big], vec![11, big, 2 * big + 1]]);
        let s = smith_normal_form(&m);
        verify_smith(&m, &s).unwrap();
        assert_eq!(s.diagonal().iter().fold(BigInt::one(), |a, b| a * b), m.det().abs());
    }

    #[test]
    fn matrix_json_uses_strings() {
        let m = IntMatrix::from_rows(&[vec![1, -2]]);
        let js = serde_json::to_string(&m).unwrap();
        assert_eq!(js, r#"[["1","-2"]]"#);
        assert_eq!(serde_json::from_str::<IntMatrix>(&js).unwrap(), m);
    }

    #[test]
    fn quotient_presentation() {
        // Z^2 / <(2,0),(0,3)> = Z/6
        assert_eq!(quotient_invariants(2, &[vec![2, 0], vec![0, 3]]).unwrap(), vec![6]);
        assert_eq!(FinAbGroup::from_relations(2, &[vec![4, 0], vec![0, 6]]).unwrap().factors(), &[2, 12]);
        assert!(quotient_invariants(2, &[vec![2, 0]]).is_err());
    }

    #[test]
    fn annihilator_examples() {
        let g = FinAbGroup::cyclic(12);
        // chi = 3 has order 4 in the dual of Z/12
        let lat = annihilator_lattice(&g, &[Character(vec![3])]).unwrap();
        assert_eq!(lat.covolume, 4);
        assert_eq!(image_size(&g, &lat.chis, 1000).unwrap(), 4);
        let lat0 = annihilator_lattice(&g, &[Character(vec![0]), Character(vec![0])]).unwrap();
        assert_eq!(lat0.covolume, 1);
        let lat2 = annihilator_lattice(&g, &[Character(vec![1]), Character(vec![2])]).unwrap();
        assert_eq!(lat2.covolume, image_size(&g, &lat2.chis, 1000).unwrap());
        assert!(lat2.contains(&[12, 0]) && lat2.contains(&[0, 12]) && lat2.contains(&[2, -1]));
    }

    /// |Im chi| = cov Lambda and Im chi = Lambda^perp, exhaustively on small groups.
    #[test]
    fn image_equals_dual_exhaustive() {
        for factors in [vec![12], vec![2, 4], vec![16], vec![3, 3], vec![2, 2, 2]] {
            let g = FinAbGroup::new(factors).unwrap();
            let chars: Vec<Character> = g.characters(1000).unwrap().collect();
            for (i, a) in chars.iter().enumerate() {
                for b in &chars[i..] {
                    let chis = vec![a.clone(), b.clone()];
                    let lat = annihilator_lattice(&g, &chis).unwrap();
                    let img: HashSet<Vec<u64>> = g.enumerate().unwrap().map(|x| lat.image_point(&x)).collect();
                    assert_eq!(img.len() as u64, lat.covolume);
                    let dual: HashSet<Vec<u64>> = dual_of_lattice(&lat).into_iter().collect();
                    assert_eq!(img, dual);
                }
            }
        }
    }

    #[test]
    fn approximate_image_examples() {
        let g = FinAbGroup::cyclic(101);
        let chis = [Character(vec![5])];
        let k = 1_000_000;
        let w = approximate_image_witness(&g, &chis, &[TorusValue::ZERO], 0.02, k, 1 << 24).unwrap();
        assert_eq!(w, ImageWitness::Found(g.zero()));
        let x = g.element(&[17]).unwrap();
        let v = g.char_eval(&chis[0], &x).unwrap();
        assert!(matches!(
            approximate_image_witness(&g, &chis, &[v], 0.02, k, 1 << 24).unwrap(),
            ImageWitness::Found(_)
        ));
        // Lambda = 101 Z and K < 101 would see only 0; here K is large so v must be a 101-torsion point.
        let v = TorusValue::new(37, 101);
        let ImageWitness::Found(x) = approximate_image_witness(&g, &chis, &[v], 0.02, k, 1 << 24).unwrap() else {
            panic!("no witness");
        };
        let got = g.char_eval(&chis[0], &x).unwrap();
        assert!((got - v).norm() <= num_rational::Ratio::new(1, 50));
        let bad = TorusValue::new(1, 7);
        assert!(matches!(
            approximate_image_witness(&g, &chis, &[bad], 0.02, k, 1 << 24),
            Err(HfaError::Precondition(_))
        ));
    }

    #[test]
    fn nested_chain_examples() {
        let a = nested_chain_audit(&[vec![vec![2]], vec![vec![1]]], 1, 1, 1000).unwrap();
        assert_eq!(a.length, 2);
        assert!(a.within_bound);
        assert_eq!(a.witnesses, vec![vec![-1]]);
        let single = nested_chain_audit(&[vec![vec![3, 0], vec![0, 3]]], 2, 3, 1000).unwrap();
        assert_eq!(single.length, 1);
        let chain = vec![
            vec![vec![12, 0], vec![0, 12]],
            vec![vec![6, 0], vec![0, 12]],
            vec![vec![3, 0], vec![0, 6]],
            vec![vec![1, 0], vec![0, 2]],
        ];
        let audit = nested_chain_audit(&chain, 2, 3, 1000).unwrap_err();
        // 12Z x 12Z -> 6Z x 12Z has no witness in [-3,3]^2.
        assert!(matches!(audit, HfaError::Precondition(_)));
        let chain = vec![
            vec![vec![3, 0], vec![0, 3]],
            vec![vec![3, 0], vec![0, 1]],
            vec![vec![1, 1], vec![0, 1]],
            vec![vec![1, 0], vec![0, 1]],
        ];
        let audit = nested_chain_audit(&chain, 2, 3, 1000);
        // Third and fourth lattices coincide, so the last step has no witness.
        assert!(audit.is_err());
        let chain = vec![vec![vec![6, 0], vec![0, 6]], vec![vec![3, 0], vec![0, 6]], vec![vec![3, 0], vec![0, 2]], vec![vec![1, 0], vec![0, 2]]];
        let audit = nested_chain_audit(&chain, 2, 3, 1000).unwrap();
        assert_eq!(audit.length, 4);
        assert!(audit.within_bound);
    }

    #[test]
    fn generation_examples() {
        let g = FinAbGroup::cyclic(36);
        let a = vec![g.element(&[6]).unwrap(), g.element(&[9]).unwrap()];
        let span = bounded_span(&g, &a, 3);
        let b: Vec<GroupElement> =
            (0..36).filter(|&i| span[i as usize]).map(|i| g.element_at(i)).collect();
        let rep = quantitative_generation(&g, &a, 3, &b).unwrap();
        let cover = bounded_span(&g, &rep.b, rep.s);
        assert!(b.iter().all(|x| cover[g.index_of(x) as usize]));
        let one = quantitative_generation(&g, &a, 3, &[a[0].clone()]).unwrap();
        assert_eq!(one.b.len(), 1);
        let same = quantitative_generation(&g, &a, 3, &a).unwrap();
        assert!(same.b.len() <= a.len());
    }

    #[test]
    fn direct_summand_examples() {
        let g = FinAbGroup::cyclic(4);
        let s = direct_summand_below(&g, &[g.element(&[2]).unwrap()]).unwrap();
        assert_eq!(s.u_size, 1);
        let s = direct_summand_below(&g, &[g.element(&[1]).unwrap()]).unwrap();
        assert_eq!((s.u_size, s.v_size), (4, 1));
        let g2 = FinAbGroup::power(4, 2);
        let h = vec![g2.element(&[2, 0]).unwrap(), g2.element(&[0, 2]).unwrap()];
        let s = direct_summand_below(&g2, &h).unwrap();
        // c = 1/4, d = 2: bound 1/16 * 16 = 1
        assert!(s.u_size >= 1);
        assert!(direct_summand_below(&FinAbGroup::cyclic(6), &[]).is_err());
        assert!(direct_summand_below(&FinAbGroup::new(vec![2, 4]).unwrap(), &[]).is_err());
    }

    #[test]
    fn envelope_examples() {
        let g = FinAbGroup::cyclic(4);
        let s = envelope_summand_above(&g, &[g.element(&[2]).unwrap()]).unwrap();
        assert_eq!(s.u_size, 4);
        let s = envelope_summand_above(&g, &[]).unwrap();
        assert_eq!(s.u_size, 1);
        let g2 = FinAbGroup::power(4, 2);
        let s = envelope_summand_above(&g2, &[g2.element(&[2, 2]).unwrap()]).unwrap();
        assert!(s.u_size <= 4);
        assert!(s.projection.iter().all(|&p| p < g2.order()));
    }

    /// Both summand constructions over every subgroup of (Z/2^d)^n, d <= 3, n <= 2.
    #[test]
    fn summands_exhaustive() {
        for (m, n) in [(2, 1), (4, 1), (8, 1), (2, 2), (4, 2), (8, 2)] {
            let g = FinAbGroup::power(m, n);
            for (gens, _) in all_subgroups(&g, 1 << 20).unwrap() {
                direct_summand_below(&g, &gens).unwrap();
                envelope_summand_above(&g, &gens).unwrap();
            }
        }
    }

    #[test]
    fn subgroup_counts() {
        // Z/8 has 4 subgroups; (Z/2)^2 has 5; (Z/4)^2 has 15.
        assert_eq!(all_subgroups(&FinAbGroup::cyclic(8), 1000).unwrap().len(), 4);
        assert_eq!(all_subgroups(&FinAbGroup::power(2, 2), 1000).unwrap().len(), 5);
        assert_eq!(all_subgroups(&FinAbGroup::power(4, 2), 1000).unwrap().len(), 15);
    }

    fn arb_matrix() -> impl Strategy<Value = Vec<Vec<i64>>> {
        (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(proptest::collection::vec(-100i64..=100, c), r)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn snf_postconditions(rows in arb_matrix()) {
            let m = IntMatrix::from_rows(&rows);
            let s = smith_normal_form(&m);
            prop_assert!(verify_smith(&m, &s).is_ok());
            let again = smith_normal_form(&s.d);
            prop_assert_eq!(again.d, s.d);
        }
    }
}
