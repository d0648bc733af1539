//! Finite abelian groups in invariant-factor form, characters and exact torus values.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{HfaError, Result};

/// Default ceiling on the number of elements an enumeration may produce.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// An exact point of R/Z, kept as a reduced fraction with numerator in `[0, den)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TorusValue {
    num: i64,
    den: i64,
}

impl TorusValue {
    pub const ZERO: TorusValue = TorusValue { num: 0, den: 1 };

    /// `num/den mod 1`. Panics on a zero denominator.
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "torus value with zero denominator");
        let (num, den) = if den < 0 { (-(num as i128), -(den as i128)) } else { (num as i128, den as i128) };
        Self::from_i128(num, den)
    }

    fn from_i128(num: i128, den: i128) -> Self {
        let r = num.rem_euclid(den);
        let g = r.gcd(&den);
        let g = if g == 0 { 1 } else { g };
        TorusValue { num: (r / g) as i64, den: (den / g) as i64 }
    }

    pub fn from_ratio(r: Ratio<i64>) -> Self {
        Self::new(*r.numer(), *r.denom())
    }

    pub fn numer(&self) -> i64 {
        self.num
    }

    pub fn denom(&self) -> i64 {
        self.den
    }

    /// Representative in `[0, 1)`.
    pub fn to_ratio(&self) -> Ratio<i64> {
        Ratio::new_raw(self.num, self.den)
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Distance to the nearest integer, exactly.
    pub fn norm(&self) -> Ratio<i64> {
        let other = self.den - self.num;
        Ratio::new(self.num.min(other), self.den)
    }

    /// `e(t) = exp(2 pi i t)`.
    pub fn exp(&self) -> Complex64 {
        exp_phase_f64(self.to_f64())
    }

    /// Integer multiple, exact.
    pub fn scale(&self, k: i64) -> Self {
        Self::from_i128(self.num as i128 * k as i128, self.den as i128)
    }

    /// Representative in `(-1/2, 1/2]`.
    pub fn centered(&self) -> Ratio<i64> {
        if 2 * self.num > self.den {
            Ratio::new(self.num - self.den, self.den)
        } else {
            Ratio::new(self.num, self.den)
        }
    }
}

impl std::ops::Add for TorusValue {
    type Output = TorusValue;
    fn add(self, o: TorusValue) -> TorusValue {
        let l = (self.den as i128).lcm(&(o.den as i128));
        let n = self.num as i128 * (l / self.den as i128) + o.num as i128 * (l / o.den as i128);
        TorusValue::from_i128(n, l)
    }
}

impl std::ops::Neg for TorusValue {
    type Output = TorusValue;
    fn neg(self) -> TorusValue {
        TorusValue::from_i128(-(self.num as i128), self.den as i128)
    }
}

impl std::ops::Sub for TorusValue {
    type Output = TorusValue;
    fn sub(self, o: TorusValue) -> TorusValue {
        self + (-o)
    }
}

impl std::iter::Sum for TorusValue {
    fn sum<I: Iterator<Item = TorusValue>>(iter: I) -> TorusValue {
        iter.fold(TorusValue::ZERO, |a, b| a + b)
    }
}

impl fmt::Debug for TorusValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl fmt::Display for TorusValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.num == 0 {
            write!(f, "0")
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// `exp(2 pi i t)` for a real `t`; reduces mod 1 first to keep the argument small.
pub fn exp_phase_f64(t: f64) -> Complex64 {
    let r = t - t.floor();
    let a = std::f64::consts::TAU * r;
    Complex64::new(a.cos(), a.sin())
}

/// Z/q1 + ... + Z/qd with q1 | q2 | ... | qd.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GroupSpec", into = "GroupSpec")]
pub struct FinAbGroup {
    factors: Vec<u64>,
    order: u64,
    /// Mixed-radix strides for the lexicographic index, last coordinate fastest.
    strides: Vec<u64>,
}

/// Serialized form `{"factors":[4,8]}`.
#[derive(Clone, Serialize, Deserialize)]
pub struct GroupSpec {
    pub factors: Vec<u64>,
}

impl TryFrom<GroupSpec> for FinAbGroup {
    type Error = HfaError;
    fn try_from(s: GroupSpec) -> Result<Self> {
        FinAbGroup::new(s.factors)
    }
}

impl From<FinAbGroup> for GroupSpec {
    fn from(g: FinAbGroup) -> Self {
        GroupSpec { factors: g.factors }
    }
}

impl fmt::Debug for FinAbGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.factors.iter().map(|q| format!("Z/{q}")).collect();
        write!(f, "{}", parts.join("+"))
    }
}

impl fmt::Display for FinAbGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Coordinates of a group element, each reduced modulo its factor.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement(pub Vec<u64>);

/// A character, in the coordinates dual to the invariant-factor basis.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Character(pub Vec<u64>);

impl FinAbGroup {
    /// Builds a group from invariant factors. Factors equal to 1 are kept, so that
    /// coordinates line up with the caller's presentation.
    pub fn new(factors: Vec<u64>) -> Result<Self> {
        for (i, &q) in factors.iter().enumerate() {
            if q == 0 {
                return Err(HfaError::Input("invariant factor must be positive".into()));
            }
            if i + 1 < factors.len() && factors[i + 1] % q != 0 {
                return Err(HfaError::Input(format!(
                    "invariant factors must form a divisibility chain, got {q} then {}",
                    factors[i + 1]
                )));
            }
        }
        let mut order: u64 = 1;
        for &q in &factors {
            order = order
                .checked_mul(q)
                .ok_or_else(|| HfaError::Budget("group order overflows u64".into()))?;
        }
        let mut strides = vec![1u64; factors.len()];
        for i in (0..factors.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1].saturating_mul(factors[i + 1]);
        }
        Ok(FinAbGroup { factors, order, strides })
    }

    pub fn cyclic(n: u64) -> Self {
        Self::new(vec![n]).expect("cyclic group")
    }

    pub fn trivial() -> Self {
        Self::new(Vec::new()).expect("trivial group")
    }

    /// `(Z/m)^n`.
    pub fn power(m: u64, n: usize) -> Self {
        Self::new(vec![m; n]).expect("homocyclic group")
    }

    /// Builds the group Z^n / (row span of `relations`) in invariant-factor form.
    ///
    /// Free rank is rejected since only finite groups are supported.
    pub fn from_relations(n: usize, relations: &[Vec<i64>]) -> Result<Self> {
        let diag = crate::lattice::quotient_invariants(n, relations)?;
        Self::new(diag)
    }

    pub fn factors(&self) -> &[u64] {
        &self.factors
    }

    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    /// Least common multiple of the factors, i.e. the largest factor.
    pub fn exponent(&self) -> u64 {
        self.factors.last().copied().unwrap_or(1)
    }

    pub fn zero(&self) -> GroupElement {
        GroupElement(vec![0; self.rank()])
    }

    pub fn element(&self, coords: &[i64]) -> Result<GroupElement> {
        if coords.len() != self.rank() {
            return Err(HfaError::Structural(format!(
                "element has {} coordinates, group {self} has rank {}",
                coords.len(),
                self.rank()
            )));
        }
        Ok(GroupElement(
            coords.iter().zip(&self.factors).map(|(&c, &q)| c.rem_euclid(q as i64) as u64).collect(),
        ))
    }

    pub fn character(&self, coords: &[i64]) -> Result<Character> {
        self.element(coords).map(|e| Character(e.0))
    }

    fn check(&self, coords: &[u64]) -> Result<()> {
        if coords.len() != self.rank() || coords.iter().zip(&self.factors).any(|(&c, &q)| c >= q) {
            return Err(HfaError::Structural(format!("{coords:?} is not a reduced element of {self}")));
        }
        Ok(())
    }

    pub fn contains(&self, x: &GroupElement) -> bool {
        self.check(&x.0).is_ok()
    }

    pub fn add(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement(
            a.0.iter().zip(&b.0).zip(&self.factors).map(|((&x, &y), &q)| (x + y) % q).collect(),
        )
    }

    pub fn neg(&self, a: &GroupElement) -> GroupElement {
        GroupElement(a.0.iter().zip(&self.factors).map(|(&x, &q)| (q - x) % q).collect())
    }

    pub fn sub(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        self.add(a, &self.neg(b))
    }

    pub fn scale(&self, k: i64, a: &GroupElement) -> GroupElement {
        GroupElement(
            a.0.iter()
                .zip(&self.factors)
                .map(|(&x, &q)| ((x as i128 * k as i128).rem_euclid(q as i128)) as u64)
                .collect(),
        )
    }

    /// Order of an element.
    pub fn element_order(&self, a: &GroupElement) -> u64 {
        a.0.iter().zip(&self.factors).fold(1u64, |acc, (&x, &q)| acc.lcm(&(q / q.gcd(&x))))
    }

    /// Lexicographic index, last coordinate fastest.
    pub fn index_of(&self, a: &GroupElement) -> u64 {
        a.0.iter().zip(&self.strides).map(|(&x, &s)| x * s).sum()
    }

    pub fn element_at(&self, mut idx: u64) -> GroupElement {
        let mut c = vec![0u64; self.rank()];
        for i in 0..self.rank() {
            c[i] = idx / self.strides[i];
            idx %= self.strides[i];
        }
        GroupElement(c)
    }

    /// Index arithmetic used by the inner loops of the numeric modules.
    pub fn add_idx(&self, a: u64, b: u64) -> u64 {
        let mut out = 0;
        let (mut a, mut b) = (a, b);
        for i in 0..self.rank() {
            let s = self.strides[i];
            let (x, y) = (a / s, b / s);
            a %= s;
            b %= s;
            out += ((x + y) % self.factors[i]) * s;
        }
        out
    }

    pub fn neg_idx(&self, a: u64) -> u64 {
        let mut out = 0;
        let mut a = a;
        for i in 0..self.rank() {
            let s = self.strides[i];
            let x = a / s;
            a %= s;
            out += ((self.factors[i] - x) % self.factors[i]) * s;
        }
        out
    }

    /// Precomputed addition table, row-major, for small groups.
    pub fn addition_table(&self) -> Vec<u32> {
        let n = self.order;
        let mut t = Vec::with_capacity((n * n) as usize);
        for a in 0..n {
            for b in 0..n {
                t.push(self.add_idx(a, b) as u32);
            }
        }
        t
    }

    /// Evaluates a character exactly.
    pub fn char_eval(&self, chi: &Character, x: &GroupElement) -> Result<TorusValue> {
        self.check(&chi.0)?;
        self.check(&x.0)?;
        Ok(TorusValue::new(self.char_eval_num(&chi.0, &x.0) as i64, self.exponent() as i64))
    }

    /// Numerator of `chi(x)` over the group exponent, in `[0, exponent)`.
    pub fn char_eval_num(&self, chi: &[u64], x: &[u64]) -> u64 {
        let l = self.exponent();
        let mut s: u128 = 0;
        for ((&c, &y), &q) in chi.iter().zip(x).zip(&self.factors) {
            s += ((c as u128 * y as u128) % q as u128) * (l / q) as u128;
        }
        (s % l as u128) as u64
    }

    /// Numerator of the character value at an element index, over the group exponent.
    pub fn char_eval_idx(&self, chi: &[u64], idx: u64) -> u64 {
        let x = self.element_at(idx);
        self.char_eval_num(chi, &x.0)
    }

    pub fn char_add(&self, a: &Character, b: &Character) -> Character {
        Character(self.add(&GroupElement(a.0.clone()), &GroupElement(b.0.clone())).0)
    }

    /// All elements in lexicographic order, refusing groups larger than `cap`.
    pub fn enumerate_capped(&self, cap: u64) -> Result<impl Iterator<Item = GroupElement> + '_> {
        if self.order > cap {
            return Err(HfaError::Budget(format!(
                "enumerating {self} needs {} elements, cap is {cap}",
                self.order
            )));
        }
        Ok((0..self.order).map(move |i| self.element_at(i)))
    }

    pub fn enumerate(&self) -> Result<impl Iterator<Item = GroupElement> + '_> {
        self.enumerate_capped(DEFAULT_ENUMERATION_CAP)
    }

    /// All characters, in the same lexicographic order as elements.
    pub fn characters(&self, cap: u64) -> Result<impl Iterator<Item = Character> + '_> {
        Ok(self.enumerate_capped(cap)?.map(|e| Character(e.0)))
    }

    /// The subgroup generated by `gens`, as a sorted list of element indices.
    pub fn span(&self, gens: &[GroupElement]) -> Vec<u64> {
        let mut seen = vec![false; self.order as usize];
        seen[0] = true;
        let mut members = vec![0u64];
        let gi: Vec<u64> = gens.iter().map(|g| self.index_of(g)).collect();
        let mut head = 0;
        while head < members.len() {
            let x = members[head];
            head += 1;
            for &g in &gi {
                let y = self.add_idx(x, g);
                if !seen[y as usize] {
                    seen[y as usize] = true;
                    members.push(y);
                }
            }
        }
        members.sort_unstable();
        members
    }
}

/// A homomorphism from a subgroup into the torus, given by its full value table.
pub type SubgroupCharacter = HashMap<GroupElement, TorusValue>;

/// Extends a homomorphism defined on `<h_gens>` to the whole group, one generator at a time.
///
/// For a new generator `x` with least `k > 0` such that `kx` lies in the current subgroup,
/// the value at `x` is taken to be `t = chi(kx)/k` (lifting `chi(kx)` to `[0,1)`), and
/// `chi'(y) = l t + chi(y - l x)` where `y - l x` lies in the old subgroup.
/// Returns the value table on all of `G` together with the equivalent `Character`.
pub fn char_extend(
    g: &FinAbGroup,
    h_gens: &[GroupElement],
    chi_on_h: &SubgroupCharacter,
) -> Result<(Character, Vec<TorusValue>)> {
    for x in h_gens {
        g.check(&x.0)?;
    }
    let h = g.span(h_gens);
    if h.len() != chi_on_h.len() || h.iter().any(|&i| !chi_on_h.contains_key(&g.element_at(i))) {
        return Err(HfaError::Precondition("value table must cover exactly the generated subgroup".into()));
    }
    let n = g.order() as usize;
    let mut val: Vec<Option<TorusValue>> = vec![None; n];
    for &i in &h {
        val[i as usize] = Some(chi_on_h[&g.element_at(i)]);
    }
    for &a in &h {
        for &b in &h {
            let s = g.add_idx(a, b) as usize;
            if val[s] != Some(val[a as usize].unwrap() + val[b as usize].unwrap()) {
                return Err(HfaError::Precondition(format!(
                    "table is not a homomorphism at {:?} + {:?}",
                    g.element_at(a).0,
                    g.element_at(b).0
                )));
            }
        }
    }
    let mut members = h;
    for j in 0..g.rank() {
        let mut e = vec![0u64; g.rank()];
        e[j] = 1 % g.factors()[j];
        let x = g.index_of(&GroupElement(e));
        if val[x as usize].is_some() {
            continue;
        }
        let mut k = 1u64;
        let mut kx = x;
        while val[kx as usize].is_none() {
            k += 1;
            kx = g.add_idx(kx, x);
        }
        let t_num = val[kx as usize].unwrap();
        let t = TorusValue::new(t_num.numer(), t_num.denom() * k as i64);
        let mut fresh = Vec::new();
        let mut lx = 0u64;
        for l in 0..k {
            for &m in &members {
                let y = g.add_idx(m, lx) as usize;
                if l > 0 {
                    val[y] = Some(t.scale(l as i64) + val[m as usize].unwrap());
                    fresh.push(y as u64);
                }
            }
            lx = g.add_idx(lx, x);
        }
        members.extend(fresh);
    }
    let table: Vec<TorusValue> = val.into_iter().map(|v| v.expect("extension covers G")).collect();
    // Read off character coordinates from the unit vectors.
    let mut coords = Vec::with_capacity(g.rank());
    for j in 0..g.rank() {
        let mut e = vec![0u64; g.rank()];
        e[j] = 1 % g.factors()[j];
        let v = table[g.index_of(&GroupElement(e)) as usize];
        let q = g.factors()[j] as i64;
        // v = c / q for some c in [0, q).
        let c = v.numer() * (q / v.denom());
        debug_assert_eq!(TorusValue::new(c, q), v);
        coords.push(c as u64);
    }
    let chi = Character(coords);
    for i in 0..g.order() {
        let x = g.element_at(i);
        if g.char_eval(&chi, &x)? != table[i as usize] {
            return Err(HfaError::Certificate("extension is not a character".into()));
        }
    }
    Ok((chi, table))
}
