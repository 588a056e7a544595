//! Sparse multilinear polynomials over binary variables.
//!
//! Every variable takes values in {0, 1}, so `q * q = q` is applied whenever
//! monomials are multiplied. Terms live in a `BTreeMap` keyed by the sorted
//! variable list, which fixes both the iteration order and the floating-point
//! accumulation order of every operation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const POLY_FORMAT_VERSION: u32 = 1;

/// Identifier of one logical binary variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

/// A product of distinct binary variables. The empty monomial is the constant 1.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<VarId>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: VarId) -> Self {
        Monomial(vec![v])
    }

    /// Builds a monomial from arbitrary variables, dropping repeats (`q^2 = q`).
    pub fn new(vars: impl IntoIterator<Item = VarId>) -> Self {
        let mut v: Vec<VarId> = vars.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Monomial(v)
    }

    pub fn vars(&self) -> &[VarId] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn is_constant(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: VarId) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    /// Product of two monomials: sorted union of the variable sets.
    pub fn union(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    /// Value of the product under a dense bit vector indexed by `VarId`.
    #[inline]
    pub fn eval_bits(&self, bits: &[u8]) -> bool {
        self.0.iter().all(|v| bits[v.index()] != 0)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, "*")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Sparse multilinear polynomial with `f64` coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BinaryPolynomial {
    terms: BTreeMap<Monomial, f64>,
}

impl BinaryPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn var(v: VarId) -> Self {
        Self::term(Monomial::var(v), 1.0)
    }

    pub fn term(m: Monomial, c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(m, c);
        p
    }

    /// Builds a polynomial from `(vars, coefficient)` pairs, merging like terms.
    pub fn from_terms<I, V>(terms: I) -> Self
    where
        I: IntoIterator<Item = (V, f64)>,
        V: IntoIterator<Item = VarId>,
    {
        let mut p = Self::zero();
        for (vars, c) in terms {
            p.add_term(Monomial::new(vars), c);
        }
        p
    }

    /// Accumulates `c` onto monomial `m`, removing the entry if it becomes exactly zero.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = *e.get() + c;
                if s == 0.0 {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coefficient(&Monomial::one())
    }

    pub fn add(&self, other: &BinaryPolynomial) -> BinaryPolynomial {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn add_assign(&mut self, other: &BinaryPolynomial) {
        self.add_scaled(other, 1.0);
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &BinaryPolynomial, scale: f64) {
        if scale == 0.0 {
            return;
        }
        for (m, c) in &other.terms {
            self.add_term(m.clone(), c * scale);
        }
    }

    pub fn sub(&self, other: &BinaryPolynomial) -> BinaryPolynomial {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    pub fn scale(&self, s: f64) -> BinaryPolynomial {
        if s == 0.0 {
            return Self::zero();
        }
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    /// Distributive product. Partial products are accumulated in canonical
    /// (left monomial, right monomial) order, then zero entries are pruned.
    pub fn multiply(&self, other: &BinaryPolynomial) -> BinaryPolynomial {
        let mut scratch: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                *scratch.entry(ma.union(mb)).or_insert(0.0) += ca * cb;
            }
        }
        scratch.retain(|_, c| *c != 0.0);
        BinaryPolynomial { terms: scratch }
    }

    pub fn power(&self, n: u32) -> BinaryPolynomial {
        let mut acc = Self::constant(1.0);
        for _ in 0..n {
            acc = acc.multiply(self);
        }
        acc
    }

    /// Evaluates under a sparse assignment; every variable present must be assigned.
    pub fn evaluate(&self, assignment: &BTreeMap<VarId, u8>) -> Result<f64> {
        let missing: BTreeSet<VarId> = self
            .variables()
            .into_iter()
            .filter(|v| !assignment.contains_key(v))
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingVariables(missing.into_iter().collect()));
        }
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            if m.vars().iter().all(|v| assignment[v] != 0) {
                acc += c;
            }
        }
        Ok(acc)
    }

    /// Evaluates under a dense bit vector indexed by `VarId`.
    ///
    /// Panics if a variable id is out of range; callers size `bits` by
    /// [`BinaryPolynomial::num_vars`].
    pub fn evaluate_bits(&self, bits: &[u8]) -> f64 {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            if m.eval_bits(bits) {
                acc += c;
            }
        }
        acc
    }

    pub fn max_degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn variables(&self) -> BTreeSet<VarId> {
        self.terms
            .keys()
            .flat_map(|m| m.vars().iter().copied())
            .collect()
    }

    /// One past the largest variable id, i.e. the dense assignment length needed.
    pub fn num_vars(&self) -> usize {
        self.terms
            .keys()
            .filter_map(|m| m.vars().last())
            .map(|v| v.index() + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Drops terms with `|c| <= epsilon`. Algebra never does this implicitly.
    pub fn compress(&mut self, epsilon: f64) {
        self.terms.retain(|_, c| c.abs() > epsilon);
    }

    pub fn compressed(mut self, epsilon: f64) -> Self {
        self.compress(epsilon);
        self
    }

    pub fn to_json(&self) -> PolyJson {
        PolyJson {
            version: POLY_FORMAT_VERSION,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| TermJson {
                    vars: m.vars().iter().map(|v| v.0).collect(),
                    c: *c,
                })
                .collect(),
        }
    }

    pub fn from_json(j: &PolyJson) -> Result<Self> {
        if j.version != POLY_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: POLY_FORMAT_VERSION,
                found: j.version,
            });
        }
        let mut p = Self::zero();
        for t in &j.terms {
            p.add_term(Monomial::new(t.vars.iter().map(|&v| VarId(v))), t.c);
        }
        Ok(p)
    }
}

impl fmt::Display for BinaryPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            if m.is_constant() {
                write!(f, "{c}")?;
            } else {
                write!(f, "{c}*{m}")?;
            }
        }
        Ok(())
    }
}

/// Versioned on-disk form: `{"version":1,"terms":[{"vars":[..],"c":..}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyJson {
    pub version: u32,
    pub terms: Vec<TermJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermJson {
    pub vars: Vec<u32>,
    pub c: f64,
}

impl Serialize for BinaryPolynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BinaryPolynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = PolyJson::deserialize(d)?;
        BinaryPolynomial::from_json(&j).map_err(serde::de::Error::custom)
    }
}

/// Iterates every assignment of `n` variables as dense bit vectors, in
/// increasing integer order (variable 0 is the least significant bit).
pub fn for_each_assignment(n: usize, mut f: impl FnMut(&[u8])) {
    assert!(n < 32, "exhaustive enumeration over {n} variables");
    let mut bits = vec![0u8; n];
    for x in 0u64..(1u64 << n) {
        for (i, b) in bits.iter_mut().enumerate() {
            *b = ((x >> i) & 1) as u8;
        }
        f(&bits);
    }
}
