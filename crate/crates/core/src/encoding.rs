//! Radix-2 discretization of real-valued control points.
//!
//! A control point is `sum_l 2^l q+_l - sum_l 2^l q-_l` for `l` in
//! `low_exp..=high_exp`; the minus half is absent for unsigned encodings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::binpoly::{BinaryPolynomial, VarId};
use crate::error::{Error, Result};

/// Largest supported number of exponents per sign.
pub const MAX_EXPONENTS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub low_exp: i32,
    pub high_exp: i32,
    pub signed: bool,
}

impl Default for EncodingSpec {
    fn default() -> Self {
        EncodingSpec {
            low_exp: -2,
            high_exp: 0,
            signed: true,
        }
    }
}

impl EncodingSpec {
    pub fn new(low_exp: i32, high_exp: i32, signed: bool) -> Result<Self> {
        let spec = EncodingSpec {
            low_exp,
            high_exp,
            signed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.low_exp > self.high_exp {
            return Err(Error::InvalidEncoding(format!(
                "low_exp {} exceeds high_exp {}",
                self.low_exp, self.high_exp
            )));
        }
        if self.exponents() > MAX_EXPONENTS {
            return Err(Error::InvalidEncoding(format!(
                "{} exponents per sign (max {MAX_EXPONENTS})",
                self.exponents()
            )));
        }
        Ok(())
    }

    /// Number of exponents `l` per sign.
    pub fn exponents(&self) -> usize {
        (self.high_exp - self.low_exp + 1).max(0) as usize
    }

    pub fn bits_per_point(&self) -> usize {
        self.exponents() * if self.signed { 2 } else { 1 }
    }

    /// Grid spacing `2^low_exp`.
    pub fn step(&self) -> f64 {
        2f64.powi(self.low_exp)
    }

    pub fn weight(&self, k: usize) -> f64 {
        2f64.powi(self.low_exp + k as i32)
    }

    fn max_int(&self) -> u64 {
        (1u64 << self.exponents()) - 1
    }

    /// Largest representable magnitude, `sum_l 2^l`.
    pub fn max_value(&self) -> f64 {
        self.max_int() as f64 * self.step()
    }

    pub fn min_value(&self) -> f64 {
        if self.signed {
            -self.max_value()
        } else {
            0.0
        }
    }

    /// Every representable value, ascending.
    pub fn grid(&self) -> Vec<f64> {
        let m = self.max_int() as i64;
        let lo = if self.signed { -m } else { 0 };
        (lo..=m).map(|k| k as f64 * self.step()).collect()
    }
}

/// The binary variables carrying one control point, ascending exponent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlPointCode {
    pub plus_bits: Vec<VarId>,
    pub minus_bits: Vec<VarId>,
}

impl ControlPointCode {
    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.plus_bits.iter().chain(self.minus_bits.iter()).copied()
    }

    pub fn is_consistent_with(&self, spec: &EncodingSpec) -> bool {
        let want_minus = if spec.signed { spec.exponents() } else { 0 };
        self.plus_bits.len() == spec.exponents() && self.minus_bits.len() == want_minus
    }
}

/// Concrete bit values for one control point, ascending exponent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeBits {
    pub plus: Vec<u8>,
    pub minus: Vec<u8>,
}

impl CodeBits {
    pub fn value(&self, spec: &EncodingSpec) -> f64 {
        let sum = |bits: &[u8]| -> f64 {
            bits.iter()
                .enumerate()
                .filter(|(_, b)| **b != 0)
                .map(|(k, _)| spec.weight(k))
                .sum()
        };
        sum(&self.plus) - sum(&self.minus)
    }

    /// Writes the bits into a dense assignment at the code's variable ids.
    pub fn write_into(&self, code: &ControlPointCode, bits: &mut [u8]) {
        for (v, b) in code.plus_bits.iter().zip(&self.plus) {
            bits[v.index()] = *b;
        }
        for (v, b) in code.minus_bits.iter().zip(&self.minus) {
            bits[v.index()] = *b;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.plus
            .iter()
            .chain(&self.minus)
            .filter(|b| **b != 0)
            .count()
    }
}

/// Linear polynomial `sum 2^l q+_l - sum 2^l q-_l` over the code's variables.
pub fn expansion_polynomial(code: &ControlPointCode, spec: &EncodingSpec) -> BinaryPolynomial {
    let mut p = BinaryPolynomial::zero();
    for (k, v) in code.plus_bits.iter().enumerate() {
        p.add_term(crate::binpoly::Monomial::var(*v), spec.weight(k));
    }
    for (k, v) in code.minus_bits.iter().enumerate() {
        p.add_term(crate::binpoly::Monomial::var(*v), -spec.weight(k));
    }
    p
}

pub fn decode(
    assignment: &BTreeMap<VarId, u8>,
    code: &ControlPointCode,
    spec: &EncodingSpec,
) -> Result<f64> {
    let missing: Vec<VarId> = code
        .vars()
        .filter(|v| !assignment.contains_key(v))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingVariables(missing));
    }
    let read = |vs: &[VarId]| vs.iter().map(|v| assignment[v]).collect::<Vec<u8>>();
    Ok(CodeBits {
        plus: read(&code.plus_bits),
        minus: read(&code.minus_bits),
    }
    .value(spec))
}

/// Decodes from a dense assignment; `bits` must cover every variable in `code`.
pub fn decode_bits(bits: &[u8], code: &ControlPointCode, spec: &EncodingSpec) -> f64 {
    let mut v = 0.0;
    for (k, id) in code.plus_bits.iter().enumerate() {
        if bits[id.index()] != 0 {
            v += spec.weight(k);
        }
    }
    for (k, id) in code.minus_bits.iter().enumerate() {
        if bits[id.index()] != 0 {
            v -= spec.weight(k);
        }
    }
    v
}

fn int_bits(x: u64, n: usize) -> Vec<u8> {
    (0..n).map(|k| ((x >> k) & 1) as u8).collect()
}

/// Candidate `(plus, minus)` integers with their ranking key.
type Ranked<K> = Option<(K, (u64, u64))>;

/// Fewest-set-bits `(plus, minus)` pair with `plus - minus = m`; ties prefer
/// fewer minus bits, then the smaller minus integer.
fn lightest_split(m: i64, spec: &EncodingSpec) -> (u64, u64) {
    let max = spec.max_int() as i64;
    if !spec.signed {
        return (m as u64, 0);
    }
    let mut best: Ranked<(u32, u32, u64)> = None;
    for q in 0..=max {
        let p = m + q;
        if !(0..=max).contains(&p) {
            continue;
        }
        let (p, q) = (p as u64, q as u64);
        let key = (p.count_ones() + q.count_ones(), q.count_ones(), q);
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, (p, q)));
        }
    }
    best.expect("m lies within the representable range").1
}

/// Bit pattern whose decoded value is closest to `value`, clamped to range.
pub fn nearest_code(value: f64, spec: &EncodingSpec) -> CodeBits {
    let max = spec.max_int() as i64;
    let lo = if spec.signed { -max } else { 0 };
    let scaled = if value.is_nan() {
        0.0
    } else {
        value / spec.step()
    };
    let scaled = scaled.clamp(lo as f64, max as f64);
    let floor = scaled.floor() as i64;
    let ceil = scaled.ceil() as i64;

    let mut best: Ranked<(f64, u32, u32)> = None;
    for m in [floor, ceil] {
        let m = m.clamp(lo, max);
        let (p, q) = lightest_split(m, spec);
        let err = (m as f64 - scaled).abs();
        let key = (err, p.count_ones() + q.count_ones(), q.count_ones());
        let better = match &best {
            None => true,
            Some((k, _)) => key.partial_cmp(k) == Some(std::cmp::Ordering::Less),
        };
        if better {
            best = Some((key, (p, q)));
        }
    }
    let (p, q) = best.unwrap().1;
    let n = spec.exponents();
    CodeBits {
        plus: int_bits(p, n),
        minus: if spec.signed {
            int_bits(q, n)
        } else {
            Vec::new()
        },
    }
}
