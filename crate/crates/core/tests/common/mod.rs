//! Test helpers: the architecture matrix, random data and oracles written
//! independently of the library paths they check.
#![allow(dead_code)]

use std::collections::BTreeMap;

use qkan_core::{
    BinaryPolynomial, Dataset, DatasetKind, EncodingSpec, KanSpec, Monomial, VarId, VariableLayout,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The four architectures every numeric invariant is checked on.
pub fn matrix() -> Vec<(&'static str, KanSpec)> {
    vec![
        ("[1,1]", KanSpec::uniform(vec![1, 1], 2).unwrap()),
        ("[2,1]", KanSpec::uniform(vec![2, 1], 2).unwrap()),
        ("[1,1,1]", KanSpec::uniform(vec![1, 1, 1], 1).unwrap()),
        ("[2,2,1]", KanSpec::uniform(vec![2, 2, 1], 1).unwrap()),
    ]
}

/// `n` samples with inputs in `[0, 1]` and targets in `[-1, 1]`.
pub fn random_data(spec: &KanSpec, n: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let inputs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..spec.inputs()).map(|_| r.random::<f64>()).collect())
        .collect();
    let targets: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    Dataset::new(inputs, targets, DatasetKind::Train)
}

pub fn random_bits(n: usize, r: &mut ChaCha8Rng) -> Vec<u8> {
    (0..n).map(|_| r.random_range(0..2u8)).collect()
}

pub fn binomial(n: u64, k: u64) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * (n + 1 - i) as f64 / i as f64)
}

/// Bezier curve value from the explicit Bernstein sum.
pub fn bezier(points: &[f64], t: f64) -> f64 {
    let n = points.len() as u64 - 1;
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            binomial(n, i as u64) * (1.0 - t).powi((n - i as u64) as i32) * t.powi(i as i32) * p
        })
        .sum()
}

/// Control-point value of a radix-2 code read straight from the bits.
pub fn decode_point(layout: &VariableLayout, edge: usize, point: usize, bits: &[u8]) -> f64 {
    let enc = layout.encoding();
    let code = &layout.codes(edge)[point];
    let w = |k: usize| 2f64.powi(enc.low_exp + k as i32);
    let plus: f64 = code
        .plus_bits
        .iter()
        .enumerate()
        .map(|(k, v)| bits[v.index()] as f64 * w(k))
        .sum();
    let minus: f64 = code
        .minus_bits
        .iter()
        .enumerate()
        .map(|(k, v)| bits[v.index()] as f64 * w(k))
        .sum();
    plus - minus
}

pub fn decode_all(layout: &VariableLayout, bits: &[u8]) -> Vec<Vec<f64>> {
    (0..layout.edges().len())
        .map(|e| {
            (0..layout.codes(e).len())
                .map(|p| decode_point(layout, e, p, bits))
                .collect()
        })
        .collect()
}

/// Layer-by-layer forward pass summing edge curves into nodes.
pub fn forward(spec: &KanSpec, points: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let mut values = x.to_vec();
    for layer in 0..spec.depth() {
        let mut next = vec![0.0; spec.widths()[layer + 1]];
        for (e, edge) in spec.edges().iter().enumerate() {
            if edge.key.layer == layer {
                next[edge.key.output] += bezier(&points[e], values[edge.key.input]);
            }
        }
        values = next;
    }
    values
}

pub fn mse(spec: &KanSpec, points: &[Vec<f64>], data: &Dataset) -> f64 {
    let total: f64 = data
        .inputs
        .iter()
        .zip(&data.targets)
        .map(|(x, y)| {
            forward(spec, points, x)
                .iter()
                .zip(y)
                .map(|(f, t)| (t - f).powi(2))
                .sum::<f64>()
        })
        .sum();
    total / data.len() as f64
}

/// Per-sample squared error built with plain polynomial arithmetic: every
/// node is a polynomial in the bits and each edge applies its Bernstein sum
/// formally.
pub fn naive_objective(
    spec: &KanSpec,
    layout: &VariableLayout,
    data: &Dataset,
) -> BinaryPolynomial {
    let one = BinaryPolynomial::constant(1.0);
    let mut total = BinaryPolynomial::zero();
    for (x, y) in data.inputs.iter().zip(&data.targets) {
        let mut nodes: Vec<BinaryPolynomial> =
            x.iter().map(|v| BinaryPolynomial::constant(*v)).collect();
        for layer in 0..spec.depth() {
            let mut next = vec![BinaryPolynomial::zero(); spec.widths()[layer + 1]];
            for (e, edge) in spec.edges().iter().enumerate() {
                if edge.key.layer != layer {
                    continue;
                }
                let u = &nodes[edge.key.input];
                let n = edge.degree;
                let omu = one.sub(u);
                for i in 0..=n {
                    let basis = omu
                        .power(n - i)
                        .multiply(&u.power(i))
                        .scale(binomial(n as u64, i as u64));
                    let point = layout.expansion(e, i as usize);
                    next[edge.key.output].add_assign(&basis.multiply(point));
                }
            }
            nodes = next;
        }
        for (f, t) in nodes.iter().zip(y) {
            let r = BinaryPolynomial::constant(*t).sub(f);
            total.add_assign(&r.multiply(&r));
        }
    }
    total
}

pub fn eval(p: &BinaryPolynomial, bits: &[u8]) -> f64 {
    p.terms()
        .map(|(m, c)| {
            if m.vars().iter().all(|v| bits[v.index()] == 1) {
                c
            } else {
                0.0
            }
        })
        .sum()
}

/// Largest per-coefficient relative difference, with denominators floored
/// at `1e-12` of the largest coefficient.
pub fn coef_rel_diff(a: &BinaryPolynomial, b: &BinaryPolynomial) -> f64 {
    let mut keys: BTreeMap<Monomial, (f64, f64)> = BTreeMap::new();
    for (m, c) in a.terms() {
        keys.entry(m.clone()).or_default().0 = c;
    }
    for (m, c) in b.terms() {
        keys.entry(m.clone()).or_default().1 = c;
    }
    let scale = keys
        .values()
        .fold(0.0f64, |s, (x, y)| s.max(x.abs()).max(y.abs()));
    let floor = (1e-12 * scale).max(f64::MIN_POSITIVE);
    keys.values()
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Exhaustive minimum over `n` variables: (energy, assignment).
pub fn exhaustive_min(n: usize, f: impl Fn(&[u8]) -> f64) -> (f64, Vec<u8>) {
    let mut best = (f64::INFINITY, vec![0; n]);
    let mut bits = vec![0u8; n];
    for x in 0u64..(1 << n) {
        for (i, b) in bits.iter_mut().enumerate() {
            *b = ((x >> i) & 1) as u8;
        }
        let e = f(&bits);
        if e < best.0 {
            best = (e, bits.clone());
        }
    }
    best
}

/// Random multilinear polynomial with monomials of degree up to `max_deg`.
pub fn random_poly(n: u32, terms: usize, max_deg: usize, r: &mut ChaCha8Rng) -> BinaryPolynomial {
    let mut p = BinaryPolynomial::zero();
    for _ in 0..terms {
        let d = r.random_range(0..=max_deg);
        let vars: Vec<VarId> = (0..d).map(|_| VarId(r.random_range(0..n))).collect();
        p.add_term(Monomial::new(vars), r.random_range(-2.0..2.0));
    }
    p
}

/// One-bit unsigned encoding: every control point is 0 or 1.
pub fn one_bit() -> EncodingSpec {
    EncodingSpec::new(0, 0, false).unwrap()
}

/// Two-bit unsigned encoding: control points in {0, 0.5, 1, 1.5}.
pub fn two_bit() -> EncodingSpec {
    EncodingSpec::new(-1, 0, false).unwrap()
}
