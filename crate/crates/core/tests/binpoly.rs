mod common;

use common::{eval, exhaustive_min, random_poly, rng};
use proptest::prelude::*;
use qkan_core::binpoly::for_each_assignment;
use qkan_core::{BinaryPolynomial, Monomial, VarId};

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// Coefficients recovered from a truth table by the Mobius transform.
fn from_table(n: usize, table: &[f64]) -> BinaryPolynomial {
    let mut c = table.to_vec();
    for i in 0..n {
        for s in 0..c.len() {
            if s >> i & 1 == 1 {
                c[s] -= c[s ^ (1 << i)];
            }
        }
    }
    let mut p = BinaryPolynomial::zero();
    for (s, v) in c.into_iter().enumerate() {
        let vars = (0..n).filter(|i| s >> i & 1 == 1).map(|i| VarId(i as u32));
        p.add_term(Monomial::new(vars), v);
    }
    p
}

fn table(p: &BinaryPolynomial, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(1 << n);
    for_each_assignment(n, |bits| out.push(eval(p, bits)));
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn add_and_multiply_are_pointwise(seed in any::<u64>(), n in 1u32..=10) {
        let mut r = rng(seed);
        let a = random_poly(n, 12, 3, &mut r);
        let b = random_poly(n, 12, 3, &mut r);
        let (sum, prod) = (a.add(&b), a.multiply(&b));
        for_each_assignment(n as usize, |x| {
            let (ea, eb) = (eval(&a, x), eval(&b, x));
            assert!(rel_close(sum.evaluate_bits(x), ea + eb));
            assert!(rel_close(prod.evaluate_bits(x), ea * eb));
        });
    }

    #[test]
    fn monomials_have_distinct_variables(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_poly(6, 10, 4, &mut r);
        let p = a.multiply(&a).multiply(&a);
        for (m, _) in p.terms() {
            let v = m.vars();
            prop_assert!(v.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn functional_equality_implies_identical_terms(seed in any::<u64>(), n in 1usize..=12) {
        let mut r = rng(seed);
        let p = random_poly(n as u32, 20, 4, &mut r);
        let q = from_table(n, &table(&p, n));
        let mut keys: Vec<&Monomial> = p.terms().map(|(m, _)| m).chain(q.terms().map(|(m, _)| m)).collect();
        keys.dedup();
        for m in keys {
            prop_assert!((p.coefficient(m) - q.coefficient(m)).abs() <= 1e-12 * (1.0 + p.max_abs_coefficient()));
        }
    }

    #[test]
    fn json_round_trip_is_exact(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_poly(9, 25, 4, &mut r);
        let back = BinaryPolynomial::from_json(&p.to_json()).unwrap();
        prop_assert_eq!(back, p);
    }
}

#[test]
fn power_of_a_variable_is_itself() {
    let q = BinaryPolynomial::var(VarId(3));
    for k in 1..6 {
        assert_eq!(q.power(k), q);
    }
    assert_eq!(q.power(0), BinaryPolynomial::constant(1.0));
}

#[test]
fn exhaustive_minimum_matches_known_value() {
    // x0 + x1 - 3 x0 x1 is minimized at x0 = x1 = 1.
    let p = BinaryPolynomial::from_terms([
        (vec![VarId(0)], 1.0),
        (vec![VarId(1)], 1.0),
        (vec![VarId(0), VarId(1)], -3.0),
    ]);
    let (e, x) = exhaustive_min(2, |b| p.evaluate_bits(b));
    assert_eq!((e, x), (-1.0, vec![1, 1]));
}
