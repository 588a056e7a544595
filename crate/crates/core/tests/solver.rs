mod common;

use common::{exhaustive_min, random_poly, rng};
use proptest::prelude::*;
use qkan_core::reduction::{reduce, DEFAULT_W_FACTOR};
use qkan_core::solver::{anneal, brute_force, MAX_BRUTE_FORCE_VARS};
use qkan_core::{
    AnnealSchedule, AuxMode, BinaryPolynomial, Error, Monomial, SolverRegistry, VarId,
};

fn quick(seed: u64) -> AnnealSchedule {
    AnnealSchedule {
        reads: 20,
        sweeps: 300,
        ..AnnealSchedule::with_seed(seed)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reported_energy_matches_the_assignment(seed in any::<u64>()) {
        let q = reduce(&random_poly(10, 30, 3, &mut rng(seed)), DEFAULT_W_FACTOR);
        for mode in [AuxMode::Follow, AuxMode::Free] {
            let r = anneal(&q, &AnnealSchedule { aux_mode: mode, ..quick(seed) });
            let e = q.energy(&r.best_assignment);
            prop_assert!((r.best_energy - e).abs() <= 1e-9 * (1.0 + e.abs()));
            prop_assert_eq!(r.energies_per_read.len(), 20);
            let low = r.energies_per_read.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(low, r.best_energy);
            prop_assert_eq!(r.aux_violations, q.registry.violations(&r.best_assignment));
        }
    }

    #[test]
    fn same_seed_same_result(seed in any::<u64>()) {
        let q = reduce(&random_poly(12, 40, 3, &mut rng(seed)), DEFAULT_W_FACTOR);
        prop_assert_eq!(anneal(&q, &quick(seed)), anneal(&q, &quick(seed)));
    }

    #[test]
    fn exact_matches_enumeration(seed in any::<u64>(), n in 1u32..=12) {
        let h = random_poly(n, 30, 3, &mut rng(seed));
        let r = brute_force(&h).unwrap();
        let (e, _) = exhaustive_min(h.num_vars(), |b| h.evaluate_bits(b));
        prop_assert_eq!(r.best_energy, e);
    }
}

#[test]
fn annealer_finds_small_optima() {
    let mut hits = 0;
    for seed in 0..100 {
        let h = random_poly(10, 30, 3, &mut rng(seed));
        let q = reduce(&h, DEFAULT_W_FACTOR);
        let exact = brute_force(&h).unwrap().best_energy;
        let r = anneal(
            &q,
            &AnnealSchedule {
                reads: 10,
                sweeps: 500,
                ..AnnealSchedule::with_seed(seed)
            },
        );
        if (r.best_energy - exact).abs() <= 1e-9 * (1.0 + exact.abs()) {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn all_zero_read_bounds_the_result() {
    let h = random_poly(15, 60, 2, &mut rng(2));
    let q = reduce(&h, DEFAULT_W_FACTOR);
    let r = anneal(
        &q,
        &AnnealSchedule {
            reads: 1,
            sweeps: 1,
            ..AnnealSchedule::default()
        },
    );
    assert!(r.best_energy <= q.energy(&vec![0; q.num_vars]));
}

#[test]
fn exact_solver_refuses_large_problems() {
    let vars = (0..=MAX_BRUTE_FORCE_VARS as u32).map(VarId);
    let h = BinaryPolynomial::term(Monomial::new(vars), 1.0);
    assert!(matches!(
        brute_force(&h),
        Err(Error::TooManyVariables { .. })
    ));
}

#[test]
fn registry_resolves_names() {
    let reg = SolverRegistry::default();
    let mut names: Vec<&str> = reg.names().collect();
    names.sort();
    assert_eq!(names, ["exact", "sa"]);
    assert!(matches!(reg.get("dwave"), Err(Error::UnknownSolver(_))));
    let q = reduce(&random_poly(8, 20, 3, &mut rng(4)), DEFAULT_W_FACTOR);
    let exact = reg
        .get("exact")
        .unwrap()
        .solve(&q, &AnnealSchedule::default())
        .unwrap();
    let sa = reg
        .get("sa")
        .unwrap()
        .solve(&q, &AnnealSchedule::default())
        .unwrap();
    assert!((exact.best_energy - sa.best_energy).abs() <= 1e-9 * (1.0 + exact.best_energy.abs()));
}
