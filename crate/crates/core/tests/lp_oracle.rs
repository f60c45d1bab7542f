//! Cross-validation of the simplex against exhaustive vertex
//! enumeration, plus solver invariants under randomized inputs.

mod common;

use common::{lp_oracle, random_lp, OracleStatus};
use factsopt::lp::{solve, LpStatus};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn expected_status(o: OracleStatus) -> LpStatus {
    match o {
        OracleStatus::Optimal => LpStatus::Optimal,
        OracleStatus::Infeasible => LpStatus::Infeasible,
        OracleStatus::Unbounded => LpStatus::Unbounded,
    }
}

#[test]
fn simplex_matches_vertex_enumeration_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0f5e_ed1f);
    let (mut n_optimal, mut n_infeasible, mut n_unbounded) = (0u32, 0u32, 0u32);
    for case in 0..500 {
        // Alternate between all-boxed instances (never unbounded) and
        // instances with one-sided or free variables.
        let p = random_lp(&mut rng, case % 2 == 1);
        let reference = lp_oracle(&p);
        let sol = solve(&p).unwrap_or_else(|e| {
            panic!("case {case}: solver failed: {e}\n{}", p.to_lp_format())
        });
        assert_eq!(
            sol.status,
            expected_status(reference.status),
            "case {case}: status mismatch (oracle {:?})\n{}",
            reference.status,
            p.to_lp_format()
        );
        match sol.status {
            LpStatus::Optimal => {
                n_optimal += 1;
                let err = (sol.objective_value - reference.value).abs();
                assert!(
                    err <= 1e-8 * (1.0 + reference.value.abs()),
                    "case {case}: objective {} vs oracle {}\n{}",
                    sol.objective_value,
                    reference.value,
                    p.to_lp_format()
                );
            }
            LpStatus::Infeasible => n_infeasible += 1,
            LpStatus::Unbounded => n_unbounded += 1,
        }
    }
    // The generator should exercise all three outcomes substantially.
    assert!(
        n_optimal >= 100 && n_infeasible >= 30 && n_unbounded >= 20,
        "status mix too thin: {n_optimal} optimal, {n_infeasible} infeasible, {n_unbounded} unbounded"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every Optimal answer satisfies all rows and bounds within the
    /// advertised tolerance.
    #[test]
    fn optimal_solutions_are_feasible(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_lp(&mut rng, true);
        let sol = solve(&p).unwrap();
        if sol.status == LpStatus::Optimal {
            for (j, &(lo, hi)) in p.bounds().iter().enumerate() {
                prop_assert!(sol.x[j] >= lo - 1e-8 * (1.0 + lo.abs()));
                prop_assert!(sol.x[j] <= hi + 1e-8 * (1.0 + hi.abs()));
            }
            for row in p.constraints() {
                let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * sol.x[j]).sum();
                prop_assert!(lhs <= row.rhs + 1e-8 * (1.0 + row.rhs.abs()));
            }
        }
    }

    /// Scaling the objective by a power of two scales every reduced cost
    /// exactly and flips no comparison, so the pivot path, the returned
    /// vertex, and (exactly) the scaled objective value all reproduce.
    #[test]
    fn power_of_two_objective_scaling_is_bitwise_stable(seed in any::<u64>(), k in 1u32..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_lp(&mut rng, true);
        let scale = f64::from(1u32 << k);
        let mut q = p.clone();
        q.set_objective(p.objective().iter().map(|c| c * scale).collect());
        let a = solve(&p).unwrap();
        let b = solve(&q).unwrap();
        prop_assert_eq!(a.status, b.status);
        if a.status == LpStatus::Optimal {
            prop_assert_eq!(&a.x, &b.x);
            prop_assert_eq!(a.objective_value * scale, b.objective_value);
        }
    }
}
