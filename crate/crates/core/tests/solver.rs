mod common;

use cmll::ir::{Affine, ConvexExpr, SubproblemIr, Term};
use cmll::solver::{kkt_residual, solve, SolveStatus, SolverSettings};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny(seed: u64) -> SubproblemIr {
    common::random_tiny_ir(&mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn matches_grid_search_on_tiny_programs() {
    let settings = SolverSettings::default();
    for seed in 1000..1040 {
        let ir = tiny(seed);
        let report = solve(&ir, &settings).unwrap();
        let (oracle, _) = common::grid_search_minimum(&ir);
        let gap = (report.objective - oracle).abs();
        assert!(gap <= 1e-3 * oracle.abs().max(1.0), "seed {seed}: solver {} oracle {oracle}", report.objective);
    }
}

#[test]
fn converged_reports_meet_the_stationarity_tolerance() {
    let settings = SolverSettings::default();
    for seed in 0..40 {
        let ir = tiny(seed);
        let report = solve(&ir, &settings).unwrap();
        if report.status == SolveStatus::Converged {
            assert!(report.kkt_residual <= settings.kkt_tolerance);
            let again = kkt_residual(&ir, &report.x, report.barrier_weight).unwrap();
            assert!((again - report.kkt_residual).abs() <= 1e-12 + 1e-9 * again);
        }
    }
}

#[test]
fn unconstrained_log_barrier_closed_form() {
    // minimize 2x - ln(x) - ln(3 - x) has its stationary point where 2 = 1/x - 1/(3 - x).
    let mut ir = SubproblemIr::new();
    ir.add_scalar("x");
    ir.set_objective(
        ConvexExpr::affine(Affine::term(0, 2.0))
            .with(Term::NegLog { coef: 1.0, arg: Affine::var(0) })
            .with(Term::NegLog { coef: 1.0, arg: Affine { constant: 3.0, coeffs: vec![(0, -1.0)] } }),
    );
    ir.start = vec![1.0];
    let report = solve(&ir, &SolverSettings::default()).unwrap();
    // 2x^2 - 8x + 3 = 0, smaller root.
    let expect = (8.0 - (64.0f64 - 24.0).sqrt()) / 4.0;
    assert_eq!(report.status, SolveStatus::Converged);
    assert!((report.x[0] - expect).abs() < 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solutions_are_feasible_and_improve_on_the_start(seed in any::<u64>()) {
        let ir = tiny(seed);
        let report = solve(&ir, &SolverSettings::default()).unwrap();
        let violation = ir.max_violation(&report.x).unwrap();
        prop_assert!(violation <= 1e-9, "violation {}", violation);
        let start = ir.objective_value(&ir.start).unwrap();
        prop_assert!(report.objective <= start + 1e-12);
        prop_assert!(report.gap_bound <= SolverSettings::default().gap_tolerance * 1.0001);
    }

    #[test]
    fn solving_is_deterministic(seed in any::<u64>()) {
        let ir = tiny(seed);
        let a = solve(&ir, &SolverSettings::default()).unwrap();
        let b = solve(&ir, &SolverSettings::default()).unwrap();
        prop_assert_eq!(a.x, b.x);
        prop_assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
}
