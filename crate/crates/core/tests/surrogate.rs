mod common;

use cmll::ir::{phi, phi_bar, phi_hermitian};
use cmll::linalg::hermitian_logdet;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn scalar_tangent_majorizes_log(value in 1e-3f64..1e3, at in 1e-3f64..1e3) {
        prop_assert!(phi(value, at) >= value.ln() - 1e-12 * value.ln().abs().max(1.0));
        prop_assert!((phi(at, at) - at.ln()).abs() <= 1e-14 * at.ln().abs().max(1.0));
    }

    #[test]
    fn logdet_tangent_majorizes_logdet(seed in any::<u64>(), dim in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::random_hpd(&mut rng, dim, 0.05);
        let b = common::random_hpd(&mut rng, dim, 0.05);
        let exact = hermitian_logdet(&a).unwrap();
        let bound = phi_hermitian(&a, &b).unwrap();
        prop_assert!(bound >= exact - 1e-9 * exact.abs().max(1.0), "{} < {}", bound, exact);
        let tight = phi_hermitian(&a, &a).unwrap();
        prop_assert!((tight - exact).abs() <= 1e-9 * exact.abs().max(1.0));
    }

    #[test]
    fn quadratic_over_linear_minorant(seed in any::<u64>(), dim in 1usize..6, chi in 0.01f64..50.0, chi_at in 0.01f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = common::random_cvec(&mut rng, dim);
        let w = common::random_cvec(&mut rng, dim);
        let w_at = common::random_cvec(&mut rng, dim);
        let exact = h.dotc(&w).norm_sqr() / chi;
        let bound = phi_bar(&w, chi, &h, &w_at, chi_at);
        prop_assert!(bound <= exact + 1e-9 * exact.max(1.0), "{} > {}", bound, exact);
        let at = h.dotc(&w_at).norm_sqr() / chi_at;
        prop_assert!((phi_bar(&w_at, chi_at, &h, &w_at, chi_at) - at).abs() <= 1e-9 * at.max(1.0));
    }
}
