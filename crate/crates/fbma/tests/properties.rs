//! Randomized invariants of the discrete functionals.

mod common;

use common::*;
use proptest::prelude::*;

fn convex_data() -> impl Strategy<Value = ConvexData> {
    (0.6..2.0f64, -0.2..0.2f64, -0.2..0.2f64, 0.1..1.5f64, prop::collection::vec((0.0..0.5f64, -0.9..0.9f64), 0..3))
        .prop_map(|(base, a, b, curv, kinks)| ConvexData { base, tilt: [a, b], curv, kinks })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn legendre_transform_reproduces_the_envelope(data in convex_data(), m in 4usize..10, two_d in any::<bool>(), ys in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 8)) {
        let (v, _, n) = data.instance(if two_d { m.min(6) } else { m }, two_d);
        let ys: Vec<Vec<f64>> = ys.into_iter().map(|(a, b)| if n == 2 { vec![a, b] } else { vec![a] }).collect();
        prop_assert!(check_legendre(&v, &ys).is_ok(), "{:?}", check_legendre(&v, &ys));
    }

    #[test]
    fn mass_balance_and_mean_value(data in convex_data(), m in 4usize..12, two_d in any::<bool>(), which in 0usize..4, lam in 0.5..4.0f64) {
        let (v, w, n) = data.instance(if two_d { m.min(6) } else { m }, two_d);
        let r = check_mass_and_mean(&v, &pair_catalog(n)[which], &w, lam);
        prop_assert!(r.is_ok(), "{r:?}");
    }

    #[test]
    fn normalization_meets_its_tolerance(data in convex_data(), m in 4usize..10, two_d in any::<bool>(), beta in 0.5..3.0f64) {
        let (v, w, n) = data.instance(if two_d { m.min(6) } else { m }, two_d);
        let r = check_normalization(&v, &fbma::structure::StructuralPair::transport(n, 0.0, beta), &w);
        prop_assert!(r.is_ok(), "{r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_finite_differences(data in convex_data(), m in 4usize..9, two_d in any::<bool>(), which in 0usize..4, lam in 0.5..4.0f64, noise in prop::collection::vec(-0.01..0.01f64, 36)) {
        let (mut v, w, n) = data.instance(if two_d { m.min(5) } else { m }, two_d);
        for (c, e) in v.intercepts.iter_mut().zip(&noise) {
            *c += e;
        }
        let r = check_gradient(&v, &pair_catalog(n)[which], &w, lam);
        prop_assert!(r.is_ok(), "{r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn energy_is_midpoint_convex_for_log_concave_pairs(d0 in convex_data(), d1 in convex_data(), m in 5usize..14, which in 0usize..3, lam in 0.5..4.0f64) {
        let r = check_midpoint_convexity(&d0, &d1, m, &pair_catalog(1)[which], lam);
        prop_assert!(r.is_ok(), "{r:?}");
    }
}
