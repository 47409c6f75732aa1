use proptest::prelude::*;

use neumann_ground::ansatz::softplus_tau;
use neumann_ground::bounds::{class_dudley_bounds, stability_check, ClassParams};
use neumann_ground::trainer::ceil_sqrt;
use neumann_ground::{Network, Series};

fn raw_params(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![Just(0.0), -50.0..50.0f64, Just(f64::NAN), Just(f64::INFINITY)],
        len,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_lands_in_class_and_is_idempotent(
        (d, m, seed, raw) in (1usize..4, 1usize..10, 0u64..1000).prop_flat_map(|(d, m, s)| {
            (Just(d), Just(m), Just(s), raw_params(1 + 2 * m + m * d))
        }),
        budget in 0.01..10.0f64,
    ) {
        let mut net = Network::init(d, m, budget, seed).unwrap();
        net.set_params(&raw).unwrap();
        net.project_in_place();
        prop_assert!(net.satisfies_constraints(8.0 * d as f64 * f64::EPSILON));
        prop_assert_eq!(net.project().params(), net.params());
        let x = vec![0.5; d];
        prop_assert!(net.evaluate(&x).unwrap().abs() <= 16.0 * budget);
    }

    #[test]
    fn softplus_bounds(z in -1.0..1.0f64, tau in 1.0..64.0f64) {
        let s = softplus_tau(z, tau).unwrap();
        // max(z, 0) ≤ SP_τ(z) ≤ max(z, 0) + ln2/τ
        prop_assert!(s >= z.max(0.0));
        prop_assert!(s <= z.max(0.0) + std::f64::consts::LN_2 / tau + 1e-15);
    }

    #[test]
    fn series_json_round_trip(coeffs in prop::collection::vec(-5.0..5.0f64, 1..6)) {
        let s = Series::from_terms(1, coeffs.iter().enumerate().map(|(k, &c)| (vec![k as u32], c))).unwrap();
        let back = Series::from_json(&s.to_json()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn ceil_sqrt_is_exact(n in 1usize..10_000_000) {
        let m = ceil_sqrt(n);
        prop_assert!(m * m >= n && (m - 1) * (m - 1) < n);
    }

    #[test]
    fn dudley_quarters_with_sixteen_fold_n(b in 0.1..4.0f64, m in 1usize..64, n in 1usize..100_000) {
        let p = ClassParams { budget: b, m, d: 1, v_min: 1.0, v_max: 2.0 };
        let (a1, a2) = class_dudley_bounds(&p, n).unwrap();
        let (c1, c2) = class_dudley_bounds(&p, 16 * n).unwrap();
        prop_assert!((a1 / c1 - 4.0).abs() < 1e-12);
        prop_assert!((a2 / c2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn stability_holds_for_two_mode_mixtures(theta in 0.0..std::f64::consts::FRAC_PI_2) {
        // V ≡ 1: u = cos θ·1 + sin θ·√2 cos(πx), excess = π² sin²θ, ‖P⊥u‖² = sin²θ
        let gap = std::f64::consts::PI.powi(2);
        let s2 = theta.sin().powi(2);
        let p_h1 = (s2 * (1.0 + gap)).sqrt();
        let r = stability_check(gap * s2, s2.sqrt(), p_h1, gap, 1.0, 1.0, 1.0).unwrap();
        prop_assert!(!r.violated);
        prop_assert!(r.l2_slack.abs() <= 1e-12);
    }
}
