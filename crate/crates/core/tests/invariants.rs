use onesided::characteristics::{ainf_minus, ap_minus, ap_plus, WeightFamilySpec};
use onesided::norms::{lp_norm, op_norm_l2, weak_lp_norm};
use onesided::operators::{adjoint_transform, linearized_adjoint, linearized_transform, maximal_truncation, transform};
use onesided::{DyadicGrid, GridFunction, IntervalId, Measure, Mode, SignPattern, TruncationProfile, Weight};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid_fn(depth: u32) -> impl Strategy<Value = GridFunction> {
    prop::collection::vec(-10.0f64..10.0, 1usize << depth)
        .prop_map(move |v| GridFunction::new(DyadicGrid::new(depth).unwrap(), v).unwrap())
}

fn weight(depth: u32) -> impl Strategy<Value = Weight> {
    prop::collection::vec(0.05f64..20.0, 1usize << depth)
        .prop_map(move |v| Weight::new(GridFunction::new(DyadicGrid::new(depth).unwrap(), v).unwrap(), 2.0).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_pairing(f in grid_fn(6), g in grid_fn(6), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = SignPattern::random(f.grid(), &mut rng);
        let delta = TruncationProfile::random(f.grid(), &mut rng);
        let a = transform(&f, &eps).unwrap().inner(&g).unwrap();
        let b = f.inner(&adjoint_transform(&g, &eps).unwrap()).unwrap();
        prop_assert!(close(a, b, 1e-12));
        let a = linearized_transform(&f, &eps, &delta).unwrap().inner(&g).unwrap();
        let b = f.inner(&linearized_adjoint(&g, &eps, &delta).unwrap()).unwrap();
        prop_assert!(close(a, b, 1e-12));
    }

    #[test]
    fn transform_is_linear(f in grid_fn(5), g in grid_fn(5), c in -5.0f64..5.0, seed in any::<u64>()) {
        let eps = SignPattern::random(f.grid(), &mut ChaCha8Rng::seed_from_u64(seed));
        let lhs = transform(&f.scale(c).add(&g).unwrap(), &eps).unwrap();
        let rhs = transform(&f, &eps).unwrap().scale(c).add(&transform(&g, &eps).unwrap()).unwrap();
        for (x, y) in lhs.values().iter().zip(rhs.values()) {
            prop_assert!(close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn maximal_truncation_dominates(f in grid_fn(6), seed in any::<u64>()) {
        let eps = SignPattern::random(f.grid(), &mut ChaCha8Rng::seed_from_u64(seed));
        let sharp = maximal_truncation(&f, &eps).unwrap();
        let t = transform(&f, &eps).unwrap();
        for (s, v) in sharp.values().iter().zip(t.values()) {
            prop_assert!(*s >= v.abs() - 1e-12);
        }
    }

    #[test]
    fn transform_vanishes_on_constant_support(level in 0u32..6, index in 0usize..64, c in -100.0f64..100.0, seed in any::<u64>()) {
        let grid = DyadicGrid::new(6).unwrap();
        let id = IntervalId::new(level, index % (1 << level));
        let eps = SignPattern::random(grid, &mut ChaCha8Rng::seed_from_u64(seed));
        let t = transform(&GridFunction::indicator(grid, id, c).unwrap(), &eps).unwrap();
        for i in grid.cell_range(id) {
            prop_assert_eq!(t.values()[i], 0.0);
        }
    }

    #[test]
    fn characteristics_are_scale_invariant(w in weight(6), c in 0.01f64..100.0) {
        let s = w.scaled(c).unwrap();
        for mode in [Mode::Dyadic, Mode::Sliding] {
            prop_assert!(close(ap_plus(&w, mode), ap_plus(&s, mode), 1e-10));
        }
        prop_assert!(close(ainf_minus(&w), ainf_minus(&s), 1e-10));
    }

    #[test]
    fn duality_and_dual_ainf(w in weight(6), p in 1.2f64..4.0) {
        let w = w.with_exponent(p).unwrap();
        let sigma = w.dual();
        for mode in [Mode::Dyadic, Mode::Sliding] {
            let a = ap_plus(&w, mode);
            prop_assert!(close(a, ap_minus(&sigma, mode).powf(p - 1.0), 1e-10));
        }
        let pc = p / (p - 1.0);
        prop_assert!(ainf_minus(&sigma) <= ap_plus(&w, Mode::Dyadic).powf(pc - 1.0) * (1.0 + 1e-12));
    }

    #[test]
    fn reflection_swaps_sides(w in weight(6)) {
        for mode in [Mode::Dyadic, Mode::Sliding] {
            prop_assert!(close(ap_plus(&w, mode), ap_minus(&w.reversed(), mode), 1e-12));
        }
    }

    #[test]
    fn weak_norm_below_strong(f in grid_fn(6), w in weight(6), p in 1.0f64..4.0) {
        let mu: Measure = (&w).into();
        let weak = weak_lp_norm(&f, mu, p).unwrap();
        prop_assert!(weak.value <= lp_norm(&f, mu, p).unwrap() * (1.0 + 1e-12));
        prop_assert!(close(weak.value, weak.recompute(p), 1e-12));
    }

    #[test]
    fn weighted_norm_is_scale_invariant(theta in 0.0f64..0.9, seed in 0u64..1000, c in 0.01f64..100.0) {
        let w = WeightFamilySpec::cascade(theta, seed, 6).generate(2.0).unwrap();
        let eps = SignPattern::all_plus(w.grid());
        let a = op_norm_l2(&eps, &w, None).unwrap();
        let b = op_norm_l2(&eps, &w.scaled(c).unwrap(), None).unwrap();
        prop_assert!(close(a, b, 1e-7));
    }
}
