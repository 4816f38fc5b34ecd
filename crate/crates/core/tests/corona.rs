use std::collections::BTreeSet;

use onesided::characteristics::WeightFamilySpec;
use onesided::corona::{build_corona, distribution_profile, top_populated_a, verify_eta_chain, SliceData, SliceScope, SliceSpec};
use onesided::{GridFunction, IntervalId, SignPattern, TruncationProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn slices_and_forests_on_cascades() {
    for (k, theta) in [0.2, 0.4, 0.6, 0.8].into_iter().enumerate() {
        for p in [1.5, 2.0, 3.0] {
            let w = WeightFamilySpec::cascade(theta, k as u64, 9).generate(p).unwrap();
            let sigma = w.dual();
            let data = SliceData::new(&w, &sigma, p).unwrap();
            let i0 = IntervalId::ROOT;
            let mut seen = BTreeSet::new();
            for &a in data.populations(i0, SliceScope::ProperSubintervals, false).keys() {
                let ka = data.slice(&SliceSpec::global(i0, a, p)).unwrap();
                for id in &ka {
                    assert!(seen.insert(*id), "{id} in two slices");
                }
                let forest = build_corona(&w, &ka, i0).unwrap();
                assert!(forest.check_partition() && forest.check_growth() && forest.check_assignment());
            }
            let all: BTreeSet<_> = data.candidates(i0, SliceScope::ProperSubintervals).into_iter().collect();
            assert_eq!(seen, all);
        }
    }
}

#[test]
fn chain_decomposition_is_exact() {
    let w = WeightFamilySpec::cascade(0.5, 3, 9).generate(2.0).unwrap();
    let sigma = w.dual();
    let grid = w.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let eps = SignPattern::random(grid, &mut rng);
    let delta = TruncationProfile::random(grid, &mut rng);
    let i0 = IntervalId::ROOT;
    let a = top_populated_a(&w, &sigma, i0, 2.0, SliceScope::ProperSubintervals, false).unwrap().unwrap();
    let r = verify_eta_chain(&eps, &w, &sigma, 2.0, i0, a, Some(&delta), None).unwrap();
    assert!(r.forest_ok && r.layers_exact);
    assert!(r.decomposition_error <= 1e-12);
}

#[test]
fn profile_is_monotone_in_lambda() {
    let w = WeightFamilySpec::cascade(0.6, 8, 9).generate(2.0).unwrap();
    let sigma = w.dual();
    let grid = w.grid();
    let i0 = IntervalId::ROOT;
    let a = top_populated_a(&w, &sigma, i0, 2.0, SliceScope::LeftHalf, true).unwrap().unwrap();
    let k = SliceData::new(&w, &sigma, 2.0).unwrap().slice(&SliceSpec::local(i0, a, 2.0)).unwrap();
    let phi = GridFunction::constant(grid, 1.0);
    let pr = distribution_profile(&SignPattern::all_plus(grid), &TruncationProfile::untruncated(grid), &w, &sigma, &k, i0, &phi, 2.0, None).unwrap();
    assert!(pr.is_monotone());
    assert!(pr.sigma_measure[0] <= pr.sigma_i0 * (1.0 + 1e-12));
}
