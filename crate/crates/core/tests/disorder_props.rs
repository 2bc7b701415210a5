use proptest::prelude::*;

use lrfim_core::contour::{contours_of, Method};
use lrfim_core::disorder::{
    bad_event_with, delta_a, density_ratio, greedy_animal, sup_expectation_with, AnimalVariant, Normalization,
};
use lrfim_core::entropy::{compute_constants, feasible_m};
use lrfim_core::lattice::{Region, Site};
use lrfim_core::model::{sample_field, theta_mask, Configuration, FieldDist, Params};

fn s(x: i32, y: i32) -> Site {
    Site::new(&[x, y])
}

fn dist() -> impl Strategy<Value = FieldDist> {
    prop_oneof![Just(FieldDist::Gaussian), Just(FieldDist::Bernoulli)]
}

/// Minus interiors of small contours around the origin.
fn interior_sets() -> Vec<(Region, usize)> {
    vec![
        (Region::single(s(0, 0)), 12),
        (Region::from_sites(2, [s(0, 0), s(1, 0)]), 16),
        (Region::from_sites(2, [s(0, 0), s(1, 0), s(0, 1), s(1, 1)]), 20),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delta_is_antisymmetric(
        mask in 0u64..512,
        seed in any::<u64>(),
        field in dist(),
        beta in 0.1f64..2.0,
        eps in 0.0f64..2.0,
    ) {
        let lambda = Region::centered_box(2, 3);
        let p = Params { beta, eps, ..Params::new(2, 4.0).unwrap() };
        let a = Region::from_sites(2, lambda.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|x| *x.1));
        let h = sample_field(&lambda, field, seed);
        let fwd = delta_a(&a, &h, &lambda, &p).unwrap();
        let back = delta_a(&a, &h.flip(&a).unwrap(), &lambda, &p).unwrap();
        prop_assert!((fwd + back).abs() <= 1e-10 * (1.0 + fwd.abs()));
        prop_assert_eq!(delta_a(&Region::empty(2), &h, &lambda, &p).unwrap(), 0.0);
    }

    #[test]
    fn animal_is_rooted_and_connected(seed in any::<u64>(), k in 1usize..=5, field in dist(), by_size in any::<bool>()) {
        let lambda = Region::centered_box(2, 11);
        let h = sample_field(&lambda, field, seed);
        let norm = if by_size { Normalization::Size } else { Normalization::EdgeBoundary };
        let r = greedy_animal(&h, k, AnimalVariant::Connected, norm, &Params::new(2, 4.0).unwrap()).unwrap();
        prop_assert!(r.best_region.contains(&Site::origin(2)));
        prop_assert!(r.best_region.is_connected());
        prop_assert!(r.best_region.len() <= k);
    }
}

#[test]
fn bad_event_grows_with_disorder_on_matched_draws() {
    let lambda = Region::centered_box(2, 4);
    let base = Params::new(2, 4.0).unwrap();
    let p = Params { m_sep: feasible_m(&base).unwrap(), ..base };
    let c2 = compute_constants(&p).unwrap().c2.unwrap();
    let sets = interior_sets();
    let mut last = 0.0;
    let mut seen_positive = false;
    for eps in [0.002, 0.005, 0.01, 0.02, 0.05, 0.1] {
        let e = bad_event_with(&sets, &lambda, &Params { eps, ..p.clone() }, c2, 400, FieldDist::Gaussian, 7).unwrap();
        assert!(e.probability >= last, "ε = {eps}: {} < {last}", e.probability);
        seen_positive |= e.probability > 0.0;
        last = e.probability;
    }
    assert!(seen_positive);
}

/// For small `βε` the supremum scales linearly with `ε`.
#[test]
fn sup_expectation_rescales_with_field_strength() {
    let lambda = Region::centered_box(2, 4);
    let p = Params { beta: 0.2, ..Params::new(2, 4.0).unwrap() };
    let sets: Vec<Region> = interior_sets().into_iter().map(|x| x.0).collect();
    let at = |eps: f64| {
        sup_expectation_with(&sets, 12, &lambda, &Params { eps, ..p.clone() }, 300, FieldDist::Gaussian, 3).unwrap().mean
    };
    let (lo, hi) = (at(0.01), at(0.02));
    assert!(lo > 0.0);
    let ratio = hi / lo;
    assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
}

#[test]
fn density_ratios_respect_the_bound() {
    let lambda = Region::centered_box(2, 6);
    let base = Params { eps: 0.5, ..Params::new(2, 4.0).unwrap() };
    let p = Params { m_sep: feasible_m(&base).unwrap(), ..base };
    let consts = compute_constants(&p).unwrap();
    let theta = theta_mask(&lambda);
    let free: Vec<usize> = (0..lambda.len()).filter(|&i| theta >> i & 1 == 0).collect();
    let mut checked = 0;
    for m in 1u64..1 << free.len() {
        let mask = free.iter().enumerate().filter(|(k, _)| m >> k & 1 == 1).fold(0u64, |acc, (_, &i)| acc | 1 << i);
        let sigma = Configuration::from_mask(&lambda, mask);
        let fam = contours_of(&sigma, &p, Method::GammaR).unwrap();
        for (k, g) in fam.contours.iter().enumerate() {
            if !fam.external[k] {
                continue;
            }
            for seed in 0..5 {
                let h = sample_field(&lambda, FieldDist::Bernoulli, seed);
                let r = density_ratio(&sigma, g, &h, &p, &consts).unwrap();
                assert_eq!(r.pass, Some(true), "{r:?}");
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 15 * 5);
}
