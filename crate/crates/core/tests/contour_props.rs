use proptest::prelude::*;

use lrfim_core::coarse::{admissible_cover, check_proposition1};
use lrfim_core::contour::{
    boundary_of_config, check_partition, contours_of, erase_contour, for_each_contour, gamma_r_partition, Contour,
    Method,
};
use lrfim_core::entropy::compute_constants;
use lrfim_core::lattice::{inner_boundary, outer_boundary, volume_interior, Region, Site};
use lrfim_core::model::{Configuration, Params};

fn small_in(d: usize) -> Params {
    Params { m_sep: 2.0, ..Params::new(d, 4.0).unwrap() }.with_overrides(Some(3.0), None, Some(2))
}

fn small_params() -> Params {
    small_in(2)
}

fn scattered(d: usize, span: i32, max: usize) -> impl Strategy<Value = Region> {
    prop::collection::vec(prop::collection::vec(-span..=span, d), 1..max)
        .prop_map(move |pts| Region::from_sites(d, pts.into_iter().map(|c| Site::new(&c))))
}

fn config_in_box(side: u32) -> impl Strategy<Value = Configuration> {
    let lambda = Region::centered_box(2, side);
    let n = lambda.len();
    any::<u64>().prop_map(move |m| Configuration::from_mask(&lambda, m & ((1u64 << n) - 1)))
}

fn check_contour_shape(g: &Contour) -> Result<(), TestCaseError> {
    prop_assert!(g.size() >= 1);
    prop_assert!(!g.i_plus.intersects(&g.i_minus));
    let vi = volume_interior(&g.support);
    prop_assert_eq!(g.i_plus.union(&g.i_minus), vi.interior.clone());
    prop_assert_eq!(g.interior(), vi.interior);
    prop_assert_eq!(&g.interior, &vi.components);
    prop_assert_eq!(&g.volume, &vi.volume);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gamma_r_partitions_are_valid(a in prop_oneof![scattered(2, 8, 60), scattered(3, 4, 60)], small in any::<bool>()) {
        let p = if small { small_in(a.dim()) } else { Params::new(a.dim(), 4.0).unwrap() };
        let part = gamma_r_partition(&a, &p).unwrap();
        let check = check_partition(&a, &part, &p);
        prop_assert!(check.ok(), "{:?}", check);
    }

    #[test]
    fn contours_have_consistent_shape(sigma in config_in_box(5), small in any::<bool>()) {
        let p = if small { small_params() } else { Params::new(2, 4.0).unwrap() };
        let fam = contours_of(&sigma, &p, Method::GammaR).unwrap();
        let joined = fam.contours.iter().fold(Region::empty(2), |acc, g| acc.union(&g.support));
        prop_assert_eq!(joined, boundary_of_config(&sigma));
        for (k, g) in fam.contours.iter().enumerate() {
            check_contour_shape(g)?;
            if fam.external[k] {
                for (j, o) in fam.contours.iter().enumerate() {
                    prop_assert!(j == k || !g.volume.is_subset(&o.volume));
                }
            }
        }
    }

    #[test]
    fn serialisation_round_trips(sigma in config_in_box(5)) {
        let p = small_params();
        for g in contours_of(&sigma, &p, Method::GammaR).unwrap().contours {
            let back = Contour::parse(&g.serialize()).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(back.serialize(), g.serialize());
        }
    }

    #[test]
    fn erasure_clears_the_support(sigma in config_in_box(5), small in any::<bool>()) {
        let p = if small { small_params() } else { Params::new(2, 4.0).unwrap() };
        let fam = contours_of(&sigma, &p, Method::GammaR).unwrap();
        let before = boundary_of_config(&sigma);
        for (k, g) in fam.contours.iter().enumerate() {
            if !fam.external[k] {
                continue;
            }
            let erased = erase_contour(&sigma, g, &p).unwrap();
            let after = boundary_of_config(&erased);
            prop_assert!(after.is_subset(&before));
            prop_assert!(!after.intersects(&g.support));
        }
    }

    #[test]
    fn zero_level_cover_is_the_minus_interior(sigma in config_in_box(5)) {
        let p = small_params();
        for g in contours_of(&sigma, &p, Method::GammaR).unwrap().contours {
            prop_assert_eq!(&admissible_cover(&g, 0, &p).b, &g.i_minus);
        }
    }
}

#[test]
fn default_parameters_give_single_parts_on_small_boxes() {
    let p = Params::new(2, 4.0).unwrap();
    let parts = for_each_contour(
        &Region::centered_box(2, 4),
        &p,
        Method::GammaR,
        || 0usize,
        |n, g, _| {
            assert_eq!(g.step, 1);
            *n += 1;
            Ok(())
        },
        |a, b| *a += b,
    )
    .unwrap();
    assert!(parts > 0);
}

/// A 5×5 minus block in a 9×9 box has `I₋` equal to the central 3×3 block:
/// 8 inner-boundary sites against 12 exterior-boundary sites, so the bound
/// with `2d/b` in place of `2d·b` fails at the finest level.
#[test]
fn displayed_first_constant_is_too_small() {
    let p = Params::new(2, 4.0).unwrap();
    let consts = compute_constants(&p).unwrap();
    let lambda = Region::centered_box(2, 9);
    let block: Vec<Site> = (-2..=2).flat_map(|x| (-2..=2).map(move |y| Site::new(&[x, y]))).collect();
    let sigma = Configuration::with_minus(&lambda, &block).unwrap();
    let fam = contours_of(&sigma, &p, Method::GammaR).unwrap();
    assert_eq!(fam.len(), 1);
    let g = &fam.contours[0];
    let core = Region::boxed(&[-1, -1], &[1, 1]);
    assert_eq!(g.i_minus, core);
    assert_eq!(inner_boundary(&core).len(), 8);
    assert_eq!(outer_boundary(&core).len(), 12);
    let r = check_proposition1(g, 0, &p, &consts);
    assert_eq!(r.inner_cubes, 8);
    assert!(r.pass_i);
    assert!(!r.pass_i_displayed, "displayed bound {}", r.bound_i_displayed);
}
