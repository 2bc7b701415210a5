use proptest::prelude::*;

use lrfim_core::coarse::{
    admissible_cover_of, check_cube_pair_lemma, check_projection_lemma, cube_pair_instance, d2, projection_instance,
    random_region, Admissibility,
};
use lrfim_core::entropy::cube_pair_constant;
use lrfim_core::lattice::{Cube, Region, Site};
use lrfim_core::rng::seeded_rng;

fn region(span: i32) -> impl Strategy<Value = Region> {
    prop::collection::vec((-span..=span, -span..=span), 0..30)
        .prop_map(|pts| Region::from_sites(2, pts.into_iter().map(|(x, y)| Site::new(&[x, y]))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn d2_is_a_pseudometric(a in region(4), b in region(4), c in region(4), eps in 0.0f64..3.0) {
        prop_assert_eq!(d2(&a, &a, eps), 0.0);
        prop_assert_eq!(d2(&a, &b, eps), d2(&b, &a, eps));
        prop_assert!(d2(&a, &c, eps) <= d2(&a, &b, eps) + d2(&b, &c, eps) + 1e-12);
    }

    #[test]
    fn admissible_cubes_are_half_filled(a in region(6), scale in 0u32..4, strict in any::<bool>()) {
        let rule = if strict { Admissibility::MoreThanHalf } else { Admissibility::AtLeastHalf };
        let cov = admissible_cover_of(&a, 0, scale, rule);
        let mut union = Region::empty(2);
        for anchor in &cov.cubes.anchors {
            let q = Cube::new(scale, *anchor).sites();
            let filled = 2 * q.intersection(&a).len();
            if strict {
                prop_assert!(filled > q.len());
            } else {
                prop_assert!(filled >= q.len());
            }
            union = union.union(&q);
        }
        prop_assert_eq!(&union, &cov.b);
        if scale == 0 {
            prop_assert_eq!(&cov.b, &a);
        }
    }

    #[test]
    fn projection_instances_never_violate(seed in any::<u64>(), index in 0u64..1000, d in 2usize..=3) {
        let (a, rect) = projection_instance(d, seed, index);
        let out = check_projection_lemma(&a, &rect, 7.0 / 8.0).unwrap();
        prop_assert!(!out.violated(), "{:?}", out);
    }

    #[test]
    fn cube_pair_instances_never_violate(seed in any::<u64>(), index in 0u64..1000, scale in 0u32..3) {
        let (a, c, c2) = cube_pair_instance(2, scale, seed, index);
        let out = check_cube_pair_lemma(&a, &c, &c2, cube_pair_constant(2));
        prop_assert!(!out.violated(), "{:?}", out);
    }

    #[test]
    fn generators_are_reproducible(seed in any::<u64>(), kind in 0u64..3, side in 2u32..9) {
        let mut rng = seeded_rng(seed);
        let r = random_region(2, side, kind, &mut rng);
        let mut again = seeded_rng(seed);
        prop_assert_eq!(&random_region(2, side, kind, &mut again), &r);
        if kind == 1 {
            prop_assert!(!r.is_empty() && r.is_connected());
        }
    }
}
