use proptest::prelude::*;

use lrfim_core::lattice::{
    boundaries, edge_boundary_len, inner_boundary, isoperimetric_check, l1_distance, min_cover, volume_interior,
    Cube, CubeCollection, Region, Site,
};

fn region_strategy(d: usize, span: i32, max: usize) -> impl Strategy<Value = Region> {
    prop::collection::vec(prop::collection::vec(-span..=span, d), 1..max)
        .prop_map(move |pts| Region::from_sites(d, pts.into_iter().map(|c| Site::new(&c))))
}

fn any_region() -> impl Strategy<Value = Region> {
    prop_oneof![region_strategy(2, 5, 40), region_strategy(3, 3, 30)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn boundary_sizes_are_comparable(a in any_region()) {
        let d = a.dim();
        let inner = inner_boundary(&a).len();
        let edges = edge_boundary_len(&a);
        prop_assert!(inner <= edges);
        prop_assert!(edges <= 2 * d * inner);
        let b = boundaries(&a);
        prop_assert_eq!(b.edges.len(), edges);
        prop_assert!(b.inner.is_subset(&a));
        prop_assert!(!b.outer.intersects(&a));
    }

    #[test]
    fn isoperimetry(a in any_region()) {
        prop_assert!(isoperimetric_check(&a));
        let d = a.dim() as f64;
        prop_assert!((a.len() as f64).powf((d - 1.0) / d) <= inner_boundary(&a).len() as f64 + 1e-9);
    }

    #[test]
    fn volume_is_region_plus_holes(a in any_region()) {
        let vi = volume_interior(&a);
        prop_assert!(a.is_subset(&vi.volume));
        prop_assert!(!vi.interior.intersects(&a));
        prop_assert_eq!(a.union(&vi.interior), vi.volume.clone());
        let joined = vi.components.iter().fold(Region::empty(a.dim()), |acc, c| acc.union(c));
        prop_assert_eq!(joined, vi.interior);
    }

    #[test]
    fn min_cover_is_minimal(a in any_region(), m in 0u32..3) {
        let c = min_cover(&a, m);
        prop_assert!(c.covers(&a));
        prop_assert_eq!(min_cover(&c.union_region(a.dim()), m), c.clone());
        for skip in 0..c.len() {
            let mut rest = c.anchors.clone();
            rest.remove(skip);
            let fewer = CubeCollection::new(m, rest);
            prop_assert!(!fewer.covers(&a));
        }
    }

    #[test]
    fn cube_distance_matches_sites(
        m in 0u32..3,
        x in prop::collection::vec(-3i32..3, 2),
        y in prop::collection::vec(-3i32..3, 2),
    ) {
        let side = 1i32 << m;
        let a = Cube::new(m, Site::new(&x.iter().map(|v| v * side).collect::<Vec<_>>()));
        let b = Cube::new(m, Site::new(&y.iter().map(|v| v * side).collect::<Vec<_>>()));
        prop_assert_eq!(a.distance(&b), l1_distance(&a.sites(), &b.sites()).unwrap() as u128);
    }
}
