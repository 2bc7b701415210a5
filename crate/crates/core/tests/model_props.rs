use proptest::prelude::*;

use lrfim_core::lattice::{Region, Site};
use lrfim_core::model::{
    gibbs_probability, lattice_constant, log_partition, sample_field, site_minus_event, theta_sites, Boundary,
    FieldDist, Hamiltonian, Params,
};

fn small_box() -> impl Strategy<Value = Region> {
    (1i32..=3, 1i32..=3).prop_map(|(w, h)| Region::boxed(&[0, 0], &[w - 1, h - 1]))
}

fn spins_of(mask: u64, n: usize) -> Vec<i8> {
    (0..n).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn global_spin_flip_symmetry(r in small_box(), seed in any::<u64>(), mask in any::<u64>(), eps in 0.0f64..2.0) {
        let p = Params { eps, ..Params::new(2, 4.0).unwrap() };
        let ham = Hamiltonian::new(&r, &p).unwrap();
        let h = sample_field(&r, FieldDist::Gaussian, seed).values;
        let neg_h: Vec<f64> = h.iter().map(|x| -x).collect();
        let s = spins_of(mask, r.len());
        let neg_s: Vec<i8> = s.iter().map(|x| -x).collect();
        let a = ham.rel_energy(&s, Boundary::Plus, &h, eps);
        let b = ham.rel_energy(&neg_s, Boundary::Minus, &neg_h, eps);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn gibbs_probability_ignores_energy_offset(
        r in small_box(),
        seed in any::<u64>(),
        beta in 0.05f64..2.0,
        offset in -50.0f64..50.0,
    ) {
        let p = Params { beta, eps: 0.7, ..Params::new(2, 4.0).unwrap() };
        let ham = Hamiltonian::new(&r, &p).unwrap();
        let h = sample_field(&r, FieldDist::Bernoulli, seed);
        let n = r.len();
        let weights: Vec<f64> = (0..1u64 << n)
            .map(|m| (-beta * (ham.rel_energy(&spins_of(m, n), Boundary::Plus, &h.values, p.eps) + offset)).exp())
            .collect();
        let origin = r.index_of(&Site::origin(2)).unwrap();
        let hit: f64 = weights.iter().enumerate().filter(|(m, _)| *m as u64 >> origin & 1 == 1).map(|x| x.1).sum();
        let naive = hit / weights.iter().sum::<f64>();
        let exact = gibbs_probability(site_minus_event(&r, &Site::origin(2)).unwrap(), &r, &h, &p, false).unwrap();
        prop_assert!((naive - exact).abs() <= 1e-10);
    }

    #[test]
    fn infinite_temperature_counts_states(r in small_box(), seed in any::<u64>()) {
        let p = Params { beta: 0.0, eps: 1.0, ..Params::new(2, 4.0).unwrap() };
        let h = sample_field(&r, FieldDist::Gaussian, seed);
        let lz = log_partition(&r, &h, &p, false).unwrap();
        prop_assert!((lz - r.len() as f64 * std::f64::consts::LN_2).abs() < 1e-12);
    }
}

#[test]
fn lattice_constant_is_reproducible() {
    for (d, alpha) in [(1, 2.5), (2, 4.0), (3, 4.0), (3, 6.5)] {
        let p = Params::new(d, alpha).unwrap();
        let a = lattice_constant(&p).unwrap();
        let b = lattice_constant(&p).unwrap();
        assert_eq!(a.c_alpha.to_bits(), b.c_alpha.to_bits());
        assert!(a.tail_bound <= p.tol);
    }
}

#[test]
fn theta_on_small_boxes() {
    for (side, free) in [(3, 0), (4, 0), (5, 1), (6, 4)] {
        let r = Region::centered_box(2, side);
        assert_eq!(r.len() - theta_sites(&r).len(), free, "side {side}");
    }
}
