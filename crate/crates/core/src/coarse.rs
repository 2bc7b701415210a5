//! Coarse-graining of minus interiors by admissible cubes, the discrete
//! geometry lemmas behind it, and seeded random-region generators for the
//! fuzz campaigns.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::contour::Contour;
use crate::entropy::{projection_constant, ConstantTable};
use crate::lattice::{outer_boundary, project, Cube, CubeCollection, Rectangle, Region, Site};
use crate::model::Params;
use crate::rng::{derive_seed, seeded_rng};
use crate::{Error, Result};

/// How much of a cube the minus interior must fill for admissibility.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Admissibility {
    /// `|C ∩ I₋| ≥ |C|/2`.
    #[default]
    AtLeastHalf,
    /// `|C ∩ I₋| > |C|/2`.
    MoreThanHalf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibleCover {
    pub ell: u32,
    pub cubes: CubeCollection,
    /// Union of the admissible cubes.
    pub b: Region,
    pub inner_boundary: CubeCollection,
    /// Pairs (inside, outside) of face-sharing cubes.
    pub edge_boundary: Vec<(Site, Site)>,
}

/// Face neighbours of a cube anchor.
fn anchor_neighbors(a: &Site) -> impl Iterator<Item = Site> + '_ {
    a.neighbors()
}

pub fn admissible_cover(gamma: &Contour, ell: u32, p: &Params) -> AdmissibleCover {
    admissible_cover_of(&gamma.i_minus, ell, p.r * ell, Admissibility::AtLeastHalf)
}

/// Admissible cubes at `scale` for an arbitrary minus interior.
pub fn admissible_cover_of(i_minus: &Region, ell: u32, scale: u32, rule: Admissibility) -> AdmissibleCover {
    let d = i_minus.dim();
    let mut counts: BTreeMap<Site, u128> = BTreeMap::new();
    for s in i_minus.iter() {
        *counts.entry(s.cube_anchor(scale)).or_default() += 1;
    }
    let vol = Cube::new(scale, Site::origin(d)).volume();
    let anchors: Vec<Site> = counts
        .into_iter()
        .filter(|&(_, c)| match rule {
            Admissibility::AtLeastHalf => 2 * c >= vol,
            Admissibility::MoreThanHalf => 2 * c > vol,
        })
        .map(|(a, _)| a)
        .collect();
    let cubes = CubeCollection::new(scale, anchors);
    let mut edges = Vec::new();
    let mut inner = Vec::new();
    for a in &cubes.anchors {
        let mut on_boundary = false;
        for nb in anchor_neighbors(a) {
            if !cubes.contains_anchor(&nb) {
                edges.push((*a, nb));
                on_boundary = true;
            }
        }
        if on_boundary {
            inner.push(*a);
        }
    }
    let b = cubes.union_region(d);
    AdmissibleCover { ell, cubes, b, inner_boundary: CubeCollection::new(scale, inner), edge_boundary: edges }
}

/// `d₂(A, B) = 2ε·√|A Δ B|`.
pub fn d2(a: &Region, b: &Region, eps: f64) -> f64 {
    2.0 * eps * (a.symmetric_difference_len(b) as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum LemmaOutcome {
    HypothesisNotMet(String),
    Checked { lhs: f64, rhs: f64, pass: bool },
}

impl LemmaOutcome {
    fn check(lhs: f64, rhs: f64) -> LemmaOutcome {
        LemmaOutcome::Checked { lhs, rhs, pass: lhs <= rhs }
    }

    pub fn violated(&self) -> bool {
        matches!(self, LemmaOutcome::Checked { pass: false, .. })
    }

    pub fn checked(&self) -> bool {
        matches!(self, LemmaOutcome::Checked { .. })
    }

    pub fn margin(&self) -> Option<f64> {
        match self {
            LemmaOutcome::Checked { lhs, rhs, .. } => Some(rhs - lhs),
            LemmaOutcome::HypothesisNotMet(_) => None,
        }
    }
}

/// `Σᵢ|Pᵢ(A∩R)| ≤ c(d,λ)·|∂_ex A ∩ R|`, provided the extents lie in
/// `[R, 2R]` for some `R ≥ 2` and every projection covers at most `λ` of its face.
pub fn check_projection_lemma(a: &Region, rect: &Rectangle, lambda: f64) -> Result<LemmaOutcome> {
    let d = rect.dim();
    if d < 2 {
        return Err(Error::Param("the projection lemma needs d ≥ 2".into()));
    }
    let ext = &rect.extents[..d];
    let lo = *ext.iter().min().unwrap();
    let hi = *ext.iter().max().unwrap();
    if lo < 2 || hi > 2 * lo {
        return Ok(LemmaOutcome::HypothesisNotMet(format!("extents {ext:?} not within [R, 2R], R ≥ 2")));
    }
    let mut lhs = 0usize;
    for axis in 0..d {
        let pr = project(a, rect, axis)?;
        if pr.all.len() as f64 > lambda * rect.face_size(axis) as f64 {
            return Ok(LemmaOutcome::HypothesisNotMet(format!(
                "projection {axis} covers {} of {} face points",
                pr.all.len(),
                rect.face_size(axis)
            )));
        }
        lhs += pr.all.len();
    }
    let ext_boundary = outer_boundary(a).iter().filter(|s| rect.contains(s)).count();
    Ok(LemmaOutcome::check(lhs as f64, projection_constant(d, lambda) * ext_boundary as f64))
}

/// `2^{s(d−1)} ≤ b·|∂_ex A ∩ (C ∪ C′)|` for face-sharing cubes of scale `s`
/// with `C` at least half filled by `A` and `C′` less than half.
pub fn check_cube_pair_lemma(a: &Region, c: &Cube, c2: &Cube, b: f64) -> LemmaOutcome {
    if c.scale != c2.scale || !c.shares_face(c2) {
        return LemmaOutcome::HypothesisNotMet("cubes do not share a face".into());
    }
    let vol = c.volume();
    let in_c = a.iter().filter(|s| c.contains(s)).count() as u128;
    let in_c2 = a.iter().filter(|s| c2.contains(s)).count() as u128;
    if 2 * in_c < vol || 2 * in_c2 >= vol {
        return LemmaOutcome::HypothesisNotMet(format!("fillings {in_c}, {in_c2} of {vol}"));
    }
    let hits = outer_boundary(a).iter().filter(|s| c.contains(s) || c2.contains(s)).count();
    let d = c.dim() as f64;
    LemmaOutcome::check((c.scale as f64 * (d - 1.0)).exp2(), b * hits as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prop1Report {
    pub ell: u32,
    pub inner_cubes: usize,
    pub ext_boundary: usize,
    pub size: usize,
    /// `b₁|∂_ex I₋|/2^{rℓ(d−1)}` with the corrected constant.
    pub bound_i: f64,
    /// Same with the displayed constant.
    pub bound_i_displayed: f64,
    pub sym_diff: usize,
    pub bound_ii: f64,
    pub pass_i: bool,
    pub pass_i_displayed: bool,
    pub pass_ii: bool,
    /// `|∂_ex I₋| ≤ |γ|`.
    pub pass_chain: bool,
}

impl Prop1Report {
    pub fn pass(&self) -> bool {
        self.pass_i && self.pass_ii && self.pass_chain
    }
}

/// Inner-boundary and approximation-step bounds for one contour and level.
pub fn check_proposition1(gamma: &Contour, ell: u32, p: &Params, consts: &ConstantTable) -> Prop1Report {
    let cov = admissible_cover(gamma, ell, p);
    let next = admissible_cover(gamma, ell + 1, p);
    let ext = outer_boundary(&gamma.i_minus).len();
    let scale = ((p.r * ell) as f64 * (p.d as f64 - 1.0)).exp2();
    let bound_i = consts.b1 * ext as f64 / scale;
    let bound_i_displayed = consts.b1_displayed * ext as f64 / scale;
    let sym = cov.b.symmetric_difference_len(&next.b);
    let bound_ii = consts.b2 * ((p.r * ell) as f64).exp2() * gamma.size() as f64;
    let inner = cov.inner_boundary.len();
    Prop1Report {
        ell,
        inner_cubes: inner,
        ext_boundary: ext,
        size: gamma.size(),
        bound_i,
        bound_i_displayed,
        sym_diff: sym,
        bound_ii,
        pass_i: inner as f64 <= bound_i,
        pass_i_displayed: inner as f64 <= bound_i_displayed,
        pass_ii: sym as f64 <= bound_ii,
        pass_chain: ext <= gamma.size(),
    }
}

/// Largest level worth checking: the first `ℓ` with `b₁|γ| < 2^{rℓ(d−1)}`.
pub fn level_cutoff(size: usize, b1: f64, p: &Params) -> u32 {
    let mut ell = 0;
    while b1 * size as f64 >= ((p.r * ell) as f64 * (p.d as f64 - 1.0)).exp2() {
        ell += 1;
    }
    ell
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusReport {
    pub actual: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `d₂(I₋(γ₁), I₋(γ₂)) ≤ 4ε·b₃·2^{rℓ/2}·√n` for contours of equal size with
/// the same approximation at level `ℓ`.
pub fn approximation_radius(g1: &Contour, g2: &Contour, ell: u32, p: &Params, consts: &ConstantTable) -> Result<RadiusReport> {
    if g1.size() != g2.size() {
        return Err(Error::Hypothesis(format!("sizes differ: {} vs {}", g1.size(), g2.size())));
    }
    if admissible_cover(g1, ell, p).b != admissible_cover(g2, ell, p).b {
        return Err(Error::Hypothesis(format!("approximations differ at level {ell}")));
    }
    let actual = d2(&g1.i_minus, &g2.i_minus, p.eps);
    let bound = 4.0 * p.eps * consts.b3_diam * ((p.r * ell) as f64 / 2.0).exp2() * (g1.size() as f64).sqrt();
    Ok(RadiusReport { actual, bound, pass: actual <= bound })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageCount {
    pub n: usize,
    pub ell: u32,
    pub count: usize,
    pub log_bound: f64,
    /// `1 ≤ ℓ ≤ log_{2^r}(b₁n)/(d−1)`, where the bound is asserted.
    pub in_range: bool,
    pub pass: bool,
}

/// Distinct approximations `B_ℓ` over the given contours of size `n`,
/// against `exp{c₄ℓ^{κ+1}n/2^{rℓ(d−1)}}`.
pub fn count_bell_images(contours: &[Contour], n: usize, ell: u32, p: &Params, consts: &ConstantTable) -> ImageCount {
    let images: BTreeSet<Region> = contours.iter().map(|g| admissible_cover(g, ell, p).b).collect();
    let l = ell as f64;
    let d = p.d as f64;
    let r = p.r as f64;
    let log_bound = consts.c4 * l.powf(consts.kappa + 1.0) * n as f64 / (r * l * (d - 1.0)).exp2();
    let top = if n == 0 { f64::NEG_INFINITY } else { (consts.b1 * n as f64).ln() / (r * std::f64::consts::LN_2) / (d - 1.0) };
    let in_range = ell >= 1 && l <= top;
    let count = images.len();
    let holds = count == 0 || (count as f64).ln() <= log_bound * (1.0 + 1e-12);
    ImageCount { n, ell, count, log_bound, in_range, pass: !in_range || holds }
}

/// Uniform site percolation with density `q` in `[0, side)^d`.
pub fn percolation_region<R: Rng>(d: usize, side: u32, q: f64, rng: &mut R) -> Region {
    let hi = vec![side as i32 - 1; d];
    let boxed = Region::boxed(&vec![0; d], &hi);
    Region::from_sites(d, boxed.iter().copied().filter(|_| rng.random_bool(q)))
}

/// Connected polyomino grown from the origin by adding random boundary sites.
pub fn polyomino_region<R: Rng>(d: usize, size: usize, rng: &mut R) -> Region {
    let mut sites = vec![Site::origin(d)];
    let mut set: BTreeSet<Site> = sites.iter().copied().collect();
    while sites.len() < size {
        let base = *sites.choose(rng).unwrap();
        let axis = rng.random_range(0..d);
        let step = if rng.random_bool(0.5) { 1 } else { -1 };
        let next = base.shifted(axis, step);
        if set.insert(next) {
            sites.push(next);
        }
    }
    Region::from_sites(d, sites)
}

/// Union of `count` random boxes with sides up to `max_side` in `[0, span)^d`.
pub fn cube_union_region<R: Rng>(d: usize, count: usize, max_side: u32, span: u32, rng: &mut R) -> Region {
    let mut out = Vec::new();
    for _ in 0..count {
        let side = rng.random_range(1..=max_side) as i32;
        let lo: Vec<i32> = (0..d).map(|_| rng.random_range(0..span as i32)).collect();
        let hi: Vec<i32> = lo.iter().map(|&x| x + side - 1).collect();
        out.extend(Region::boxed(&lo, &hi).iter().copied());
    }
    Region::from_sites(d, out)
}

/// One of the three generators, chosen by `kind % 3`, sized for a window of `side`.
pub fn random_region<R: Rng>(d: usize, side: u32, kind: u64, rng: &mut R) -> Region {
    match kind % 3 {
        0 => {
            let q = rng.random_range(0.02..0.35);
            percolation_region(d, side, q, rng)
        }
        1 => {
            let max = (side as usize).pow(d as u32).min(60);
            let size = rng.random_range(1..=max.max(1));
            polyomino_region(d, size, rng).translate(&Site::new(&vec![side as i32 / 2; d]))
        }
        _ => {
            let count = rng.random_range(1..=4);
            cube_union_region(d, count, (side / 2).max(1), side, rng)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Campaign {
    pub instances: usize,
    pub checked: usize,
    pub hypothesis_not_met: usize,
    pub violations: usize,
    pub min_margin: Option<f64>,
    /// Per-instance rows: seed, lhs, rhs, pass (checked instances only).
    pub rows: Vec<(u64, f64, f64, bool)>,
}

impl Campaign {
    fn add(&mut self, seed: u64, outcome: &LemmaOutcome) {
        self.instances += 1;
        match outcome {
            LemmaOutcome::HypothesisNotMet(_) => self.hypothesis_not_met += 1,
            LemmaOutcome::Checked { lhs, rhs, pass } => {
                self.checked += 1;
                if !pass {
                    self.violations += 1;
                }
                let m = rhs - lhs;
                self.min_margin = Some(self.min_margin.map_or(m, |x: f64| x.min(m)));
                self.rows.push((seed, *lhs, *rhs, *pass));
            }
        }
    }

    fn collect(outcomes: Vec<(u64, LemmaOutcome)>) -> Campaign {
        let mut c = Campaign::default();
        for (s, o) in &outcomes {
            c.add(*s, o);
        }
        c
    }
}

/// Projection-lemma instance `index` of a campaign seeded with `seed`.
pub fn projection_instance(d: usize, seed: u64, index: u64) -> (Region, Rectangle) {
    let mut rng = seeded_rng(derive_seed(seed, index));
    let r0 = if d == 2 { rng.random_range(2..=6) } else { rng.random_range(2..=3) };
    let ext: Vec<u32> = (0..d).map(|_| rng.random_range(r0..=2 * r0)).collect();
    let corner = Site::new(&vec![1; d]);
    let rect = Rectangle::new(corner, &ext);
    let side = 2 * r0 + 2;
    let a = match index % 4 {
        // Sparse sets keep most projections below λ.
        3 => {
            let q = rng.random_range(0.01..0.08);
            percolation_region(d, side, q, &mut rng)
        }
        k => random_region(d, side, k, &mut rng),
    };
    (a, rect)
}

pub fn projection_campaign(d: usize, instances: usize, lambda: f64, seed: u64) -> Result<Campaign> {
    let outcomes: Result<Vec<(u64, LemmaOutcome)>> = (0..instances as u64)
        .into_par_iter()
        .map(|i| {
            let (a, rect) = projection_instance(d, seed, i);
            Ok((derive_seed(seed, i), check_projection_lemma(&a, &rect, lambda)?))
        })
        .collect();
    Ok(Campaign::collect(outcomes?))
}

/// Cube-pair instance: two face-sharing cubes at scale `s` and a random set
/// near them, biased so the first cube is often at least half full.
pub fn cube_pair_instance(d: usize, scale: u32, seed: u64, index: u64) -> (Region, Cube, Cube) {
    let mut rng = seeded_rng(derive_seed(seed, index));
    let axis = rng.random_range(0..d);
    let c = Cube::new(scale, Site::origin(d));
    let c2 = Cube::new(scale, Site::origin(d).shifted(axis, 1));
    let side = 1i32 << scale;
    let lo = vec![-1; d];
    let mut hi = vec![side; d];
    hi[axis] = 2 * side;
    let window = Region::boxed(&lo, &hi);
    let a = match index % 3 {
        0 => {
            // half-space style cut through the pair with noise
            let cut = rng.random_range(side / 2..=side + side / 2);
            let noise = rng.random_range(0.0..0.2);
            Region::from_sites(
                d,
                window.iter().copied().filter(|s| (s.get(axis) < cut) ^ rng.random_bool(noise)),
            )
        }
        1 => {
            let q_in = rng.random_range(0.5..1.0);
            let q_out = rng.random_range(0.0..0.5);
            Region::from_sites(
                d,
                window.iter().copied().filter(|s| {
                    let q = if c.contains(s) { q_in } else { q_out };
                    rng.random_bool(q)
                }),
            )
        }
        _ => {
            let base = Region::from_sites(d, c.sites().iter().copied().filter(|_| rng.random_bool(0.8)));
            let extra = cube_union_region(d, 2, (side as u32 / 2).max(1), 2 * side as u32, &mut rng);
            base.union(&extra)
        }
    };
    (a, c, c2)
}

pub fn cube_pair_campaign(d: usize, scales: &[u32], instances: usize, b: f64, seed: u64) -> Campaign {
    let outcomes: Vec<(u64, LemmaOutcome)> = (0..instances as u64)
        .into_par_iter()
        .map(|i| {
            let scale = scales[i as usize % scales.len()];
            let (a, c, c2) = cube_pair_instance(d, scale, seed, i);
            (derive_seed(seed, i), check_cube_pair_lemma(&a, &c, &c2, b))
        })
        .collect();
    Campaign::collect(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{compute_constants, cube_pair_constant};

    fn s2(x: i32, y: i32) -> Site {
        Site::new(&[x, y])
    }

    fn block_contour(lo: i32, hi: i32) -> Contour {
        use crate::contour::{contours_of, Method};
        use crate::model::Configuration;
        let lambda = Region::centered_box(2, 2 * (hi - lo + 4) as u32);
        let minus: Vec<Site> = Region::boxed(&[lo, lo], &[hi, hi]).sites().to_vec();
        let sigma = Configuration::with_minus(&lambda, &minus).unwrap();
        let p = Params::new(2, 4.0).unwrap();
        contours_of(&sigma, &p, Method::GammaR).unwrap().contours.remove(0)
    }

    #[test]
    fn level_zero_is_the_minus_interior() {
        let g = block_contour(-2, 2);
        let p = Params::new(2, 4.0).unwrap();
        assert_eq!(admissible_cover(&g, 0, &p).b, g.i_minus);
    }

    #[test]
    fn aligned_cube_and_half_cube() {
        let cube = Region::boxed(&[0, 0], &[3, 3]);
        let c = admissible_cover_of(&cube, 1, 2, Admissibility::AtLeastHalf);
        assert_eq!(c.cubes.len(), 1);
        assert_eq!(c.b, cube);
        assert_eq!(c.inner_boundary.len(), 1);
        assert_eq!(c.edge_boundary.len(), 4);
        let half = Region::boxed(&[0, 0], &[3, 1]);
        assert_eq!(admissible_cover_of(&half, 1, 2, Admissibility::AtLeastHalf).cubes.len(), 1);
        assert!(admissible_cover_of(&half, 1, 2, Admissibility::MoreThanHalf).cubes.is_empty());
    }

    #[test]
    fn d2_values() {
        let a = Region::boxed(&[0, 0], &[1, 1]);
        assert_eq!(d2(&a, &a, 0.5), 0.0);
        assert!((d2(&Region::empty(2), &a, 0.5) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn projection_lemma_empty_and_hypothesis() {
        let rect = Rectangle::new(s2(1, 1), &[3, 4]);
        let out = check_projection_lemma(&Region::empty(2), &rect, 7.0 / 8.0).unwrap();
        assert_eq!(out, LemmaOutcome::Checked { lhs: 0.0, rhs: 0.0, pass: true });
        let full = rect.region();
        assert!(matches!(check_projection_lemma(&full, &rect, 7.0 / 8.0).unwrap(), LemmaOutcome::HypothesisNotMet(_)));
        let thin = Rectangle::new(s2(1, 1), &[2, 5]);
        assert!(matches!(check_projection_lemma(&full, &thin, 0.875).unwrap(), LemmaOutcome::HypothesisNotMet(_)));
    }

    #[test]
    fn cube_pair_level_zero() {
        let a = Region::single(s2(0, 0));
        let out = check_cube_pair_lemma(&a, &Cube::new(0, s2(0, 0)), &Cube::new(0, s2(1, 0)), 1.0);
        assert_eq!(out, LemmaOutcome::Checked { lhs: 1.0, rhs: 1.0, pass: true });
    }

    #[test]
    fn cube_pair_half_space() {
        let b = cube_pair_constant(2);
        // A = {x < 4}: C = [0,4)², C′ = [4,8)×[0,4)
        let a = Region::boxed(&[-4, -4], &[3, 8]);
        let out = check_cube_pair_lemma(&a, &Cube::new(2, s2(0, 0)), &Cube::new(2, s2(1, 0)), b);
        // 2^{2} ≤ b·4
        assert_eq!(out, LemmaOutcome::Checked { lhs: 4.0, rhs: 4.0 * b, pass: true });
    }

    #[test]
    fn displayed_inner_boundary_constant_fails_on_a_block() {
        // Minus 5×5 block: I₋ is the central 3×3, with 8 inner and 12 outer boundary sites.
        let g = block_contour(-2, 2);
        assert_eq!(g.i_minus.len(), 9);
        let mut p = Params::new(2, 4.0).unwrap();
        p.m_sep = 1.0;
        let consts = compute_constants(&p).unwrap();
        let rep = check_proposition1(&g, 0, &p, &consts);
        assert_eq!((rep.inner_cubes, rep.ext_boundary), (8, 12));
        assert!(!rep.pass_i_displayed);
        assert!(rep.pass());
    }

    #[test]
    fn radius_for_identical_contours() {
        let g = block_contour(-2, 2);
        let mut p = Params::new(2, 4.0).unwrap();
        p.eps = 0.5;
        let consts = compute_constants(&p).unwrap();
        let rep = approximation_radius(&g, &g, 1, &p, &consts).unwrap();
        assert_eq!(rep.actual, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn generators_are_seeded() {
        let a = random_region(2, 8, 1, &mut seeded_rng(3));
        let b = random_region(2, 8, 1, &mut seeded_rng(3));
        assert_eq!(a, b);
        assert!(polyomino_region(3, 20, &mut seeded_rng(1)).is_connected());
        assert_eq!(polyomino_region(2, 20, &mut seeded_rng(1)).len(), 20);
    }
}
