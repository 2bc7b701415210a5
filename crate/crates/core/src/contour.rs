//! Contours of spin configurations.
//!
//! A configuration's incorrect points are split by a multiscale
//! `(M, a, δ)`-partition; each part, together with the signs read on the
//! boundaries of its exterior and interior components, is a contour.
//! Production extraction uses the constructive multiscale partition; the
//! finest partition is available as a brute-force oracle on tiny sets.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};

use crate::entropy::ConstantTable;
use crate::lattice::{
    cube_graph, inner_boundary, l1_distance, volume_interior, Grid, Region, Site,
};
use crate::model::{lattice_constant, Boundary, Configuration, Hamiltonian, Params};
use crate::{Error, Result};

/// Largest volume swept exhaustively by [`ConfigSweep`].
pub const SWEEP_CAP: usize = 26;
/// Largest set handled by the Bell-number partition oracle.
pub const FINEST_CAP: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    GammaR,
    FinestBruteforce,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub parts: Vec<Region>,
    pub method: Method,
    /// Removal step of each part for the multiscale construction, 0 otherwise.
    pub steps: Vec<u32>,
}

impl Partition {
    fn sorted(mut parts: Vec<(Region, u32)>, method: Method) -> Partition {
        parts.sort_by(|a, b| a.0.cmp(&b.0));
        let (parts, steps) = parts.into_iter().unzip();
        Partition { parts, method, steps }
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Every part of `self` lies inside a part of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.parts.iter().all(|p| coarser.parts.iter().any(|q| p.is_subset(q)))
    }
}

/// `|V(Λ)|` by flood fill on a coordinate-compressed grid, so widely
/// separated sets stay cheap.
pub fn volume_size(lambda: &Region) -> u128 {
    let d = lambda.dim();
    if lambda.is_empty() {
        return 0;
    }
    // Per axis: cells are single occupied coordinates, gaps between them,
    // and one margin cell on each side.
    let mut cells: Vec<Vec<(i64, i64)>> = Vec::with_capacity(d);
    for i in 0..d {
        let mut v: Vec<i64> = lambda.iter().map(|s| s.get(i) as i64).collect();
        v.sort_unstable();
        v.dedup();
        let mut axis = vec![(v[0] - 1, v[0] - 1)];
        for (k, &x) in v.iter().enumerate() {
            axis.push((x, x));
            if let Some(&y) = v.get(k + 1) {
                if y > x + 1 {
                    axis.push((x + 1, y - 1));
                }
            }
        }
        let last = *v.last().unwrap();
        axis.push((last + 1, last + 1));
        cells.push(axis);
    }
    let ext: Vec<usize> = cells.iter().map(|c| c.len()).collect();
    let lo = Site::new(&vec![0; d]);
    let hi = Site::new(&ext.iter().map(|&e| e as i32 - 1).collect::<Vec<_>>());
    let grid = Grid::new(&lo, &hi);
    let mut occupied = vec![false; grid.len()];
    let lookup: Vec<HashMap<i64, usize>> = cells
        .iter()
        .map(|c| c.iter().enumerate().filter(|(_, r)| r.0 == r.1).map(|(k, r)| (r.0, k)).collect())
        .collect();
    for s in lambda.iter() {
        let c: Vec<i32> = (0..d).map(|i| lookup[i][&(s.get(i) as i64)] as i32).collect();
        occupied[grid.index(&Site::new(&c)).unwrap()] = true;
    }
    let outside = crate::lattice::flood_outside(&grid, &occupied);
    let mut vol = 0u128;
    for idx in 0..grid.len() {
        if !outside[idx] {
            let mut w = 1u128;
            for (i, axis) in cells.iter().enumerate() {
                let (a, b) = axis[grid.coord(idx, i)];
                w *= (b - a + 1) as u128;
            }
            vol += w;
        }
    }
    vol
}

/// Right-hand side `M·min(|V|,|V′|)^{a/δ}` of the separation condition.
pub fn separation_threshold(v1: u128, v2: u128, p: &Params) -> f64 {
    p.m_sep * (v1.min(v2) as f64).powf(p.a / p.delta)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartitionCheck {
    /// Parts are disjoint, non-empty, and their union is the input set.
    pub exact: bool,
    /// Pairs violating the separation condition.
    pub separation_violations: usize,
}

impl PartitionCheck {
    pub fn ok(&self) -> bool {
        self.exact && self.separation_violations == 0
    }
}

pub fn check_partition(a: &Region, partition: &Partition, p: &Params) -> PartitionCheck {
    let total: usize = partition.parts.iter().map(|q| q.len()).sum();
    let mut union = Region::empty(a.dim());
    for q in &partition.parts {
        union = union.union(q);
    }
    let exact = partition.parts.iter().all(|q| !q.is_empty()) && total == union.len() && union == *a;
    let vols: Vec<u128> = partition.parts.iter().map(volume_size).collect();
    let mut bad = 0;
    for i in 0..partition.len() {
        for k in i + 1..partition.len() {
            let dist = l1_distance(&partition.parts[i], &partition.parts[k]).unwrap_or(0);
            if !(dist as f64 > separation_threshold(vols[i], vols[k], p)) {
                bad += 1;
            }
        }
    }
    PartitionCheck { exact, separation_violations: bad }
}

/// The multiscale partition: at step `n ≥ 1`, components of the cube graph at
/// scale `r·n` whose covered set has volume at most `2^{rn(d+1)}` become parts.
pub fn gamma_r_partition(a: &Region, p: &Params) -> Result<Partition> {
    if a.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let d = a.dim() as f64;
    let mut rest = a.clone();
    let mut parts = Vec::new();
    let mut n = 1u32;
    while !rest.is_empty() {
        let scale = p.r * n;
        let g = cube_graph(&rest, scale, p.m_sep, p.a);
        let limit = (scale as f64 * (d + 1.0)).exp2();
        let mut removed = Vec::new();
        for covered in g.covered {
            if volume_size(&covered) as f64 <= limit {
                removed.push(covered);
            }
        }
        for q in &removed {
            rest = rest.difference(q);
        }
        parts.extend(removed.into_iter().map(|q| (q, n)));
        n += 1;
    }
    Ok(Partition::sorted(parts, Method::GammaR))
}

/// Restricted growth strings of length `n`: all set partitions of `0..n`.
pub fn set_partitions(n: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut a = vec![0u8; n];
    let mut maxes = vec![0u8; n];
    loop {
        out.push(a.clone());
        let mut i = n - 1;
        loop {
            if i == 0 {
                return out;
            }
            if a[i] <= maxes[i - 1] {
                a[i] += 1;
                let m = maxes[i - 1].max(a[i]);
                for k in i..n {
                    if k > i {
                        a[k] = 0;
                    }
                    maxes[k] = m;
                }
                break;
            }
            i -= 1;
        }
    }
}

fn blocks_of(rgs: &[u8]) -> Vec<u32> {
    let k = rgs.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut masks = vec![0u32; k];
    for (i, &b) in rgs.iter().enumerate() {
        masks[b as usize] |= 1 << i;
    }
    masks
}

fn mask_region(sites: &[Site], dim: usize, mask: u32) -> Region {
    Region::from_sites(dim, (0..sites.len()).filter(|i| mask >> i & 1 == 1).map(|i| sites[i]))
}

/// Every partition of `a` satisfying the separation condition, as block masks
/// over `a.sites()`.
pub fn valid_partitions(a: &Region, p: &Params) -> Result<Vec<Vec<u32>>> {
    let n = a.len();
    if n > FINEST_CAP {
        return Err(Error::Cap(format!("|A| = {n} exceeds the Bell-enumeration cap {FINEST_CAP}")));
    }
    let sites = a.sites();
    let mut vol = vec![0u128; 1 << n];
    for (mask, v) in vol.iter_mut().enumerate().skip(1) {
        *v = volume_size(&mask_region(sites, a.dim(), mask as u32));
    }
    let mut dist = vec![vec![0u64; n]; n];
    for i in 0..n {
        for k in 0..n {
            dist[i][k] = sites[i].l1(&sites[k]);
        }
    }
    let block_dist = |x: u32, y: u32| -> u64 {
        let mut best = u64::MAX;
        for i in 0..n {
            if x >> i & 1 == 0 {
                continue;
            }
            for k in 0..n {
                if y >> k & 1 == 1 {
                    best = best.min(dist[i][k]);
                }
            }
        }
        best
    };
    let mut out = Vec::new();
    for rgs in set_partitions(n) {
        let blocks = blocks_of(&rgs);
        let ok = (0..blocks.len()).all(|i| {
            (i + 1..blocks.len()).all(|k| {
                let t = separation_threshold(vol[blocks[i] as usize], vol[blocks[k] as usize], p);
                block_dist(blocks[i], blocks[k]) as f64 > t
            })
        });
        if ok {
            out.push(blocks);
        }
    }
    Ok(out)
}

/// Common refinement of all valid partitions of a set with at most
/// [`FINEST_CAP`] points.
pub fn finest_partition_bruteforce(a: &Region, p: &Params) -> Result<Partition> {
    if a.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let valid = valid_partitions(a, p)?;
    let n = a.len();
    // together[i] = sites sharing a block with i in every valid partition.
    let mut together = vec![(1u32 << n) - 1; n];
    for blocks in &valid {
        for &b in blocks {
            for (i, t) in together.iter_mut().enumerate() {
                if b >> i & 1 == 1 {
                    *t &= b;
                }
            }
        }
    }
    let mut seen = 0u32;
    let mut parts = Vec::new();
    for i in 0..n {
        if seen >> i & 1 == 1 {
            continue;
        }
        seen |= together[i];
        parts.push((mask_region(a.sites(), a.dim(), together[i]), 0));
    }
    Ok(Partition::sorted(parts, Method::FinestBruteforce))
}

/// Each part lies in a single connected component of every other part's complement.
pub fn check_single_component_property(partition: &Partition) -> bool {
    for (i, q) in partition.parts.iter().enumerate() {
        let vi = volume_interior(q);
        for (k, other) in partition.parts.iter().enumerate() {
            if i == k {
                continue;
            }
            let comp_of = |s: &Site| -> usize {
                vi.components.iter().position(|c| c.contains(s)).map_or(0, |c| c + 1)
            };
            let first = comp_of(&other.sites()[0]);
            if other.iter().any(|s| comp_of(s) != first) {
                return false;
            }
        }
    }
    true
}

pub fn partition(a: &Region, p: &Params, method: Method) -> Result<Partition> {
    match method {
        Method::GammaR => gamma_r_partition(a, p),
        Method::FinestBruteforce => finest_partition_bruteforce(a, p),
    }
}

/// Incorrect points: sites whose closed unit ball is not of constant sign.
pub fn boundary_of_config(sigma: &Configuration) -> Region {
    let d = sigma.region.dim();
    if sigma.region.is_empty() {
        return Region::empty(d);
    }
    let mut candidates: Vec<Site> = sigma.region.sites().to_vec();
    for x in sigma.region.iter() {
        candidates.extend(x.neighbors().filter(|y| !sigma.region.contains(y)));
    }
    candidates.sort_unstable();
    candidates.dedup();
    let v = candidates
        .into_iter()
        .filter(|x| {
            let s = sigma.spin(x);
            x.neighbors().any(|y| sigma.spin(&y) != s)
        })
        .collect();
    Region::from_sorted(d, v)
}

/// Inner boundary of a part-derived set as a bit mask over the volume's sites,
/// plus whether it reaches outside the volume (where the boundary sign holds).
#[derive(Clone, Debug, PartialEq, Eq)]
struct ReadSet {
    sites: Region,
}

/// Geometry of one part: everything about a contour except its labels.
#[derive(Clone, Debug)]
pub struct PartGeometry {
    pub support: Region,
    pub volume: Region,
    /// Interior components in canonical order (by smallest site).
    pub interior: Vec<Region>,
    /// Union of the external connected components of the support.
    pub external_support: Region,
    pub step: u32,
    /// `read[0]` for the exterior label, `read[k]` for interior component `k−1`.
    read: Vec<ReadSet>,
}

impl PartGeometry {
    pub fn new(support: Region, step: u32) -> PartGeometry {
        let vi = volume_interior(&support);
        let comps = support.components();
        let vols: Vec<Region> = comps.iter().map(|c| volume_interior(c).volume).collect();
        let mut ext = Vec::new();
        for (k, c) in comps.iter().enumerate() {
            let external = (0..comps.len())
                .all(|j| j == k || !vols[j].intersects(&vols[k]) || vols[j].is_subset(&vols[k]));
            if external {
                ext.extend(c.iter().copied());
            }
        }
        let external_support = Region::from_sites(support.dim(), ext);
        let mut read = vec![ReadSet { sites: inner_boundary(&volume_interior(&external_support).volume) }];
        for c in &vi.components {
            read.push(ReadSet { sites: inner_boundary(&volume_interior(c).volume) });
        }
        PartGeometry {
            support,
            volume: vi.volume,
            interior: vi.components,
            external_support,
            step,
            read,
        }
    }

    /// Number of label slots: the exterior plus each interior component.
    pub fn label_slots(&self) -> usize {
        self.read.len()
    }

    /// Read the labels of this part from `σ`; bit `k` set means slot `k` is `−1`.
    pub fn read_labels(&self, sigma: &Configuration) -> Result<u64> {
        let mut bits = 0u64;
        for (k, rs) in self.read.iter().enumerate() {
            let mut it = rs.sites.iter().map(|s| sigma.spin(s));
            let first = it.next().unwrap_or(1);
            if it.any(|s| s != first) {
                return Err(Error::InvalidContour(format!(
                    "sign not constant on read set {k} of the part at {:?}",
                    self.support.sites().first()
                )));
            }
            if first == -1 {
                bits |= 1 << k;
            }
        }
        Ok(bits)
    }

    pub fn contour(&self, label_bits: u64) -> Contour {
        let labels: Vec<i8> =
            (0..self.read.len()).map(|k| if label_bits >> k & 1 == 1 { -1 } else { 1 }).collect();
        let d = self.support.dim();
        let mut plus = Vec::new();
        let mut minus = Vec::new();
        for (k, c) in self.interior.iter().enumerate() {
            if labels[k + 1] == 1 {
                plus.extend(c.iter().copied());
            } else {
                minus.extend(c.iter().copied());
            }
        }
        Contour {
            support: self.support.clone(),
            volume: self.volume.clone(),
            interior: self.interior.clone(),
            labels,
            i_plus: Region::from_sites(d, plus),
            i_minus: Region::from_sites(d, minus),
            step: self.step,
        }
    }
}

/// A part of the incorrect points with its labels. Equality compares
/// support and labels only.
#[derive(Clone, Debug)]
pub struct Contour {
    pub support: Region,
    pub volume: Region,
    pub interior: Vec<Region>,
    /// `labels[0]` is the exterior label, `labels[k]` labels `interior[k−1]`.
    pub labels: Vec<i8>,
    pub i_plus: Region,
    pub i_minus: Region,
    /// Removal step in the multiscale partition (0 if not from it).
    pub step: u32,
}

impl PartialEq for Contour {
    fn eq(&self, other: &Contour) -> bool {
        self.support == other.support && self.labels == other.labels
    }
}

impl Eq for Contour {}

impl Contour {
    /// Rebuild a contour from its support and labels.
    pub fn from_support(support: Region, labels: &[i8], step: u32) -> Result<Contour> {
        let g = PartGeometry::new(support, step);
        if labels.len() != g.label_slots() {
            return Err(Error::InvalidContour(format!(
                "{} labels given for {} slots",
                labels.len(),
                g.label_slots()
            )));
        }
        let bits = labels.iter().enumerate().fold(0u64, |b, (k, &l)| if l == -1 { b | 1 << k } else { b });
        Ok(g.contour(bits))
    }

    pub fn size(&self) -> usize {
        self.support.len()
    }

    pub fn external_label(&self) -> i8 {
        self.labels[0]
    }

    pub fn interior(&self) -> Region {
        self.volume.difference(&self.support)
    }

    pub fn key(&self) -> (Region, Vec<i8>) {
        (self.support.clone(), self.labels.clone())
    }

    /// One-line text form: `support=[(x,y);...] labels=[(0,+1);(1,-1)]`.
    pub fn serialize(&self) -> String {
        self.to_string()
    }

    pub fn parse(line: &str) -> Result<Contour> {
        let bad = |m: &str| Error::Parse(format!("{m} in '{line}'"));
        let line = line.trim();
        let rest = line.strip_prefix("support=[").ok_or_else(|| bad("missing support"))?;
        let (sup, rest) = rest.split_once(']').ok_or_else(|| bad("unterminated support"))?;
        let rest = rest.trim().strip_prefix("labels=[").ok_or_else(|| bad("missing labels"))?;
        let (lab, _) = rest.split_once(']').ok_or_else(|| bad("unterminated labels"))?;
        let parse_tuple = |t: &str| -> Result<Vec<i32>> {
            let t = t.trim().strip_prefix('(').and_then(|t| t.strip_suffix(')')).ok_or_else(|| bad("bad tuple"))?;
            t.split(',').map(|x| x.trim().parse::<i32>().map_err(|_| bad("bad integer"))).collect()
        };
        let mut sites = Vec::new();
        for t in sup.split(';').filter(|t| !t.trim().is_empty()) {
            sites.push(Site::new(&parse_tuple(t)?));
        }
        let d = sites.first().ok_or_else(|| bad("empty support"))?.dim();
        if sites.iter().any(|s| s.dim() != d) {
            return Err(bad("mixed dimensions"));
        }
        let mut labels = BTreeMap::new();
        for t in lab.split(';').filter(|t| !t.trim().is_empty()) {
            let v = parse_tuple(t)?;
            if v.len() != 2 || !(v[1] == 1 || v[1] == -1) || v[0] < 0 {
                return Err(bad("bad label"));
            }
            labels.insert(v[0] as usize, v[1] as i8);
        }
        let labels: Vec<i8> = labels.into_values().collect();
        Contour::from_support(Region::from_sites(d, sites), &labels, 0)
    }
}

impl fmt::Display for Contour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "support=[")?;
        for (k, s) in self.support.iter().enumerate() {
            if k > 0 {
                write!(f, ";")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "] labels=[")?;
        for (k, l) in self.labels.iter().enumerate() {
            if k > 0 {
                write!(f, ";")?;
            }
            write!(f, "({k},{:+})", l)?;
        }
        write!(f, "]")
    }
}

/// Label a part of `∂σ`, checking that every read set has constant sign.
pub fn label_contour(sigma: &Configuration, part: &Region) -> Result<Contour> {
    let g = PartGeometry::new(part.clone(), 0);
    Ok(g.contour(g.read_labels(sigma)?))
}

#[derive(Clone, Debug)]
pub struct ContourFamily {
    pub contours: Vec<Contour>,
    pub external: Vec<bool>,
    /// Exterior label shared by the external contours (the boundary sign).
    pub origin_label: i8,
}

impl ContourFamily {
    pub fn len(&self) -> usize {
        self.contours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contours.is_empty()
    }

    pub fn position(&self, gamma: &Contour) -> Option<usize> {
        self.contours.iter().position(|c| c.support == gamma.support && c.labels == gamma.labels)
    }
}

/// External flags: a part is external unless its external support lies in
/// another part's volume.
fn external_flags(parts: &[PartGeometry]) -> Vec<bool> {
    (0..parts.len())
        .map(|i| {
            !(0..parts.len()).any(|k| k != i && parts[i].external_support.is_subset(&parts[k].volume))
        })
        .collect()
}

pub fn contours_of(sigma: &Configuration, p: &Params, method: Method) -> Result<ContourFamily> {
    let a = boundary_of_config(sigma);
    if a.is_empty() {
        return Ok(ContourFamily {
            contours: Vec::new(),
            external: Vec::new(),
            origin_label: sigma.boundary.sign(),
        });
    }
    let part = partition(&a, p, method)?;
    let geoms: Vec<PartGeometry> =
        part.parts.into_iter().zip(part.steps).map(|(q, n)| PartGeometry::new(q, n)).collect();
    let external = external_flags(&geoms);
    let mut contours = Vec::with_capacity(geoms.len());
    for g in &geoms {
        contours.push(g.contour(g.read_labels(sigma)?));
    }
    Ok(ContourFamily { contours, external, origin_label: sigma.boundary.sign() })
}

/// Erase a contour: flip `I₋`, set the support to `+1`, keep everything else.
pub fn erase_contour(sigma: &Configuration, gamma: &Contour, p: &Params) -> Result<Configuration> {
    let fam = contours_of(sigma, p, Method::GammaR)?;
    if fam.position(gamma).is_none() {
        return Err(Error::InvalidContour("γ is not a contour of σ".into()));
    }
    apply_erasure(sigma, gamma)
}

/// The erasing map without the membership check.
pub fn apply_erasure(sigma: &Configuration, gamma: &Contour) -> Result<Configuration> {
    let mut out = sigma.clone();
    for s in gamma.i_minus.iter() {
        match sigma.region.index_of(s) {
            Some(i) => out.spins[i] = -out.spins[i],
            None => {
                return Err(Error::InvalidContour(format!(
                    "erasure would flip {s}, outside the volume"
                )))
            }
        }
    }
    for s in gamma.support.iter() {
        if let Some(i) = sigma.region.index_of(s) {
            out.spins[i] = 1;
        } else if sigma.boundary != Boundary::Plus {
            return Err(Error::InvalidContour(format!("support site {s} lies in the minus boundary")));
        }
    }
    Ok(out)
}

/// `F_B = Σ_{x∈B, y∉B} J_xy = |B|·J·c_α − Σ_{x≠y∈B} J_xy`.
pub fn interaction_f(b: &Region, p: &Params) -> Result<f64> {
    let c = lattice_constant(p)?.c_alpha;
    Ok(interaction_f_with(b, p, c))
}

pub fn interaction_f_with(b: &Region, p: &Params, c_alpha: f64) -> f64 {
    let s = b.sites();
    let mut inner = 0.0;
    for i in 0..s.len() {
        for k in i + 1..s.len() {
            inner += p.j * (s[i].l1(&s[k]) as f64).powf(-p.alpha);
        }
    }
    s.len() as f64 * p.j * c_alpha - 2.0 * inner
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeierlsGap {
    pub delta_h: f64,
    /// `c₂·cost`, absent when `c₂` is undefined.
    pub rhs: Option<f64>,
    pub ratio: f64,
    /// `|γ| + F_{I₋} + F_sp`.
    pub cost: f64,
}

/// Energy released by erasing an external contour at zero field, against the
/// lower bound `c₂(|γ| + F_{I₋} + F_sp)`.
pub fn peierls_gap(sigma: &Configuration, gamma: &Contour, p: &Params, consts: &ConstantTable) -> Result<PeierlsGap> {
    let p0 = Params { eps: 0.0, ..p.clone() };
    let ham = Hamiltonian::new(&sigma.region, &p0)?;
    peierls_gap_with(&ham, sigma, gamma, &p0, consts)
}

pub fn peierls_gap_with(
    ham: &Hamiltonian,
    sigma: &Configuration,
    gamma: &Contour,
    p: &Params,
    consts: &ConstantTable,
) -> Result<PeierlsGap> {
    let erased = apply_erasure(sigma, gamma)?;
    let zero = vec![0.0; sigma.region.len()];
    let delta_h = ham.rel_energy(&sigma.spins, sigma.boundary, &zero, 0.0)
        - ham.rel_energy(&erased.spins, erased.boundary, &zero, 0.0);
    let c = ham.c_alpha.c_alpha;
    let cost = gamma.size() as f64
        + interaction_f_with(&gamma.i_minus, p, c)
        + interaction_f_with(&gamma.support, p, c);
    Ok(PeierlsGap { delta_h, rhs: consts.c2.map(|c2| c2 * cost), ratio: delta_h / cost, cost })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InequalityReport {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl InequalityReport {
    fn new(name: &'static str, lhs: f64, rhs: f64) -> InequalityReport {
        InequalityReport { name, lhs, rhs, pass: lhs <= rhs * (1.0 + 1e-12) + 1e-12 }
    }

    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// Interaction bounds between a contour's support or minus interior and the
/// volumes of the other contours of `σ`.
pub fn check_aux_interaction_bounds(
    sigma: &Configuration,
    gamma: &Contour,
    p: &Params,
    consts: &ConstantTable,
) -> Result<Vec<InequalityReport>> {
    let kappa1 = consts
        .kappa1
        .ok_or_else(|| Error::Undefined("κ¹ undefined for these exponents".into()))?;
    let kappa2 = consts.kappa2.unwrap();
    let fam = contours_of(sigma, p, Method::GammaR)?;
    let me = fam.position(gamma).ok_or_else(|| Error::InvalidContour("γ is not a contour of σ".into()))?;
    let c = consts.c_alpha;
    let j = |x: &Site, y: &Site| crate::model::coupling(x, y, p);
    let cross = |b: &Region, w: &Region| -> f64 {
        b.iter().map(|x| w.iter().map(|y| j(x, y)).sum::<f64>()).sum()
    };
    let union_volumes = |pred: &dyn Fn(&Contour) -> bool| -> Region {
        let mut u = Region::empty(p.d);
        for (k, g) in fam.contours.iter().enumerate() {
            if k != me && pred(g) {
                u = u.union(&g.volume);
            }
        }
        u
    };
    let gap = p.decay_gap();
    let m = p.m_sep;
    let vol_gamma = gamma.volume.len() as f64;
    let expo = p.a * (p.d as f64 - p.alpha) / (p.d as f64 + 1.0);
    let mut out = Vec::new();
    for (name, b) in [("aux_support", &gamma.support), ("aux_minus_interior", &gamma.i_minus)] {
        if b.is_empty() {
            continue;
        }
        let w = union_volumes(&|g: &Contour| !g.support.intersects(b));
        let lhs = cross(b, &w);
        let fb = interaction_f_with(b, p, c);
        let rhs = kappa1
            * (b.len() as f64 / m.powf(p.alpha - p.d as f64) * vol_gamma.powf(expo) + fb / m);
        out.push(InequalityReport::new(name, lhs, rhs));
    }
    let f_sp = interaction_f_with(&gamma.support, p, c);
    let w_all = union_volumes(&|_| true);
    out.push(InequalityReport::new("cor_support", cross(&gamma.support, &w_all), kappa2 / m.powf(gap) * f_sp));
    if !gamma.i_minus.is_empty() {
        let f_i = interaction_f_with(&gamma.i_minus, p, c);
        let im = &gamma.i_minus;
        let w_ext = union_volumes(&|g: &Contour| !g.support.is_subset(im));
        out.push(InequalityReport::new("cor_minus_exterior", cross(im, &w_ext), kappa2 / m.powf(gap) * f_i));
        // Σ_{x∉I₋, y∈W} J_xy = Σ_{y∈W} (J·c_α − Σ_{x∈I₋∖{y}} J_xy)
        let w_int = union_volumes(&|g: &Contour| g.support.is_subset(im));
        let lhs: f64 = w_int
            .iter()
            .map(|y| p.j * c - im.iter().map(|x| j(x, y)).sum::<f64>())
            .sum();
        out.push(InequalityReport::new("cor_minus_interior", lhs, kappa2 * f_i / m));
    }
    Ok(out)
}

/// Bit-parallel set operations on a grid of at most 128 cells.
struct MaskGrid {
    grid: Grid,
    full: u128,
    border: u128,
    /// Cells with an in-grid `+1` neighbour along each axis.
    plus: Vec<u128>,
    strides: Vec<usize>,
}

impl MaskGrid {
    fn new(grid: Grid) -> Option<MaskGrid> {
        let n = grid.len();
        if n > 128 {
            return None;
        }
        let full = if n == 128 { u128::MAX } else { (1u128 << n) - 1 };
        let d = grid.dim();
        let mut border = 0u128;
        let mut plus = vec![0u128; d];
        for idx in 0..n {
            if grid.on_border(idx) {
                border |= 1 << idx;
            }
            for (ax, pm) in plus.iter_mut().enumerate() {
                if grid.coord(idx, ax) + 1 < grid.extent(ax) {
                    *pm |= 1 << idx;
                }
            }
        }
        let strides = (0..d).map(|ax| grid.stride(ax)).collect();
        Some(MaskGrid { grid, full, border, plus, strides })
    }

    #[inline]
    fn expand(&self, x: u128) -> u128 {
        let mut out = x;
        for (pm, &s) in self.plus.iter().zip(&self.strides) {
            out |= (x & pm) << s;
            out |= (x >> s) & pm;
        }
        out
    }

    fn flood(&self, seed: u128, allowed: u128) -> u128 {
        let mut cur = seed & allowed;
        loop {
            let next = self.expand(cur) & allowed;
            if next == cur {
                return cur;
            }
            cur = next;
        }
    }

    /// `V(S)`: everything not reachable from the border avoiding `S`.
    fn fill(&self, set: u128) -> u128 {
        let free = self.full & !set;
        self.full & !self.flood(self.border & free, free)
    }

    fn inner_boundary(&self, set: u128) -> u128 {
        set & self.expand(self.full & !set)
    }

    /// Connected components ordered by smallest cell.
    fn components(&self, mut set: u128) -> Vec<u128> {
        let mut out = Vec::new();
        while set != 0 {
            let c = self.flood(set & set.wrapping_neg(), set);
            out.push(c);
            set &= !c;
        }
        out
    }

    fn region(&self, mut set: u128) -> Region {
        let mut v = Vec::with_capacity(set.count_ones() as usize);
        while set != 0 {
            let i = set.trailing_zeros() as usize;
            v.push(self.grid.site(i));
            set &= set - 1;
        }
        Region::from_sorted(self.grid.dim(), v)
    }

    /// Geometry of `set` taken as a single part.
    fn part(&self, set: u128, step: u32) -> PartGeometry {
        let volume = self.fill(set);
        let interior = self.components(volume & !set);
        let comps = self.components(set);
        let vols: Vec<u128> = comps.iter().map(|&c| self.fill(c)).collect();
        let mut ext = 0u128;
        for (k, &c) in comps.iter().enumerate() {
            if (0..comps.len()).all(|j| j == k || vols[j] & vols[k] == 0 || vols[j] & !vols[k] == 0) {
                ext |= c;
            }
        }
        let mut read = vec![ReadSet { sites: self.region(self.inner_boundary(self.fill(ext))) }];
        for &c in &interior {
            read.push(ReadSet { sites: self.region(self.inner_boundary(self.fill(c))) });
        }
        PartGeometry {
            support: self.region(set),
            volume: self.region(volume),
            interior: interior.iter().map(|&c| self.region(c)).collect(),
            external_support: self.region(ext),
            step,
            read,
        }
    }
}

/// Whether every set of incorrect points of a configuration on `region` is a
/// single multiscale part removed at step 1: all cubes meeting the window are
/// joined at scale `r`, and every volume fits under `2^{r(d+1)}`.
fn single_part_window(region: &Region, p: &Params) -> bool {
    let (lo, hi) = region.bbox().unwrap();
    let d = region.dim();
    let diam: u64 = (0..d).map(|i| (hi.get(i) - lo.get(i) + 2) as u64).sum();
    let cells: f64 = (0..d).map(|i| (hi.get(i) - lo.get(i) + 3) as f64).product();
    let r = p.r as f64;
    diam as f64 <= p.m_sep * (p.a * r).exp2() && cells <= (r * (d as f64 + 1.0)).exp2()
}

/// Per-configuration view handed to [`ConfigSweep`] visitors.
pub struct SweepItem<'a> {
    /// Bit `i` set means site `i` of the region is `−1`.
    pub sigma: u64,
    /// Identifier of the cached geometry (stable within one chunk).
    pub geometry_id: u64,
    pub geometry: &'a FamilyGeometry,
    /// Label bits per part, see [`PartGeometry::contour`].
    pub labels: &'a [u64],
}

/// Partition and geometry of one set of incorrect points.
#[derive(Debug)]
pub struct FamilyGeometry {
    pub boundary: Region,
    pub parts: Vec<PartGeometry>,
    pub external: Vec<bool>,
    /// Read sets as masks over region indices, with a flag for sites outside.
    masks: Vec<Vec<(u64, bool)>>,
}

struct Cell {
    ball: u64,
    ball_inside: bool,
}

/// Exhaustive sweep over plus-boundary configurations of a small volume,
/// caching contour geometry per set of incorrect points.
pub struct ConfigSweep {
    region: Region,
    p: Params,
    method: Method,
    grid: Grid,
    cells: Vec<Cell>,
    words: usize,
    /// Set when every subset of the window is a single step-1 part.
    fast: Option<MaskGrid>,
}

const CACHE_LIMIT: usize = 1 << 18;

impl ConfigSweep {
    pub fn new(region: &Region, p: &Params, method: Method) -> Result<ConfigSweep> {
        if region.len() > 64 {
            return Err(Error::Cap(format!("sweep region of {} sites exceeds 64", region.len())));
        }
        if region.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let grid = Grid::around(region, 2);
        let cells = (0..grid.len())
            .map(|idx| {
                let x = grid.site(idx);
                let mut ball = 0u64;
                let mut inside = true;
                for y in std::iter::once(x).chain(x.neighbors()) {
                    match region.index_of(&y) {
                        Some(i) => ball |= 1 << i,
                        None => inside = false,
                    }
                }
                Cell { ball, ball_inside: inside }
            })
            .collect();
        let words = grid.len().div_ceil(64);
        let fast = if method == Method::GammaR && single_part_window(region, p) {
            MaskGrid::new(grid.clone())
        } else {
            None
        };
        Ok(ConfigSweep { region: region.clone(), p: p.clone(), method, grid, cells, words, fast })
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    fn boundary_bits(&self, sigma: u64, out: &mut [u64]) {
        out.iter_mut().for_each(|w| *w = 0);
        for (idx, c) in self.cells.iter().enumerate() {
            let m = sigma & c.ball;
            if m != 0 && !(c.ball_inside && m == c.ball) {
                out[idx / 64] |= 1 << (idx % 64);
            }
        }
    }

    fn build(&self, bits: &[u64]) -> Result<FamilyGeometry> {
        let d = self.region.dim();
        let mut v = Vec::new();
        for idx in 0..self.grid.len() {
            if bits[idx / 64] >> (idx % 64) & 1 == 1 {
                v.push(self.grid.site(idx));
            }
        }
        let boundary = Region::from_sorted(d, v);
        if boundary.is_empty() {
            return Ok(FamilyGeometry { boundary, parts: Vec::new(), external: Vec::new(), masks: Vec::new() });
        }
        let parts: Vec<PartGeometry> = match &self.fast {
            Some(mg) => {
                let set = bits[0] as u128 | (bits.get(1).copied().unwrap_or(0) as u128) << 64;
                vec![mg.part(set, 1)]
            }
            None => {
                let part = partition(&boundary, &self.p, self.method)?;
                part.parts.into_iter().zip(part.steps).map(|(q, n)| PartGeometry::new(q, n)).collect()
            }
        };
        let external = external_flags(&parts);
        let masks = parts
            .iter()
            .map(|g| {
                g.read
                    .iter()
                    .map(|rs| {
                        let mut m = 0u64;
                        let mut outside = false;
                        for s in rs.sites.iter() {
                            match self.region.index_of(s) {
                                Some(i) => m |= 1 << i,
                                None => outside = true,
                            }
                        }
                        (m, outside)
                    })
                    .collect()
            })
            .collect();
        Ok(FamilyGeometry { boundary, parts, external, masks })
    }

    /// Visit every configuration whose minus sites lie in `free` (region
    /// indices). Chunks run in parallel and are merged in order.
    pub fn run<A, I, V, M>(&self, free: &[usize], init: I, visit: V, merge: M) -> Result<A>
    where
        A: Send,
        I: Fn() -> A + Sync,
        V: Fn(&mut A, &SweepItem<'_>) -> Result<()> + Sync,
        M: Fn(&mut A, A),
    {
        self.run_mapped(free, init, visit, |a| a, merge)
    }

    /// As [`ConfigSweep::run`], with each chunk's accumulator passed through
    /// `finish` before it is kept for merging.
    pub fn run_mapped<A, B, I, V, F, M>(&self, free: &[usize], init: I, visit: V, finish: F, merge: M) -> Result<B>
    where
        B: Send,
        I: Fn() -> A + Sync,
        V: Fn(&mut A, &SweepItem<'_>) -> Result<()> + Sync,
        F: Fn(A) -> B + Sync,
        M: Fn(&mut B, B),
    {
        let nf = free.len();
        if nf > SWEEP_CAP {
            return Err(Error::Cap(format!("sweep over {nf} free sites exceeds {SWEEP_CAP}")));
        }
        let top = nf.min(5);
        let low = nf - top;
        let parts: Vec<Result<B>> = (0..1u64 << top)
            .into_par_iter()
            .map(|chunk| {
                let mut acc = init();
                let mut cache: FxHashMap<Vec<u64>, (u64, Arc<FamilyGeometry>)> = FxHashMap::default();
                let mut next_id = chunk << 40;
                let mut bits = vec![0u64; self.words];
                let mut labels = Vec::new();
                let mut base = 0u64;
                for b in 0..top {
                    if chunk >> b & 1 == 1 {
                        base |= 1 << free[low + b];
                    }
                }
                for k in 0u64..1 << low {
                    let mut sigma = base;
                    for (b, &i) in free[..low].iter().enumerate() {
                        if k >> b & 1 == 1 {
                            sigma |= 1 << i;
                        }
                    }
                    self.boundary_bits(sigma, &mut bits);
                    let (id, geom) = match cache.get(&bits) {
                        Some((id, g)) => (*id, g.clone()),
                        None => {
                            if cache.len() >= CACHE_LIMIT {
                                cache.clear();
                            }
                            let g = Arc::new(self.build(&bits)?);
                            let id = next_id;
                            next_id += 1;
                            cache.insert(bits.clone(), (id, g.clone()));
                            (id, g)
                        }
                    };
                    labels.clear();
                    for (pi, pm) in geom.masks.iter().enumerate() {
                        let mut lb = 0u64;
                        for (k, &(m, outside)) in pm.iter().enumerate() {
                            let hit = sigma & m;
                            if hit == 0 {
                                continue;
                            }
                            if !outside && hit == m {
                                lb |= 1 << k;
                            } else {
                                return Err(Error::InvalidContour(format!(
                                    "sign not constant on read set {k} of part {pi} (σ mask {sigma:#x})"
                                )));
                            }
                        }
                        labels.push(lb);
                    }
                    visit(&mut acc, &SweepItem { sigma, geometry_id: id, geometry: &geom, labels: &labels })?;
                }
                Ok(finish(acc))
            })
            .collect();
        let mut it = parts.into_iter();
        let mut acc = it.next().unwrap()?;
        for part in it {
            merge(&mut acc, part?);
        }
        Ok(acc)
    }

    /// Region indices whose whole unit ball lies in the region.
    pub fn core_sites(&self) -> Vec<usize> {
        let inner = inner_boundary(&self.region);
        (0..self.region.len()).filter(|&i| !inner.contains(&self.region.sites()[i])).collect()
    }

    pub fn all_sites(&self) -> Vec<usize> {
        (0..self.region.len()).collect()
    }
}

/// Contours `γ` forming a one-element family of some plus-boundary
/// configuration on `Λ`, with `V(γ) ⊂ Λ`, the origin in `V(γ)` and, if
/// given, `|γ| = n`; sorted by (support, labels).
///
/// Only configurations with `−1` away from the inner boundary can have all
/// incorrect points inside `Λ`, so only those are swept.
pub fn enumerate_c0(lambda: &Region, n: Option<usize>, p: &Params) -> Result<Vec<Contour>> {
    let sweep = ConfigSweep::new(lambda, p, Method::GammaR)?;
    let free = sweep.core_sites();
    if free.len() > p.exact_cap {
        return Err(Error::ExactCap { size: free.len(), cap: p.exact_cap });
    }
    let origin = Site::origin(lambda.dim());
    let collected = sweep.run(
        &free,
        BTreeMap::<(Region, Vec<i8>), Contour>::new,
        |acc, item| {
            let g = item.geometry;
            if g.parts.len() == 1 {
                let part = &g.parts[0];
                let size_ok = n.is_none_or(|n| part.support.len() == n);
                if size_ok && part.volume.contains(&origin) && part.volume.is_subset(lambda) {
                    let c = part.contour(item.labels[0]);
                    acc.entry(c.key()).or_insert(c);
                }
            }
            Ok(())
        },
        |a, b| {
            for (k, v) in b {
                a.entry(k).or_insert(v);
            }
        },
    )?;
    Ok(collected.into_values().collect())
}

/// Visit each contour of each plus-boundary configuration on `Λ` with a
/// witness minus mask. Repeats are skipped within a chunk of the sweep, so a
/// contour may be visited more than once overall.
pub fn for_each_contour<A, I, V, M>(lambda: &Region, p: &Params, method: Method, init: I, visit: V, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, &Contour, u64) -> Result<()> + Sync,
    M: Fn(&mut A, A),
{
    let sweep = ConfigSweep::new(lambda, p, method)?;
    let free = sweep.all_sites();
    sweep.run_mapped(
        &free,
        || (FxHashSet::<(u64, usize, u64)>::default(), init()),
        |acc, item| {
            for (k, part) in item.geometry.parts.iter().enumerate() {
                if acc.0.insert((item.geometry_id, k, item.labels[k])) {
                    visit(&mut acc.1, &part.contour(item.labels[k]), item.sigma)?;
                }
            }
            Ok(())
        },
        |acc| acc.1,
        merge,
    )
}

/// Every distinct contour on `Λ`, sorted by (support, labels), each with
/// one witness minus mask. Memory grows with the count; meant for volumes
/// up to 4×4.
pub fn distinct_contours(lambda: &Region, p: &Params, method: Method) -> Result<Vec<(Contour, u64)>> {
    let found = for_each_contour(
        lambda,
        p,
        method,
        BTreeMap::<(Region, Vec<i8>), (Contour, u64)>::new,
        |acc, c, sigma| {
            acc.entry(c.key()).or_insert_with(|| (c.clone(), sigma));
            Ok(())
        },
        |a, b| {
            for (k, v) in b {
                a.entry(k).or_insert(v);
            }
        },
    )?;
    Ok(found.into_values().collect())
}
