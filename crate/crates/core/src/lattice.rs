//! Discrete geometry of Z^d: sites, finite regions, dyadic cubes and their
//! coverings, boundaries, volumes and axis projections.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 4;

/// Scales above this are clamped when converting cube extents to integers;
/// every site coordinate fits in an `i32`, so larger cubes are indistinguishable.
const SCALE_CLAMP: u32 = 100;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    c: [i32; MAX_DIM],
    dim: u8,
}

impl Site {
    pub fn new(coords: &[i32]) -> Site {
        assert!(
            !coords.is_empty() && coords.len() <= MAX_DIM,
            "dimension must be in 1..={MAX_DIM}"
        );
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site { c, dim: coords.len() as u8 }
    }

    pub fn origin(d: usize) -> Site {
        Site::new(&vec![0; d])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i32] {
        &self.c[..self.dim as usize]
    }

    #[inline]
    pub fn get(&self, axis: usize) -> i32 {
        self.c[axis]
    }

    #[inline]
    pub fn l1(&self, other: &Site) -> u64 {
        let mut s = 0u64;
        for i in 0..self.dim() {
            s += (self.c[i] as i64 - other.c[i] as i64).unsigned_abs();
        }
        s
    }

    pub fn l1_norm(&self) -> u64 {
        self.coords().iter().map(|&x| (x as i64).unsigned_abs()).sum()
    }

    #[inline]
    pub fn shifted(&self, axis: usize, delta: i32) -> Site {
        let mut s = *self;
        s.c[axis] += delta;
        s
    }

    pub fn translate(&self, by: &Site) -> Site {
        let mut s = *self;
        for i in 0..self.dim() {
            s.c[i] += by.c[i];
        }
        s
    }

    /// The 2d nearest neighbours.
    pub fn neighbors(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.dim()).flat_map(move |i| [self.shifted(i, -1), self.shifted(i, 1)])
    }

    /// Anchor of the grid cube of scale `m` containing this site.
    #[inline]
    pub fn cube_anchor(&self, m: u32) -> Site {
        let mut s = *self;
        let m = m.min(31);
        for i in 0..self.dim() {
            s.c[i] = self.c[i] >> m;
        }
        s
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, x) in self.coords().iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A finite subset of Z^d, stored sorted and without duplicates.
///
/// Cloning is cheap: the site list is shared.
#[derive(Clone)]
pub struct Region {
    dim: usize,
    sites: Arc<[Site]>,
    bbox: Option<(Site, Site)>,
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.sites == other.sites
    }
}

impl Eq for Region {}

impl std::hash::Hash for Region {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.dim.hash(state);
        self.sites.hash(state);
    }
}

impl PartialOrd for Region {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Region {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sites.cmp(&other.sites)
    }
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.sites.iter()).finish()
    }
}

impl Region {
    pub fn empty(dim: usize) -> Region {
        Region { dim, sites: Arc::from(Vec::new()), bbox: None }
    }

    pub fn from_sites<I: IntoIterator<Item = Site>>(dim: usize, sites: I) -> Region {
        let mut v: Vec<Site> = sites.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Region::from_sorted(dim, v)
    }

    /// Caller guarantees `v` is sorted and deduplicated.
    pub(crate) fn from_sorted(dim: usize, v: Vec<Site>) -> Region {
        debug_assert!(v.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(v.iter().all(|s| s.dim() == dim));
        let bbox = bbox_of(dim, &v);
        Region { dim, sites: Arc::from(v), bbox }
    }

    pub fn single(s: Site) -> Region {
        Region::from_sorted(s.dim(), vec![s])
    }

    /// Axis-aligned box with inclusive corners.
    pub fn boxed(lo: &[i32], hi: &[i32]) -> Region {
        assert_eq!(lo.len(), hi.len());
        let d = lo.len();
        let mut out = Vec::new();
        let mut cur = lo.to_vec();
        if lo.iter().zip(hi).any(|(a, b)| a > b) {
            return Region::empty(d);
        }
        loop {
            out.push(Site::new(&cur));
            let mut k = d;
            loop {
                if k == 0 {
                    return Region::from_sites(d, out);
                }
                k -= 1;
                if cur[k] < hi[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = lo[k];
            }
        }
    }

    /// Box of the given side length whose inner part contains the origin
    /// as centrally as possible: coordinates in `[-side/2, side - 1 - side/2]`.
    pub fn centered_box(d: usize, side: u32) -> Region {
        let side = side as i32;
        let lo = -(side / 2);
        let hi = side - 1 + lo;
        Region::boxed(&vec![lo; d], &vec![hi; d])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    #[inline]
    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Site> {
        self.sites.iter()
    }

    pub fn bbox(&self) -> Option<(Site, Site)> {
        self.bbox
    }

    #[inline]
    pub fn contains(&self, s: &Site) -> bool {
        if let Some((lo, hi)) = &self.bbox {
            for i in 0..self.dim {
                if s.c[i] < lo.c[i] || s.c[i] > hi.c[i] {
                    return false;
                }
            }
            self.sites.binary_search(s).is_ok()
        } else {
            false
        }
    }

    pub fn index_of(&self, s: &Site) -> Option<usize> {
        self.sites.binary_search(s).ok()
    }

    pub fn union(&self, other: &Region) -> Region {
        let mut v = Vec::with_capacity(self.len() + other.len());
        let (a, b) = (&self.sites[..], &other.sites[..]);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                Ordering::Less => {
                    v.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    v.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    v.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        v.extend_from_slice(&a[i..]);
        v.extend_from_slice(&b[j..]);
        Region::from_sorted(self.dim, v)
    }

    pub fn intersection(&self, other: &Region) -> Region {
        let v = self.sites.iter().copied().filter(|s| other.contains(s)).collect();
        Region::from_sorted(self.dim, v)
    }

    pub fn difference(&self, other: &Region) -> Region {
        let v = self.sites.iter().copied().filter(|s| !other.contains(s)).collect();
        Region::from_sorted(self.dim, v)
    }

    pub fn symmetric_difference_len(&self, other: &Region) -> usize {
        let common = self.sites.iter().filter(|s| other.contains(s)).count();
        self.len() + other.len() - 2 * common
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.sites.iter().all(|s| other.contains(s))
    }

    pub fn intersects(&self, other: &Region) -> bool {
        let (small, big) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.sites.iter().any(|s| big.contains(s))
    }

    pub fn translate(&self, by: &Site) -> Region {
        Region::from_sites(self.dim, self.sites.iter().map(|s| s.translate(by)))
    }

    /// ℓ1 diameter, 0 for a single site or the empty set.
    pub fn diameter(&self) -> u64 {
        let mut best = 0;
        for (k, a) in self.sites.iter().enumerate() {
            for b in &self.sites[k + 1..] {
                best = best.max(a.l1(b));
            }
        }
        best
    }

    /// Nearest-neighbour connected components, each sorted, ordered by smallest site.
    pub fn components(&self) -> Vec<Region> {
        if self.is_empty() {
            return Vec::new();
        }
        let grid = Grid::around(self, 0);
        let mut label = vec![usize::MAX; grid.len()];
        let mut inside = vec![false; grid.len()];
        for s in self.iter() {
            inside[grid.index(s).unwrap()] = true;
        }
        let mut comps = Vec::new();
        let mut buf = Vec::new();
        for s in self.iter() {
            let start = grid.index(s).unwrap();
            if label[start] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut members = Vec::new();
            let mut queue = VecDeque::from([start]);
            label[start] = id;
            while let Some(c) = queue.pop_front() {
                members.push(grid.site(c));
                grid.neighbors(c, &mut buf);
                for &n in &buf {
                    if inside[n] && label[n] == usize::MAX {
                        label[n] = id;
                        queue.push_back(n);
                    }
                }
            }
            comps.push(Region::from_sites(self.dim, members));
        }
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.len() <= 1 || self.components().len() == 1
    }
}

fn bbox_of(dim: usize, v: &[Site]) -> Option<(Site, Site)> {
    let first = v.first()?;
    let (mut lo, mut hi) = (*first, *first);
    for s in v {
        for i in 0..dim {
            lo.c[i] = lo.c[i].min(s.c[i]);
            hi.c[i] = hi.c[i].max(s.c[i]);
        }
    }
    Some((lo, hi))
}

/// Dense row-major indexing of an axis-aligned box, used for flood fills.
#[derive(Clone, Debug)]
pub struct Grid {
    dim: usize,
    lo: [i32; MAX_DIM],
    ext: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
    len: usize,
}

impl Grid {
    pub fn new(lo: &Site, hi: &Site) -> Grid {
        let dim = lo.dim();
        let mut ext = [1usize; MAX_DIM];
        let mut strides = [0usize; MAX_DIM];
        let mut len = 1usize;
        for i in (0..dim).rev() {
            ext[i] = (hi.c[i] - lo.c[i] + 1) as usize;
            strides[i] = len;
            len *= ext[i];
        }
        Grid { dim, lo: lo.c, ext, strides, len }
    }

    /// Bounding box of `r` inflated by `margin` on every side.
    pub fn around(r: &Region, margin: i32) -> Grid {
        let (mut lo, mut hi) = r.bbox().expect("grid around empty region");
        for i in 0..r.dim() {
            lo.c[i] -= margin;
            hi.c[i] += margin;
        }
        Grid::new(&lo, &hi)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn index(&self, s: &Site) -> Option<usize> {
        let mut idx = 0;
        for i in 0..self.dim {
            let off = s.c[i] - self.lo[i];
            if off < 0 || off as usize >= self.ext[i] {
                return None;
            }
            idx += off as usize * self.strides[i];
        }
        Some(idx)
    }

    #[inline]
    pub fn extent(&self, axis: usize) -> usize {
        self.ext[axis]
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    #[inline]
    pub fn coord(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.ext[axis]
    }

    pub fn site(&self, idx: usize) -> Site {
        let mut c = [0; MAX_DIM];
        for (i, ci) in c.iter_mut().enumerate().take(self.dim) {
            *ci = self.lo[i] + self.coord(idx, i) as i32;
        }
        Site { c, dim: self.dim as u8 }
    }

    pub fn on_border(&self, idx: usize) -> bool {
        (0..self.dim).any(|i| {
            let x = self.coord(idx, i);
            x == 0 || x + 1 == self.ext[i]
        })
    }

    /// In-grid nearest neighbours of `idx`, written into `out`.
    #[inline]
    pub fn neighbors(&self, idx: usize, out: &mut Vec<usize>) {
        out.clear();
        for i in 0..self.dim {
            let x = self.coord(idx, i);
            if x > 0 {
                out.push(idx - self.strides[i]);
            }
            if x + 1 < self.ext[i] {
                out.push(idx + self.strides[i]);
            }
        }
    }
}

/// Minimum ℓ1 distance between two non-empty regions.
pub fn l1_distance(a: &Region, b: &Region) -> Result<u64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut best = u64::MAX;
    for x in a.iter() {
        for y in b.iter() {
            best = best.min(x.l1(y));
            if best == 0 {
                return Ok(0);
            }
        }
    }
    Ok(best)
}

/// Volume, interior and interior components of a finite set.
#[derive(Clone, Debug)]
pub struct VolumeInterior {
    pub volume: Region,
    pub interior: Region,
    pub components: Vec<Region>,
}

pub fn volume_interior(lambda: &Region) -> VolumeInterior {
    let d = lambda.dim();
    if lambda.is_empty() {
        return VolumeInterior {
            volume: Region::empty(d),
            interior: Region::empty(d),
            components: Vec::new(),
        };
    }
    let grid = Grid::around(lambda, 1);
    let mut occupied = vec![false; grid.len()];
    for s in lambda.iter() {
        occupied[grid.index(s).unwrap()] = true;
    }
    let outside = flood_outside(&grid, &occupied);
    let mut volume = Vec::new();
    let mut interior = Vec::new();
    for idx in 0..grid.len() {
        if !outside[idx] {
            let s = grid.site(idx);
            volume.push(s);
            if !occupied[idx] {
                interior.push(s);
            }
        }
    }
    // Row-major grid order coincides with the lexicographic site order.
    let interior = Region::from_sorted(d, interior);
    let components = interior.components();
    VolumeInterior { volume: Region::from_sorted(d, volume), interior, components }
}

/// Cells reachable from the grid corner without crossing an occupied cell.
pub(crate) fn flood_outside(grid: &Grid, occupied: &[bool]) -> Vec<bool> {
    let mut seen = vec![false; grid.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut buf = Vec::with_capacity(2 * MAX_DIM);
    while let Some(c) = stack.pop() {
        grid.neighbors(c, &mut buf);
        for &n in &buf {
            if !seen[n] && !occupied[n] {
                seen[n] = true;
                stack.push(n);
            }
        }
    }
    seen
}

/// Edge, inner and external boundaries of a region.
#[derive(Clone, Debug)]
pub struct Boundaries {
    /// Unit edges `(inside, outside)`.
    pub edges: Vec<(Site, Site)>,
    pub inner: Region,
    pub outer: Region,
}

pub fn boundaries(lambda: &Region) -> Boundaries {
    let d = lambda.dim();
    let mut edges = Vec::new();
    let mut inner = Vec::new();
    let mut outer = Vec::new();
    for x in lambda.iter() {
        let mut on_edge = false;
        for y in x.neighbors() {
            if !lambda.contains(&y) {
                edges.push((*x, y));
                outer.push(y);
                on_edge = true;
            }
        }
        if on_edge {
            inner.push(*x);
        }
    }
    Boundaries {
        edges,
        inner: Region::from_sorted(d, inner),
        outer: Region::from_sites(d, outer),
    }
}

pub fn inner_boundary(lambda: &Region) -> Region {
    let v = lambda
        .iter()
        .copied()
        .filter(|x| x.neighbors().any(|y| !lambda.contains(&y)))
        .collect();
    Region::from_sorted(lambda.dim(), v)
}

pub fn outer_boundary(lambda: &Region) -> Region {
    let v: Vec<Site> = lambda
        .iter()
        .flat_map(|x| x.neighbors())
        .filter(|y| !lambda.contains(y))
        .collect();
    Region::from_sites(lambda.dim(), v)
}

pub fn edge_boundary_len(lambda: &Region) -> usize {
    lambda
        .iter()
        .map(|x| x.neighbors().filter(|y| !lambda.contains(y)).count())
        .sum()
}

/// `|Λ|^{(d−1)/d} ≤ |∂_in Λ|`, evaluated exactly as `|Λ|^{d−1} ≤ |∂_in Λ|^d`.
pub fn isoperimetric_check(lambda: &Region) -> bool {
    let d = lambda.dim() as u32;
    let n = lambda.len() as u128;
    let b = inner_boundary(lambda).len() as u128;
    match (n.checked_pow(d - 1), b.checked_pow(d)) {
        (Some(l), Some(r)) => l <= r,
        _ => {
            let l = (d - 1) as f64 * (n as f64).ln();
            let r = d as f64 * (b as f64).ln();
            l <= r
        }
    }
}

/// Grid cube `∏[2^m x_i, 2^m(x_i+1)) ∩ Z^d`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Cube {
    pub scale: u32,
    pub anchor: Site,
}

#[inline]
fn side(m: u32) -> i128 {
    1i128 << m.min(SCALE_CLAMP)
}

impl Cube {
    pub fn new(scale: u32, anchor: Site) -> Cube {
        Cube { scale, anchor }
    }

    pub fn containing(s: &Site, scale: u32) -> Cube {
        Cube { scale, anchor: s.cube_anchor(scale) }
    }

    pub fn dim(&self) -> usize {
        self.anchor.dim()
    }

    /// Inclusive extent along `axis`.
    #[inline]
    pub fn range(&self, axis: usize) -> (i128, i128) {
        let w = side(self.scale);
        let lo = self.anchor.get(axis) as i128 * w;
        (lo, lo + w - 1)
    }

    /// Number of sites, saturating.
    pub fn volume(&self) -> u128 {
        let e = self.scale as u128 * self.dim() as u128;
        if e >= 127 {
            u128::MAX
        } else {
            1u128 << e
        }
    }

    pub fn contains(&self, s: &Site) -> bool {
        (0..self.dim()).all(|i| {
            let (lo, hi) = self.range(i);
            let x = s.get(i) as i128;
            lo <= x && x <= hi
        })
    }

    /// Minimum ℓ1 distance between the point sets, per axis in closed form.
    pub fn distance(&self, other: &Cube) -> u128 {
        let mut s = 0u128;
        for i in 0..self.dim() {
            let (a0, a1) = self.range(i);
            let (b0, b1) = other.range(i);
            s += 0.max(b0 - a1).max(a0 - b1) as u128;
        }
        s
    }

    /// Site list; panics for cubes too large to materialise.
    pub fn sites(&self) -> Region {
        let d = self.dim();
        let mut lo = vec![0; d];
        let mut hi = vec![0; d];
        for i in 0..d {
            let (a, b) = self.range(i);
            lo[i] = i32::try_from(a).expect("cube too large");
            hi[i] = i32::try_from(b).expect("cube too large");
        }
        Region::boxed(&lo, &hi)
    }

    /// Grid cubes of scale `scale - 1` ... `0` refine; this returns the
    /// subcubes at scale `fine ≤ self.scale`.
    pub fn subcubes(&self, fine: u32) -> Vec<Cube> {
        assert!(fine <= self.scale);
        let k = 1i32 << (self.scale - fine);
        let d = self.dim();
        let lo: Vec<i32> = (0..d).map(|i| self.anchor.get(i) * k).collect();
        let hi: Vec<i32> = lo.iter().map(|x| x + k - 1).collect();
        Region::boxed(&lo, &hi).iter().map(|a| Cube::new(fine, *a)).collect()
    }

    pub fn shares_face(&self, other: &Cube) -> bool {
        self.scale == other.scale && self.anchor.l1(&other.anchor) == 1
    }
}

/// Collection of grid cubes sharing one scale, stored by sorted anchors.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct CubeCollection {
    pub scale: u32,
    pub anchors: Vec<Site>,
}

impl CubeCollection {
    pub fn new(scale: u32, mut anchors: Vec<Site>) -> CubeCollection {
        anchors.sort_unstable();
        anchors.dedup();
        CubeCollection { scale, anchors }
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn cubes(&self) -> impl Iterator<Item = Cube> + '_ {
        self.anchors.iter().map(move |a| Cube::new(self.scale, *a))
    }

    pub fn contains_anchor(&self, a: &Site) -> bool {
        self.anchors.binary_search(a).is_ok()
    }

    /// Union of the cubes as a site set.
    pub fn union_region(&self, dim: usize) -> Region {
        let mut v = Vec::new();
        for c in self.cubes() {
            v.extend(c.sites().iter().copied());
        }
        Region::from_sites(dim, v)
    }

    pub fn covers(&self, r: &Region) -> bool {
        r.iter().all(|s| self.contains_anchor(&s.cube_anchor(self.scale)))
    }
}

/// The smallest collection of grid `m`-cubes covering `Λ`.
pub fn min_cover(lambda: &Region, m: u32) -> CubeCollection {
    let anchors = lambda.iter().map(|s| s.cube_anchor(m)).collect();
    CubeCollection::new(m, anchors)
}

/// Cube graph at scale `n` with its connected components.
#[derive(Clone, Debug)]
pub struct CubeGraph {
    pub cover: CubeCollection,
    pub edges: Vec<(usize, usize)>,
    /// Indices into `cover.anchors`, one list per component, ordered by smallest anchor.
    pub components: Vec<Vec<usize>>,
    /// `Λ ∩ B_V` for each component.
    pub covered: Vec<Region>,
}

/// Edge threshold `M·2^{a n}` of the cube graph at scale `n`.
pub fn cube_graph_threshold(n: u32, m_sep: f64, a: f64) -> f64 {
    m_sep * (a * n as f64).exp2()
}

pub fn cube_graph(lambda: &Region, n: u32, m_sep: f64, a: f64) -> CubeGraph {
    let cover = min_cover(lambda, n);
    let threshold = cube_graph_threshold(n, m_sep, a);
    let k = cover.len();
    let cubes: Vec<Cube> = cover.cubes().collect();
    let mut uf = UnionFind::new(k);
    let mut edges = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            if (cubes[i].distance(&cubes[j]) as f64) <= threshold {
                edges.push((i, j));
                uf.union(i, j);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_to_group = vec![usize::MAX; k];
    for i in 0..k {
        let r = uf.find(i);
        if root_to_group[r] == usize::MAX {
            root_to_group[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_to_group[r]].push(i);
    }
    let mut per_group: Vec<Vec<Site>> = vec![Vec::new(); groups.len()];
    for s in lambda.iter() {
        let a = s.cube_anchor(n);
        let ci = cover.anchors.binary_search(&a).unwrap();
        per_group[root_to_group[uf.find(ci)]].push(*s);
    }
    let covered = per_group.into_iter().map(|v| Region::from_sorted(lambda.dim(), v)).collect();
    CubeGraph { cover, edges, components: groups, covered }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Axis-aligned rectangle `corner + ∏[0, r_i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rectangle {
    pub corner: Site,
    pub extents: [u32; MAX_DIM],
}

impl Rectangle {
    pub fn new(corner: Site, extents: &[u32]) -> Rectangle {
        assert_eq!(corner.dim(), extents.len());
        assert!(extents.iter().all(|&e| e >= 1), "extents must be positive");
        let mut e = [1; MAX_DIM];
        e[..extents.len()].copy_from_slice(extents);
        Rectangle { corner, extents: e }
    }

    pub fn dim(&self) -> usize {
        self.corner.dim()
    }

    pub fn volume(&self) -> u64 {
        self.extents[..self.dim()].iter().map(|&e| e as u64).product()
    }

    /// Size of the face orthogonal to `axis`.
    pub fn face_size(&self, axis: usize) -> u64 {
        self.volume() / self.extents[axis] as u64
    }

    pub fn contains(&self, s: &Site) -> bool {
        (0..self.dim()).all(|i| {
            let off = s.get(i) as i64 - self.corner.get(i) as i64;
            off >= 0 && off < self.extents[i] as i64
        })
    }

    pub fn region(&self) -> Region {
        let d = self.dim();
        let lo: Vec<i32> = self.corner.coords().to_vec();
        let hi: Vec<i32> = (0..d).map(|i| lo[i] + self.extents[i] as i32 - 1).collect();
        Region::boxed(&lo, &hi)
    }

    /// Face points orthogonal to `axis` (coordinate `axis` equal to the corner's).
    pub fn face(&self, axis: usize) -> Vec<Site> {
        let d = self.dim();
        let lo: Vec<i32> = self.corner.coords().to_vec();
        let mut hi: Vec<i32> = (0..d).map(|i| lo[i] + self.extents[i] as i32 - 1).collect();
        hi[axis] = lo[axis];
        Region::boxed(&lo, &hi).sites().to_vec()
    }
}

/// Projection of `A ∩ R` onto the face of `R` orthogonal to an axis.
#[derive(Clone, Debug)]
pub struct Projection {
    pub all: Vec<Site>,
    pub good: Vec<Site>,
    pub bad: Vec<Site>,
}

pub fn project(a: &Region, rect: &Rectangle, axis: usize) -> Result<Projection> {
    if axis >= rect.dim() {
        return Err(Error::Param(format!("axis {axis} out of range for d = {}", rect.dim())));
    }
    let mut all = Vec::new();
    let mut good = Vec::new();
    let mut bad = Vec::new();
    let len = rect.extents[axis] as i32;
    for x in rect.face(axis) {
        let mut hit = 0;
        for t in 0..len {
            if a.contains(&x.shifted(axis, t)) {
                hit += 1;
            }
        }
        if hit == 0 {
            continue;
        }
        all.push(x);
        if hit < len {
            good.push(x);
        } else {
            bad.push(x);
        }
    }
    Ok(Projection { all, good, bad })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s2(x: i32, y: i32) -> Site {
        Site::new(&[x, y])
    }

    #[test]
    fn cube_distance_matches_brute_force() {
        let a = Cube::new(2, s2(0, 0));
        let b = Cube::new(2, s2(2, 0));
        let brute = l1_distance(&a.sites(), &b.sites()).unwrap();
        assert_eq!(brute, 5);
        assert_eq!(a.distance(&b), 5);
        let c = Cube::new(1, s2(-1, 3));
        for m in 0..3 {
            for x in -3..3 {
                for y in -3..3 {
                    let e = Cube::new(m, s2(x, y));
                    let brute = l1_distance(&c.sites(), &e.sites()).unwrap() as u128;
                    assert_eq!(c.distance(&e), brute);
                }
            }
        }
    }

    #[test]
    fn ring_volume() {
        let ring = Region::boxed(&[0, 0], &[2, 2]).difference(&Region::single(s2(1, 1)));
        let vi = volume_interior(&ring);
        assert_eq!(vi.volume.len(), 9);
        assert_eq!(vi.interior.sites(), &[s2(1, 1)]);
        assert_eq!(vi.components.len(), 1);
    }

    #[test]
    fn two_rings_two_components() {
        let ring = Region::boxed(&[0, 0], &[2, 2]).difference(&Region::single(s2(1, 1)));
        let other = ring.translate(&s2(10, 0));
        let vi = volume_interior(&ring.union(&other));
        assert_eq!(vi.components.len(), 2);
    }

    #[test]
    fn boundary_examples() {
        let block = Region::boxed(&[0, 0], &[1, 1]);
        let b = boundaries(&block);
        assert_eq!(b.edges.len(), 8);
        assert_eq!(b.inner.len(), 4);
        let single = Region::single(Site::new(&[0, 0, 0]));
        assert_eq!(boundaries(&single).edges.len(), 6);
        let tromino = Region::from_sites(2, [s2(0, 0), s2(1, 0), s2(0, 1)]);
        let b = boundaries(&tromino);
        assert_eq!(b.edges.len(), 8);
        assert_eq!(b.inner.len(), 3);
    }

    #[test]
    fn min_cover_examples() {
        let r = Region::from_sites(2, [s2(0, 0), s2(5, 5)]);
        let c = min_cover(&r, 2);
        assert_eq!(c.anchors, vec![s2(0, 0), s2(1, 1)]);
        let block = Region::boxed(&[0, 0], &[2, 2]);
        assert_eq!(min_cover(&block, 1).len(), 4);
        let neg = Region::from_sites(2, [s2(-1, -1)]);
        assert_eq!(min_cover(&neg, 3).anchors, vec![s2(-1, -1)]);
    }

    #[test]
    fn cube_graph_chain() {
        // Three clusters along a line; only consecutive ones within threshold.
        let r = Region::from_sites(2, [s2(0, 0), s2(6, 0), s2(12, 0)]);
        let g = cube_graph(&r, 0, 6.0, 1.0);
        assert_eq!(g.components.len(), 1);
        assert_eq!(g.edges.len(), 2);
        let g = cube_graph(&r, 0, 5.0, 1.0);
        assert_eq!(g.components.len(), 3);
    }

    #[test]
    fn projection_examples() {
        let a = Region::single(s2(1, 1));
        let r = Rectangle::new(s2(1, 1), &[2, 2]);
        let p = project(&a, &r, 0).unwrap();
        assert_eq!(p.all, vec![s2(1, 1)]);
        assert_eq!(p.good, vec![s2(1, 1)]);
        let full = Region::boxed(&[0, 0], &[5, 5]);
        let p = project(&full, &r, 1).unwrap();
        assert!(p.good.is_empty());
        assert_eq!(p.bad.len(), 2);
    }

    #[test]
    fn isoperimetry_small() {
        assert!(isoperimetric_check(&Region::single(s2(0, 0))));
        for k in 2..8 {
            assert!(isoperimetric_check(&Region::boxed(&[0, 0], &[k - 1, k - 1])));
        }
    }

    #[test]
    fn distance_errors_on_empty() {
        assert!(l1_distance(&Region::empty(2), &Region::single(s2(0, 0))).is_err());
    }
}
