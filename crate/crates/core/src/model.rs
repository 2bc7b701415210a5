//! Couplings, energies, exact enumeration on small volumes, Metropolis
//! sampling on larger ones, and external-field samples.
//!
//! Energies are relative to the configuration equal to the boundary
//! condition everywhere. Each unordered pair of sites inside the volume is
//! counted once; the coupling of a site to the whole outside is
//! `J·c_α − Σ_{y∈Λ∖{x}} J_xy`, exact up to the error of `c_α`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::{inner_boundary, Region, Site};
use crate::rng::seeded_rng;
use crate::zeta;
use crate::{Error, Result};

pub const DEFAULT_EXACT_CAP: usize = 24;
pub const DEFAULT_MATRIX_CAP: usize = 10_000;

/// Model and contour parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub d: usize,
    pub alpha: f64,
    pub j: f64,
    pub beta: f64,
    pub eps: f64,
    /// Separation constant of the multiscale partitions.
    pub m_sep: f64,
    pub a: f64,
    pub delta: f64,
    pub r: u32,
    pub tol: f64,
    pub seed: u64,
    pub exact_cap: usize,
}

pub fn default_a(d: usize, alpha: f64) -> f64 {
    3.0 * (d as f64 + 1.0) / (alpha - d as f64).min(1.0)
}

pub fn default_r(d: usize, a: f64) -> u32 {
    4 * (a + 1.0).log2().ceil() as u32 + d as u32 + 1
}

impl Params {
    /// Parameters with the default exponents and scale for `(d, α)`.
    pub fn new(d: usize, alpha: f64) -> Result<Params> {
        if !(1..=crate::lattice::MAX_DIM).contains(&d) {
            return Err(Error::Param(format!("d = {d} outside 1..={}", crate::lattice::MAX_DIM)));
        }
        if !(alpha > d as f64) {
            return Err(Error::Param(format!("α = {alpha} must exceed d = {d}")));
        }
        let a = default_a(d, alpha);
        Ok(Params {
            d,
            alpha,
            j: 1.0,
            beta: 1.0,
            eps: 0.0,
            m_sep: 1.0,
            a,
            delta: d as f64 + 1.0,
            r: default_r(d, a),
            tol: 1e-10,
            seed: 0,
            exact_cap: DEFAULT_EXACT_CAP,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Param(m));
        if !(1..=crate::lattice::MAX_DIM).contains(&self.d) {
            return bad(format!("d = {} outside 1..={}", self.d, crate::lattice::MAX_DIM));
        }
        if !(self.alpha > self.d as f64) {
            return bad(format!("α = {} must exceed d = {}", self.alpha, self.d));
        }
        if !(self.j > 0.0) {
            return bad(format!("J = {} must be positive", self.j));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad(format!("β = {} must be finite and non-negative", self.beta));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return bad(format!("ε = {} must be finite and non-negative", self.eps));
        }
        if !(self.m_sep > 0.0) {
            return bad(format!("M = {} must be positive", self.m_sep));
        }
        if !(self.a > 0.0) || !(self.delta > 0.0) || self.r == 0 {
            return bad("a, δ and r must be positive".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol = {} must be positive", self.tol));
        }
        Ok(())
    }

    pub fn with_overrides(mut self, a: Option<f64>, delta: Option<f64>, r: Option<u32>) -> Params {
        if let Some(a) = a {
            self.a = a;
        }
        if let Some(delta) = delta {
            self.delta = delta;
        }
        if let Some(r) = r {
            self.r = r;
        }
        self
    }

    /// Names of the exponents that differ from the defaults for `(d, α)`.
    pub fn non_paper(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let a0 = default_a(self.d, self.alpha);
        if (self.a - a0).abs() > 1e-12 * a0 {
            out.push("a");
        }
        if (self.delta - (self.d as f64 + 1.0)).abs() > 1e-12 {
            out.push("delta");
        }
        if self.r != default_r(self.d, a0) {
            out.push("r");
        }
        out
    }

    /// `(α−d) ∧ 1`.
    pub fn decay_gap(&self) -> f64 {
        (self.alpha - self.d as f64).min(1.0)
    }

    /// One-line rendering used in output headers.
    pub fn describe(&self) -> String {
        let flags = self.non_paper();
        let tag = if flags.is_empty() {
            "paper-defaults".to_string()
        } else {
            format!("non-paper({})", flags.join(","))
        };
        format!(
            "d={} alpha={} J={} beta={} eps={} M={} a={} delta={} r={} tol={:e} seed={} exact_cap={} [{}]",
            self.d,
            self.alpha,
            self.j,
            self.beta,
            self.eps,
            self.m_sep,
            self.a,
            self.delta,
            self.r,
            self.tol,
            self.seed,
            self.exact_cap,
            tag
        )
    }
}

/// `Σ_{y≠0} |y|₁^{−α}` with a guaranteed error bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeConstant {
    pub c_alpha: f64,
    pub tail_bound: f64,
    /// Shells summed directly before the exact remainder.
    pub radius: u64,
    /// The crude shell-count tail estimate at `radius`, reported as data.
    pub crude_tail: f64,
}

/// Number of sites at ℓ1 distance exactly `n ≥ 1` from the origin.
pub fn shell_count(d: usize, n: u64) -> u64 {
    let mut s = 0u64;
    for k in 1..=d.min(n as usize) {
        s += (1u64 << k) * binom(d as u64, k as u64) * binom(n - 1, k as u64 - 1);
    }
    s
}

fn binom(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r = 1u64;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Coefficients `p_j` with `shell_count(d, n) = Σ_j p_j n^j` for all `n ≥ 1`.
pub fn shell_polynomial(d: usize) -> Vec<f64> {
    let mut total = vec![0.0; d];
    for k in 1..=d {
        // (n-1)(n-2)...(n-k+1) / (k-1)!
        let mut poly = vec![1.0];
        for i in 1..k {
            let mut next = vec![0.0; poly.len() + 1];
            for (e, c) in poly.iter().enumerate() {
                next[e + 1] += c;
                next[e] -= c * i as f64;
            }
            poly = next;
        }
        let fact: f64 = (1..k).map(|x| x as f64).product();
        let w = (1u64 << k) as f64 * binom(d as u64, k as u64) as f64 / fact;
        for (e, c) in poly.iter().enumerate() {
            total[e] += w * c;
        }
    }
    total
}

const SHELL_RADIUS: u64 = 64;

pub fn lattice_constant(p: &Params) -> Result<LatticeConstant> {
    if !(p.alpha > p.d as f64) {
        return Err(Error::Param(format!("α = {} must exceed d = {}", p.alpha, p.d)));
    }
    let mut head = 0.0;
    for n in 1..=SHELL_RADIUS {
        head += shell_count(p.d, n) as f64 * (n as f64).powf(-p.alpha);
    }
    let mut tail = 0.0;
    let mut err = 0.0;
    for (j, c) in shell_polynomial(p.d).iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        let z = zeta::hurwitz(p.alpha - j as f64, SHELL_RADIUS as f64 + 1.0)?;
        tail += c * z.value;
        err += c.abs() * z.error;
    }
    let c_alpha = head + tail;
    let tail_bound = err + 8.0 * f64::EPSILON * c_alpha;
    if tail_bound > p.tol {
        return Err(Error::Tolerance(tail_bound));
    }
    let crude_tail = 2f64.powf(p.d as f64 - 1.0 + p.alpha) * (p.d as f64 - 1.0).exp()
        / (p.alpha - p.d as f64)
        * (SHELL_RADIUS as f64).powf(p.d as f64 - p.alpha);
    Ok(LatticeConstant { c_alpha, tail_bound, radius: SHELL_RADIUS, crude_tail })
}

#[inline]
pub fn coupling(x: &Site, y: &Site, p: &Params) -> f64 {
    let r = x.l1(y);
    if r == 0 {
        0.0
    } else {
        p.j * (r as f64).powf(-p.alpha)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Plus,
    Minus,
}

impl Boundary {
    pub fn sign(self) -> i8 {
        match self {
            Boundary::Plus => 1,
            Boundary::Minus => -1,
        }
    }
}

/// Spins on a finite region with a constant condition outside.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    pub region: Region,
    /// Aligned with `region.sites()`.
    pub spins: Vec<i8>,
    pub boundary: Boundary,
}

impl Configuration {
    pub fn constant(region: &Region, boundary: Boundary) -> Configuration {
        Configuration { region: region.clone(), spins: vec![boundary.sign(); region.len()], boundary }
    }

    pub fn all_plus(region: &Region) -> Configuration {
        Configuration::constant(region, Boundary::Plus)
    }

    /// Plus boundary, `-1` exactly on the listed sites (which must lie in the region).
    pub fn with_minus(region: &Region, minus: &[Site]) -> Result<Configuration> {
        let mut c = Configuration::all_plus(region);
        for s in minus {
            let i = region
                .index_of(s)
                .ok_or_else(|| Error::RegionMismatch(format!("site {s} outside the region")))?;
            c.spins[i] = -1;
        }
        Ok(c)
    }

    /// Plus boundary; bit `i` of `mask` set means site `i` (region order) is `-1`.
    pub fn from_mask(region: &Region, mask: u64) -> Configuration {
        let spins = (0..region.len()).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect();
        Configuration { region: region.clone(), spins, boundary: Boundary::Plus }
    }

    pub fn minus_mask(&self) -> u64 {
        self.spins
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == -1)
            .fold(0u64, |m, (i, _)| m | 1 << i)
    }

    #[inline]
    pub fn spin(&self, s: &Site) -> i8 {
        match self.region.index_of(s) {
            Some(i) => self.spins[i],
            None => self.boundary.sign(),
        }
    }

    pub fn flipped(&self) -> Configuration {
        let boundary = match self.boundary {
            Boundary::Plus => Boundary::Minus,
            Boundary::Minus => Boundary::Plus,
        };
        Configuration {
            region: self.region.clone(),
            spins: self.spins.iter().map(|s| -s).collect(),
            boundary,
        }
    }

    pub fn minus_sites(&self) -> Vec<Site> {
        self.region
            .iter()
            .zip(&self.spins)
            .filter(|(_, &s)| s == -1)
            .map(|(x, _)| *x)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldDist {
    Gaussian,
    Bernoulli,
}

impl std::str::FromStr for FieldDist {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "gaussian01" => Ok(FieldDist::Gaussian),
            "bernoulli" => Ok(FieldDist::Bernoulli),
            _ => Err(Error::Parse(format!("unknown field distribution '{s}'"))),
        }
    }
}

/// One realisation of the field on a region; `ε` is applied at energy evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub region: Region,
    /// Aligned with `region.sites()`.
    pub values: Vec<f64>,
    pub dist: FieldDist,
    pub seed: u64,
}

impl FieldSample {
    pub fn zero(region: &Region) -> FieldSample {
        FieldSample::constant(region, 0.0)
    }

    pub fn constant(region: &Region, v: f64) -> FieldSample {
        FieldSample {
            region: region.clone(),
            values: vec![v; region.len()],
            dist: FieldDist::Gaussian,
            seed: 0,
        }
    }

    pub fn value(&self, s: &Site) -> Option<f64> {
        self.region.index_of(s).map(|i| self.values[i])
    }

    /// Negate the values on `a`.
    pub fn flip(&self, a: &Region) -> Result<FieldSample> {
        let mut out = self.clone();
        for s in a.iter() {
            let i = self
                .region
                .index_of(s)
                .ok_or_else(|| Error::RegionMismatch(format!("site {s} outside the field region")))?;
            out.values[i] = -out.values[i];
        }
        Ok(out)
    }
}

pub fn sample_field(region: &Region, dist: FieldDist, seed: u64) -> FieldSample {
    let mut rng = seeded_rng(seed);
    let values = (0..region.len())
        .map(|_| match dist {
            FieldDist::Gaussian => StandardNormal.sample(&mut rng),
            FieldDist::Bernoulli => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
        })
        .collect();
    FieldSample { region: region.clone(), values, dist, seed }
}

/// Dense couplings on a region plus each site's coupling to the outside.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    pub region: Region,
    n: usize,
    couplings: Vec<f64>,
    outside: Vec<f64>,
    pub c_alpha: LatticeConstant,
}

impl Hamiltonian {
    pub fn new(region: &Region, p: &Params) -> Result<Hamiltonian> {
        p.validate()?;
        if region.dim() != p.d {
            return Err(Error::RegionMismatch(format!(
                "region dimension {} differs from d = {}",
                region.dim(),
                p.d
            )));
        }
        let n = region.len();
        if n > DEFAULT_MATRIX_CAP {
            return Err(Error::Cap(format!(
                "coupling matrix for {n} sites exceeds {DEFAULT_MATRIX_CAP}"
            )));
        }
        let c = lattice_constant(p)?;
        let sites = region.sites();
        let dmax = region.diameter() as usize;
        let table: Vec<f64> = (0..=dmax)
            .map(|r| if r == 0 { 0.0 } else { p.j * (r as f64).powf(-p.alpha) })
            .collect();
        let mut couplings = vec![0.0; n * n];
        for i in 0..n {
            for k in i + 1..n {
                let v = table[sites[i].l1(&sites[k]) as usize];
                couplings[i * n + k] = v;
                couplings[k * n + i] = v;
            }
        }
        let jc = p.j * c.c_alpha;
        let outside = (0..n).map(|i| jc - couplings[i * n..(i + 1) * n].iter().sum::<f64>()).collect();
        Ok(Hamiltonian { region: region.clone(), n, couplings, outside, c_alpha: c })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn coupling(&self, i: usize, k: usize) -> f64 {
        self.couplings[i * self.n + k]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.couplings[i * self.n..(i + 1) * self.n]
    }

    /// Coupling of site `i` to every site outside the region.
    #[inline]
    pub fn outside(&self, i: usize) -> f64 {
        self.outside[i]
    }

    /// Energy relative to the configuration equal to the boundary sign everywhere.
    pub fn rel_energy(&self, spins: &[i8], boundary: Boundary, h: &[f64], eps: f64) -> f64 {
        let eta = boundary.sign() as f64;
        let n = self.n;
        let mut e = 0.0;
        for i in 0..n {
            let si = spins[i] as f64;
            let row = self.row(i);
            for k in i + 1..n {
                if spins[i] != spins[k] {
                    e += 2.0 * row[k];
                }
            }
            e += self.outside[i] * (1.0 - si * eta);
            e -= eps * h[i] * (si - eta);
        }
        e
    }

    /// Absolute energy of the all-plus configuration (plus boundary).
    pub fn all_plus_energy(&self, h: &[f64], eps: f64) -> f64 {
        let mut e = 0.0;
        for i in 0..self.n {
            e -= self.row(i)[i + 1..].iter().sum::<f64>();
            e -= self.outside[i];
            e -= eps * h[i];
        }
        e
    }

    /// Energy change of flipping site `i`, given local fields `Σ_k J_ik σ_k`.
    #[inline]
    pub fn flip_delta(&self, i: usize, spin: i8, local: f64, h: f64, eps: f64) -> f64 {
        2.0 * spin as f64 * (local + self.outside[i] + eps * h)
    }
}

pub fn rel_energy(sigma: &Configuration, h: &FieldSample, p: &Params) -> Result<f64> {
    if sigma.region != h.region {
        return Err(Error::RegionMismatch("configuration and field live on different regions".into()));
    }
    let ham = Hamiltonian::new(&sigma.region, p)?;
    Ok(ham.rel_energy(&sigma.spins, sigma.boundary, &h.values, p.eps))
}

/// Region indices that `Θ_Λ` forces to `+1`: the inner boundary and its neighbours in `Λ`.
pub fn theta_sites(region: &Region) -> Vec<usize> {
    let inner = inner_boundary(region);
    let mut out: Vec<usize> = Vec::new();
    for x in inner.iter() {
        out.push(region.index_of(x).unwrap());
        for y in x.neighbors() {
            if let Some(i) = region.index_of(&y) {
                out.push(i);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

pub fn theta_mask(region: &Region) -> u64 {
    theta_sites(region).iter().fold(0u64, |m, &i| m | 1 << i)
}

/// Streaming log-sum-exp accumulator.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp { max: f64::NEG_INFINITY, sum: 0.0 }
    }
}

impl LogSumExp {
    #[inline]
    pub fn push(&mut self, x: f64) {
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn merge(&mut self, o: &LogSumExp) {
        if o.max == f64::NEG_INFINITY {
            return;
        }
        if self.max == f64::NEG_INFINITY {
            *self = *o;
            return;
        }
        if o.max <= self.max {
            self.sum += o.sum * (o.max - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - o.max).exp() + o.sum;
            self.max = o.max;
        }
    }

    pub fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

const CHUNK_BITS: usize = 4;

/// Visit every configuration with `-1` only on `free` sites, in gray-code
/// order inside fixed chunks, passing the minus mask and relative energy.
/// Chunk accumulators are merged in chunk order, so results do not depend on
/// the thread count.
pub fn fold_states<A, I, V, M>(
    ham: &Hamiltonian,
    h: &[f64],
    eps: f64,
    free: &[usize],
    init: I,
    visit: V,
    merge: M,
) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, u64, f64) + Sync,
    M: Fn(&mut A, A),
{
    let n = ham.len();
    let nf = free.len();
    let top = nf.min(CHUNK_BITS);
    let low = nf - top;
    let parts: Vec<A> = (0..1usize << top)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = init();
            let mut spins = vec![1i8; n];
            let mut mask = 0u64;
            for b in 0..top {
                if chunk >> b & 1 == 1 {
                    let i = free[low + b];
                    spins[i] = -1;
                    mask |= 1 << i;
                }
            }
            let mut energy = ham.rel_energy(&spins, Boundary::Plus, h, eps);
            let mut local: Vec<f64> = (0..n)
                .map(|i| ham.row(i).iter().zip(&spins).map(|(j, &s)| j * s as f64).sum())
                .collect();
            visit(&mut acc, mask, energy);
            for g in 1u64..1u64 << low {
                let bit = g.trailing_zeros() as usize;
                let i = free[bit];
                let s = spins[i];
                energy += ham.flip_delta(i, s, local[i], h[i], eps);
                let row = ham.row(i);
                let shift = -2.0 * s as f64;
                for (l, j) in local.iter_mut().zip(row) {
                    *l += shift * j;
                }
                spins[i] = -s;
                mask ^= 1 << i;
                visit(&mut acc, mask, energy);
            }
            acc
        })
        .collect();
    let mut it = parts.into_iter();
    let mut acc = it.next().expect("at least one chunk");
    for part in it {
        merge(&mut acc, part);
    }
    acc
}

fn free_sites(ham: &Hamiltonian, forced_plus: u64, cap: usize) -> Result<Vec<usize>> {
    if ham.len() > 64 {
        return Err(Error::ExactCap { size: ham.len(), cap });
    }
    let free: Vec<usize> = (0..ham.len()).filter(|&i| forced_plus >> i & 1 == 0).collect();
    if free.len() > cap {
        return Err(Error::ExactCap { size: free.len(), cap });
    }
    Ok(free)
}

fn check_field(region: &Region, h: &FieldSample) -> Result<()> {
    if &h.region != region {
        return Err(Error::RegionMismatch("field region differs from Λ".into()));
    }
    Ok(())
}

/// `log Z` with relative energies, optionally restricted to configurations
/// with `+1` on every site of `forced_plus` (a region-index mask).
pub fn log_partition_with(ham: &Hamiltonian, h: &[f64], p: &Params, forced_plus: u64) -> Result<f64> {
    let free = free_sites(ham, forced_plus, p.exact_cap)?;
    let beta = p.beta;
    let acc = fold_states(
        ham,
        h,
        p.eps,
        &free,
        LogSumExp::default,
        |acc, _, e| acc.push(-beta * e),
        |a, b| a.merge(&b),
    );
    Ok(acc.value())
}

pub fn log_partition(region: &Region, h: &FieldSample, p: &Params, theta: bool) -> Result<f64> {
    check_field(region, h)?;
    let ham = Hamiltonian::new(region, p)?;
    let forced = if theta { theta_mask(region) } else { 0 };
    log_partition_with(&ham, &h.values, p, forced)
}

/// `log Z` with absolute energies (plus boundary), for ratios across fields.
pub fn log_partition_absolute_with(
    ham: &Hamiltonian,
    h: &[f64],
    p: &Params,
    forced_plus: u64,
) -> Result<f64> {
    Ok(log_partition_with(ham, h, p, forced_plus)? - p.beta * ham.all_plus_energy(h, p.eps))
}

/// `Z` with relative energies.
pub fn partition_function(region: &Region, h: &FieldSample, p: &Params, theta: bool) -> Result<f64> {
    Ok(log_partition(region, h, p, theta)?.exp())
}

/// Exact Gibbs probability of an event given as a predicate on the minus mask
/// (bit `i` set means site `i` of the region is `-1`).
pub fn gibbs_probability<E>(
    event: E,
    region: &Region,
    h: &FieldSample,
    p: &Params,
    theta: bool,
) -> Result<f64>
where
    E: Fn(u64) -> bool + Sync,
{
    check_field(region, h)?;
    let ham = Hamiltonian::new(region, p)?;
    let forced = if theta { theta_mask(region) } else { 0 };
    gibbs_probability_with(&ham, &h.values, p, forced, event)
}

pub fn gibbs_probability_with<E>(
    ham: &Hamiltonian,
    h: &[f64],
    p: &Params,
    forced_plus: u64,
    event: E,
) -> Result<f64>
where
    E: Fn(u64) -> bool + Sync,
{
    let free = free_sites(ham, forced_plus, p.exact_cap)?;
    let beta = p.beta;
    let (all, hit) = fold_states(
        ham,
        h,
        p.eps,
        &free,
        || (LogSumExp::default(), LogSumExp::default()),
        |acc, mask, e| {
            let w = -beta * e;
            acc.0.push(w);
            if event(mask) {
                acc.1.push(w);
            }
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1.merge(&b.1);
        },
    );
    Ok((hit.value() - all.value()).exp())
}

/// Predicate "site `s` is -1" on minus masks of `region`.
pub fn site_minus_event(region: &Region, s: &Site) -> Result<impl Fn(u64) -> bool + Sync> {
    let i = region
        .index_of(s)
        .ok_or_else(|| Error::RegionMismatch(format!("site {s} outside the region")))?;
    Ok(move |mask: u64| mask >> i & 1 == 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    Magnetization,
    /// Indicator of `σ₀ = −1`.
    OriginMinus,
    /// `P(σ₀ = −1 | all other spins)`, an unbiased lower-variance estimator of
    /// the same probability.
    OriginMinusConditional,
    Energy,
}

impl Observable {
    pub fn name(self) -> &'static str {
        match self {
            Observable::Magnetization => "magnetization",
            Observable::OriginMinus => "origin_minus",
            Observable::OriginMinusConditional => "origin_minus_conditional",
            Observable::Energy => "energy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub observable: Observable,
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Clone, Debug)]
pub struct McOptions {
    pub sweeps: usize,
    /// Sweeps discarded before measuring.
    pub burn_in: usize,
    pub batches: usize,
    /// Freeze the sites `Θ_Λ` forces to `+1`.
    pub theta: bool,
    pub origin: Site,
}

impl McOptions {
    pub fn new(d: usize, sweeps: usize) -> McOptions {
        McOptions { sweeps, burn_in: sweeps / 5, batches: 20, theta: false, origin: Site::origin(d) }
    }
}

#[inline]
pub fn acceptance_probability(delta: f64, beta: f64) -> f64 {
    if delta <= 0.0 {
        1.0
    } else {
        (-beta * delta).exp()
    }
}

/// Single-spin-flip Metropolis chain with cached local fields.
pub struct MetropolisChain<'a> {
    ham: &'a Hamiltonian,
    h: &'a [f64],
    eps: f64,
    beta: f64,
    pub spins: Vec<i8>,
    local: Vec<f64>,
    movable: Vec<usize>,
    energy: f64,
}

impl<'a> MetropolisChain<'a> {
    pub fn new(ham: &'a Hamiltonian, h: &'a [f64], p: &Params, frozen: &[usize]) -> Self {
        let n = ham.len();
        let mut is_frozen = vec![false; n];
        for &i in frozen {
            is_frozen[i] = true;
        }
        MetropolisChain {
            ham,
            h,
            eps: p.eps,
            beta: p.beta,
            spins: vec![1; n],
            local: (0..n).map(|i| ham.row(i).iter().sum()).collect(),
            movable: (0..n).filter(|&i| !is_frozen[i]).collect(),
            energy: 0.0,
        }
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn flip_delta(&self, i: usize) -> f64 {
        self.ham.flip_delta(i, self.spins[i], self.local[i], self.h[i], self.eps)
    }

    pub fn flip(&mut self, i: usize) {
        let s = self.spins[i];
        self.energy += self.flip_delta(i);
        let shift = -2.0 * s as f64;
        for (l, j) in self.local.iter_mut().zip(self.ham.row(i)) {
            *l += shift * j;
        }
        self.spins[i] = -s;
    }

    /// One sweep of `|movable|` random-site proposals; returns accepted count.
    pub fn sweep<R: Rng>(&mut self, rng: &mut R) -> usize {
        let m = self.movable.len();
        if m == 0 {
            return 0;
        }
        let mut accepted = 0;
        for _ in 0..m {
            let i = self.movable[rng.random_range(0..m)];
            let delta = self.flip_delta(i);
            if delta <= 0.0 || rng.random::<f64>() < (-self.beta * delta).exp() {
                self.flip(i);
                accepted += 1;
            }
        }
        accepted
    }

    /// `P(σ_i = −1 | rest)` in the current state.
    pub fn conditional_minus(&self, i: usize) -> f64 {
        // Energy of σ_i = −1 minus energy of σ_i = +1; the local field excludes i.
        let gap = 2.0 * (self.local[i] + self.ham.outside(i) + self.eps * self.h[i]);
        logistic(-self.beta * gap)
    }

    pub fn magnetization(&self) -> f64 {
        self.spins.iter().map(|&s| s as f64).sum::<f64>() / self.spins.len().max(1) as f64
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn metropolis_run(
    region: &Region,
    h: &FieldSample,
    p: &Params,
    opts: &McOptions,
    seed: u64,
    observables: &[Observable],
) -> Result<Vec<Estimate>> {
    check_field(region, h)?;
    let ham = Hamiltonian::new(region, p)?;
    metropolis_run_with(&ham, &h.values, p, opts, seed, observables)
}

pub fn metropolis_run_with(
    ham: &Hamiltonian,
    h: &[f64],
    p: &Params,
    opts: &McOptions,
    seed: u64,
    observables: &[Observable],
) -> Result<Vec<Estimate>> {
    if opts.batches == 0 || opts.sweeps <= opts.burn_in {
        return Err(Error::Param("need at least one batch and one measured sweep".into()));
    }
    let origin = ham.region.index_of(&opts.origin);
    let needs_origin = observables
        .iter()
        .any(|o| matches!(o, Observable::OriginMinus | Observable::OriginMinusConditional));
    if needs_origin && origin.is_none() {
        return Err(Error::RegionMismatch(format!("origin {} outside Λ", opts.origin)));
    }
    let frozen = if opts.theta { theta_sites(&ham.region) } else { Vec::new() };
    let origin_frozen = origin.is_some_and(|o| frozen.binary_search(&o).is_ok());
    let mut chain = MetropolisChain::new(ham, h, p, &frozen);
    let mut rng = seeded_rng(seed);
    for _ in 0..opts.burn_in {
        chain.sweep(&mut rng);
    }
    let measured = opts.sweeps - opts.burn_in;
    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(measured); observables.len()];
    for _ in 0..measured {
        chain.sweep(&mut rng);
        for (k, o) in observables.iter().enumerate() {
            let v = match o {
                Observable::Magnetization => chain.magnetization(),
                Observable::OriginMinus => (chain.spins[origin.unwrap()] == -1) as u8 as f64,
                Observable::OriginMinusConditional => {
                    if origin_frozen {
                        0.0
                    } else {
                        chain.conditional_minus(origin.unwrap())
                    }
                }
                Observable::Energy => chain.energy(),
            };
            series[k].push(v);
        }
    }
    Ok(observables
        .iter()
        .zip(series)
        .map(|(o, s)| {
            let (mean, stderr) = batch_means(&s, opts.batches);
            Estimate { observable: *o, mean, stderr, samples: s.len() }
        })
        .collect())
}

/// Mean and batch-means standard error.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let b = batches.min(n).max(1);
    let size = n / b;
    if b < 2 || size == 0 {
        return (mean, 0.0);
    }
    let means: Vec<f64> = (0..b)
        .map(|k| xs[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let mm = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mm).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p2() -> Params {
        Params::new(2, 4.0).unwrap()
    }

    #[test]
    fn default_exponents_d3() {
        let p = Params::new(3, 4.0).unwrap();
        assert_eq!(p.a, 12.0);
        assert_eq!(p.delta, 4.0);
        assert_eq!(p.r, 20);
        assert!(p.non_paper().is_empty());
        let q = p.with_overrides(Some(3.0), None, Some(2));
        assert_eq!(q.non_paper(), vec!["a", "r"]);
    }

    #[test]
    fn rejects_alpha_at_or_below_d() {
        assert!(Params::new(3, 3.0).is_err());
        assert!(Params::new(2, 1.5).is_err());
    }

    #[test]
    fn shell_counts() {
        assert_eq!(shell_count(1, 5), 2);
        assert_eq!(shell_count(2, 3), 12);
        assert_eq!(shell_count(3, 1), 6);
        assert_eq!(shell_count(3, 2), 18);
        for d in 1..=4 {
            let poly = shell_polynomial(d);
            for n in 1..30u64 {
                let v: f64 = poly.iter().enumerate().map(|(j, c)| c * (n as f64).powi(j as i32)).sum();
                assert!((v - shell_count(d, n) as f64).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn shell_count_matches_brute_force() {
        for n in 1..6 {
            let r = Region::boxed(&[-6, -6, -6], &[6, 6, 6]);
            let o = Site::origin(3);
            let brute = r.iter().filter(|s| s.l1(&o) == n).count() as u64;
            assert_eq!(shell_count(3, n), brute);
        }
    }

    #[test]
    fn lattice_constant_closed_forms() {
        let mut p = Params::new(1, 2.0).unwrap();
        let c = lattice_constant(&p).unwrap();
        assert!((c.c_alpha - PI * PI / 3.0).abs() < 1e-10);
        assert!(c.tail_bound <= p.tol);
        p = Params::new(2, 4.0).unwrap();
        let z3 = 1.202_056_903_159_594_3;
        assert!((lattice_constant(&p).unwrap().c_alpha - 4.0 * z3).abs() < 1e-10);
        p = Params::new(3, 4.0).unwrap();
        let expect = 4.0 * PI * PI / 6.0 + 2.0 * PI.powi(4) / 90.0;
        assert!((lattice_constant(&p).unwrap().c_alpha - expect).abs() < 1e-10);
    }

    #[test]
    fn lattice_constant_monotone_in_alpha() {
        let a = lattice_constant(&Params::new(3, 4.0).unwrap()).unwrap().c_alpha;
        let b = lattice_constant(&Params::new(3, 5.0).unwrap()).unwrap().c_alpha;
        assert!(b < a);
    }

    #[test]
    fn coupling_formula() {
        let p = p2();
        let x = Site::new(&[0, 0]);
        assert_eq!(coupling(&x, &x, &p), 0.0);
        assert_eq!(coupling(&x, &Site::new(&[1, 1]), &p), 0.0625);
    }

    #[test]
    fn single_site_energy_and_partition() {
        let p = Params { beta: 0.7, ..p2() };
        let r = Region::single(Site::origin(2));
        let c = lattice_constant(&p).unwrap().c_alpha;
        let sigma = Configuration::with_minus(&r, &[Site::origin(2)]).unwrap();
        let e = rel_energy(&sigma, &FieldSample::zero(&r), &p).unwrap();
        assert!((e - 2.0 * c).abs() < 2.0 * p.tol);
        let z = partition_function(&r, &FieldSample::zero(&r), &p, false).unwrap();
        assert!((z - (1.0 + (-2.0 * 0.7 * c).exp())).abs() < 1e-12);
    }

    #[test]
    fn beta_zero_counts_states() {
        let p = Params { beta: 0.0, eps: 1.0, ..p2() };
        let r = Region::boxed(&[0, 0], &[2, 2]);
        let h = sample_field(&r, FieldDist::Gaussian, 3);
        let z = partition_function(&r, &h, &p, false).unwrap();
        assert!((z - 512.0).abs() < 1e-9);
    }

    #[test]
    fn cap_enforced() {
        let p = p2();
        let r = Region::boxed(&[0, 0], &[4, 4]);
        let err = partition_function(&r, &FieldSample::zero(&r), &p, false).unwrap_err();
        assert!(matches!(err, Error::ExactCap { .. }));
    }

    #[test]
    fn field_flip_involution() {
        let r = Region::boxed(&[0, 0], &[2, 2]);
        let h = sample_field(&r, FieldDist::Gaussian, 11);
        let a = Region::from_sites(2, [Site::new(&[0, 0]), Site::new(&[1, 2])]);
        assert_eq!(h.flip(&a).unwrap().flip(&a).unwrap(), h);
        assert_eq!(h.flip(&Region::empty(2)).unwrap(), h);
        let outside = Region::single(Site::new(&[9, 9]));
        assert!(h.flip(&outside).is_err());
    }

    #[test]
    fn bernoulli_values() {
        let r = Region::boxed(&[0, 0], &[9, 9]);
        let h = sample_field(&r, FieldDist::Bernoulli, 5);
        assert!(h.values.iter().all(|&v| v == 1.0 || v == -1.0));
        assert_eq!(h, sample_field(&r, FieldDist::Bernoulli, 5));
    }

    #[test]
    fn theta_on_3x3_freezes_everything() {
        let r = Region::centered_box(2, 3);
        assert_eq!(theta_sites(&r).len(), 9);
        let r = Region::centered_box(2, 5);
        assert_eq!(theta_sites(&r).len(), 24);
    }

    #[test]
    fn logsumexp_merge() {
        let xs = [-3.0, 1.0, 0.5, -20.0, 4.0];
        let mut a = LogSumExp::default();
        let mut b = LogSumExp::default();
        for (k, x) in xs.iter().enumerate() {
            if k % 2 == 0 {
                a.push(*x)
            } else {
                b.push(*x)
            }
        }
        a.merge(&b);
        let direct = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((a.value() - direct).abs() < 1e-12);
    }

    #[test]
    fn conditional_probability_matches_two_state_ratio() {
        let p = Params { beta: 0.8, eps: 0.3, ..p2() };
        let r = Region::boxed(&[0, 0], &[2, 1]);
        let h = sample_field(&r, FieldDist::Gaussian, 2);
        let ham = Hamiltonian::new(&r, &p).unwrap();
        let mut chain = MetropolisChain::new(&ham, &h.values, &p, &[]);
        chain.flip(1);
        chain.flip(4);
        for i in 0..r.len() {
            let mut minus = chain.spins.clone();
            minus[i] = -1;
            let mut plus = chain.spins.clone();
            plus[i] = 1;
            let em = ham.rel_energy(&minus, Boundary::Plus, &h.values, p.eps);
            let ep = ham.rel_energy(&plus, Boundary::Plus, &h.values, p.eps);
            let expect = 1.0 / (1.0 + (p.beta * (em - ep)).exp());
            assert!((chain.conditional_minus(i) - expect).abs() < 1e-12);
        }
    }
}
