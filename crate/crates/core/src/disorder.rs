//! Field-flip free-energy differences `Δ_A`, joint-density ratios, tail and
//! bad-event campaigns, and boundary-normalised greedy lattice animals.

use rayon::prelude::*;
use serde::Serialize;

use crate::contour::{apply_erasure, enumerate_c0, Contour};
use crate::entropy::ConstantTable;
use crate::lattice::{edge_boundary_len, Region, Site};
use crate::model::{
    log_partition_absolute_with, sample_field, theta_mask, Configuration, FieldDist, FieldSample, Hamiltonian,
    Params,
};
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Largest animal size the connected enumeration accepts.
pub const ANIMAL_CAP: usize = 10;

/// Exact `Δ_A` evaluations on one volume.
pub struct DeltaEngine {
    pub ham: Hamiltonian,
    pub p: Params,
}

impl DeltaEngine {
    pub fn new(lambda: &Region, p: &Params) -> Result<DeltaEngine> {
        if lambda.len() > p.exact_cap {
            return Err(Error::ExactCap { size: lambda.len(), cap: p.exact_cap });
        }
        Ok(DeltaEngine { ham: Hamiltonian::new(lambda, p)?, p: p.clone() })
    }

    pub fn region(&self) -> &Region {
        &self.ham.region
    }

    /// Region indices of `a`, which must lie in `Λ`.
    pub fn indices(&self, a: &Region) -> Result<Vec<usize>> {
        a.iter()
            .map(|s| {
                self.ham
                    .region
                    .index_of(s)
                    .ok_or_else(|| Error::RegionMismatch(format!("site {s} outside Λ")))
            })
            .collect()
    }

    pub fn log_z(&self, h: &[f64]) -> Result<f64> {
        log_partition_absolute_with(&self.ham, h, &self.p, 0)
    }

    /// `Δ_A` given `log Z(h)`.
    pub fn delta_from(&self, log_z_h: f64, idx: &[usize], h: &[f64]) -> Result<f64> {
        if idx.is_empty() {
            return Ok(0.0);
        }
        let mut flipped = h.to_vec();
        for &i in idx {
            flipped[i] = -flipped[i];
        }
        Ok(-(log_z_h - self.log_z(&flipped)?) / self.p.beta)
    }

    pub fn delta(&self, a: &Region, h: &[f64]) -> Result<f64> {
        let idx = self.indices(a)?;
        if idx.is_empty() {
            return Ok(0.0);
        }
        self.delta_from(self.log_z(h)?, &idx, h)
    }
}

/// `Δ_A(h) = −β⁻¹ log(Z(h)/Z(τ_A h))` with plus boundary on `Λ`.
pub fn delta_a(a: &Region, h: &FieldSample, lambda: &Region, p: &Params) -> Result<f64> {
    if &h.region != lambda {
        return Err(Error::RegionMismatch("field region differs from Λ".into()));
    }
    DeltaEngine::new(lambda, p)?.delta(a, &h.values)
}

/// `2e^{−λ²/(8ε²k)}`, read as a limit when `ε²k = 0`.
pub fn tail_bound(lambda: f64, eps: f64, k: usize) -> f64 {
    let s = 8.0 * eps * eps * k as f64;
    if s == 0.0 {
        if lambda > 0.0 {
            0.0
        } else {
            2.0
        }
    } else {
        2.0 * (-lambda * lambda / s).exp()
    }
}

/// `3·√(q(1−q)/n)` with `q` the bound clipped to `[0, 1]`.
fn binomial_slack(bound: f64, n: usize) -> f64 {
    let q = bound.clamp(0.0, 1.0);
    3.0 * (q * (1.0 - q) / n as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailRow {
    pub lambda: f64,
    pub tail_a: f64,
    pub bound_a: f64,
    pub tail_diff: f64,
    pub bound_diff: f64,
    pub slack_a: f64,
    pub slack_diff: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub samples: usize,
    pub dist: FieldDist,
    pub size_a: usize,
    pub size_diff: usize,
    pub rows: Vec<TailRow>,
    /// Largest `|Δ_A(τ_A h) + Δ_A(h)|` seen.
    pub antisymmetry_error: f64,
    pub pass: bool,
}

/// `points` evenly spaced values in `(0, λ_max]`, with `λ_max` where the
/// larger bound drops to about `10⁻⁴`.
pub fn default_lambda_grid(eps: f64, k: usize, points: usize) -> Vec<f64> {
    let top = if eps * eps * k as f64 > 0.0 { (8.0 * eps * eps * k as f64 * (2e4f64).ln()).sqrt() } else { 1.0 };
    (1..=points).map(|i| top * i as f64 / points as f64).collect()
}

/// Empirical tails of `|Δ_A|` and `|Δ_A − Δ_{A′}|` over independent field
/// draws, against the sub-Gaussian bounds plus three binomial standard errors.
#[allow(clippy::too_many_arguments)]
pub fn verify_concentration(
    a: &Region,
    a2: &Region,
    lambda: &Region,
    p: &Params,
    n_samples: usize,
    grid: &[f64],
    dist: FieldDist,
    seed: u64,
) -> Result<ConcentrationReport> {
    if n_samples == 0 {
        return Err(Error::Param("need at least one field draw".into()));
    }
    let eng = DeltaEngine::new(lambda, p)?;
    let ia = eng.indices(a)?;
    let ia2 = eng.indices(a2)?;
    let draws: Result<Vec<(f64, f64, f64)>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let h = sample_field(lambda, dist, derive_seed(seed, k)).values;
            let lz = eng.log_z(&h)?;
            let da = eng.delta_from(lz, &ia, &h)?;
            let da2 = eng.delta_from(lz, &ia2, &h)?;
            let mut fl = h.clone();
            for &i in &ia {
                fl[i] = -fl[i];
            }
            let back = eng.delta_from(eng.log_z(&fl)?, &ia, &fl)?;
            Ok((da, da - da2, (back + da).abs()))
        })
        .collect();
    let draws = draws?;
    let size_a = a.len();
    let size_diff = a.symmetric_difference_len(a2);
    let n = n_samples as f64;
    let rows: Vec<TailRow> = grid
        .iter()
        .map(|&l| {
            let tail_a = draws.iter().filter(|d| d.0.abs() >= l).count() as f64 / n;
            let tail_diff = draws.iter().filter(|d| d.1.abs() >= l).count() as f64 / n;
            let bound_a = tail_bound(l, p.eps, size_a);
            let bound_diff = tail_bound(l, p.eps, size_diff);
            let slack_a = binomial_slack(bound_a, n_samples);
            let slack_diff = binomial_slack(bound_diff, n_samples);
            let pass = tail_a <= bound_a + slack_a && tail_diff <= bound_diff + slack_diff;
            TailRow { lambda: l, tail_a, bound_a, tail_diff, bound_diff, slack_a, slack_diff, pass }
        })
        .collect();
    let antisymmetry_error = draws.iter().map(|d| d.2).fold(0.0, f64::max);
    let pass = rows.iter().all(|r| r.pass);
    Ok(ConcentrationReport { samples: n_samples, dist, size_a, size_diff, rows, antisymmetry_error, pass })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityRatio {
    pub log_ratio: f64,
    /// Log of `exp{−βc₂|γ| − 2βεΣ_{sp⁻}h}·Z(τ_{I₋}h)/Z(h)`; absent without `c₂`.
    pub log_bound: Option<f64>,
    pub pass: Option<bool>,
}

/// `g(σ,h)/g(τ_γσ, τ_{I₋}h)` for the measure conditioned on `Θ_Λ`, in log form.
pub fn density_ratio(
    sigma: &Configuration,
    gamma: &Contour,
    h: &FieldSample,
    p: &Params,
    consts: &ConstantTable,
) -> Result<DensityRatio> {
    let lambda = &sigma.region;
    if &h.region != lambda {
        return Err(Error::RegionMismatch("field region differs from Λ".into()));
    }
    let ham = Hamiltonian::new(lambda, p)?;
    let theta = theta_mask(lambda);
    if sigma.minus_mask() & theta != 0 {
        return Err(Error::Hypothesis("σ violates Θ_Λ".into()));
    }
    let erased = apply_erasure(sigma, gamma)?;
    let flipped = h.flip(&gamma.i_minus)?;
    let abs = |s: &Configuration, f: &[f64]| {
        ham.rel_energy(&s.spins, s.boundary, f, p.eps) + ham.all_plus_energy(f, p.eps)
    };
    let lz = log_partition_absolute_with(&ham, &h.values, p, theta)?;
    let lz_flip = log_partition_absolute_with(&ham, &flipped.values, p, theta)?;
    let log_ratio = p.beta * (abs(&erased, &flipped.values) - abs(sigma, &h.values)) + lz_flip - lz;
    let sp_minus: f64 = gamma
        .support
        .iter()
        .filter(|s| sigma.spin(s) == -1)
        .map(|s| h.value(s).unwrap_or(0.0))
        .sum();
    let log_bound = consts
        .c2
        .map(|c2| -p.beta * c2 * gamma.size() as f64 - 2.0 * p.beta * p.eps * sp_minus + lz_flip - lz);
    let pass = log_bound.map(|b| log_ratio <= b + 1e-9 * (1.0 + b.abs()));
    Ok(DensityRatio { log_ratio, log_bound, pass })
}

/// Sets `I₋(γ)` over `γ ∈ 𝒞₀` on `Λ` with `|γ| ≤ n_max`, paired with `|γ|`,
/// keeping the smallest `|γ|` for each set.
pub fn contour_interiors(lambda: &Region, n_max: usize, p: &Params) -> Result<Vec<(Region, usize)>> {
    let mut out: std::collections::BTreeMap<Region, usize> = Default::default();
    for g in enumerate_c0(lambda, None, p)? {
        if g.size() <= n_max && !g.i_minus.is_empty() {
            let e = out.entry(g.i_minus.clone()).or_insert(g.size());
            *e = (*e).min(g.size());
        }
    }
    Ok(out.into_iter().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BadEventEstimate {
    pub eps: f64,
    pub samples: usize,
    pub sets: usize,
    pub probability: f64,
    pub stderr: f64,
    /// Per-draw `sup Δ_{I₋(γ)}/(c₂|γ|)`, in draw order.
    pub sup_ratio: Vec<f64>,
}

/// Fraction of field draws with `sup_γ Δ_{I₋(γ)}/(c₂|γ|) > 1/4`. Draw `k`
/// uses the field seeded by `derive_seed(seed, k)` whatever `ε`, so runs at
/// different `ε` are coupled.
pub fn bad_event_probability(
    lambda: &Region,
    p: &Params,
    consts: &ConstantTable,
    n_max: usize,
    n_samples: usize,
    dist: FieldDist,
    seed: u64,
) -> Result<BadEventEstimate> {
    let sets = contour_interiors(lambda, n_max, p)?;
    bad_event_with(&sets, lambda, p, consts.c2_or_err()?, n_samples, dist, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn bad_event_with(
    sets: &[(Region, usize)],
    lambda: &Region,
    p: &Params,
    c2: f64,
    n_samples: usize,
    dist: FieldDist,
    seed: u64,
) -> Result<BadEventEstimate> {
    if n_samples == 0 {
        return Err(Error::Param("need at least one field draw".into()));
    }
    let eng = DeltaEngine::new(lambda, p)?;
    let idx: Vec<(Vec<usize>, usize)> =
        sets.iter().map(|(a, n)| Ok((eng.indices(a)?, *n))).collect::<Result<_>>()?;
    let sup_ratio: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            if idx.is_empty() {
                return Ok(f64::NEG_INFINITY);
            }
            let h = sample_field(lambda, dist, derive_seed(seed, k)).values;
            let lz = eng.log_z(&h)?;
            let mut best = f64::NEG_INFINITY;
            for (a, n) in &idx {
                best = best.max(eng.delta_from(lz, a, &h)? / (c2 * *n as f64));
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let hits = sup_ratio.iter().filter(|&&x| x > 0.25).count() as f64;
    let n = n_samples as f64;
    let probability = hits / n;
    Ok(BadEventEstimate {
        eps: p.eps,
        samples: n_samples,
        sets: sets.len(),
        probability,
        stderr: (probability * (1.0 - probability) / n).sqrt(),
        sup_ratio,
    })
}

/// Least-squares slope of `log P` against `1/ε²` over points with `P > 0`.
pub fn bad_event_slope(points: &[(f64, f64)]) -> Option<f64> {
    let xy: Vec<(f64, f64)> =
        points.iter().filter(|&&(e, q)| e > 0.0 && q > 0.0).map(|&(e, q)| (1.0 / (e * e), q.ln())).collect();
    if xy.len() < 2 {
        return None;
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AnimalVariant {
    Connected,
    ContourInteriors,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Normalization {
    EdgeBoundary,
    Size,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnimalResult {
    pub best_region: Region,
    pub score: f64,
    pub normalization: Normalization,
    pub examined: usize,
}

fn normalise(sum: f64, boundary: usize, size: usize, norm: Normalization) -> f64 {
    match norm {
        Normalization::EdgeBoundary => sum / boundary as f64,
        Normalization::Size => sum / size as f64,
    }
}

struct AnimalSearch<'a> {
    h: &'a FieldSample,
    k_max: usize,
    norm: Normalization,
    cells: Vec<Site>,
    seen: std::collections::HashSet<Site>,
    best: (f64, Vec<Site>),
    examined: usize,
}

impl AnimalSearch<'_> {
    fn visit(&mut self, sum: f64, boundary: usize) {
        self.examined += 1;
        let score = normalise(sum, boundary, self.cells.len(), self.norm);
        if score > self.best.0 {
            self.best = (score, self.cells.clone());
        }
    }

    /// Each connected set containing the first cell is produced once: a cell
    /// popped from `untried` is never offered again in this branch.
    fn grow(&mut self, mut untried: Vec<Site>, sum: f64, boundary: usize) {
        let d = self.h.region.dim();
        while let Some(c) = untried.pop() {
            let inside = self.cells.iter().filter(|x| x.l1(&c) == 1).count();
            let boundary2 = boundary + 2 * d - 2 * inside;
            let sum2 = sum + self.h.value(&c).unwrap();
            self.cells.push(c);
            self.visit(sum2, boundary2);
            if self.cells.len() < self.k_max {
                let mut fresh = Vec::new();
                for nb in c.neighbors() {
                    if self.h.region.contains(&nb) && self.seen.insert(nb) {
                        fresh.push(nb);
                    }
                }
                let mut next = untried.clone();
                next.extend(fresh.iter().copied());
                self.grow(next, sum2, boundary2);
                for nb in &fresh {
                    self.seen.remove(nb);
                }
            }
            self.cells.pop();
        }
    }
}

/// Best `Σ_{x∈A} h_x / |∂A|` (or `/|A|`) over non-empty sets `A` containing
/// the origin inside the field's region: connected sets with `|A| ≤ k_max`,
/// or minus interiors of contours in `𝒞₀` of size at most `k_max`.
pub fn greedy_animal(
    h: &FieldSample,
    k_max: usize,
    variant: AnimalVariant,
    norm: Normalization,
    p: &Params,
) -> Result<AnimalResult> {
    let d = h.region.dim();
    let origin = Site::origin(d);
    if !h.region.contains(&origin) {
        return Err(Error::RegionMismatch("origin outside the field region".into()));
    }
    if k_max == 0 {
        return Err(Error::Param("k_max must be positive".into()));
    }
    match variant {
        AnimalVariant::Connected => {
            if k_max > ANIMAL_CAP {
                return Err(Error::Cap(format!("k_max = {k_max} exceeds {ANIMAL_CAP}")));
            }
            let mut s = AnimalSearch {
                h,
                k_max,
                norm,
                cells: Vec::new(),
                seen: [origin].into_iter().collect(),
                best: (f64::NEG_INFINITY, Vec::new()),
                examined: 0,
            };
            s.grow(vec![origin], 0.0, 0);
            Ok(AnimalResult {
                best_region: Region::from_sites(d, s.best.1),
                score: s.best.0,
                normalization: norm,
                examined: s.examined,
            })
        }
        AnimalVariant::ContourInteriors => {
            let sets = contour_interiors(&h.region, k_max, p)?;
            let mut best: Option<(f64, Region)> = None;
            let mut examined = 0;
            for (a, _) in sets.into_iter().filter(|(a, _)| a.contains(&origin)) {
                examined += 1;
                let sum: f64 = a.iter().map(|s| h.value(s).unwrap()).sum();
                let score = normalise(sum, edge_boundary_len(&a), a.len(), norm);
                if best.as_ref().is_none_or(|b| score > b.0) {
                    best = Some((score, a));
                }
            }
            let (score, best_region) =
                best.ok_or_else(|| Error::Undefined("no contour minus interior contains the origin".into()))?;
            Ok(AnimalResult { best_region, score, normalization: norm, examined })
        }
    }
}

/// Subset oracle: every subset of the ℓ1 ball of radius `k_max − 1` (inside
/// the field region) that contains the origin, has at most `k_max` sites and
/// is connected.
pub fn greedy_animal_bruteforce(h: &FieldSample, k_max: usize, norm: Normalization) -> Result<AnimalResult> {
    let d = h.region.dim();
    let origin = Site::origin(d);
    let ball: Vec<Site> = h
        .region
        .iter()
        .filter(|s| **s != origin && s.l1_norm() < k_max as u64)
        .copied()
        .collect();
    if ball.len() > 30 {
        return Err(Error::Cap(format!("{} candidate sites", ball.len())));
    }
    let mut best = (f64::NEG_INFINITY, Region::empty(d));
    let mut examined = 0;
    for mask in 0u64..1 << ball.len() {
        if mask.count_ones() as usize >= k_max {
            continue;
        }
        let mut sites = vec![origin];
        sites.extend((0..ball.len()).filter(|i| mask >> i & 1 == 1).map(|i| ball[i]));
        let a = Region::from_sites(d, sites);
        if !a.is_connected() {
            continue;
        }
        examined += 1;
        let sum: f64 = a.iter().map(|s| h.value(s).unwrap()).sum();
        let score = normalise(sum, edge_boundary_len(&a), a.len(), norm);
        if score > best.0 {
            best = (score, a);
        }
    }
    Ok(AnimalResult { best_region: best.1, score: best.0, normalization: norm, examined })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupEstimate {
    pub n: usize,
    pub sets: usize,
    pub mean: f64,
    pub stderr: f64,
    /// Per-draw `sup_{γ∈𝒞₀(n)} Δ_{I₋(γ)}`.
    pub values: Vec<f64>,
}

/// Monte Carlo mean of `sup_{γ∈𝒞₀(n)} Δ_{I₋(γ)}` over field draws.
pub fn estimate_sup_expectation(
    n: usize,
    lambda: &Region,
    p: &Params,
    n_samples: usize,
    dist: FieldDist,
    seed: u64,
) -> Result<SupEstimate> {
    let sets: Vec<Region> = enumerate_c0(lambda, Some(n), p)?
        .into_iter()
        .map(|g| g.i_minus)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    sup_expectation_with(&sets, n, lambda, p, n_samples, dist, seed)
}

pub fn sup_expectation_with(
    sets: &[Region],
    n: usize,
    lambda: &Region,
    p: &Params,
    n_samples: usize,
    dist: FieldDist,
    seed: u64,
) -> Result<SupEstimate> {
    if n_samples == 0 {
        return Err(Error::Param("need at least one field draw".into()));
    }
    let eng = DeltaEngine::new(lambda, p)?;
    let idx: Vec<Vec<usize>> = sets.iter().map(|a| eng.indices(a)).collect::<Result<_>>()?;
    let values: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let h = sample_field(lambda, dist, derive_seed(seed, k)).values;
            let lz = eng.log_z(&h)?;
            // An empty family has supremum Δ_∅ = 0.
            let mut best = if idx.is_empty() { 0.0 } else { f64::NEG_INFINITY };
            for a in &idx {
                best = best.max(eng.delta_from(lz, a, &h)?);
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
    Ok(SupEstimate { n, sets: sets.len(), mean, stderr: (var / m).sqrt(), values })
}
