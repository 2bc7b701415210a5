//! Front ends to the library: each command builds rows, writes one CSV and
//! returns the rows for callers that want them.

use std::path::PathBuf;

use rayon::prelude::*;

use lrfim_core::coarse::admissible_cover;
use lrfim_core::contour::{contours_of, enumerate_c0, Contour, Method};
use lrfim_core::disorder::{
    bad_event_slope, bad_event_with, contour_interiors, greedy_animal, AnimalVariant, BadEventEstimate,
    Normalization,
};
use lrfim_core::entropy::{compute_constants, ConstantTable};
use lrfim_core::lattice::{Region, Site};
use lrfim_core::model::{
    gibbs_probability_with, metropolis_run_with, sample_field, site_minus_event, theta_mask, theta_sites,
    Configuration, FieldSample, Hamiltonian, McOptions, Observable, Params,
};
use lrfim_core::rng::derive_seed;

use crate::config::RunConfig;
use crate::output::{f, write_csv, Table};
use crate::CliError;

pub fn constants(cfg: &RunConfig, require_feasible: bool) -> Result<(ConstantTable, PathBuf), CliError> {
    let t = compute_constants(&cfg.params)?;
    let mut table = Table::new(&["name", "value", "formula"]);
    for e in t.entries() {
        table.row([e.name.to_string(), f(e.value), e.formula.to_string()]);
    }
    let path = write_csv(cfg, "constants", "constants.csv", table)?;
    if require_feasible && !t.feasible {
        return Err(CliError::Infeasible(format!(
            "M = {} is below the threshold {}",
            cfg.params.m_sep,
            t.m_threshold.map_or("undefined".into(), |m| m.to_string())
        )));
    }
    Ok((t, path))
}

/// Aligned text rendering of a constant table.
pub fn render_constants(t: &ConstantTable) -> String {
    let mut out = String::new();
    for e in t.entries() {
        out.push_str(&format!("{:<14} {:>24}   {}\n", e.name, format!("{:.10e}", e.value), e.formula));
    }
    out.push_str(&format!("feasible       {}\n", t.feasible));
    for n in &t.notes {
        out.push_str(&format!("note: {n}\n"));
    }
    out
}

/// `P(σ₀ = −1)` for one field realisation, exact when the free spins fit
/// the enumeration cap, Metropolis with the conditional estimator otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct OriginEstimate {
    pub value: f64,
    pub stderr: f64,
    pub exact: bool,
}

fn free_count(ham: &Hamiltonian, theta: bool) -> usize {
    if theta {
        ham.len() - theta_sites(&ham.region).len()
    } else {
        ham.len()
    }
}

pub fn origin_minus_exact(ham: &Hamiltonian, h: &[f64], p: &Params, theta: bool) -> Result<f64, CliError> {
    let event = site_minus_event(&ham.region, &Site::origin(p.d))?;
    let forced = if theta { theta_mask(&ham.region) } else { 0 };
    Ok(gibbs_probability_with(ham, h, p, forced, event)?)
}

pub fn origin_minus_mc(
    ham: &Hamiltonian,
    h: &[f64],
    p: &Params,
    theta: bool,
    sweeps: usize,
    seed: u64,
) -> Result<OriginEstimate, CliError> {
    let mut opts = McOptions::new(p.d, sweeps);
    opts.theta = theta;
    let est = metropolis_run_with(ham, h, p, &opts, seed, &[Observable::OriginMinusConditional])?;
    Ok(OriginEstimate { value: est[0].mean, stderr: est[0].stderr, exact: false })
}

pub fn origin_minus(
    ham: &Hamiltonian,
    h: &[f64],
    p: &Params,
    theta: bool,
    sweeps: usize,
    seed: u64,
) -> Result<OriginEstimate, CliError> {
    if ham.len() <= 64 && free_count(ham, theta) <= p.exact_cap {
        Ok(OriginEstimate { value: origin_minus_exact(ham, h, p, theta)?, stderr: 0.0, exact: true })
    } else {
        origin_minus_mc(ham, h, p, theta, sweeps, seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRow {
    pub beta: f64,
    pub eps: f64,
    pub mean: f64,
    /// Spread over realisations.
    pub std: f64,
    pub stderr: f64,
    /// Mean within-chain standard error (0 when exact).
    pub chain_stderr: f64,
    pub exact: bool,
    pub values: Vec<f64>,
}

/// `ν⁺(σ₀ = −1)` on the box of side `cfg.side` over the `(β, ε)` grid.
/// Realisation `k` uses the same field and chain seed at every grid point.
pub fn phase_rows(cfg: &RunConfig) -> Result<Vec<PhaseRow>, CliError> {
    let lambda = Region::centered_box(cfg.params.d, cfg.side);
    let ham = Hamiltonian::new(&lambda, &cfg.params)?;
    let fields: Vec<FieldSample> = (0..cfg.realizations as u64)
        .map(|k| sample_field(&lambda, cfg.dist, derive_seed(cfg.seed, k)))
        .collect();
    let mut rows = Vec::new();
    for &beta in &cfg.betas {
        for &eps in &cfg.epss {
            let p = Params { beta, eps, ..cfg.params.clone() };
            let est: Vec<OriginEstimate> = fields
                .par_iter()
                .map(|h| origin_minus(&ham, &h.values, &p, true, cfg.sweeps, derive_seed(h.seed, 1)))
                .collect::<Result<_, _>>()?;
            rows.push(summarise(beta, eps, &est));
        }
    }
    Ok(rows)
}

fn summarise(beta: f64, eps: f64, est: &[OriginEstimate]) -> PhaseRow {
    let n = est.len() as f64;
    let values: Vec<f64> = est.iter().map(|e| e.value).collect();
    let mean = values.iter().sum::<f64>() / n;
    let var = if est.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    PhaseRow {
        beta,
        eps,
        mean,
        std: var.sqrt(),
        stderr: (var / n).sqrt(),
        chain_stderr: est.iter().map(|e| e.stderr).sum::<f64>() / n,
        exact: est.iter().all(|e| e.exact),
        values,
    }
}

pub fn phase(cfg: &RunConfig) -> Result<(Vec<PhaseRow>, PathBuf), CliError> {
    let rows = phase_rows(cfg)?;
    let mut t = Table::new(&["beta", "eps", "mean", "std", "stderr", "chain_stderr", "method", "realizations"]);
    for r in &rows {
        t.row([
            f(r.beta),
            f(r.eps),
            f(r.mean),
            f(r.std),
            f(r.stderr),
            f(r.chain_stderr),
            if r.exact { "exact".into() } else { "metropolis".to_string() },
            r.values.len().to_string(),
        ]);
    }
    let path = write_csv(cfg, "phase", "phase.csv", t)?;
    Ok((rows, path))
}

#[derive(Clone, Debug, PartialEq)]
pub struct McCheckRow {
    pub beta: f64,
    pub eps: f64,
    pub conditioned: bool,
    pub exact_mean: f64,
    pub mc_mean: f64,
    /// Standard error of the realisation-averaged Monte Carlo estimate: the
    /// larger of the pooled batch-means error and the spread of `mc − exact`
    /// across independent chains.
    pub combined_se: f64,
    /// Largest per-realisation `|mc − exact|`.
    pub max_abs_diff: f64,
    pub pass: bool,
}

/// Metropolis against exact enumeration, for the measure conditioned on
/// `Θ_Λ` and the plain plus-boundary measure, on the box of side `cfg.side`.
pub fn mc_vs_exact(cfg: &RunConfig) -> Result<Vec<McCheckRow>, CliError> {
    let lambda = Region::centered_box(cfg.params.d, cfg.side);
    let ham = Hamiltonian::new(&lambda, &cfg.params)?;
    let fields: Vec<FieldSample> = (0..cfg.realizations as u64)
        .map(|k| sample_field(&lambda, cfg.dist, derive_seed(cfg.seed, k)))
        .collect();
    let mut rows = Vec::new();
    for &beta in &cfg.betas {
        for &eps in &cfg.epss {
            let p = Params { beta, eps, ..cfg.params.clone() };
            for conditioned in [true, false] {
                let pairs: Vec<(f64, OriginEstimate)> = fields
                    .par_iter()
                    .map(|h| {
                        let exact = origin_minus_exact(&ham, &h.values, &p, conditioned)?;
                        let mc = origin_minus_mc(&ham, &h.values, &p, conditioned, cfg.sweeps, derive_seed(h.seed, 1))?;
                        Ok::<_, CliError>((exact, mc))
                    })
                    .collect::<Result<_, _>>()?;
                let n = pairs.len() as f64;
                let exact_mean = pairs.iter().map(|x| x.0).sum::<f64>() / n;
                let mc_mean = pairs.iter().map(|x| x.1.value).sum::<f64>() / n;
                let pooled = pairs.iter().map(|x| x.1.stderr.powi(2)).sum::<f64>().sqrt() / n;
                let diffs: Vec<f64> = pairs.iter().map(|(e, m)| m.value - e).collect();
                let diff = (mc_mean - exact_mean).abs();
                let spread = if pairs.len() > 1 {
                    let var = diffs.iter().map(|x| (x - (mc_mean - exact_mean)).powi(2)).sum::<f64>() / (n - 1.0);
                    (var / n).sqrt()
                } else {
                    0.0
                };
                let combined_se = pooled.max(spread);
                let max_abs_diff = diffs.iter().map(|x| x.abs()).fold(0.0, f64::max);
                let pass = if combined_se > 0.0 { diff <= 3.0 * combined_se } else { diff <= 1e-12 };
                rows.push(McCheckRow { beta, eps, conditioned, exact_mean, mc_mean, combined_se, max_abs_diff, pass });
            }
        }
    }
    Ok(rows)
}

pub fn parse_variant(s: &str) -> Result<AnimalVariant, CliError> {
    match s {
        "connected" => Ok(AnimalVariant::Connected),
        "interiors" | "contour_interiors" => Ok(AnimalVariant::ContourInteriors),
        _ => Err(CliError::Usage(format!("unknown animal variant '{s}'"))),
    }
}

pub fn parse_normalization(s: &str) -> Result<Normalization, CliError> {
    match s {
        "boundary" | "edge_boundary" => Ok(Normalization::EdgeBoundary),
        "size" => Ok(Normalization::Size),
        _ => Err(CliError::Usage(format!("unknown normalization '{s}'"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnimalRow {
    pub seed: u64,
    pub score: f64,
    pub size: usize,
    pub examined: usize,
    pub region: String,
}

fn render_region(r: &Region) -> String {
    r.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";")
}

/// Greedy animal on a box large enough for `k_max`: one row for a constant
/// field, otherwise one row per field draw.
pub fn animal(cfg: &RunConfig) -> Result<(Vec<AnimalRow>, PathBuf), CliError> {
    let variant = parse_variant(&cfg.variant)?;
    let norm = parse_normalization(&cfg.normalization)?;
    let side = match variant {
        AnimalVariant::Connected => 2 * cfg.k_max as u32 + 1,
        AnimalVariant::ContourInteriors => cfg.side,
    };
    let lambda = Region::centered_box(cfg.params.d, side);
    let fields: Vec<FieldSample> = match cfg.field {
        Some(v) => vec![FieldSample::constant(&lambda, v)],
        None => (0..cfg.samples as u64).map(|k| sample_field(&lambda, cfg.dist, derive_seed(cfg.seed, k))).collect(),
    };
    let rows: Vec<AnimalRow> = fields
        .par_iter()
        .map(|h| {
            let r = greedy_animal(h, cfg.k_max, variant, norm, &cfg.params)?;
            Ok::<_, CliError>(AnimalRow {
                seed: h.seed,
                score: r.score,
                size: r.best_region.len(),
                examined: r.examined,
                region: render_region(&r.best_region),
            })
        })
        .collect::<Result<_, _>>()?;
    let mut t = Table::new(&["field_seed", "variant", "normalization", "k_max", "score", "size", "examined", "region"]);
    for r in &rows {
        t.row([
            r.seed.to_string(),
            cfg.variant.clone(),
            cfg.normalization.clone(),
            cfg.k_max.to_string(),
            f(r.score),
            r.size.to_string(),
            r.examined.to_string(),
            r.region.clone(),
        ]);
    }
    let path = write_csv(cfg, "animal", "animal.csv", t)?;
    Ok((rows, path))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BadEventRun {
    pub estimates: Vec<BadEventEstimate>,
    /// Per ε (in the order given): probability no larger than at the next larger ε.
    pub monotone: Vec<bool>,
    pub slope: Option<f64>,
}

/// Bad-event probability over `cfg.epss`, with coupled field draws.
pub fn badevent_run(cfg: &RunConfig) -> Result<BadEventRun, CliError> {
    let lambda = Region::centered_box(cfg.params.d, cfg.side);
    let consts = compute_constants(&cfg.params)?;
    let c2 = consts.c2_or_err()?;
    if !(c2 > 0.0) {
        return Err(CliError::Usage(format!("c2 = {c2} is not positive; set feasible_m=true or raise m")));
    }
    let sets = contour_interiors(&lambda, cfg.n_max, &cfg.params)?;
    let mut order: Vec<usize> = (0..cfg.epss.len()).collect();
    order.sort_by(|&a, &b| cfg.epss[b].total_cmp(&cfg.epss[a]));
    let estimates: Vec<BadEventEstimate> = cfg
        .epss
        .iter()
        .map(|&eps| {
            let p = Params { eps, ..cfg.params.clone() };
            bad_event_with(&sets, &lambda, &p, c2, cfg.samples, cfg.dist, cfg.seed).map_err(CliError::from)
        })
        .collect::<Result<_, _>>()?;
    let mut monotone = vec![true; cfg.epss.len()];
    for w in order.windows(2) {
        let (hi, lo) = (&estimates[w[0]], &estimates[w[1]]);
        monotone[w[1]] = lo.probability <= hi.probability;
    }
    let slope = bad_event_slope(&estimates.iter().map(|e| (e.eps, e.probability)).collect::<Vec<_>>());
    Ok(BadEventRun { estimates, monotone, slope })
}

pub fn badevent(cfg: &RunConfig) -> Result<(BadEventRun, PathBuf), CliError> {
    let run = badevent_run(cfg)?;
    let mut t = Table::new(&["eps", "beta", "n_max", "samples", "sets", "probability", "stderr", "monotone"]);
    for (e, m) in run.estimates.iter().zip(&run.monotone) {
        t.row([
            f(e.eps),
            f(cfg.params.beta),
            cfg.n_max.to_string(),
            e.samples.to_string(),
            e.sets.to_string(),
            f(e.probability),
            f(e.stderr),
            m.to_string(),
        ]);
    }
    let path = write_csv(cfg, "badevent", "badevent.csv", t)?;
    Ok((run, path))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoarsenRow {
    pub ell: u32,
    pub cubes: usize,
    pub inner_cubes: usize,
    pub b_size: usize,
    pub i_minus_size: usize,
    pub equals_i_minus: bool,
    pub b: String,
}

pub fn coarsen_rows(cfg: &RunConfig, contours: &[Contour]) -> Vec<CoarsenRow> {
    contours
        .iter()
        .map(|g| {
            let c = admissible_cover(g, cfg.ell, &cfg.params);
            CoarsenRow {
                ell: cfg.ell,
                cubes: c.cubes.len(),
                inner_cubes: c.inner_boundary.len(),
                b_size: c.b.len(),
                i_minus_size: g.i_minus.len(),
                equals_i_minus: c.b == g.i_minus,
                b: render_region(&c.b),
            }
        })
        .collect()
}

/// `B_ℓ` for each contour line of `text` (serialised contour format).
pub fn coarsen(cfg: &RunConfig, text: &str) -> Result<(Vec<CoarsenRow>, PathBuf), CliError> {
    let contours: Vec<Contour> = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(Contour::parse)
        .collect::<Result<_, _>>()?;
    let rows = coarsen_rows(cfg, &contours);
    let mut t = Table::new(&["ell", "cubes", "inner_cubes", "b_size", "i_minus_size", "equals_i_minus", "b"]);
    for r in &rows {
        t.row([
            r.ell.to_string(),
            r.cubes.to_string(),
            r.inner_cubes.to_string(),
            r.b_size.to_string(),
            r.i_minus_size.to_string(),
            r.equals_i_minus.to_string(),
            r.b.clone(),
        ]);
    }
    let path = write_csv(cfg, "coarsen", "coarsen.csv", t)?;
    Ok((rows, path))
}

fn contour_table(contours: &[Contour], external: Option<&[bool]>) -> Table {
    let mut t = Table::new(&["index", "size", "i_minus", "i_plus", "external", "contour"]);
    for (k, g) in contours.iter().enumerate() {
        t.row([
            k.to_string(),
            g.size().to_string(),
            g.i_minus.len().to_string(),
            g.i_plus.len().to_string(),
            external.map_or("".into(), |e| e[k].to_string()),
            g.serialize(),
        ]);
    }
    t
}

/// Contours in `𝒞₀` on the box of side `cfg.side`, optionally of size `n`.
pub fn contours_dump(cfg: &RunConfig, n: Option<usize>) -> Result<(Vec<Contour>, PathBuf), CliError> {
    let lambda = Region::centered_box(cfg.params.d, cfg.side);
    let list = enumerate_c0(&lambda, n, &cfg.params)?;
    let path = write_csv(cfg, "contours dump", "contours.csv", contour_table(&list, None))?;
    Ok((list, path))
}

/// Parse `x,y;x,y;...` into sites of dimension `d`.
pub fn parse_sites(text: &str, d: usize) -> Result<Vec<Site>, CliError> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let c: Vec<i32> = s
                .trim()
                .trim_matches(|c| c == '(' || c == ')')
                .split(',')
                .map(|x| x.trim().parse().map_err(|_| CliError::Usage(format!("bad site '{s}'"))))
                .collect::<Result<_, _>>()?;
            if c.len() != d {
                return Err(CliError::Usage(format!("site '{s}' does not have {d} coordinates")));
            }
            Ok(Site::new(&c))
        })
        .collect()
}

/// Contours of the configuration with `−1` exactly on `minus`.
pub fn contours_extract(cfg: &RunConfig, minus: &str) -> Result<(Vec<Contour>, PathBuf), CliError> {
    let lambda = Region::centered_box(cfg.params.d, cfg.side);
    let sites = parse_sites(minus, cfg.params.d)?;
    let sigma = Configuration::with_minus(&lambda, &sites)?;
    let fam = contours_of(&sigma, &cfg.params, Method::GammaR)?;
    let path = write_csv(cfg, "contours extract", "contours.csv", contour_table(&fam.contours, Some(&fam.external)))?;
    Ok((fam.contours, path))
}
