//! Verification campaigns behind `lrfim verify <suite>`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use lrfim_core::coarse::{
    admissible_cover, check_proposition1, count_bell_images, cube_pair_campaign, level_cutoff, projection_campaign,
    random_region, Campaign,
};
use lrfim_core::contour::{
    check_partition, check_single_component_property, finest_partition_bruteforce, for_each_contour,
    gamma_r_partition, peierls_gap_with, valid_partitions, ConfigSweep, Contour, Method,
};
use lrfim_core::disorder::{default_lambda_grid, density_ratio, verify_concentration};
use lrfim_core::entropy::{
    check_big_clusters, check_c0_count, check_covering_bound, check_coverings_of_c0, check_volume_bound,
    compute_constants, cube_pair_constant, ConstantTable,
};
use lrfim_core::lattice::Region;
use lrfim_core::model::{sample_field, theta_mask, Configuration, FieldDist, Hamiltonian, Params};
use lrfim_core::rng::{derive_seed, seeded_rng};

use crate::config::RunConfig;
use crate::output::{f, write_csv, Table};
use crate::CliError;

pub const SUITES: &[&str] = &["partitions", "geometry", "peierls", "entropy", "concentration", "montecarlo"];

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub check: String,
    /// Failures count against the suite.
    pub asserted: bool,
    pub instances: usize,
    pub violations: usize,
    /// Instances where the hypothesis of the statement did not hold.
    pub skipped: usize,
    pub min_margin: Option<f64>,
    pub detail: String,
}

impl CheckRow {
    fn new(check: impl Into<String>, asserted: bool) -> CheckRow {
        CheckRow {
            check: check.into(),
            asserted,
            instances: 0,
            violations: 0,
            skipped: 0,
            min_margin: None,
            detail: String::new(),
        }
    }

    fn record(&mut self, pass: bool, margin: Option<f64>) {
        self.instances += 1;
        if !pass {
            self.violations += 1;
        }
        if let Some(m) = margin {
            self.min_margin = Some(self.min_margin.map_or(m, |x| x.min(m)));
        }
    }

    fn absorb(&mut self, o: &CheckRow) {
        self.instances += o.instances;
        self.violations += o.violations;
        self.skipped += o.skipped;
        if let Some(m) = o.min_margin {
            self.min_margin = Some(self.min_margin.map_or(m, |x| x.min(m)));
        }
    }

    pub fn pass(&self) -> bool {
        !self.asserted || self.violations == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: String,
    pub rows: Vec<CheckRow>,
    pub warnings: Vec<String>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(CheckRow::pass)
    }

    pub fn row(&self, check: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.check == check)
    }

    /// Every row whose name starts with `prefix`.
    pub fn rows_with(&self, prefix: &str) -> Vec<&CheckRow> {
        self.rows.iter().filter(|r| r.check.starts_with(prefix)).collect()
    }
}

pub fn run(cfg: &RunConfig, suite: &str) -> Result<SuiteReport, CliError> {
    match suite {
        "partitions" => partitions(cfg),
        "geometry" => geometry(cfg),
        "peierls" => peierls(cfg),
        "entropy" => entropy(cfg),
        "concentration" => concentration(cfg),
        "montecarlo" => montecarlo(cfg),
        _ => Err(CliError::UnknownCommand(format!("unknown suite '{suite}' (expected one of {})", SUITES.join(", ")))),
    }
}

pub fn write_report(cfg: &RunConfig, report: &SuiteReport) -> Result<PathBuf, CliError> {
    let mut t = Table::new(&["check", "asserted", "instances", "violations", "skipped", "min_margin", "detail"]);
    for r in &report.rows {
        t.row([
            r.check.clone(),
            r.asserted.to_string(),
            r.instances.to_string(),
            r.violations.to_string(),
            r.skipped.to_string(),
            r.min_margin.map_or(String::new(), f),
            r.detail.clone(),
        ]);
    }
    write_csv(cfg, &format!("verify {}", report.suite), &format!("verify_{}.csv", report.suite), t)
}

/// `r = 2`, `M = 2`, `a = 3`: scales small enough for partitions to split
/// desk-sized sets.
pub fn small_overrides(p: &Params) -> Params {
    Params { m_sep: 2.0, ..p.clone() }.with_overrides(Some(3.0), None, Some(2))
}

/// Random region for partition campaigns, at most `max` sites, never empty.
pub fn region_instance(d: usize, seed: u64, index: u64, side: u32, max: usize) -> Region {
    let mut rng = seeded_rng(derive_seed(seed, index));
    let r = random_region(d, side, index, &mut rng);
    let mut sites = r.sites().to_vec();
    if sites.len() > max {
        sites.shuffle(&mut rng);
        sites.truncate(max);
    }
    if sites.is_empty() {
        sites.push(lrfim_core::lattice::Site::origin(d));
    }
    Region::from_sites(d, sites)
}

fn partitions(cfg: &RunConfig) -> Result<SuiteReport, CliError> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for d in [2usize, 3] {
        let defaults = match Params::new(d, cfg.params.alpha) {
            Ok(p) => p,
            Err(e) => {
                warnings.push(format!("d={d} skipped: {e}"));
                continue;
            }
        };
        let side = if d == 2 { 10 } else { 5 };
        let regions: Vec<Region> =
            (0..cfg.instances as u64).map(|k| region_instance(d, cfg.seed ^ d as u64, k, side, 60)).collect();
        for (label, p) in [("default", defaults.clone()), ("small", small_overrides(&defaults))] {
            let mut row = CheckRow::new(format!("gamma_r_valid_{label}_d{d}"), true);
            let results: Vec<(bool, usize)> = regions
                .par_iter()
                .map(|a| {
                    let part = gamma_r_partition(a, &p)?;
                    Ok::<_, CliError>((check_partition(a, &part, &p).ok(), part.len()))
                })
                .collect::<Result<_, _>>()?;
            let mut split = 0;
            for (ok, parts) in results {
                row.record(ok, None);
                split += (parts > 1) as usize;
            }
            row.detail = format!("{split} regions split into several parts");
            rows.push(row);
        }
    }
    let p = small_overrides(&Params::new(2, cfg.params.alpha.max(3.0))?);
    let count = cfg.instances.min(100) as u64;
    let regions: Vec<Region> = (0..count).map(|k| region_instance(2, cfg.seed ^ 0xf1, k, 8, 8)).collect();
    let results: Vec<[bool; 4]> = regions
        .par_iter()
        .map(|a| {
            let fin = finest_partition_bruteforce(a, &p)?;
            let sep = check_partition(a, &fin, &p).separation_violations == 0;
            let a1 = check_single_component_property(&fin);
            let index = |s| a.index_of(s).unwrap();
            let fin_masks: Vec<u32> =
                fin.parts.iter().map(|q| q.iter().fold(0u32, |m, s| m | 1 << index(s))).collect();
            let refines_all = valid_partitions(a, &p)?
                .iter()
                .all(|blocks| fin_masks.iter().all(|&fm| blocks.iter().any(|&b| fm & !b == 0)));
            let gr = gamma_r_partition(a, &p)?;
            Ok::<_, CliError>([sep, a1, refines_all, fin.refines(&gr)])
        })
        .collect::<Result<_, _>>()?;
    let names = ["finest_separation", "finest_single_component", "finest_refines_every_valid", "finest_refines_gamma_r"];
    for (k, name) in names.iter().enumerate() {
        // The last comparison is reported, not asserted.
        let mut row = CheckRow::new(*name, k < 3);
        for r in &results {
            row.record(r[k], None);
        }
        rows.push(row);
    }
    Ok(SuiteReport { suite: "partitions".into(), rows, warnings })
}

fn campaign_row(name: &str, c: &Campaign) -> CheckRow {
    CheckRow {
        check: name.into(),
        asserted: true,
        instances: c.checked,
        violations: c.violations,
        skipped: c.hypothesis_not_met,
        min_margin: c.min_margin,
        detail: format!("{} generated", c.instances),
    }
}

/// Counters for one sweep of contour checks.
#[derive(Clone, Debug, Default)]
struct SweepTally {
    rows: BTreeMap<&'static str, CheckRow>,
    max_level: u32,
}

impl SweepTally {
    fn record(&mut self, name: &'static str, asserted: bool, pass: bool, margin: Option<f64>) {
        self.rows.entry(name).or_insert_with(|| CheckRow::new(name, asserted)).record(pass, margin);
    }

    fn merge(&mut self, o: SweepTally) {
        for (k, v) in o.rows {
            match self.rows.get_mut(k) {
                Some(r) => r.absorb(&v),
                None => {
                    self.rows.insert(k, v);
                }
            }
        }
        self.max_level = self.max_level.max(o.max_level);
    }
}

fn contour_geometry_checks(t: &mut SweepTally, g: &Contour, p: &Params, consts: &ConstantTable, prop1: bool) {
    t.record("b0_equals_i_minus", true, admissible_cover(g, 0, p).b == g.i_minus, None);
    if !prop1 {
        return;
    }
    let cutoff = level_cutoff(g.size(), consts.b1, p);
    t.max_level = t.max_level.max(cutoff);
    for ell in 0..=cutoff {
        let r = check_proposition1(g, ell, p, consts);
        t.record("prop1_inner_boundary", true, r.pass_i, Some(r.bound_i - r.inner_cubes as f64));
        t.record("prop1_inner_boundary_displayed_constant", false, r.pass_i_displayed, None);
        t.record("prop1_symmetric_difference", true, r.pass_ii, Some(r.bound_ii - r.sym_diff as f64));
        t.record("prop1_outer_boundary_vs_size", true, r.pass_chain, None);
    }
}

fn geometry(cfg: &RunConfig) -> Result<SuiteReport, CliError> {
    let mut rows = Vec::new();
    let lambda_proj = 7.0 / 8.0;
    for d in [2usize, 3] {
        let c = projection_campaign(d, cfg.lemma_instances, lambda_proj, derive_seed(cfg.seed, d as u64))?;
        rows.push(campaign_row(&format!("projection_lemma_d{d}"), &c));
        let scales: &[u32] = if d == 2 { &[0, 1, 2, 3] } else { &[0, 1, 2] };
        let c = cube_pair_campaign(d, scales, cfg.lemma_instances, cube_pair_constant(d), derive_seed(cfg.seed, 10 + d as u64));
        rows.push(campaign_row(&format!("cube_pair_lemma_d{d}"), &c));
    }
    let small = small_overrides(&Params::new(2, cfg.params.alpha.max(3.0))?);
    let mut warnings = Vec::new();
    for &side in &cfg.sides {
        let lambda = Region::centered_box(2, side);
        let (label, p) = ("small", &small);
        let consts = compute_constants(p)?;
        let tally = for_each_contour(
            &lambda,
            p,
            Method::GammaR,
            SweepTally::default,
            |t, g, _| {
                contour_geometry_checks(t, g, p, &consts, true);
                Ok(())
            },
            |a, b| a.merge(b),
        )?;
        warnings.push(format!("side {side} ({label}): levels checked up to {}", tally.max_level));
        for (_, mut r) in tally.rows {
            r.check = format!("{}_side{side}_{label}", r.check);
            rows.push(r);
        }
    }
    Ok(SuiteReport { suite: "geometry".into(), rows, warnings })
}

fn peierls(cfg: &RunConfig) -> Result<SuiteReport, CliError> {
    let p0 = Params { eps: 0.0, ..cfg.params.clone() };
    let consts = compute_constants(&p0)?;
    let mut warnings = Vec::new();
    if !consts.feasible {
        warnings.push(format!(
            "M = {} below the threshold {:?}: the c2 bound is reported, not asserted",
            p0.m_sep, consts.m_threshold
        ));
    }
    let lambda = Region::centered_box(p0.d, cfg.side);
    let ham = Hamiltonian::new(&lambda, &p0)?;
    let sweep = ConfigSweep::new(&lambda, &p0, Method::GammaR)?;
    let free = sweep.all_sites();
    let feasible = consts.feasible;
    let tally = sweep.run(
        &free,
        SweepTally::default,
        |t, item| {
            let sigma = Configuration::from_mask(&lambda, item.sigma);
            for (k, part) in item.geometry.parts.iter().enumerate() {
                if !item.geometry.external[k] {
                    continue;
                }
                let g = part.contour(item.labels[k]);
                let gap = peierls_gap_with(&ham, &sigma, &g, &p0, &consts)?;
                t.record("energy_gap_positive", true, gap.delta_h > 0.0, Some(gap.ratio));
                if let Some(rhs) = gap.rhs {
                    t.record("energy_gap_c2_bound", feasible, gap.delta_h >= rhs * (1.0 - 1e-12), (rhs > 0.0).then(|| gap.delta_h / rhs));
                }
            }
            Ok(())
        },
        |a, b| a.merge(b),
    )?;
    let mut rows: Vec<CheckRow> = tally.rows.into_values().collect();
    for r in &mut rows {
        r.detail = match r.check.as_str() {
            "energy_gap_positive" => "min_margin is the smallest ΔH/(|γ|+F_I-+F_sp)".into(),
            _ => "min_margin is the smallest ΔH/(c2·cost)".into(),
        };
    }
    rows.push(density_ratio_campaign(cfg, &consts)?);
    Ok(SuiteReport { suite: "peierls".into(), rows, warnings })
}

/// Joint-density ratios on a 6-wide box, the smallest where `Θ_Λ` leaves
/// free spins, over every admissible configuration and external contour.
fn density_ratio_campaign(cfg: &RunConfig, consts: &ConstantTable) -> Result<CheckRow, CliError> {
    let p = if cfg.params.eps > 0.0 { cfg.params.clone() } else { Params { eps: 0.5, ..cfg.params.clone() } };
    let lambda = Region::centered_box(p.d, 6);
    let theta = theta_mask(&lambda);
    let sweep = ConfigSweep::new(&lambda, &p, Method::GammaR)?;
    let free: Vec<usize> = (0..lambda.len()).filter(|&i| theta >> i & 1 == 0).collect();
    let pairs = sweep.run(
        &free,
        Vec::new,
        |acc, item| {
            for (k, part) in item.geometry.parts.iter().enumerate() {
                if item.geometry.external[k] {
                    acc.push((item.sigma, part.contour(item.labels[k])));
                }
            }
            Ok(())
        },
        |a, b| a.extend(b),
    )?;
    let draws = cfg.samples.min(20) as u64;
    let results: Vec<(Option<bool>, f64)> = (0..draws)
        .into_par_iter()
        .flat_map_iter(|k| {
            let h = sample_field(&lambda, cfg.dist, derive_seed(cfg.seed ^ 0xd5, k));
            pairs
                .iter()
                .map(|(mask, g)| {
                    let sigma = Configuration::from_mask(&lambda, *mask);
                    let r = density_ratio(&sigma, g, &h, &p, consts)?;
                    Ok((r.pass, r.log_bound.map_or(f64::NAN, |b| b - r.log_ratio)))
                })
                .collect::<Vec<Result<_, CliError>>>()
        })
        .collect::<Result<_, _>>()?;
    let mut row = CheckRow::new("density_ratio_bound", consts.feasible);
    for (pass, margin) in results {
        row.record(pass.unwrap_or(true), margin.is_finite().then_some(margin));
    }
    row.detail = format!("{} (σ, γ) pairs × {draws} fields on a 6×6 box, ε = {}", pairs.len(), p.eps);
    Ok(row)
}

fn entropy(cfg: &RunConfig) -> Result<SuiteReport, CliError> {
    let p = &cfg.params;
    let consts = compute_constants(p)?;
    let lambda = Region::centered_box(p.d, cfg.side);
    let all = lrfim_core::contour::enumerate_c0(&lambda, None, p)?;
    let mut by_size: BTreeMap<usize, Vec<Contour>> = BTreeMap::new();
    for g in all {
        by_size.entry(g.size()).or_default().push(g);
    }
    let mut rows = Vec::new();
    let mut c0 = CheckRow::new("c0_count", true);
    let mut cov = CheckRow::new("coverings_of_c0", true);
    let mut bell = CheckRow::new("bell_images", true);
    let mut vol = CheckRow::new("partial_volume_bound", true);
    let mut covb = CheckRow::new("covering_bound", true);
    let mut big = CheckRow::new("big_clusters", false);
    let mut growth = Vec::new();
    for (&n, list) in &by_size {
        let r = check_c0_count(list, n, &consts);
        c0.record(r.pass, Some(r.log_bound - (r.count as f64).ln()));
        growth.push(format!("n={n}:{}", list.len()));
        let top = level_cutoff(n, consts.b1, p).max(1);
        for ell in 0..=top {
            let r = check_coverings_of_c0(list, n, ell, p, &consts);
            cov.record(r.pass, Some(r.log_bound - (r.count.max(1) as f64).ln()));
            let b = count_bell_images(list, n, ell, p, &consts);
            if b.in_range {
                bell.record(b.pass, Some(b.log_bound - (b.count.max(1) as f64).ln()));
            } else {
                bell.skipped += 1;
            }
        }
        for g in list {
            for ell in 0..=top {
                let r = check_volume_bound(g, ell, p, &consts);
                vol.record(r.pass, Some(r.margin()));
                let r = check_covering_bound(g, ell, g.step.max(1), p, &consts);
                covb.record(r.pass, Some(r.margin()));
            }
            for r in check_big_clusters(g, g.step, p) {
                big.record(r.pass, Some(r.margin()));
            }
        }
    }
    c0.detail = format!("|C0(n)| by size: {}", growth.join(" "));
    let top_step = by_size.values().flatten().map(|g| g.step).max().unwrap_or(0);
    big.detail = format!("largest removal step {top_step}; clusters exist only for steps above 1");
    rows.extend([c0, cov, bell, vol, covb, big]);
    Ok(SuiteReport { suite: "entropy".into(), rows, warnings: Vec::new() })
}

fn concentration(cfg: &RunConfig) -> Result<SuiteReport, CliError> {
    let p = &cfg.params;
    let lambda = Region::centered_box(p.d, 2);
    let s = lambda.sites();
    let pick = |idx: &[usize]| Region::from_sites(p.d, idx.iter().map(|&i| s[i]));
    let n = s.len();
    let pairs = [
        (pick(&[0, 1]), pick(&[1, 2])),
        (pick(&[0]), pick(&(0..n).collect::<Vec<_>>())),
        (pick(&(0..n).collect::<Vec<_>>()), pick(&[])),
    ];
    let mut rows = Vec::new();
    for dist in [FieldDist::Gaussian, FieldDist::Bernoulli] {
        for (k, (a, a2)) in pairs.iter().enumerate() {
            let kmax = a.len().max(a.symmetric_difference_len(a2)).max(1);
            let grid = default_lambda_grid(p.eps, kmax, 20);
            let rep = verify_concentration(a, a2, &lambda, p, cfg.samples, &grid, dist, derive_seed(cfg.seed, k as u64))?;
            let name = format!("{dist:?}").to_lowercase();
            let mut tails = CheckRow::new(format!("tails_{name}_pair{k}"), true);
            for r in &rep.rows {
                let margin = (r.bound_a + r.slack_a - r.tail_a).min(r.bound_diff + r.slack_diff - r.tail_diff);
                tails.record(r.pass, Some(margin));
            }
            tails.detail = format!("|A|={} |AΔA'|={} draws={}", rep.size_a, rep.size_diff, rep.samples);
            let mut anti = CheckRow::new(format!("antisymmetry_{name}_pair{k}"), true);
            anti.record(rep.antisymmetry_error <= 1e-10, Some(1e-10 - rep.antisymmetry_error));
            anti.detail = format!("max error {:e}", rep.antisymmetry_error);
            rows.push(tails);
            rows.push(anti);
        }
    }
    Ok(SuiteReport { suite: "concentration".into(), rows, warnings: Vec::new() })
}

fn montecarlo(cfg: &RunConfig) -> Result<SuiteReport, CliError> {
    let rows = crate::experiments::mc_vs_exact(cfg)?
        .into_iter()
        .map(|r| {
            let label = if r.conditioned { "conditioned" } else { "plain" };
            let mut row = CheckRow::new(format!("mc_vs_exact_{label}_beta{}_eps{}", r.beta, r.eps), true);
            row.record(r.pass, Some(3.0 * r.combined_se - (r.mc_mean - r.exact_mean).abs()));
            row.detail = format!(
                "exact {:.6} mc {:.6} se {:.2e} max per-field deviation {:.2e}",
                r.exact_mean, r.mc_mean, r.combined_se, r.max_abs_diff
            );
            row
        })
        .collect();
    Ok(SuiteReport { suite: "montecarlo".into(), rows, warnings: Vec::new() })
}
