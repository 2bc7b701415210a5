//! Acceptance gate: one PASS/FAIL line per criterion, then a single assert.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use lrfim_cli::config::RunConfig;
use lrfim_cli::experiments::{mc_vs_exact, phase_rows};
use lrfim_cli::suites::{self, SuiteReport};
use lrfim_core::disorder::{greedy_animal, greedy_animal_bruteforce, AnimalVariant, Normalization};
use lrfim_core::lattice::Region;
use lrfim_core::model::{sample_field, FieldDist, FieldSample, Params};

struct Gate {
    lines: Vec<String>,
    failed: Vec<usize>,
}

impl Gate {
    fn report(&mut self, n: usize, name: &str, pass: bool, elapsed: Duration, limit: Option<Duration>, detail: String) {
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let ok = pass && in_time;
        let limit = limit.map_or(String::new(), |l| format!(" (limit {}s)", l.as_secs()));
        let line = format!(
            "{} criterion {n:>2} {name}: {detail}; {:.1}s{limit}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        println!("{line}");
        self.lines.push(line);
        if !ok {
            self.failed.push(n);
        }
    }
}

fn out_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lrfim-acceptance-{}-{tag}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn cfg(pairs: &[(&str, &str)], tag: &str) -> RunConfig {
    let mut c = RunConfig::with(pairs).unwrap();
    c.out_dir = out_dir(tag);
    c
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

/// Asserted rows with the given prefix: all clean, and at least one instance.
fn clean(report: &SuiteReport, prefix: &str) -> (bool, String) {
    let rows = report.rows_with(prefix);
    let instances: usize = rows.iter().map(|r| r.instances).sum();
    let violations: usize = rows.iter().filter(|r| r.asserted).map(|r| r.violations).sum();
    let skipped: usize = rows.iter().map(|r| r.skipped).sum();
    let ok = !rows.is_empty() && instances > 0 && rows.iter().all(|r| r.pass());
    (ok, format!("{} checks, {instances} instances, {violations} violations, {skipped} hypothesis not met", rows.len()))
}

fn margin(report: &SuiteReport, check: &str) -> String {
    report.row(check).and_then(|r| r.min_margin).map_or("-".into(), |m| format!("{m:.4}"))
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn acceptance() {
    let mut g = Gate { lines: Vec::new(), failed: Vec::new() };
    let min = |m: u64| Some(Duration::from_secs(60 * m));

    // 1 and 2
    let c = cfg(&[("instances", "500")], "partitions");
    let (rep, t) = timed(|| suites::run(&c, "partitions").unwrap());
    let (ok, detail) = clean(&rep, "gamma_r_valid_");
    let counts_ok = rep.rows_with("gamma_r_valid_").iter().all(|r| r.instances == 500)
        && rep.rows_with("gamma_r_valid_").len() == 4;
    g.report(1, "partition validity", ok && counts_ok, t, min(1), detail);
    let rows = rep.rows_with("finest_");
    let ok = rows.iter().filter(|r| r.asserted).count() == 3
        && rows.iter().all(|r| r.pass() && r.instances == 100);
    g.report(2, "finest-partition oracle", ok, t, min(2), format!("{} checks over 100 regions", rows.len()));

    // 3, 4 and 5
    let c = cfg(&[("sides", "4,5"), ("lemma_instances", "10000")], "geometry");
    let (rep, t) = timed(|| suites::run(&c, "geometry").unwrap());
    let (ok, detail) = clean(&rep, "b0_equals_i_minus");
    g.report(3, "coarse-graining identity", ok && rep.rows_with("b0_equals_i_minus").len() == 2, t, min(5), detail);
    let (ok, detail) = clean(&rep, "prop1_");
    let displayed: usize =
        rep.rows_with("prop1_inner_boundary_displayed").iter().map(|r| r.violations).sum();
    g.report(4, "coarse-graining bounds", ok, t, None, format!("{detail}; displayed b1 would fail {displayed} times"));
    let (ok_p, dp) = clean(&rep, "projection_lemma");
    let (ok_c, dc) = clean(&rep, "cube_pair_lemma");
    let generated = rep.rows_with("projection_lemma").iter().chain(rep.rows_with("cube_pair_lemma").iter())
        .all(|r| r.instances + r.skipped == 10_000);
    g.report(5, "discrete-geometry lemmas", ok_p && ok_c && generated, t, min(3), format!("projection {dp}; cube pair {dc}"));

    // 6
    let c = cfg(&[("side", "4"), ("feasible_m", "true"), ("eps", "0.5")], "peierls");
    let (rep, t) = timed(|| suites::run(&c, "peierls").unwrap());
    let (ok, detail) = clean(&rep, "");
    let asserted = rep.rows.iter().all(|r| r.asserted);
    g.report(
        6,
        "peierls positivity",
        ok && asserted,
        t,
        None,
        format!(
            "{detail}; min ΔH/cost {} min ΔH/(c2·cost) {}",
            margin(&rep, "energy_gap_positive"),
            margin(&rep, "energy_gap_c2_bound")
        ),
    );

    // 7
    let c = cfg(&[("eps", "0.5"), ("beta", "1"), ("samples", "10000")], "concentration");
    let (rep, t) = timed(|| suites::run(&c, "concentration").unwrap());
    let (ok, detail) = clean(&rep, "");
    let grid_ok = rep.rows_with("tails_").iter().all(|r| r.instances == 20);
    g.report(7, "concentration", ok && grid_ok, t, min(2), detail);

    // 8
    let (reps, t) = timed(|| {
        let defaults = cfg(&[("side", "5")], "entropy-default");
        let small = cfg(&[("side", "5"), ("r", "2"), ("m", "2"), ("a", "3")], "entropy-small");
        [suites::run(&defaults, "entropy").unwrap(), suites::run(&small, "entropy").unwrap()]
    });
    let results: Vec<(bool, String)> = reps.iter().map(|r| clean(r, "")).collect();
    let growth = reps[0].row("c0_count").map(|r| r.detail.clone()).unwrap_or_default();
    g.report(
        8,
        "counting bounds",
        results.iter().all(|r| r.0),
        t,
        None,
        format!("default: {}; small: {}; {growth}", results[0].1, results[1].1),
    );

    // 9
    let c = cfg(&[("side", "3"), ("betas", "0.3,1.0"), ("epss", "0,0.5"), ("realizations", "20")], "mc");
    let (rows, t) = timed(|| mc_vs_exact(&c).unwrap());
    let worst = rows
        .iter()
        .map(|r| if r.combined_se > 0.0 { (r.mc_mean - r.exact_mean).abs() / r.combined_se } else { 0.0 })
        .fold(0.0, f64::max);
    g.report(
        9,
        "metropolis against exact",
        rows.len() == 8 && rows.iter().all(|r| r.pass),
        t,
        min(3),
        format!("{} grid points (with and without Θ), largest |diff|/se {worst:.2}", rows.len()),
    );

    // 10
    let c = cfg(
        &[("d", "3"), ("side", "8"), ("betas", "2"), ("epss", "0.1,2.0"), ("realizations", "20"), ("dist", "gaussian")],
        "phase",
    );
    let (rows, t) = timed(|| phase_rows(&c).unwrap());
    let (lo, hi) = (rows[0].mean, rows[1].mean);
    g.report(
        10,
        "phase-transition smoke",
        rows.len() == 2 && lo < 0.2 && hi > lo,
        t,
        min(10),
        format!("mean at ε=0.1 {lo:.3e}, at ε=2.0 {hi:.3e}"),
    );

    // 11
    let (res, t) = timed(|| {
        let p = Params::new(2, 4.0).unwrap();
        let lambda = Region::centered_box(2, 9);
        let mut agree = true;
        for seed in 0..10 {
            for dist in [FieldDist::Gaussian, FieldDist::Bernoulli] {
                let h = sample_field(&lambda, dist, seed);
                for k in 1..=4 {
                    for norm in [Normalization::EdgeBoundary, Normalization::Size] {
                        let a = greedy_animal(&h, k, AnimalVariant::Connected, norm, &p).unwrap();
                        let b = greedy_animal_bruteforce(&h, k, norm).unwrap();
                        agree &= a.score == b.score || (a.score - b.score).abs() <= 1e-12 * b.score.abs().max(1.0);
                    }
                }
            }
        }
        let ones = FieldSample::constant(&Region::centered_box(2, 13), 1.0);
        let s = greedy_animal(&ones, 6, AnimalVariant::Connected, Normalization::EdgeBoundary, &p).unwrap().score;
        (agree, s)
    });
    g.report(
        11,
        "greedy animal",
        res.0 && (res.1 - 0.6).abs() < 1e-12,
        t,
        None,
        format!("brute force agreement {}, h≡1 score {}", res.0, res.1),
    );

    // 12
    let (res, t) = timed(|| {
        let runs: &[&[&str]] = &[
            &["constants"],
            &["phase", "--set", "side=3", "--set", "realizations=3", "--set", "sweeps=200"],
            &["animal", "--set", "k_max=4", "--set", "samples=5"],
            &["badevent", "--set", "feasible_m=true", "--set", "epss=0.5,1", "--set", "samples=20", "--set", "n_max=8"],
            &["contours", "dump", "--set", "side=4"],
            &["verify", "concentration", "--set", "eps=0.5", "--set", "samples=200"],
            &["verify", "partitions", "--set", "instances=20"],
        ];
        let dirs = [out_dir("det-a"), out_dir("det-b")];
        for dir in &dirs {
            for args in runs {
                let status = Command::new(env!("CARGO_BIN_EXE_lrfim"))
                    .args(*args)
                    .arg("--out")
                    .arg(dir)
                    .output()
                    .unwrap()
                    .status;
                assert!(status.success(), "lrfim {args:?} failed");
            }
        }
        let (a, b) = (csv_files(&dirs[0]), csv_files(&dirs[1]));
        (a.len(), !a.is_empty() && a == b)
    });
    g.report(12, "determinism", res.1, t, None, format!("{} CSV files compared byte for byte", res.0));

    assert!(g.failed.is_empty(), "failed criteria {:?}:\n{}", g.failed, g.lines.join("\n"));
}
