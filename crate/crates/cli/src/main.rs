use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};

use lrfim_cli::config::RunConfig;
use lrfim_cli::experiments;
use lrfim_cli::suites;
use lrfim_cli::CliError;

/// Numerical laboratory for the long-range random field Ising model.
#[derive(Parser, Debug)]
#[command(name = "lrfim", version)]
struct Cli {
    /// Config file of `key=value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting; repeatable, later wins.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory for CSV files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the constant table.
    Constants {
        #[arg(long)]
        json: bool,
        /// Exit with status 2 when M is below the Peierls threshold.
        #[arg(long)]
        require_feasible: bool,
    },
    /// Run a verification suite.
    Verify {
        /// One of partitions, geometry, peierls, entropy, concentration, montecarlo.
        suite: String,
    },
    /// Origin magnetisation over the (β, ε) grid.
    Phase,
    /// Greedy lattice-animal maximiser.
    Animal,
    /// Bad-event probability against ε.
    Badevent,
    /// Coarse-graining report for contours in the serialised format.
    Coarsen {
        #[arg(long, conflicts_with = "file")]
        contour: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Contour enumeration and extraction.
    Contours {
        #[command(subcommand)]
        action: ContourAction,
    },
}

#[derive(Subcommand, Debug)]
enum ContourAction {
    /// All contours of the origin, optionally of one size.
    Dump {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Contours of the configuration with the given minus sites.
    Extract {
        /// Sites as `x,y;x,y`.
        #[arg(long)]
        minus: String,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    let mut overrides = cli.set.clone();
    if let Some(out) = &cli.out {
        overrides.push(format!("out_dir={}", out.display()));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Constants { json, require_feasible } => {
            let (t, path) = experiments::constants(&cfg, require_feasible)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&t).expect("constant table serialises"));
            } else {
                print!("{}", experiments::render_constants(&t));
            }
            eprintln!("wrote {}", path.display());
        }
        Command::Verify { suite } => {
            let report = suites::run(&cfg, &suite)?;
            let path = suites::write_report(&cfg, &report)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for r in &report.rows {
                println!(
                    "{:<5} {:<48} instances={} violations={} skipped={} min_margin={}{}",
                    if r.pass() { "ok" } else { "FAIL" },
                    r.check,
                    r.instances,
                    r.violations,
                    r.skipped,
                    r.min_margin.map_or("-".into(), |m| format!("{m:.4e}")),
                    if r.asserted { "" } else { " (reported)" }
                );
            }
            eprintln!("wrote {}", path.display());
            if !report.pass() {
                return Err(CliError::Failed(format!("suite {suite}")));
            }
        }
        Command::Phase => {
            let (rows, path) = experiments::phase(&cfg)?;
            for r in rows {
                println!("beta={} eps={} mean={:.6} std={:.6} stderr={:.2e}", r.beta, r.eps, r.mean, r.std, r.stderr);
            }
            eprintln!("wrote {}", path.display());
        }
        Command::Animal => {
            let (rows, path) = experiments::animal(&cfg)?;
            eprintln!("{} rows, wrote {}", rows.len(), path.display());
        }
        Command::Badevent => {
            let (run, path) = experiments::badevent(&cfg)?;
            if run.estimates.first().is_some_and(|e| e.sets == 0) {
                eprintln!("warning: no contour with a minus interior fits this volume; probabilities are trivially 0");
            }
            for (e, m) in run.estimates.iter().zip(&run.monotone) {
                println!("eps={} probability={:.6} stderr={:.2e} monotone={m}", e.eps, e.probability, e.stderr);
            }
            if let Some(s) = run.slope {
                println!("slope of log P against 1/eps^2: {s:.4}");
            }
            eprintln!("wrote {}", path.display());
        }
        Command::Coarsen { contour, file } => {
            let text = match (contour, file) {
                (Some(c), _) => c,
                (None, Some(f)) => std::fs::read_to_string(&f)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", f.display())))?,
                (None, None) => return Err(CliError::Usage("coarsen needs --contour or --file".into())),
            };
            let (rows, path) = experiments::coarsen(&cfg, &text)?;
            eprintln!("{} rows, wrote {}", rows.len(), path.display());
        }
        Command::Contours { action } => {
            let (list, path) = match action {
                ContourAction::Dump { n } => experiments::contours_dump(&cfg, n)?,
                ContourAction::Extract { minus } => experiments::contours_extract(&cfg, &minus)?,
            };
            for c in &list {
                println!("{}", c.serialize());
            }
            eprintln!("{} contours, wrote {}", list.len(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::InvalidSubcommand => 64,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lrfim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
