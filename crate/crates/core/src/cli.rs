//! Command-line front end for the scenario laboratory.
//!
//! Three subcommands: `list` prints the scenario registry, `run` samples and
//! reduces one scenario (or all of them) and emits a JSON report, `axioms`
//! surveys the bracket axioms on random sections. Configuration merges three
//! layers, later ones winning: built-in defaults, an optional TOML file
//! passed with `--config`, and individual command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::reduction::Tolerances;
use crate::report::{AxiomsReport, RunReport};
use crate::scenarios::{axioms_survey, build_scenario, run_scenario, scenario_names, RunConfig};

/// Environment variable naming a directory that receives `<stem>.json`
/// reports when `--report` is not given.
pub const REPORT_DIR_ENV: &str = "COURANTLAB_REPORT_DIR";

#[derive(Parser)]
#[command(
    name = "courantlab",
    version,
    about = "Numerical laboratory for generalized structures on split fibers \
             and their quotients under extended actions"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in scenarios.
    List,
    /// Run one scenario, or all of them, and emit a JSON report.
    Run(RunArgs),
    /// Check the bracket axioms and the splitting curvature identity on
    /// random polynomial sections.
    Axioms(AxiomsArgs),
}

#[derive(Args)]
struct ToleranceOpts {
    /// Singular values below this fraction of the largest are treated as zero.
    #[arg(long)]
    rank_tol: Option<f64>,
    /// Largest principal angle accepted as subspace equality.
    #[arg(long)]
    angle_tol: Option<f64>,
    /// Newton convergence tolerance for level-set projection.
    #[arg(long)]
    level_tol: Option<f64>,
    /// Ceiling for algebraic identity residuals.
    #[arg(long)]
    residual_tol: Option<f64>,
}

impl ToleranceOpts {
    fn apply(&self, t: &mut Tolerances) {
        if let Some(v) = self.rank_tol {
            t.rank_tol = v;
        }
        if let Some(v) = self.angle_tol {
            t.angle_tol = v;
        }
        if let Some(v) = self.level_tol {
            t.level_tol = v;
        }
        if let Some(v) = self.residual_tol {
            t.residual_tol = v;
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario name from `list`.
    scenario: Option<String>,
    /// Run every built-in scenario.
    #[arg(long, conflicts_with = "scenario")]
    all: bool,
    /// Sample points on the level set.
    #[arg(long)]
    samples: Option<usize>,
    /// Seed for the sampling generator.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = shared pool, 1 = serial).
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    tolerances: ToleranceOpts,
    /// Write the JSON report to this path (single scenario only).
    #[arg(long)]
    report: Option<PathBuf>,
    /// TOML file with samples/seed/jobs and a [tolerances] table.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print every check, not only the failures.
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Args)]
struct AxiomsArgs {
    /// Chart dimension for the random sections (at least 4).
    #[arg(long, default_value_t = 4)]
    dim: usize,
    /// Number of random section triples.
    #[arg(long)]
    samples: Option<usize>,
    /// Seed for the section generator.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report to this path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// TOML file with samples/seed defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print every check, not only the failures.
    #[arg(short, long)]
    verbose: bool,
}

/// On-disk configuration; every field is optional so a file can override
/// any subset of the defaults.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ConfigFile {
    samples: Option<usize>,
    seed: Option<u64>,
    jobs: Option<usize>,
    tolerances: Option<Tolerances>,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn resolve_run_config(args: &RunArgs, file: &ConfigFile) -> RunConfig {
    let mut cfg = RunConfig::default();
    if let Some(t) = file.tolerances {
        cfg.tolerances = t;
    }
    if let Some(v) = file.samples {
        cfg.samples = v;
    }
    if let Some(v) = file.seed {
        cfg.seed = v;
    }
    if let Some(v) = file.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = args.samples {
        cfg.samples = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.jobs {
        cfg.jobs = v;
    }
    args.tolerances.apply(&mut cfg.tolerances);
    cfg
}

fn report_destination(explicit: Option<&Path>, stem: &str) -> Option<PathBuf> {
    if let Some(p) = explicit {
        return Some(p.to_path_buf());
    }
    std::env::var_os(REPORT_DIR_ENV).map(|dir| Path::new(&dir).join(format!("{stem}.json")))
}

fn write_report(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn print_checks(checks: &[crate::report::CheckReport], verbose: bool) {
    for c in checks {
        if verbose || !c.pass {
            let tag = if c.pass { "  ok " } else { "  FAIL" };
            println!("{tag} {:<28} value {:>12.3e}  threshold {:>9.1e}", c.id, c.value, c.threshold);
        }
    }
}

fn print_run_summary(report: &RunReport, verbose: bool) {
    let status = if report.pass { "pass" } else { "FAIL" };
    let time = report
        .wall_time_ms
        .map(|ms| format!(", {ms} ms"))
        .unwrap_or_default();
    println!(
        "{}: {status} ({} points, {} checks{time})",
        report.scenario,
        report.points.len(),
        report.checks.len()
    );
    print_checks(&report.checks, verbose);
}

fn print_axioms_summary(report: &AxiomsReport, verbose: bool) {
    let status = if report.pass { "pass" } else { "FAIL" };
    println!(
        "axioms on {} coordinates: {status} ({} samples, control jacobi {:.3e})",
        report.dim, report.samples, report.control_jacobi
    );
    print_checks(&report.checks, verbose);
    if verbose {
        for (name, agg) in &report.residuals {
            println!("       {name:<22} max {:>12.3e}  mean {:>12.3e}", agg.max, agg.mean);
        }
    }
}

fn cmd_list() -> Result<bool> {
    for (name, summary) in scenario_names() {
        println!("{name:<28} {summary}");
    }
    Ok(true)
}

fn cmd_run(args: &RunArgs) -> Result<bool> {
    let file = load_config(args.config.as_deref())?;
    let cfg = resolve_run_config(args, &file);
    let names: Vec<String> = if args.all {
        scenario_names().iter().map(|(n, _)| n.to_string()).collect()
    } else {
        match &args.scenario {
            Some(name) => vec![name.clone()],
            None => {
                return Err(Error::Invalid(
                    "pass a scenario name or --all (see `courantlab list`)".into(),
                ))
            }
        }
    };
    if args.report.is_some() && names.len() > 1 {
        return Err(Error::Invalid(format!(
            "--report takes a single scenario; set {REPORT_DIR_ENV} to collect all reports"
        )));
    }
    let mut all_pass = true;
    for name in &names {
        let scenario = build_scenario(name)?;
        let report = run_scenario(&scenario, &cfg)?;
        print_run_summary(&report, args.verbose);
        if let Some(dest) = report_destination(args.report.as_deref(), name) {
            write_report(&dest, &report.to_json_pretty())?;
            println!("  report written to {}", dest.display());
        }
        all_pass &= report.pass;
    }
    Ok(all_pass)
}

fn cmd_axioms(args: &AxiomsArgs) -> Result<bool> {
    let file = load_config(args.config.as_deref())?;
    let samples = args.samples.or(file.samples).unwrap_or(50);
    let seed = args.seed.or(file.seed).unwrap_or(17);
    let report = axioms_survey(args.dim, samples, seed)?;
    print_axioms_summary(&report, args.verbose);
    if let Some(dest) = report_destination(args.report.as_deref(), "axioms") {
        write_report(&dest, &report.to_json_pretty())?;
        println!("  report written to {}", dest.display());
    }
    Ok(report.pass)
}

/// Parses the process arguments, dispatches, and returns the exit code:
/// 0 when every check passed, 1 when a check failed, 2 on execution errors.
pub fn run_cli() -> i32 {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::List => cmd_list(),
        Command::Run(args) => cmd_run(args),
        Command::Axioms(args) => cmd_axioms(args),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
