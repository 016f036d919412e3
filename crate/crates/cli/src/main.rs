//! `wbst`: run simulation specs, exact enumeration, the fixed-point solver and
//! silhouette simulations, writing CSV/JSON outputs with a run manifest.

mod manifest;
mod svg;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use manifest::{RunManifest, Status};
use wbst_core::experiments::{run_all, write_results_csv, write_results_jsonl, SpecFile, Verdict};
use wbst_core::fixed_point::{contraction_check, covariance_report, solve_second_moments, ContractionReport, Constant};
use wbst_core::limit_laws::linear_grid;
use wbst_core::oracle::{all_checks, MAX_N};
use wbst_core::silhouette::{estimate_density, generate_table_replicate, MAX_TABLE_DEPTH};

const SUMMARY: &str = "summary.json";

#[derive(Parser, Debug)]
#[command(name = "wbst", version, about = "Weighted random binary search tree lab")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "wbst-out")]
    out: PathBuf,
    /// Master seed; every random draw is derived from it.
    #[arg(long, global = true, env = "WBST_SEED", default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run every experiment of a JSON spec file.
    Simulate {
        spec: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Exhaustive enumeration over all permutations of size n.
    Oracle {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=MAX_N as u64))]
        n: u64,
    },
    /// Solve the second-moment fixed point and compare with closed forms.
    Fixedpoint {
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Simulate the silhouette limit process.
    Silhouette {
        /// Number of tree levels in each table (1..=24).
        #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u32).range(1..=MAX_TABLE_DEPTH as i64))]
        depth: u32,
        #[arg(long, default_value_t = 1)]
        replicates: u64,
        /// Also write an SVG step plot.
        #[arg(long)]
        plot: bool,
        /// Estimate the density of the limit at this point instead.
        #[arg(long)]
        density: Option<f64>,
        /// Monte Carlo replicates for the density estimate.
        #[arg(long, default_value_t = 100_000)]
        density_replicates: usize,
    },
}

#[derive(Serialize)]
struct Summary<T: Serialize> {
    command: &'static str,
    passed: bool,
    failures: usize,
    rows: T,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Runs `body` under a written manifest; the summary and final status are
/// recorded whatever the outcome.
fn supervise<T: Serialize>(
    mut m: RunManifest,
    command: &'static str,
    body: impl FnOnce(&RunManifest) -> Result<(usize, T)>,
) -> Result<bool> {
    match body(&m) {
        Ok((failures, rows)) => {
            let passed = failures == 0;
            write_json(&m.path(SUMMARY), &Summary { command, passed, failures, rows })?;
            m.finish(if passed { Status::Passed } else { Status::Failed })?;
            Ok(passed)
        }
        Err(e) => {
            m.finish(Status::Error)?;
            Err(e)
        }
    }
}

fn simulate(cli: &Cli, spec_path: &Path, threads: Option<usize>) -> Result<bool> {
    let spec = SpecFile::load(spec_path).with_context(|| format!("loading {}", spec_path.display()))?;
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global()?;
    }
    let params = json!({ "threads": threads, "experiments": spec.experiments.len() });
    let m = RunManifest::begin(
        "simulate",
        Some(spec_path.to_path_buf()),
        params,
        cli.seed,
        &cli.out,
        &["results.csv", "results.jsonl", SUMMARY],
    )?;
    supervise(m, "simulate", |m| {
        let rows = run_all(&spec, cli.seed)?;
        write_results_csv(BufWriter::new(File::create(m.path("results.csv"))?), &rows)?;
        write_results_jsonl(BufWriter::new(File::create(m.path("results.jsonl"))?), &rows)?;
        for r in &rows {
            let mark = match r.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "FAIL",
                Verdict::Report => "info",
            };
            let n = r.n.map_or_else(|| "all".to_string(), |n| n.to_string());
            let target = r.target.map_or_else(String::new, |t| format!(" target {t:.6}"));
            println!("{mark:<4} {}/{} n={n}: {:.6}{target} {}", r.experiment, r.claim, r.estimate, r.detail);
        }
        let failures = rows.iter().filter(|r| !r.passed()).count();
        let verdicts: Vec<_> = rows
            .iter()
            .map(|r| json!({ "experiment": r.experiment, "claim": r.claim, "n": r.n, "verdict": r.verdict }))
            .collect();
        Ok((failures, verdicts))
    })
}

fn oracle(cli: &Cli, n: usize) -> Result<bool> {
    let m = RunManifest::begin("oracle", None, json!({ "n": n }), cli.seed, &cli.out, &["exact.csv", SUMMARY])?;
    supervise(m, "oracle", |m| {
        let (moments, reports) = all_checks(n)?;
        let mut w = csv::Writer::from_path(m.path("exact.csv"))?;
        for row in moments.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        for r in &reports {
            println!(
                "{} {}: {} comparisons, {} mismatches",
                if r.passed() { "pass" } else { "FAIL" },
                r.name,
                r.checked,
                r.failures.len()
            );
        }
        let failures = reports.iter().filter(|r| !r.passed()).count();
        Ok((failures, reports))
    })
}

#[derive(Serialize)]
struct FixedPointOutput {
    quad_tol: f64,
    residual: f64,
    min_eigenvalue: f64,
    constants: Vec<Constant>,
    contraction: ContractionReport,
}

fn fixedpoint(cli: &Cli, tol: f64) -> Result<bool> {
    if !(tol >= 1e-12) {
        bail!("--tol must be at least 1e-12");
    }
    let m = RunManifest::begin("fixedpoint", None, json!({ "tol": tol }), cli.seed, &cli.out, &["fixedpoint.json", SUMMARY])?;
    supervise(m, "fixedpoint", |m| {
        let system = solve_second_moments(tol)?;
        let constants = covariance_report(&system);
        let contraction = contraction_check()?;
        for c in &constants {
            println!(
                "{} {:<12} computed {:.12} target {:.12} ({}) |err| {:.2e}",
                if c.pass { "pass" } else { "FAIL" },
                c.name,
                c.computed,
                c.target,
                c.target_expr,
                c.abs_error
            );
        }
        println!("residual {:.3e}, contraction sum {:.12}", system.residual, contraction.radius_sum);
        let failures = constants.iter().filter(|c| !c.pass).count() + usize::from(!contraction.contracts());
        let output = FixedPointOutput {
            quad_tol: tol,
            residual: system.residual,
            min_eigenvalue: system.min_eigenvalue,
            constants,
            contraction,
        };
        write_json(&m.path("fixedpoint.json"), &output)?;
        Ok((failures, output.constants))
    })
}

#[derive(Serialize)]
struct TableRow {
    replicate: u64,
    i: usize,
    x: f64,
    xi: f64,
}

fn silhouette(cli: &Cli, depth: u32, replicates: u64, plot: bool) -> Result<bool> {
    let mut outputs = vec!["silhouette.csv", SUMMARY];
    if plot {
        outputs.push("silhouette.svg");
    }
    let params = json!({ "depth": depth, "replicates": replicates, "plot": plot });
    let m = RunManifest::begin("silhouette", None, params, cli.seed, &cli.out, &outputs)?;
    supervise(m, "silhouette", |m| {
        let mut w = csv::Writer::from_path(m.path("silhouette.csv"))?;
        let mut series = Vec::new();
        let mut failures = 0;
        for replicate in 0..replicates {
            let table = generate_table_replicate(depth, cli.seed, replicate)?;
            failures += usize::from(!table.is_monotone());
            let steps = table.steps();
            for (i, &(x, xi)) in steps.iter().enumerate() {
                w.serialize(TableRow { replicate, i: i + 1, x, xi })?;
            }
            if plot {
                series.push(steps);
            }
        }
        w.flush()?;
        if plot {
            let title = format!("Xi_{depth}: {replicates} simulation(s), seed {}", cli.seed);
            fs::write(m.path("silhouette.svg"), svg::step_plot(&title, &series))?;
        }
        println!("{replicates} table(s) of {} keys, {failures} non-monotone", (1u64 << depth) - 1);
        Ok((failures, json!({ "depth": depth, "replicates": replicates, "non_monotone": failures })))
    })
}

fn density(cli: &Cli, t: f64, replicates: usize) -> Result<bool> {
    let params = json!({ "density": t, "replicates": replicates });
    let m = RunManifest::begin("silhouette", None, params, cli.seed, &cli.out, &["density.csv", SUMMARY])?;
    supervise(m, "silhouette-density", |m| {
        let grid = linear_grid(0.05, 0.95, 19);
        let est = estimate_density(t, &grid, replicates, cli.seed)?;
        let rows = est.rows();
        let mut w = csv::Writer::from_path(m.path("density.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        // Closed form known only at t = 1/3.
        let closed_form = (t - 1.0 / 3.0).abs() < 1e-3;
        let mut failures = 0;
        for r in &rows {
            if closed_form {
                let target = 2.0 * (1.0 - r.x);
                let ok = (r.estimate - target).abs() <= 4.0 * r.stderr + 1e-3;
                failures += usize::from(!ok);
                println!(
                    "{} x={:.2} f={:.4} +- {:.4} (2(1-x) = {target:.4})",
                    if ok { "pass" } else { "FAIL" },
                    r.x,
                    r.estimate,
                    r.stderr
                );
            } else {
                println!("x={:.2} f={:.4} +- {:.4}", r.x, r.estimate, r.stderr);
            }
        }
        let (mass, _) = est.trapezoid();
        println!("trapezoid mass {mass:.4}; {} clipped evaluations", est.clipped);
        Ok((failures, rows))
    })
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Cmd::Simulate { spec, threads } => simulate(cli, spec, *threads),
        Cmd::Oracle { n } => oracle(cli, *n as usize),
        Cmd::Fixedpoint { tol } => fixedpoint(cli, *tol),
        Cmd::Silhouette {
            density: Some(t),
            density_replicates,
            ..
        } => density(cli, *t, *density_replicates),
        Cmd::Silhouette {
            depth, replicates, plot, ..
        } => silhouette(cli, *depth, *replicates, *plot),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
