//! `isps` — practical-stability analysis of benchmark control systems:
//! axiom checks, property estimation and certificate fitting, reachable-set
//! prolongation, the ISpS-to-ISS pipeline, and certificate falsification.

mod config;
mod runner;
mod setspec;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use runner::{exit_for, persist, ResolvedOpts};

#[derive(Parser)]
#[command(name = "isps", version, about = "Input-to-state practical stability toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonOpts {
    /// Random seed; identical seeds give byte-identical reports.
    #[arg(long)]
    seed: Option<u64>,
    /// Sampling budget scale (states per stratum).
    #[arg(long)]
    budget: Option<usize>,
    /// Simulation horizon in seconds.
    #[arg(long)]
    horizon: Option<f64>,
    /// Largest input sup-norm exercised.
    #[arg(long)]
    u_max: Option<f64>,
    /// Validation residual tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Output directory for reports and artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value configuration file (flags take precedence).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (0 = library default). Results do not depend on this.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Check the control-system axioms on sampled tuples.
    Axioms {
        system: Option<String>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Estimate a stability property or fit a certificate.
    Analyze {
        system: Option<String>,
        #[arg(long)]
        property: Option<String>,
        /// Reference set: auto | origin | point:... | ball:...:r | circle:n.
        #[arg(long)]
        set: Option<String>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Build the prolongation set A_{eps,gamma} and check its invariance.
    Prolong {
        system: Option<String>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        set: Option<String>,
        /// Reuse the gain from a fitted certificate JSON.
        #[arg(long)]
        certificate: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// End-to-end ISpS-to-ISS pipeline with per-leg verdicts.
    Pipeline {
        system: Option<String>,
        #[arg(long)]
        eps: Option<f64>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Search for a counterexample to a fitted certificate.
    Falsify {
        system: Option<String>,
        #[arg(long)]
        certificate: Option<PathBuf>,
        #[arg(long)]
        set: Option<String>,
        /// Trajectory-evaluation budget for the search.
        #[arg(long)]
        evals: Option<usize>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run the full catalog x property matrix.
    Bench {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Print the machine-readable benchmark manifest.
    Catalog,
}

fn resolve(common: &CommonOpts, set: Option<&str>, eps: Option<f64>, evals: Option<usize>) -> Result<ResolvedOpts> {
    let cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    Ok(ResolvedOpts {
        seed: common.seed.or(cfg.get_parsed("seed")?).unwrap_or(0),
        budget_scale: common.budget.or(cfg.get_parsed("budget")?),
        horizon: common.horizon.or(cfg.get_parsed("horizon")?),
        u_max: common.u_max.or(cfg.get_parsed("u_max")?),
        eps: eps.or(cfg.get_parsed("eps")?).unwrap_or(1.0),
        bound: cfg.get_parsed("bound")?.unwrap_or(1.0),
        tolerance: common.tolerance.or(cfg.get_parsed("tolerance")?).unwrap_or(1e-3),
        evals: evals.or(cfg.get_parsed("evals")?).unwrap_or(2000),
        out: common
            .out
            .clone()
            .or_else(|| cfg.get("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("isps-out")),
        set_spec: set
            .map(str::to_string)
            .or_else(|| cfg.get("set").map(str::to_string))
            .unwrap_or_else(|| "auto".into()),
    })
}

fn config_fallback(cfg: &CommonOpts, key: &str) -> Result<Option<String>> {
    match &cfg.config {
        Some(path) => Ok(RunConfig::load(path)?.get(key).map(str::to_string)),
        None => Ok(None),
    }
}

fn required_system(arg: Option<String>, common: &CommonOpts) -> Result<String> {
    if let Some(s) = arg {
        return Ok(s);
    }
    if let Some(s) = config_fallback(common, "system")? {
        return Ok(s);
    }
    anyhow::bail!(
        "no system given (positional argument or 'system = ...' in --config); \
         valid systems: {}",
        isps_core::benchmarks::catalog_names().join(", ")
    )
}

fn init_workers(workers: usize) {
    if workers > 0 {
        // Ignore failure: the global pool can be initialized only once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
}

fn dispatch() -> Result<u8> {
    let cli = Cli::parse();
    let started = Instant::now();
    let code = match cli.command {
        Command::Axioms { system, common } => {
            init_workers(common.workers);
            let opts = resolve(&common, None, None, None)?;
            let system = required_system(system, &common)?;
            let run = runner::run_axioms(&system, &opts)?;
            persist(&opts.out, &run)?;
            println!(
                "axioms {system}: {} ({} written)",
                run.report.verdict,
                opts.out.join("report.json").display()
            );
            exit_for(run.report.verdict)
        }
        Command::Analyze { system, property, set, common } => {
            init_workers(common.workers);
            let opts = resolve(&common, set.as_deref(), None, None)?;
            let system = required_system(system, &common)?;
            let property = match property.or(config_fallback(&common, "property")?) {
                Some(p) => p,
                None => anyhow::bail!(
                    "no property given; valid properties: {}",
                    runner::PROPERTIES.join(", ")
                ),
            };
            let run = runner::run_analyze(&system, &property, &opts)?;
            persist(&opts.out, &run)?;
            println!(
                "analyze {system} --property {property}: {} ({} written)",
                run.report.verdict,
                opts.out.join("report.json").display()
            );
            exit_for(run.report.verdict)
        }
        Command::Prolong { system, eps, set, certificate, common } => {
            init_workers(common.workers);
            let opts = resolve(&common, set.as_deref(), eps, None)?;
            let system = required_system(system, &common)?;
            let run = runner::run_prolong(&system, &opts, certificate.as_deref())?;
            persist(&opts.out, &run)?;
            println!("prolong {system} --eps {}: {}", opts.eps, run.report.verdict);
            exit_for(run.report.verdict)
        }
        Command::Pipeline { system, eps, common } => {
            init_workers(common.workers);
            let opts = resolve(&common, None, eps, None)?;
            let system = required_system(system, &common)?;
            let run = runner::run_pipeline(&system, &opts)?;
            persist(&opts.out, &run)?;
            println!("pipeline {system}: {}", run.report.verdict);
            exit_for(run.report.verdict)
        }
        Command::Falsify { system, certificate, set, evals, common } => {
            init_workers(common.workers);
            let opts = resolve(
                &common,
                Some(set.as_deref().unwrap_or("from-certificate")),
                None,
                evals,
            )?;
            let system = required_system(system, &common)?;
            let certificate = certificate
                .context("falsify needs --certificate <file> (a fitted certificate JSON)")?;
            let run = runner::run_falsify(&system, &certificate, &opts)?;
            persist(&opts.out, &run)?;
            println!("falsify {system}: {}", run.report.verdict);
            exit_for(run.report.verdict)
        }
        Command::Bench { common } => {
            init_workers(common.workers);
            let opts = resolve(&common, None, None, None)?;
            let (code, summary) = runner::run_bench(&opts)?;
            print!("{summary}");
            println!("bench artifacts under {}", opts.out.display());
            code
        }
        Command::Catalog => {
            print!("{}", runner::run_catalog()?);
            0
        }
    };
    // Timing goes to the console only; reports stay byte-deterministic.
    eprintln!("completed in {:.2}s", started.elapsed().as_secs_f64());
    Ok(code)
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
