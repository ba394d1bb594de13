//! Dispatch from resolved options to the core operations, plus report and
//! artifact persistence.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use isps_core::benchmarks::{catalog, catalog_names, find, CatalogEntry};
use isps_core::comparison::ComparisonFunction;
use isps_core::estimators::{
    check_brs, check_iss_wrt_set, check_lim, check_uag, check_ugb, estimate_ulim, fit_cuag,
    fit_isps, GainCertificate, LimitReport,
};
use isps_core::falsify::{falsify, FalsificationProblem, SearchBounds};
use isps_core::prolongation::{
    build_prolongation, check_prolongation_invariance, offset_constant, theorem2_pipeline,
};
use isps_core::report::{tau_table_csv, trajectory_csv, OpReport, SUMMARY_HEADER};
use isps_core::sampling::{checkpoints, SampleBudget};
use isps_core::sets::BoundedSetApprox;
use isps_core::system::{check_axioms, ControlSystem};
use isps_core::verdict::{Verdict, VerdictStatus, Witness};

use crate::setspec::parse_set;

/// Exit-code contract: 0 = all consistent, 2 = falsification found,
/// 3 = inconclusive, 1 = usage/config error (handled by `main`).
pub fn exit_for(status: VerdictStatus) -> u8 {
    match status {
        VerdictStatus::Consistent => 0,
        VerdictStatus::Falsified => 2,
        VerdictStatus::Inconclusive => 3,
    }
}

#[derive(Debug, Clone)]
pub struct ResolvedOpts {
    pub seed: u64,
    pub budget_scale: Option<usize>,
    pub horizon: Option<f64>,
    pub u_max: Option<f64>,
    pub eps: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub evals: usize,
    pub out: PathBuf,
    pub set_spec: String,
}

pub fn lookup(name: &str) -> Result<CatalogEntry> {
    find(name).ok_or_else(|| {
        anyhow!(
            "unknown system {name:?}; valid systems: {}",
            catalog_names().join(", ")
        )
    })
}

/// Default sampling budget; discretized PDE entries get a leaner one.
pub fn budget_for(entry: &CatalogEntry, opts: &ResolvedOpts) -> SampleBudget {
    let mut b = if entry.manifest.kind == "discretized-pde" {
        SampleBudget {
            n_states: 4,
            n_inputs: 4,
            time_horizon: 6.0,
            radii: vec![0.5, 1.0, 2.0],
            epsilons: vec![0.25, 0.5],
            u_max: 4.0,
            seed: opts.seed,
        }
    } else {
        SampleBudget::desk(opts.seed)
    };
    if let Some(n) = opts.budget_scale {
        b.n_states = n.max(2);
        b.n_inputs = n.clamp(3, 8);
    }
    if let Some(h) = opts.horizon {
        b.time_horizon = h;
    }
    if let Some(u) = opts.u_max {
        b.u_max = u;
    }
    b
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn json_value<T: serde::Serialize>(value: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(value)?)
}

pub struct RunOutput {
    pub report: OpReport,
    pub extras: Vec<(String, String)>,
}

impl RunOutput {
    fn new(report: OpReport) -> Self {
        Self { report, extras: Vec::new() }
    }

    fn with_extra(mut self, name: &str, contents: String) -> Self {
        self.extras.push((name.to_string(), contents));
        self
    }
}

/// Writes `report.json`, a one-row `summary.csv` and any extra artifacts.
pub fn persist(out: &Path, run: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(out)?;
    write_file(&out.join("report.json"), &(run.report.to_json_pretty()? + "\n"))?;
    write_file(
        &out.join("summary.csv"),
        &format!("{SUMMARY_HEADER}\n{}\n", run.report.summary_row()),
    )?;
    for (name, contents) in &run.extras {
        write_file(&out.join(name), contents)?;
    }
    Ok(())
}

fn witness_trajectory(sys: &dyn ControlSystem, w: &Witness) -> Result<String> {
    let horizon = (w.t * 1.25).max(w.input.grid_step() * 4.0);
    let times = checkpoints(horizon, w.input.grid_step(), 64);
    let states = sys
        .flow_trace(&times, &w.x0, &w.input)
        .unwrap_or_else(|_| vec![w.x0.clone()]);
    Ok(trajectory_csv(&times[..states.len()], &states))
}

fn attach_witness(
    mut run: RunOutput,
    sys: &dyn ControlSystem,
    verdict: &Verdict,
) -> Result<RunOutput> {
    if let Some(w) = &verdict.witness {
        run.report.witness = Some(w.clone());
        run = run.with_extra("witness.json", serde_json::to_string_pretty(w)? + "\n");
        run = run.with_extra("witness_trajectory.csv", witness_trajectory(sys, w)?);
    }
    run.report.evidence = verdict.evidence.clone();
    Ok(run)
}

pub fn run_axioms(system: &str, opts: &ResolvedOpts) -> Result<RunOutput> {
    let entry = lookup(system)?;
    let samples = opts.budget_scale.unwrap_or(50).max(1);
    let horizon = opts.horizon.unwrap_or(5.0);
    let verdict = check_axioms(entry.system.as_ref(), samples, horizon, opts.seed)?;
    let mut report = OpReport::new("axioms", system, "-", verdict.status, opts.seed)
        .with_param("samples", serde_json::json!(samples))
        .with_param("horizon", serde_json::json!(horizon))
        .with_param("flow_tolerance", serde_json::json!(entry.system.flow_tolerance()));
    report.samples = samples;
    attach_witness(RunOutput::new(report), entry.system.as_ref(), &verdict)
}

fn limit_run(
    entry: &CatalogEntry,
    set: &BoundedSetApprox,
    budget: &SampleBudget,
    property: &str,
) -> Result<LimitReport> {
    let gamma = ComparisonFunction::identity();
    let sys = entry.system.as_ref();
    match property {
        "ulim" => estimate_ulim(sys, set, &gamma, budget).map_err(into_anyhow),
        "lim" => check_lim(sys, set, &gamma, budget).map_err(into_anyhow),
        "uag" => check_uag(sys, set, &gamma, budget).map_err(into_anyhow),
        _ => unreachable!(),
    }
}

fn into_anyhow(e: isps_core::Error) -> anyhow::Error {
    anyhow!(e.to_string())
}

pub const PROPERTIES: &[&str] = &["brs", "lim", "ulim", "uag", "ugb", "cuag", "isps", "iss"];

pub fn run_analyze(system: &str, property: &str, opts: &ResolvedOpts) -> Result<RunOutput> {
    if !PROPERTIES.contains(&property) {
        bail!(
            "unknown property {property:?}; valid properties: {}",
            PROPERTIES.join(", ")
        );
    }
    let entry = lookup(system)?;
    let sys = entry.system.as_ref();
    let budget = budget_for(&entry, opts);
    let set = parse_set(&opts.set_spec, &entry)?;
    let base = |verdict: VerdictStatus| -> OpReport {
        let mut r = OpReport::new(property, system, &opts.set_spec, verdict, opts.seed)
            .with_param("budget", serde_json::json!(&budget))
            .with_param("tolerance", serde_json::json!(opts.tolerance));
        r.samples = budget.n_states * budget.n_inputs;
        r
    };

    let run = match property {
        "brs" => {
            let r = check_brs(sys, opts.bound, budget.time_horizon, &budget).map_err(into_anyhow)?;
            let report = base(r.verdict.status)
                .with_param("C", serde_json::json!(opts.bound))
                .with_param("tau", serde_json::json!(budget.time_horizon))
                .with_param("reach_sup", serde_json::json!(r.reach_sup));
            attach_witness(RunOutput::new(report), sys, &r.verdict)?
        }
        "ulim" | "lim" | "uag" => {
            let r = limit_run(&entry, &set, &budget, property)?;
            let report = base(r.verdict.status)
                .with_param("gamma", serde_json::json!("identity"))
                .with_param("table_complete", serde_json::json!(r.table.complete()));
            let mut run = attach_witness(RunOutput::new(report), sys, &r.verdict)?;
            run = run.with_extra("tau_table.csv", tau_table_csv(&r.table));
            if !r.candidates.is_empty() {
                run = run.with_extra(
                    "candidates.json",
                    serde_json::to_string_pretty(&r.candidates)? + "\n",
                );
            }
            run
        }
        "ugb" => {
            let r = check_ugb(sys, &set, &budget, opts.tolerance).map_err(into_anyhow)?;
            let mut report = base(r.verdict.status);
            if let Some(cert) = &r.certificate {
                report.certificate = Some(json_value(cert)?);
            }
            let mut run = attach_witness(RunOutput::new(report), sys, &r.verdict)?;
            if let Some(cert) = &r.certificate {
                run = run.with_extra("certificate.json", serde_json::to_string_pretty(cert)? + "\n");
            }
            run
        }
        "isps" => {
            let r = fit_isps(sys, &set, &budget, opts.tolerance).map_err(into_anyhow)?;
            let mut report = base(r.verdict.status);
            if let Some(cert) = &r.certificate {
                report.certificate = Some(json_value(cert)?);
            }
            let mut run = attach_witness(RunOutput::new(report), sys, &r.verdict)?;
            if let Some(cert) = &r.certificate {
                run = run.with_extra("certificate.json", serde_json::to_string_pretty(cert)? + "\n");
            }
            if let Some(defeated) = &r.defeated {
                run = run.with_extra(
                    "defeated_candidate.json",
                    serde_json::to_string_pretty(defeated)? + "\n",
                );
            }
            run
        }
        "cuag" => {
            let r = fit_cuag(sys, &set, &budget, opts.tolerance).map_err(into_anyhow)?;
            let mut report = base(r.verdict.status);
            if let Some(cert) = &r.cuag_certificate {
                report.certificate = Some(json_value(cert)?);
            }
            let mut run = attach_witness(RunOutput::new(report), sys, &r.verdict)?;
            if let Some(cert) = &r.cuag_certificate {
                run = run.with_extra("certificate.json", serde_json::to_string_pretty(cert)? + "\n");
            }
            if let Some(defeated) = &r.defeated {
                run = run.with_extra(
                    "defeated_candidate.json",
                    serde_json::to_string_pretty(defeated)? + "\n",
                );
            }
            run
        }
        "iss" => {
            let r = check_iss_wrt_set(sys, &set, &budget, opts.tolerance).map_err(into_anyhow)?;
            let mut report = base(r.verdict.status)
                .with_param("invariance", serde_json::json!(r.invariance.status.to_string()))
                .with_param(
                    "robustness_delta",
                    serde_json::json!(r.robustness.delta),
                );
            if let Some(cert) = &r.certificate {
                report.certificate = Some(json_value(cert)?);
            }
            let mut run = attach_witness(RunOutput::new(report), sys, &r.verdict)?;
            if let Some(cert) = &r.certificate {
                run = run.with_extra("certificate.json", serde_json::to_string_pretty(cert)? + "\n");
            }
            run
        }
        _ => unreachable!(),
    };
    Ok(run)
}

pub fn run_prolong(system: &str, opts: &ResolvedOpts, certificate: Option<&Path>) -> Result<RunOutput> {
    let entry = lookup(system)?;
    let sys = entry.system.as_ref();
    let budget = budget_for(&entry, opts);
    let set = parse_set(&opts.set_spec, &entry)?;
    let gamma = match certificate {
        Some(path) => load_certificate(path)?.gamma,
        None => ComparisonFunction::identity(),
    };
    let p = build_prolongation(sys, &set, opts.eps, &gamma, &budget).map_err(into_anyhow)?;
    let inv = check_prolongation_invariance(sys, &p, &budget).map_err(into_anyhow)?;
    let offset = offset_constant(&set, &p).map_err(into_anyhow)?;

    let status = if p.inconclusive {
        VerdictStatus::Inconclusive
    } else {
        inv.verdict.status
    };
    let report = OpReport::new("prolong", system, &opts.set_spec, status, opts.seed)
        .with_param("eps", serde_json::json!(opts.eps))
        .with_param("s_level", serde_json::json!(p.s_level))
        .with_param("horizon_used", serde_json::json!(p.horizon_used))
        .with_param("return_fraction", serde_json::json!(p.return_fraction))
        .with_param("cloud_norm", serde_json::json!(p.cloud.set_norm_bound()))
        .with_param("cloud_points", serde_json::json!(p.cloud.points().len()))
        .with_param("offset_constant", serde_json::json!(offset));
    let mut run = attach_witness(RunOutput::new(report), sys, &inv.verdict)?;
    run = run.with_extra("prolongation.json", serde_json::to_string_pretty(&p)? + "\n");
    Ok(run)
}

pub fn run_pipeline(system: &str, opts: &ResolvedOpts) -> Result<RunOutput> {
    let entry = lookup(system)?;
    let budget = budget_for(&entry, opts);
    let r = theorem2_pipeline(entry.system.as_ref(), &budget, opts.eps, opts.tolerance)
        .map_err(into_anyhow)?;
    let mut report = OpReport::new("pipeline", system, "auto", r.verdict.status, opts.seed)
        .with_param("eps", serde_json::json!(opts.eps))
        .with_param(
            "legs",
            serde_json::json!(r
                .legs
                .iter()
                .map(|l| format!("{}:{}", l.name, l.verdict.status))
                .collect::<Vec<_>>()),
        );
    if let Some(cert) = &r.certificate {
        report.certificate = Some(json_value(cert)?);
    }
    let verdict = r.verdict.clone();
    let mut run = attach_witness(RunOutput::new(report), entry.system.as_ref(), &verdict)?;
    run = run.with_extra("pipeline.json", serde_json::to_string_pretty(&r)? + "\n");
    Ok(run)
}

fn load_certificate(path: &Path) -> Result<GainCertificate> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read certificate {}", path.display()))?;
    Ok(serde_json::from_str(&text)
        .with_context(|| format!("certificate {} is not a gain certificate", path.display()))?)
}

pub fn run_falsify(system: &str, certificate: &Path, opts: &ResolvedOpts) -> Result<RunOutput> {
    let entry = lookup(system)?;
    let sys = entry.system.as_ref();
    let budget = budget_for(&entry, opts);
    let cert = load_certificate(certificate)?;
    let set = if opts.set_spec == "from-certificate" {
        cert.set_a.clone()
    } else {
        parse_set(&opts.set_spec, &entry)?
    };
    let problem = FalsificationProblem {
        system: sys,
        set_a: &set,
        candidate: cert.candidate(),
        bounds: SearchBounds {
            x0_radius: budget.radii.iter().copied().fold(0.0, f64::max),
            u_level_max: budget.u_max,
            horizon: 4.0 * budget.time_horizon,
            segments: 8,
        },
        n_evals: opts.evals,
        restarts: 20,
        seed: opts.seed,
        tolerance: opts.tolerance,
    };
    let r = falsify(&problem).map_err(into_anyhow)?;
    let report = OpReport::new("falsify", system, &opts.set_spec, r.verdict.status, opts.seed)
        .with_param("evals", serde_json::json!(r.flow_evaluations))
        .with_param("best_residual", serde_json::json!(r.best_residual))
        .with_param("certificate_file", serde_json::json!(certificate.display().to_string()));
    attach_witness(RunOutput::new(report), sys, &r.verdict)
}

pub fn run_catalog() -> Result<String> {
    let manifests: Vec<_> = catalog().into_iter().map(|e| e.manifest).collect();
    Ok(serde_json::to_string_pretty(&manifests)? + "\n")
}

/// Full catalog × property matrix; one JSON per run plus a combined
/// `summary.csv`. The exit status aggregates the worst verdict.
pub fn run_bench(opts: &ResolvedOpts) -> Result<(u8, String)> {
    let out = &opts.out;
    std::fs::create_dir_all(out)?;
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    let mut worst = 0u8;
    for entry in catalog() {
        let name = entry.manifest.name.clone();
        // Axioms first.
        let ax = run_axioms(&name, opts)?;
        worst = worst.max(exit_for(ax.report.verdict));
        summary.push_str(&ax.report.summary_row());
        summary.push('\n');
        write_file(
            &out.join(format!("{name}__axioms.json")),
            &(ax.report.to_json_pretty()? + "\n"),
        )?;
        for property in PROPERTIES {
            let mut prop_opts = opts.clone();
            prop_opts.set_spec = "auto".into();
            let run = run_analyze(&name, property, &prop_opts)
                .with_context(|| format!("bench {name} {property}"))?;
            worst = worst.max(exit_for(run.report.verdict));
            summary.push_str(&run.report.summary_row());
            summary.push('\n');
            write_file(
                &out.join(format!("{name}__{property}.json")),
                &(run.report.to_json_pretty()? + "\n"),
            )?;
            for (extra_name, contents) in &run.extras {
                write_file(&out.join(format!("{name}__{property}__{extra_name}")), contents)?;
            }
        }
    }
    write_file(&out.join("summary.csv"), &summary)?;
    Ok((worst, summary))
}
