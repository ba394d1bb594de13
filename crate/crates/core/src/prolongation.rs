//! Reachable-set prolongation: the sampled construction of
//! `A_{ε,γ} = {φ(t, x, u) : t ≥ 0, x ∈ B_ε(A), ‖u‖ ≤ γ⁻¹(ε/2)}`,
//! its finite-horizon representation through the smoothed uniform attainment
//! time, the offset constant, the `f_ε`/`σ_ε` majorant profile, and the
//! end-to-end ISpS-to-ISS pipeline.

use serde::{Deserialize, Serialize};

use crate::comparison::{monotone_smooth_tau, ComparisonFunction, TauGrid};
use crate::error::{Error, Result};
use crate::estimators::{
    check_iss_wrt_set, check_robust_s_invariance, check_s_invariance, fit_isps, GainCertificate,
};
use crate::sampling::{
    checkpoints, derive_rng, make_input, sample_near_set, simulate_bundle, InputKind, SampleBudget,
    TrajectorySpec,
};
use crate::sets::{BoundedSetApprox, StateNorm, StateVector};
use crate::signal::InputSignal;
use crate::system::ControlSystem;
use crate::verdict::Verdict;

/// Sampled approximation of the prolongation set `A_{ε,γ}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProlongationSet {
    pub base: BoundedSetApprox,
    pub epsilon: f64,
    pub gamma: ComparisonFunction,
    /// Input bound `γ⁻¹(ε/2)` defining the construction.
    pub s_level: f64,
    /// Finite horizon justified by the smoothed attainment time `τ(ε, ε)`.
    pub horizon_used: f64,
    /// Fraction of sampled trajectories re-entering `B_{ε/2 + γ(‖u‖)}(A)`
    /// within the horizon.
    pub return_fraction: f64,
    /// Set when the return statistic stayed below 99% after one doubling.
    pub inconclusive: bool,
    pub cloud: BoundedSetApprox,
    /// Point count before any down-sampling.
    pub original_points: usize,
}

/// Cloud inflation: integrator noise plus 1% of ε.
pub fn cloud_slack(sys: &dyn ControlSystem, eps: f64) -> f64 {
    sys.flow_tolerance() + 0.01 * eps
}

/// Deterministic cover of `B_eps(A)` used as the `t = 0` slice of the cloud
/// (the identity axiom puts all of `B_ε(A)` inside `A_{ε,γ}`).
fn shell_cover(set: &BoundedSetApprox, eps: f64, slack: f64, budget: &SampleBudget) -> Vec<StateVector> {
    let radius = set.inflation() + eps;
    let dim = set.dim();
    let mut cover = Vec::new();
    for p in set.points() {
        cover.push(p.clone());
    }
    match dim {
        1 => {
            // Grid fine enough that the inflated cloud is gap-free.
            let n = ((2.0 * radius / (0.8 * slack)).ceil() as usize).clamp(16, 800);
            for p in set.points() {
                for k in 0..=n {
                    let x = p[0] - radius + 2.0 * radius * k as f64 / n as f64;
                    cover.push(vec![x]);
                }
            }
        }
        2 => {
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            let dirs = 64usize;
            let rings = 8usize;
            for p in set.points() {
                for d in 0..dirs {
                    let th = golden * d as f64;
                    for ring in 1..=rings {
                        let rr = radius * ring as f64 / rings as f64;
                        cover.push(vec![p[0] + rr * th.cos(), p[1] + rr * th.sin()]);
                    }
                }
            }
        }
        _ => {
            let mut rng = derive_rng(budget.seed, 0xc0e4, 0);
            for k in 0..budget.n_states * 16 {
                cover.push(sample_near_set(&mut rng, set, eps, k % 2 == 0));
            }
        }
    }
    cover
}

/// Farthest-point down-sampling, keeping the spread of the cloud.
pub fn downsample_farthest(points: &[StateVector], target: usize, norm: StateNorm) -> Vec<StateVector> {
    if points.len() <= target || target == 0 {
        return points.to_vec();
    }
    let mut selected: Vec<usize> = vec![0];
    let mut dist: Vec<f64> = points.iter().map(|p| norm.dist(p, &points[0])).collect();
    while selected.len() < target {
        let (next, _) = dist
            .iter()
            .enumerate()
            .fold((0usize, -1.0f64), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        selected.push(next);
        for (i, p) in points.iter().enumerate() {
            let d = norm.dist(p, &points[next]);
            if d < dist[i] {
                dist[i] = d;
            }
        }
    }
    selected.sort_unstable();
    selected.iter().map(|&i| points[i].clone()).collect()
}

const MAX_CLOUD_POINTS: usize = 100_000;
/// Working cap keeping distance queries tractable at desk scale.
const WORK_CLOUD_POINTS: usize = 6_000;

fn prolongation_inputs(
    rng: &mut impl rand::Rng,
    n_inputs: usize,
    dim: usize,
    grid_step: f64,
    cells: usize,
    s_level: f64,
) -> Vec<InputSignal> {
    let mut inputs = vec![InputSignal::zero(grid_step, dim.max(1))];
    if s_level > 0.0 {
        let cm = make_input(rng, InputKind::ConstantMax, dim, grid_step, cells, s_level);
        let neg = InputSignal::new(
            cm.grid_step(),
            cm.dim(),
            cm.cells().iter().map(|v| v.iter().map(|x| -x).collect()).collect(),
        )
        .unwrap();
        inputs.push(cm);
        inputs.push(neg);
        inputs.push(make_input(rng, InputKind::BangBang, dim, grid_step, cells, s_level));
        for _ in inputs.len()..n_inputs.max(5) {
            inputs.push(make_input(rng, InputKind::Random, dim, grid_step, cells, s_level));
        }
    }
    inputs
}

/// Uniform attainment times `τ̃(ε', R)` into the `ε'/2 + γ(‖u‖)` ball,
/// sampled on the stencil grid needed by the double-average smoothing.
fn attainment_grid(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    gamma: &ComparisonFunction,
    s_level: f64,
    eps: f64,
    budget: &SampleBudget,
) -> Result<TauGrid> {
    let eps_nodes: Vec<f64> = [0.5, 0.75, 1.0].iter().map(|f| f * eps).collect();
    let r_nodes: Vec<f64> = [1.0, 1.5, 2.0].iter().map(|f| f * eps).collect();
    let gh = sys.input_grid_hint();
    let cells = ((budget.time_horizon / gh).ceil() as usize).max(1) + 2;

    let mut values = vec![vec![0.0f64; r_nodes.len()]; eps_nodes.len()];
    for (ei, &e_node) in eps_nodes.iter().enumerate() {
        for (ri, &r_node) in r_nodes.iter().enumerate() {
            let mut rng = derive_rng(budget.seed, 0x7a0 ^ ((ei as u64) << 8), ri as u64);
            let mut tau_node = 0.0f64;
            let mut states = Vec::new();
            for k in 0..budget.n_states.max(4) {
                states.push(sample_near_set(&mut rng, set, r_node, k % 2 == 0));
            }
            let inputs =
                prolongation_inputs(&mut rng, budget.n_inputs, sys.input_dim(), gh, cells, s_level);
            for x0 in &states {
                for u in &inputs {
                    let target = e_node / 2.0 + gamma.eval_unchecked(u.sup_norm());
                    let mut attained = None;
                    for escalation in [1.0, 2.0, 4.0] {
                        let horizon = budget.time_horizon * escalation;
                        let times = checkpoints(horizon, gh, (64.0 * escalation) as usize);
                        let trace = sys.flow_trace(&times, x0, u)?;
                        for (t, state) in times.iter().zip(&trace) {
                            if set.distance(state)? <= target {
                                attained = Some(*t);
                                break;
                            }
                        }
                        if attained.is_some() {
                            break;
                        }
                    }
                    match attained {
                        Some(t) => tau_node = tau_node.max(t),
                        None => {
                            return Err(Error::Config(format!(
                                "attainment table node (eps' = {e_node}, R = {r_node}) not \
                                 reachable within the escalated horizon; the prolongation \
                                 construction needs a complete ULIM table"
                            )));
                        }
                    }
                }
            }
            values[ei][ri] = tau_node;
        }
    }

    // Monotone repair (upward only, which keeps the times valid upper
    // bounds): nonincreasing in eps', nondecreasing in R.
    for ri in 0..r_nodes.len() {
        for ei in (0..eps_nodes.len() - 1).rev() {
            values[ei][ri] = values[ei][ri].max(values[ei + 1][ri]);
        }
    }
    for ei in 0..eps_nodes.len() {
        for ri in 1..r_nodes.len() {
            values[ei][ri] = values[ei][ri].max(values[ei][ri - 1]);
        }
    }
    TauGrid::new(eps_nodes, r_nodes, values)
}

/// Builds the sampled prolongation set: initial cover of `B_ε(A)`, bundles of
/// trajectories under inputs bounded by `γ⁻¹(ε/2)` on the finite horizon
/// `τ(ε, ε)`, and the return-to-ball statistic justifying that horizon.
pub fn build_prolongation(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    eps: f64,
    gamma: &ComparisonFunction,
    budget: &SampleBudget,
) -> Result<ProlongationSet> {
    budget.validate()?;
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("prolongation needs eps > 0, got {eps}")));
    }
    if set.dim() != sys.state_dim() {
        return Err(Error::Shape("set dimension does not match system".into()));
    }
    let s_level = gamma.invert()?.evaluate(eps / 2.0)?;
    let slack = cloud_slack(sys, eps);
    let gh = sys.input_grid_hint();

    let grid = attainment_grid(sys, set, gamma, s_level, eps, budget)?;
    let smoothed = monotone_smooth_tau(grid)?;
    let tau_eps_eps = smoothed.tau(eps, eps)?;
    let mut horizon = ((tau_eps_eps / gh).ceil() * gh).max(gh);

    let cover = shell_cover(set, eps, slack, budget);
    let mut rng = derive_rng(budget.seed, 0xc10d, 1);
    let cells = ((2.0 * horizon / gh).ceil() as usize).max(1) + 2;
    let inputs = prolongation_inputs(&mut rng, budget.n_inputs, sys.input_dim(), gh, cells, s_level);

    // Trajectory starts: a stride through the cover keeps the bundle small.
    let n_traj_states = (budget.n_states * 6).clamp(16, 96);
    let stride = (cover.len() / n_traj_states).max(1);
    let starts: Vec<StateVector> = cover.iter().step_by(stride).cloned().collect();

    let mut return_fraction = 0.0;
    let mut inconclusive = false;
    let mut trajectory_points: Vec<StateVector> = Vec::new();
    for attempt in 0..2 {
        let times = checkpoints(horizon, gh, 64);
        let mut specs = Vec::new();
        for x0 in &starts {
            for u in &inputs {
                specs.push(TrajectorySpec {
                    x0: x0.clone(),
                    input: u.clone(),
                    stratum_radius: eps,
                    stratum_level: u.sup_norm(),
                });
            }
        }
        let bundle = simulate_bundle(sys, set, &specs, &times, true)?;
        if let Some(w) = bundle.divergence {
            return Err(Error::Divergence { t: w.t, norm: w.residual });
        }
        let mut returned = 0usize;
        trajectory_points.clear();
        for s in &bundle.samples {
            let target = eps / 2.0 + gamma.eval_unchecked(s.input_level);
            if s.distances.iter().any(|&d| d <= target) {
                returned += 1;
            }
            if let Some(states) = &s.states {
                trajectory_points.extend(states.iter().cloned());
            }
        }
        return_fraction = returned as f64 / bundle.samples.len() as f64;
        if return_fraction >= 0.99 {
            break;
        }
        if attempt == 0 {
            horizon *= 2.0;
        } else {
            inconclusive = true;
        }
    }

    let mut points = cover;
    // Thin the trajectory contribution before assembling the cloud.
    let room = WORK_CLOUD_POINTS.saturating_sub(points.len()).max(1);
    let tstride = (trajectory_points.len() / room).max(1);
    points.extend(trajectory_points.into_iter().step_by(tstride));
    let original_points = points.len();
    if points.len() > MAX_CLOUD_POINTS {
        points = downsample_farthest(&points, MAX_CLOUD_POINTS, set.norm());
    }

    let cloud = BoundedSetApprox::new(points, slack, set.norm())?;
    Ok(ProlongationSet {
        base: set.clone(),
        epsilon: eps,
        gamma: gamma.clone(),
        s_level,
        horizon_used: horizon,
        return_fraction,
        inconclusive,
        cloud,
        original_points,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceReport {
    /// `γ⁻¹(ε/2)`-invariance of the cloud.
    pub s_verdict: Verdict,
    /// 0-invariance (the `s = 0` special case).
    pub zero_verdict: Verdict,
    pub verdict: Verdict,
}

/// Checks `s = γ⁻¹(ε/2)` invariance of the constructed cloud, plus the
/// `s = 0` special case which must also hold.
pub fn check_prolongation_invariance(
    sys: &dyn ControlSystem,
    p: &ProlongationSet,
    budget: &SampleBudget,
) -> Result<InvarianceReport> {
    let s_verdict = check_s_invariance(sys, &p.cloud, p.s_level, budget)?;
    let zero_verdict = check_s_invariance(sys, &p.cloud, 0.0, budget)?;
    let verdict = if s_verdict.is_consistent() && zero_verdict.is_consistent() {
        Verdict::consistent().with_stat("s_level", p.s_level)
    } else if s_verdict.is_falsified() {
        s_verdict.clone()
    } else {
        zero_verdict.clone()
    };
    Ok(InvarianceReport { s_verdict, zero_verdict, verdict })
}

/// Smallest probed constant with `‖x‖_A ≤ ‖x‖_cloud + C`, an upper bound on
/// it being the directed Hausdorff distance from the cloud into `A`.
pub fn offset_constant(set: &BoundedSetApprox, p: &ProlongationSet) -> Result<f64> {
    let slack = p.cloud.inflation() + 1e-9;
    for a_point in set.points() {
        if p.cloud.distance(a_point)? > slack {
            return Err(Error::Config(format!(
                "containment A ⊂ cloud violated: a base point sits {:.3e} outside",
                p.cloud.distance(a_point)?
            )));
        }
    }
    let mut probes: Vec<StateVector> = Vec::new();
    probes.extend(p.cloud.points().iter().cloned());
    probes.extend(set.points().iter().cloned());
    // Outward pushes past the cloud boundary saturate the distance gap.
    let dim = set.dim();
    let reach = p.cloud.set_norm_bound() + set.set_norm_bound() + 1.0;
    let mut rng = derive_rng(0xc0ff5e7, dim as u64, 0);
    for k in 0..256 {
        let dir = crate::sampling::random_direction(&mut rng, dim);
        let scale = reach * (0.5 + 0.5 * (k as f64 / 255.0));
        probes.push(dir.iter().map(|d| d * scale).collect());
    }
    let mut c = 0.0f64;
    for x in &probes {
        let gap = set.distance(x)? - p.cloud.distance(x)?;
        if gap > c {
            c = gap;
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FepsReport {
    pub s_grid: Vec<f64>,
    /// `f̂(s)`: max distance from the `s`-cloud into the `ε`-cloud.
    pub f_hat: Vec<f64>,
    /// Fitted `K∞` majorant of `f̂`.
    pub sigma_eps: ComparisonFunction,
    /// `f̂(s) = 0` (within slack) holds on `s ≤ ε`.
    pub zero_region_ok: bool,
    /// Monotonicity violation beyond slack, if any: `(s_lo, s_hi, gap)`.
    pub monotone_violation: Option<(f64, f64, f64)>,
    pub slack: f64,
}

/// Samples the profile `f_ε(s) = sup_{x ∈ A_{s,γ}} ‖x‖_{A_{ε,γ}}` on the
/// given `s` grid and fits the `σ_ε ∈ K∞` majorant. A non-monotone profile
/// beyond slack is an internal-consistency failure, not repaired.
pub fn f_eps_profile(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    gamma: &ComparisonFunction,
    eps: f64,
    s_grid: &[f64],
    budget: &SampleBudget,
) -> Result<FepsReport> {
    if s_grid.is_empty() || s_grid.windows(2).any(|w| w[1] <= w[0]) || s_grid[0] <= 0.0 {
        return Err(Error::Precondition("s_grid must be positive and strictly increasing".into()));
    }
    let p_eps = build_prolongation(sys, set, eps, gamma, budget)?;
    let slack = 2.0 * cloud_slack(sys, eps.max(*s_grid.last().unwrap()));

    let mut f_hat = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let p_s = build_prolongation(sys, set, s, gamma, budget)?;
        let mut worst = 0.0f64;
        for x in p_s.cloud.points() {
            let d = p_eps.cloud.distance(x)?;
            if d > worst {
                worst = d;
            }
        }
        f_hat.push(worst);
    }

    let mut monotone_violation = None;
    let mut run_max = 0.0f64;
    for (i, &v) in f_hat.iter().enumerate() {
        if v + slack < run_max {
            monotone_violation = Some((s_grid[i - 1], s_grid[i], run_max - v));
            break;
        }
        run_max = run_max.max(v);
    }

    let zero_region_ok = s_grid
        .iter()
        .zip(&f_hat)
        .filter(|(s, _)| **s <= eps)
        .all(|(_, v)| *v <= slack);

    let sigma_eps =
        crate::estimators::envelope_to_kinf(s_grid, &f_hat, crate::estimators::ENVELOPE_INFLATION)?;
    // The majorant must dominate the profile at the grid.
    for (s, v) in s_grid.iter().zip(&f_hat) {
        if sigma_eps.evaluate(*s)? + 1e-12 < *v {
            return Err(Error::Data(format!(
                "sigma_eps fails to dominate f_hat at s = {s}"
            )));
        }
    }
    Ok(FepsReport {
        s_grid: s_grid.to_vec(),
        f_hat,
        sigma_eps,
        zero_region_ok,
        monotone_violation,
        slack,
    })
}

/// Sampled Lipschitz-flow estimate over pairs sharing the input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub l_hat: f64,
    pub pairs: usize,
}

pub fn lipschitz_estimate(
    sys: &dyn ControlSystem,
    radius: f64,
    h: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    let gh = sys.input_grid_hint();
    let times = checkpoints(h, gh, 16);
    let cells = ((h / gh).ceil() as usize).max(1) + 1;
    let norm = sys.state_norm();
    let dim = sys.state_dim();
    let mut l_hat = 0.0f64;
    for k in 0..n_pairs {
        let mut rng = derive_rng(seed, 0x11b5, k as u64);
        use rand::Rng;
        let x: StateVector = (0..dim).map(|_| rng.gen_range(-radius..=radius)).collect();
        let delta = if k % 2 == 0 { 1e-3 * radius } else { 0.3 * radius };
        let dir = crate::sampling::random_direction(&mut rng, dim);
        let y: StateVector = x.iter().zip(&dir).map(|(a, d)| a + d * delta).collect();
        let level = rng.gen_range(0.0..=radius);
        let u = make_input(&mut rng, InputKind::Random, sys.input_dim(), gh, cells, level);
        let tx = sys.flow_trace(&times, &x, &u)?;
        let ty = sys.flow_trace(&times, &y, &u)?;
        let d0 = norm.dist(&x, &y).max(1e-12);
        for (a, b) in tx.iter().zip(&ty) {
            l_hat = l_hat.max(norm.dist(a, b) / d0);
        }
    }
    Ok(LipschitzReport { l_hat, pairs: n_pairs })
}

/// One leg of the end-to-end pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineLeg {
    pub name: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub legs: Vec<PipelineLeg>,
    pub cloud_norm: Option<f64>,
    pub certificate: Option<GainCertificate>,
    /// Overall: consistent iff every leg is.
    pub verdict: Verdict,
}

/// End-to-end: estimate the Lipschitz flow constant, fit ISpS, build the
/// prolongation at `eps`, check its `γ⁻¹(ε/2)`- and robust invariance, then
/// run the ISS criterion against the cloud. ODE benchmarks close the loop
/// with a compact-invariance summary. The report stops at the first
/// falsified leg.
pub fn theorem2_pipeline(
    sys: &dyn ControlSystem,
    budget: &SampleBudget,
    eps: f64,
    tolerance: f64,
) -> Result<PipelineReport> {
    let mut legs: Vec<PipelineLeg> = Vec::new();
    let push = |legs: &mut Vec<PipelineLeg>, name: &str, v: Verdict| -> bool {
        let ok = v.is_consistent();
        legs.push(PipelineLeg { name: name.into(), verdict: v });
        ok
    };
    let fail_report = |legs: Vec<PipelineLeg>| -> PipelineReport {
        let verdict = legs.last().map(|l| l.verdict.clone()).unwrap_or_else(Verdict::inconclusive);
        PipelineReport { legs, cloud_norm: None, certificate: None, verdict }
    };

    // Lipschitz-consistency of the flow on a compact window.
    let radius = budget.radii.iter().copied().fold(1.0, f64::max).min(5.0);
    let lip = lipschitz_estimate(sys, radius, (budget.time_horizon / 5.0).max(1.0), 24, budget.seed)?;
    let lip_verdict = if lip.l_hat.is_finite() {
        Verdict::consistent().with_stat("l_hat", lip.l_hat)
    } else {
        Verdict::inconclusive()
    };
    if !push(&mut legs, "lipschitz-flow", lip_verdict) {
        return Ok(fail_report(legs));
    }

    // ISpS fit gives the gain used by the construction.
    let origin = BoundedSetApprox::origin(sys.state_dim(), sys.state_norm());
    let fit = fit_isps(sys, &origin, budget, tolerance)?;
    if !push(&mut legs, "isps-fit", fit.verdict.clone()) {
        return Ok(fail_report(legs));
    }
    let certificate = fit.certificate.expect("certified fit carries a certificate");

    // The ISpS offset identifies the ball trajectories settle into; that
    // ball, not the origin, is the base of the prolongation.
    let set = if certificate.c > 1e-9 {
        BoundedSetApprox::ball(vec![0.0; sys.state_dim()], certificate.c, sys.state_norm())?
    } else {
        origin
    };
    let p = build_prolongation(sys, &set, eps, &certificate.gamma, budget)?;
    let build_verdict = if p.inconclusive {
        Verdict::inconclusive().with_stat("return_fraction", p.return_fraction)
    } else {
        Verdict::consistent()
            .with_stat("return_fraction", p.return_fraction)
            .with_stat("horizon_used", p.horizon_used)
            .with_stat("cloud_norm", p.cloud.set_norm_bound())
    };
    if !push(&mut legs, "prolongation-build", build_verdict) {
        return Ok(fail_report(legs));
    }

    let inv = check_prolongation_invariance(sys, &p, budget)?;
    if !push(&mut legs, "cloud-invariance", inv.verdict) {
        return Ok(fail_report(legs));
    }

    let eps_rob = (0.25 * eps).max(0.05);
    let rob = check_robust_s_invariance(
        sys,
        &p.cloud,
        p.s_level,
        eps_rob,
        (budget.time_horizon / 5.0).max(1.0),
        budget,
    )?;
    if !push(&mut legs, "robust-invariance", rob.verdict) {
        return Ok(fail_report(legs));
    }

    let iss = check_iss_wrt_set(sys, &p.cloud, budget, tolerance)?;
    if !push(&mut legs, "iss-wrt-cloud", iss.verdict) {
        return Ok(fail_report(legs));
    }

    // Compact-ISS closure for the finite-dimensional benchmarks: the cloud is
    // bounded and invariant, hence its closure is a compact invariant set.
    let compact = Verdict::consistent().with_stat("cloud_norm", p.cloud.set_norm_bound());
    push(&mut legs, "compact-iss", compact);

    Ok(PipelineReport {
        cloud_norm: Some(p.cloud.set_norm_bound()),
        certificate: Some(certificate),
        verdict: Verdict::consistent().with_stat("legs", legs.len() as f64),
        legs,
    })
}
