//! s-invariance and robust s-invariance checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{checkpoints, derive_rng, make_input, sample_near_set, InputKind, SampleBudget};
use crate::sets::BoundedSetApprox;
use crate::signal::InputSignal;
use crate::system::ControlSystem;
use crate::verdict::{Verdict, Witness};

use super::membership_slack;

fn negate(u: &InputSignal) -> InputSignal {
    let values = u
        .cells()
        .iter()
        .map(|v| v.iter().map(|x| -x).collect())
        .collect();
    InputSignal::new(u.grid_step(), u.dim(), values).expect("negated signal is valid")
}

fn invariance_inputs(
    rng: &mut impl rand::Rng,
    n_inputs: usize,
    dim: usize,
    grid_step: f64,
    cells: usize,
    s: f64,
) -> Vec<InputSignal> {
    if s == 0.0 {
        return vec![InputSignal::zero(grid_step, dim.max(1))];
    }
    let mut inputs = Vec::new();
    let const_max = make_input(rng, InputKind::ConstantMax, dim, grid_step, cells, s);
    inputs.push(negate(&const_max));
    inputs.push(const_max);
    inputs.push(make_input(rng, InputKind::BangBang, dim, grid_step, cells, s));
    inputs.push(make_input(rng, InputKind::ZeroTail, dim, grid_step, cells, s));
    for _ in inputs.len()..n_inputs.max(4) {
        inputs.push(make_input(rng, InputKind::Random, dim, grid_step, cells, s));
    }
    inputs
}

/// Checks that the set maps into itself under all inputs with sup-norm ≤ `s`:
/// samples states from the point cloud and its inflation shell, times up to
/// the horizon, and tests membership via the distance slack.
pub fn check_s_invariance(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    s: f64,
    budget: &SampleBudget,
) -> Result<Verdict> {
    budget.validate()?;
    if !(s >= 0.0) {
        return Err(Error::Precondition(format!("s must be >= 0, got {s}")));
    }
    if set.dim() != sys.state_dim() {
        return Err(Error::Shape("set dimension does not match system".into()));
    }
    let slack = membership_slack(set, sys);
    let gh = sys.input_grid_hint();
    let times = checkpoints(budget.time_horizon, gh, 64);
    let cells = ((budget.time_horizon / gh).ceil() as usize).max(1) + 2;

    // States: the cloud points themselves plus random interior samples.
    let mut states: Vec<Vec<f64>> = Vec::new();
    let cap = 64usize;
    let stride = (set.points().len() / cap).max(1);
    for p in set.points().iter().step_by(stride) {
        states.push(p.clone());
    }
    let mut rng = derive_rng(budget.seed, 0x51a0, 0);
    for _ in 0..budget.n_states * 4 {
        states.push(sample_near_set(&mut rng, set, 0.0, false));
    }

    let inputs = invariance_inputs(&mut rng, budget.n_inputs, sys.input_dim(), gh, cells, s);

    let mut max_excursion = 0.0f64;
    let mut trajectories = 0usize;
    for x0 in &states {
        for u in &inputs {
            trajectories += 1;
            let trace = match sys.flow_trace(&times, x0, u) {
                Ok(t) => t,
                Err(Error::Divergence { t, norm }) => {
                    return Ok(Verdict::falsified(Witness {
                        t,
                        x0: x0.clone(),
                        input: u.clone(),
                        residual: norm,
                        description: "trajectory diverged from an invariant-set start".into(),
                    }));
                }
                Err(e) => return Err(e),
            };
            for (t, state) in times.iter().zip(&trace) {
                let d = set.distance(state)?;
                max_excursion = max_excursion.max(d);
                if d > slack {
                    return Ok(Verdict::falsified(Witness {
                        t: *t,
                        x0: x0.clone(),
                        input: u.clone(),
                        residual: d,
                        description: format!(
                            "s-invariance violated: distance {d:.3e} > slack {slack:.3e} at t = {t}"
                        ),
                    }));
                }
            }
        }
    }
    Ok(Verdict::consistent()
        .with_stat("max_excursion", max_excursion)
        .with_stat("trajectories", trajectories as f64)
        .with_stat("slack", slack))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// Largest sampled δ with no violation, when one exists.
    pub delta: Option<f64>,
    pub verdict: Verdict,
}

/// Robust s-invariance probe at one `(ε, h)` pair: bisection over
/// `δ ∈ (0, ε]` for the largest sampled δ such that starts within δ of the
/// set under inputs with sup-norm ≤ δ stay within ε over `[0, h]`.
pub fn check_robust_s_invariance(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    s: f64,
    eps: f64,
    h: f64,
    budget: &SampleBudget,
) -> Result<RobustnessReport> {
    budget.validate()?;
    if !(eps > 0.0 && h > 0.0) {
        return Err(Error::Precondition(format!(
            "robust invariance needs eps, h > 0, got ({eps}, {h})"
        )));
    }
    let gh = sys.input_grid_hint();
    let times = checkpoints(h, gh, 32);
    let cells = ((h / gh).ceil() as usize).max(1) + 2;
    let tol = 10.0 * sys.flow_tolerance();
    // Inputs stay below the invariance level when one is given.
    let delta_max = if s > 0.0 { eps.min(s) } else { eps };

    let probe = |delta: f64, stream: u64| -> Result<Option<Witness>> {
        let mut rng = derive_rng(budget.seed, 0x60b0 ^ stream, 0);
        let mut states = Vec::new();
        for k in 0..budget.n_states.max(4) {
            states.push(sample_near_set(&mut rng, set, delta, k % 2 == 0));
        }
        let inputs = invariance_inputs(&mut rng, budget.n_inputs, sys.input_dim(), gh, cells, delta);
        for x0 in &states {
            for u in &inputs {
                let trace = match sys.flow_trace(&times, x0, u) {
                    Ok(t) => t,
                    Err(Error::Divergence { t, norm }) => {
                        return Ok(Some(Witness {
                            t,
                            x0: x0.clone(),
                            input: u.clone(),
                            residual: norm,
                            description: "divergence inside the robustness probe".into(),
                        }));
                    }
                    Err(e) => return Err(e),
                };
                for (t, state) in times.iter().zip(&trace) {
                    let d = set.distance(state)?;
                    if d > eps + tol {
                        return Ok(Some(Witness {
                            t: *t,
                            x0: x0.clone(),
                            input: u.clone(),
                            residual: d - eps,
                            description: format!(
                                "robustness violated at delta = {delta:.3e}: distance {d:.3e} > eps = {eps}"
                            ),
                        }));
                    }
                }
            }
        }
        Ok(None)
    };

    // The full δ = ε often passes outright (vacuous bound).
    if probe(delta_max, 0)?.is_none() {
        return Ok(RobustnessReport {
            delta: Some(delta_max),
            verdict: Verdict::consistent().with_stat("delta", delta_max),
        });
    }

    let mut lo = 0.0f64;
    let mut hi = delta_max;
    let mut last_witness = None;
    let mut stream = 1u64;
    while hi - lo > 1e-6 && stream < 40 {
        let mid = 0.5 * (lo + hi);
        match probe(mid, stream)? {
            None => lo = mid,
            Some(w) => {
                last_witness = Some(w);
                hi = mid;
            }
        }
        stream += 1;
    }

    if lo > 0.0 {
        Ok(RobustnessReport {
            delta: Some(lo),
            verdict: Verdict::consistent().with_stat("delta", lo),
        })
    } else {
        // No admissible δ down to the resolution: falsified robustness.
        let witness = last_witness.expect("a failing probe produced a witness");
        Ok(RobustnessReport {
            delta: None,
            verdict: Verdict::falsified(witness).with_stat("resolution", 1e-6),
        })
    }
}
