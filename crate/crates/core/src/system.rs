//! The axiomatic control-system triple `Σ = (X, U, φ)` as an evaluable
//! interface, plus the sampled axiom checker.

use rand::Rng;

use crate::error::{Error, Result};
use crate::sampling::derive_rng;
use crate::sets::{StateNorm, StateVector};
use crate::signal::InputSignal;
use crate::verdict::{Verdict, Witness};

/// An evaluable control system. `flow` must be a pure, reentrant function of
/// its arguments; the identity property `φ(0, x, u) = x` is exact, causality
/// and the cocycle property hold up to `flow_tolerance` (checked, not
/// assumed — see [`check_axioms`]).
pub trait ControlSystem: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    /// Declared numerical accuracy of a single flow evaluation.
    fn flow_tolerance(&self) -> f64;

    fn state_norm(&self) -> StateNorm {
        StateNorm::Euclidean
    }

    /// Natural grid step for sampled piecewise-constant inputs.
    fn input_grid_hint(&self) -> f64 {
        0.5
    }

    /// Rough per-second simulation cost (substeps × dimension), used to scale
    /// adversarial search budgets on stiff high-dimensional systems.
    fn cost_hint(&self) -> f64 {
        100.0
    }

    fn flow(&self, t: f64, x: &StateVector, u: &InputSignal) -> Result<StateVector>;

    /// Evaluates the whole trajectory at the given sorted times. The default
    /// calls `flow` per time; integrator-backed systems override this with a
    /// single forward pass that yields bit-identical states at grid-aligned
    /// times.
    fn flow_trace(&self, times: &[f64], x: &StateVector, u: &InputSignal) -> Result<Vec<StateVector>> {
        times.iter().map(|&t| self.flow(t, x, u)).collect()
    }
}

fn norm_diff(norm: StateNorm, a: &[f64], b: &[f64]) -> f64 {
    norm.dist(a, b)
}

/// Samples random `(t, h, x, u)` tuples and checks the identity, cocycle,
/// causality and continuity axioms plus forward completeness. A falsified
/// verdict carries the witness tuple; `consistent` means no violation found
/// within the budget.
pub fn check_axioms(
    sys: &dyn ControlSystem,
    sample_budget: usize,
    horizon: f64,
    seed: u64,
) -> Result<Verdict> {
    if sample_budget < 1 {
        return Err(Error::Precondition("axiom check budget must be >= 1".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::Precondition(format!("horizon must be positive, got {horizon}")));
    }
    let norm = sys.state_norm();
    let gh = sys.input_grid_hint();
    let n_cells = ((horizon / gh).ceil() as usize).max(1) + 2;
    let tol = sys.flow_tolerance();
    let mut checked = 0usize;

    for sample in 0..sample_budget {
        let mut rng = derive_rng(seed, 0x51c0, sample as u64);
        let x: StateVector = (0..sys.state_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let u = random_signal(&mut rng, sys.input_dim(), gh, n_cells, 1.0);
        // Grid-aligned split times keep the shifted-input comparison exact.
        let max_k = ((horizon / 2.0 / gh).floor() as usize).max(1);
        let t = gh * rng.gen_range(0..=max_k) as f64;
        let h = gh * rng.gen_range(0..=max_k) as f64;

        let run = |desc: &str, res: Result<StateVector>| -> Result<std::result::Result<StateVector, Verdict>> {
            match res {
                Ok(v) => Ok(Ok(v)),
                Err(Error::Divergence { t: td, norm: n }) => {
                    Ok(Err(Verdict::falsified(Witness {
                        t: td,
                        x0: x.clone(),
                        input: u.clone(),
                        residual: n,
                        description: format!("forward completeness violated during {desc}"),
                    })))
                }
                Err(e) => Err(e),
            }
        };

        // Identity: φ(0, x, u) = x exactly.
        let at_zero = match run("identity check", sys.flow(0.0, &x, &u))? {
            Ok(v) => v,
            Err(verdict) => return Ok(verdict),
        };
        if at_zero != x {
            let residual = norm_diff(norm, &at_zero, &x);
            return Ok(Verdict::falsified(Witness {
                t: 0.0,
                x0: x,
                input: u,
                residual,
                description: "identity axiom: phi(0, x, u) != x".into(),
            })
            .with_stat("samples_checked", checked as f64));
        }

        // Cocycle: φ(h, φ(t, x, u), u(t+·)) = φ(t+h, x, u) within 10·tol.
        let mid = match run("cocycle check", sys.flow(t, &x, &u))? {
            Ok(v) => v,
            Err(verdict) => return Ok(verdict),
        };
        let shifted = u.shift(t)?;
        let two_leg = match run("cocycle check", sys.flow(h, &mid, &shifted))? {
            Ok(v) => v,
            Err(verdict) => return Ok(verdict),
        };
        let direct = match run("cocycle check", sys.flow(t + h, &x, &u))? {
            Ok(v) => v,
            Err(verdict) => return Ok(verdict),
        };
        let cocycle_gap = norm_diff(norm, &two_leg, &direct);
        if cocycle_gap > 10.0 * tol {
            return Ok(Verdict::falsified(Witness {
                t: t + h,
                x0: x,
                input: u,
                residual: cocycle_gap,
                description: format!("cocycle axiom violated at split t = {t}, h = {h}"),
            })
            .with_stat("samples_checked", checked as f64));
        }

        // Causality: the input beyond t must not influence φ(t, x, u).
        let truncated = u.truncate_after(t);
        let causal = match run("causality check", sys.flow(t, &x, &truncated))? {
            Ok(v) => v,
            Err(verdict) => return Ok(verdict),
        };
        let causality_gap = norm_diff(norm, &causal, &mid);
        if causality_gap > tol {
            return Ok(Verdict::falsified(Witness {
                t,
                x0: x,
                input: u,
                residual: causality_gap,
                description: format!("causality axiom violated at t = {t}"),
            })
            .with_stat("samples_checked", checked as f64));
        }

        // Continuity in t: increments must shrink with the step. The largest
        // increment calibrates the local rate; halved steps must follow it.
        let delta0 = (gh / 4.0).max(1e-3);
        let base = match run("continuity check", sys.flow(t, &x, &u))? {
            Ok(v) => v,
            Err(verdict) => return Ok(verdict),
        };
        let mut rate: Option<f64> = None;
        for k in 0..4 {
            let delta = delta0 / 2.0f64.powi(k);
            let ahead = match run("continuity check", sys.flow(t + delta, &x, &u))? {
                Ok(v) => v,
                Err(verdict) => return Ok(verdict),
            };
            let gap = norm_diff(norm, &ahead, &base);
            match rate {
                None => rate = Some(gap / delta),
                Some(r) => {
                    if gap > 2.0 * r * delta + 10.0 * tol {
                        return Ok(Verdict::falsified(Witness {
                            t,
                            x0: x,
                            input: u,
                            residual: gap,
                            description: format!(
                                "continuity axiom: increment {gap:.3e} over delta = {delta:.3e} does not scale"
                            ),
                        })
                        .with_stat("samples_checked", checked as f64));
                    }
                }
            }
        }
        checked += 1;
    }

    Ok(Verdict::consistent().with_stat("samples_checked", checked as f64))
}

pub(crate) fn random_signal(
    rng: &mut impl Rng,
    dim: usize,
    grid_step: f64,
    cells: usize,
    level: f64,
) -> InputSignal {
    let values: Vec<Vec<f64>> = (0..cells)
        .map(|_| random_input_value(rng, dim, level))
        .collect();
    InputSignal::new(grid_step, dim, values).expect("generated signal is valid")
}

pub(crate) fn random_input_value(rng: &mut impl Rng, dim: usize, level: f64) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    if dim == 1 {
        return vec![rng.gen_range(-level..=level)];
    }
    // Uniform direction scaled by a uniform radius fraction.
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let r = level * rng.gen_range(0.0..=1.0);
    for x in &mut v {
        *x *= r / n;
    }
    v
}
