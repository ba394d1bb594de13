//! Limit-property estimators: ULIM (uniform attainment times), LIM
//! (per-trajectory attainment) and UAG (settle-and-stay times).

use serde::{Deserialize, Serialize};

use crate::comparison::{ComparisonFunction, FunctionClass};
use crate::error::{Error, Result};
use crate::sampling::{
    checkpoints, derive_rng, make_input, sample_near_set, simulate_bundle, InputKind, SampleBudget,
    TrajectorySpec,
};
use crate::sets::BoundedSetApprox;
use crate::system::ControlSystem;
use crate::verdict::{Verdict, Witness};

/// One `(ε, r)` node of an attainment table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttainmentNode {
    pub eps: f64,
    pub r: f64,
    /// Uniform attainment (ULIM) or settle (UAG) time; `None` when a sample
    /// exhausted the escalated horizon.
    pub tau_hat: Option<f64>,
    pub attained: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct AttainmentTable {
    pub rows: Vec<AttainmentNode>,
}

impl AttainmentTable {
    pub fn complete(&self) -> bool {
        self.rows.iter().all(|n| n.tau_hat.is_some())
    }

    pub fn get(&self, eps: f64, r: f64) -> Option<&AttainmentNode> {
        self.rows.iter().find(|n| n.eps == eps && n.r == r)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitReport {
    pub table: AttainmentTable,
    pub verdict: Verdict,
    pub candidates: Vec<Witness>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LimitMode {
    /// First entry into the target ball, uniform max over the node.
    Ulim,
    /// First entry per trajectory, no uniformity required.
    Lim,
    /// Bound must hold for all later checkpoints (settle time).
    Uag,
}

fn node_specs(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    budget: &SampleBudget,
    r: f64,
    horizon: f64,
    stream: u64,
) -> Vec<TrajectorySpec> {
    let gh = sys.input_grid_hint();
    let cells = ((horizon / gh).ceil() as usize).max(1) + 2;
    let m = sys.input_dim().max(1);
    let mut specs = Vec::new();
    for si in 0..budget.n_states {
        let mut rng = derive_rng(budget.seed, stream ^ (si as u64) << 8, 0);
        let x0 = sample_near_set(&mut rng, set, r, si % 2 == 0);
        for ui in 0..budget.n_inputs {
            let mut rng = derive_rng(budget.seed, stream ^ (si as u64) << 8, 1 + ui as u64);
            use rand::Rng;
            let (kind, level) = match ui {
                0 => (InputKind::Zero, 0.0),
                1 => (InputKind::ConstantMax, budget.u_max),
                2 => (InputKind::BangBang, budget.u_max / 2.0),
                3 => (InputKind::ZeroTail, budget.u_max),
                _ => (InputKind::Random, rng.gen_range(0.0..=budget.u_max)),
            };
            let input = make_input(&mut rng, kind, m, gh, cells, level);
            specs.push(TrajectorySpec {
                x0: x0.clone(),
                input,
                stratum_radius: r,
                stratum_level: level,
            });
        }
    }
    specs
}

fn run_limits(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    gamma: &ComparisonFunction,
    budget: &SampleBudget,
    mode: LimitMode,
) -> Result<LimitReport> {
    budget.validate()?;
    if gamma.class() != FunctionClass::Kinf {
        return Err(Error::Class(format!(
            "limit estimators need gamma in Kinf, got {}",
            gamma.class()
        )));
    }
    if set.dim() != sys.state_dim() {
        return Err(Error::Shape("set dimension does not match system".into()));
    }

    let gh = sys.input_grid_hint();
    let mut table = AttainmentTable::default();
    let mut candidates: Vec<Witness> = Vec::new();
    let mut max_escalation = 1.0f64;

    for (ei, &eps) in budget.epsilons.iter().enumerate() {
        for (ri, &r) in budget.radii.iter().enumerate() {
            let stream = 0x11a0 ^ ((ei as u64) << 20) ^ ((ri as u64) << 28);
            let specs = node_specs(sys, set, budget, r, budget.time_horizon, stream);
            let mut node_tau = 0.0f64;
            let mut attained_count = 0usize;
            let mut node_complete = true;

            // Escalate the horizon once (×2) and once more (×4) for UAG
            // before declaring a persistent violation.
            let escalations: &[f64] = match mode {
                LimitMode::Uag => &[1.0, 2.0, 4.0],
                _ => &[1.0, 2.0],
            };

            for spec in &specs {
                let target = eps + gamma.eval_unchecked(spec.input.sup_norm());
                let mut resolved = false;
                for (esc_idx, &esc) in escalations.iter().enumerate() {
                    let horizon = budget.time_horizon * esc;
                    let times = checkpoints(horizon, gh, (64.0 * esc) as usize);
                    let bundle =
                        simulate_bundle(sys, set, std::slice::from_ref(spec), &times, false)?;
                    if let Some(w) = bundle.divergence {
                        return Ok(LimitReport {
                            table,
                            verdict: Verdict::falsified(w),
                            candidates,
                        });
                    }
                    let sample = &bundle.samples[0];
                    let outcome = match mode {
                        LimitMode::Ulim | LimitMode::Lim => sample
                            .distances
                            .iter()
                            .position(|&d| d <= target)
                            .map(|j| times[j]),
                        LimitMode::Uag => {
                            // Settle time: first checkpoint after the last
                            // violation; the final checkpoint must comply.
                            let last_violation =
                                sample.distances.iter().rposition(|&d| d > target);
                            match last_violation {
                                None => Some(0.0),
                                Some(j) if j + 1 < times.len() => Some(times[j + 1]),
                                Some(_) => None,
                            }
                        }
                    };
                    if let Some(t_attain) = outcome {
                        node_tau = node_tau.max(t_attain);
                        attained_count += 1;
                        max_escalation = max_escalation.max(esc);
                        resolved = true;
                        break;
                    }
                    if esc_idx + 1 == escalations.len() {
                        // Exhausted: record the candidate counterexample.
                        let gap = sample
                            .distances
                            .iter()
                            .map(|d| d - target)
                            .fold(f64::INFINITY, f64::min);
                        let residual = match mode {
                            LimitMode::Uag => sample.distances.last().unwrap() - target,
                            _ => gap,
                        };
                        candidates.push(Witness {
                            t: horizon,
                            x0: spec.x0.clone(),
                            input: spec.input.clone(),
                            residual,
                            description: format!(
                                "no attainment of eps + gamma(|u|) = {target:.4} within horizon {horizon} at node (eps = {eps}, r = {r})"
                            ),
                        });
                        node_complete = false;
                    }
                }
                let _ = resolved;
            }
            table.rows.push(AttainmentNode {
                eps,
                r,
                tau_hat: if node_complete { Some(node_tau) } else { None },
                attained: attained_count,
                total: specs.len(),
            });
        }
    }

    let verdict = if candidates.is_empty() {
        Verdict::consistent()
            .with_stat("nodes", table.rows.len() as f64)
            .with_stat("max_escalation", max_escalation)
    } else if mode == LimitMode::Uag {
        // A trajectory still violating at the final escalated checkpoint.
        Verdict::falsified(candidates[0].clone())
            .with_stat("candidates", candidates.len() as f64)
    } else {
        // Horizon exhaustion is reported as inconclusive, not as infinity.
        Verdict::inconclusive().with_stat("candidates", candidates.len() as f64)
    };
    Ok(LimitReport { table, verdict, candidates })
}

/// ULIM: per `(ε, r)` node, the max over samples of the first time the
/// trajectory enters the `ε + γ(‖u‖)` ball around the set.
pub fn estimate_ulim(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    gamma: &ComparisonFunction,
    budget: &SampleBudget,
) -> Result<LimitReport> {
    run_limits(sys, set, gamma, budget, LimitMode::Ulim)
}

/// LIM: per-trajectory (non-uniform) attainment only.
pub fn check_lim(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    gamma: &ComparisonFunction,
    budget: &SampleBudget,
) -> Result<LimitReport> {
    run_limits(sys, set, gamma, budget, LimitMode::Lim)
}

/// UAG: the bound must hold for all `t ≥ τ̂`, not just one attainment
/// instant; τ̂ is recorded per `(ε, r)`.
pub fn check_uag(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    gamma: &ComparisonFunction,
    budget: &SampleBudget,
) -> Result<LimitReport> {
    run_limits(sys, set, gamma, budget, LimitMode::Uag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{biased_system, integrator_system, linear_system};
    use crate::sets::StateNorm;

    fn origin() -> BoundedSetApprox {
        BoundedSetApprox::origin(1, StateNorm::Euclidean)
    }

    fn small_budget() -> SampleBudget {
        SampleBudget {
            n_states: 6,
            n_inputs: 5,
            time_horizon: 10.0,
            radii: vec![1.0, 2.0],
            epsilons: vec![0.5, 1.0],
            u_max: 2.0,
            seed: 42,
        }
    }

    #[test]
    fn linear_ulim_attains_at_log_two() {
        let report = estimate_ulim(
            &linear_system(),
            &origin(),
            &ComparisonFunction::identity(),
            &small_budget(),
        )
        .unwrap();
        assert!(report.verdict.is_consistent(), "{:?}", report.verdict);
        let node = report.table.get(0.5, 1.0).unwrap();
        // Worst case |x0| = 1, u = 0: e^{-t} = 0.5 at t = ln 2.
        let tau = node.tau_hat.unwrap();
        assert!(tau >= 2.0f64.ln() - 1e-9, "tau = {tau}");
        assert!(tau <= 4.0, "tau = {tau} unexpectedly large");
    }

    #[test]
    fn state_already_inside_attains_at_zero() {
        // eps >= r: the boundary start is already inside the target ball.
        let budget = SampleBudget { epsilons: vec![2.0], radii: vec![1.0], ..small_budget() };
        let report = check_uag(
            &linear_system(),
            &origin(),
            &ComparisonFunction::identity(),
            &budget,
        )
        .unwrap();
        assert_eq!(report.table.rows[0].tau_hat, Some(0.0));
    }

    #[test]
    fn integrator_produces_candidates_for_ulim() {
        let report = estimate_ulim(
            &integrator_system(),
            &origin(),
            &ComparisonFunction::identity(),
            &small_budget(),
        )
        .unwrap();
        assert!(!report.candidates.is_empty());
        assert_eq!(report.verdict.status, crate::verdict::VerdictStatus::Inconclusive);
    }

    #[test]
    fn integrator_falsified_for_uag() {
        let report = check_uag(
            &integrator_system(),
            &origin(),
            &ComparisonFunction::identity(),
            &small_budget(),
        )
        .unwrap();
        assert!(report.verdict.is_falsified(), "{:?}", report.verdict);
    }

    #[test]
    fn biased_lim_consistent_around_equilibrium() {
        let set = BoundedSetApprox::singleton(vec![1.0], StateNorm::Euclidean).unwrap();
        let report = check_lim(
            &biased_system(),
            &set,
            &ComparisonFunction::identity(),
            &small_budget(),
        )
        .unwrap();
        assert!(report.verdict.is_consistent(), "{:?}", report.verdict);
    }

    #[test]
    fn uag_settle_time_tracks_log_ratio() {
        let budget = SampleBudget {
            epsilons: vec![0.25],
            radii: vec![4.0],
            u_max: 1.0,
            ..small_budget()
        };
        let report = check_uag(
            &linear_system(),
            &origin(),
            &ComparisonFunction::identity(),
            &budget,
        )
        .unwrap();
        let tau = report.table.rows[0].tau_hat.unwrap();
        // ln(r / eps) = ln 16 ≈ 2.77, quantized up by the checkpoint grid.
        let expected = (4.0f64 / 0.25).ln();
        assert!(tau >= expected - 1e-9, "tau = {tau} < {expected}");
        assert!(tau <= expected + 1.0, "tau = {tau} too far above {expected}");
    }

    #[test]
    fn rejects_non_kinf_gamma() {
        let l = ComparisonFunction::exp_decay(1.0).unwrap();
        let err =
            estimate_ulim(&linear_system(), &origin(), &l, &small_budget()).unwrap_err();
        assert!(matches!(err, Error::Class(_)));
    }
}
