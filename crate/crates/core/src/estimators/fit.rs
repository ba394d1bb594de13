//! Gain-certificate fitters: ISpS (`β + γ + c`), CUAG (`β(r + C, t) + γ`) and
//! ISS (`β + γ`, the `c = 0` case), plus the ISS-w.r.t.-set criterion runner.
//!
//! Fitting order is deterministic: `c` comes first from zero-input tails,
//! `γ` from the input-level tail excess, `β` from a KL majorization of the
//! remaining transient envelope. Certificates are validated on a fresh bundle
//! (different seed), inflated on failure for at most five rounds, and finally
//! attacked by the falsifier on an extended horizon.

use serde::{Deserialize, Serialize};

use crate::comparison::{kl_majorize, ComparisonFunction, KLFunction, OmegaGrid};
use crate::error::{Error, Result};
use crate::falsify::{falsify, CandidateCertificate, FalsificationProblem, SearchBounds};
use crate::sampling::{
    checkpoints, derive_rng, make_input, sample_near_set, simulate_bundle, Bundle, InputKind,
    SampleBudget, TrajectorySpec,
};
use crate::sets::BoundedSetApprox;
use crate::signal::InputSignal;
use crate::system::ControlSystem;
use crate::verdict::Verdict;

use super::invariance::{check_robust_s_invariance, check_s_invariance, RobustnessReport};
use super::{envelope_to_kinf, ENVELOPE_INFLATION, LEVEL_FRACTIONS, TAIL_FRACTION};

/// A fitted `(β, γ, c)` triple with validation residuals and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainCertificate {
    pub beta: KLFunction,
    pub gamma: ComparisonFunction,
    pub c: f64,
    pub set_a: BoundedSetApprox,
    pub residual_max: f64,
    pub samples_validated: usize,
}

impl GainCertificate {
    pub fn bound(&self, d0: f64, t: f64, level: f64) -> Result<f64> {
        Ok(self.beta.evaluate(d0, t)? + self.gamma.evaluate(level)? + self.c)
    }

    pub fn candidate(&self) -> CandidateCertificate {
        if self.c == 0.0 {
            CandidateCertificate::Iss { beta: self.beta.clone(), gamma: self.gamma.clone() }
        } else {
            CandidateCertificate::Isps {
                beta: self.beta.clone(),
                gamma: self.gamma.clone(),
                c: self.c,
            }
        }
    }
}

/// A fitted CUAG certificate `β(‖x‖_A + C, t) + γ(‖u‖)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CuagCertificate {
    pub beta: KLFunction,
    pub gamma: ComparisonFunction,
    pub c_offset: f64,
    pub set_a: BoundedSetApprox,
    pub residual_max: f64,
    pub samples_validated: usize,
}

impl CuagCertificate {
    pub fn bound(&self, d0: f64, t: f64, level: f64) -> Result<f64> {
        Ok(self.beta.evaluate(d0 + self.c_offset, t)? + self.gamma.evaluate(level)?)
    }

    pub fn candidate(&self) -> CandidateCertificate {
        CandidateCertificate::Cuag {
            beta: self.beta.clone(),
            gamma: self.gamma.clone(),
            c_offset: self.c_offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitOutcome {
    Certified,
    Falsified,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub outcome: FitOutcome,
    pub verdict: Verdict,
    pub certificate: Option<GainCertificate>,
    pub cuag_certificate: Option<CuagCertificate>,
    /// The candidate the adversarial search defeated, kept so the witness
    /// residual can be replayed.
    pub defeated: Option<CandidateCertificate>,
    pub rounds: usize,
}

impl FitReport {
    fn falsified(verdict: Verdict, rounds: usize) -> Self {
        Self {
            outcome: FitOutcome::Falsified,
            verdict,
            certificate: None,
            cuag_certificate: None,
            defeated: None,
            rounds,
        }
    }

    fn with_defeated(mut self, candidate: CandidateCertificate) -> Self {
        self.defeated = Some(candidate);
        self
    }

    fn inconclusive(reason: &str, rounds: usize) -> Self {
        Self {
            outcome: FitOutcome::Inconclusive,
            verdict: Verdict::inconclusive().with_stat("rounds", rounds as f64),
            certificate: None,
            cuag_certificate: None,
            defeated: None,
            rounds,
        }
        .tag(reason)
    }

    fn tag(mut self, reason: &str) -> Self {
        self.verdict
            .evidence
            .insert(format!("inconclusive_{reason}"), 1.0);
        self
    }

    pub fn is_certified(&self) -> bool {
        self.outcome == FitOutcome::Certified
    }
}

/// Which inequality family the shared engine fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FitForm {
    Isps,
    Iss,
    Cuag,
}

pub(crate) struct FitHarness<'a> {
    sys: &'a dyn ControlSystem,
    set: &'a BoundedSetApprox,
    budget: &'a SampleBudget,
    times: Vec<f64>,
    tail_from: usize,
    levels: Vec<f64>,
    cells: usize,
}

impl<'a> FitHarness<'a> {
    pub(crate) fn new(
        sys: &'a dyn ControlSystem,
        set: &'a BoundedSetApprox,
        budget: &'a SampleBudget,
    ) -> Result<Self> {
        budget.validate()?;
        if set.dim() != sys.state_dim() {
            return Err(Error::Shape(format!(
                "set dimension {} does not match system dimension {}",
                set.dim(),
                sys.state_dim()
            )));
        }
        let gh = sys.input_grid_hint();
        let times = checkpoints(budget.time_horizon, gh, 64);
        let tail_from = times
            .iter()
            .position(|&t| t >= TAIL_FRACTION * budget.time_horizon)
            .unwrap_or(times.len() - 1);
        let levels: Vec<f64> = LEVEL_FRACTIONS.iter().map(|f| f * budget.u_max).collect();
        let cells = ((budget.time_horizon / gh).ceil() as usize).max(1) + 2;
        Ok(Self { sys, set, budget, times, tail_from, levels, cells })
    }

    fn zero_input(&self) -> InputSignal {
        InputSignal::zero(self.sys.input_grid_hint(), self.sys.input_dim().max(1))
    }

    pub(crate) fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Stratified fitting bundle: zero-input trajectories per radius,
    /// preset+random inputs per level anchored in the set, and a half-density
    /// (radius × level) cross product.
    pub(crate) fn fit_specs(&self, stream: u64) -> Vec<TrajectorySpec> {
        let b = self.budget;
        let gh = self.sys.input_grid_hint();
        let m = self.sys.input_dim().max(1);
        let mut specs = Vec::new();
        for (ri, &rho) in b.radii.iter().enumerate() {
            for k in 0..b.n_states {
                let mut rng = derive_rng(b.seed, stream ^ (0x10 + ri as u64), k as u64);
                let x0 = sample_near_set(&mut rng, self.set, rho, k % 2 == 0);
                specs.push(TrajectorySpec {
                    x0,
                    input: self.zero_input(),
                    stratum_radius: rho,
                    stratum_level: 0.0,
                });
            }
        }
        let presets = [InputKind::ConstantMax, InputKind::BangBang, InputKind::ZeroTail];
        for (li, &level) in self.levels.iter().enumerate() {
            for k in 0..b.n_inputs {
                let mut rng = derive_rng(b.seed, stream ^ (0x200 + li as u64), k as u64);
                let x0 = sample_near_set(&mut rng, self.set, 0.0, false);
                let kind = presets.get(k).copied().unwrap_or(InputKind::Random);
                let input = make_input(&mut rng, kind, m, gh, self.cells, level);
                specs.push(TrajectorySpec { x0, input, stratum_radius: 0.0, stratum_level: level });
            }
        }
        for (ri, &rho) in b.radii.iter().enumerate() {
            for (li, &level) in self.levels.iter().enumerate() {
                if (ri + li) % 2 == 1 {
                    continue;
                }
                let mut rng =
                    derive_rng(b.seed, stream ^ (0x3000 + (ri * 64 + li) as u64), 0);
                let x0 = sample_near_set(&mut rng, self.set, rho, true);
                let kind = if li % 2 == 0 { InputKind::ConstantMax } else { InputKind::Random };
                let input = make_input(&mut rng, kind, m, gh, self.cells, level);
                specs.push(TrajectorySpec { x0, input, stratum_radius: rho, stratum_level: level });
            }
        }
        specs
    }

    /// Randomized validation bundle with continuous radii and levels.
    pub(crate) fn validation_specs(&self, n: usize, stream: u64) -> Vec<TrajectorySpec> {
        let b = self.budget;
        let gh = self.sys.input_grid_hint();
        let m = self.sys.input_dim().max(1);
        let max_rho = b.radii.iter().copied().fold(0.0, f64::max);
        let kinds = [
            InputKind::Zero,
            InputKind::ConstantMax,
            InputKind::BangBang,
            InputKind::ZeroTail,
            InputKind::Random,
            InputKind::Random,
        ];
        (0..n)
            .map(|i| {
                let mut rng = derive_rng(b.seed, stream ^ 0x7a11da, i as u64);
                use rand::Rng;
                let rho = rng.gen_range(0.0..=max_rho);
                let boundary = rng.gen_bool(0.5);
                let x0 = sample_near_set(&mut rng, self.set, rho, boundary);
                let kind = kinds[i % kinds.len()];
                let level =
                    if matches!(kind, InputKind::Zero) { 0.0 } else { rng.gen_range(0.0..=b.u_max) };
                let input = make_input(&mut rng, kind, m, gh, self.cells, level);
                TrajectorySpec { x0, input, stratum_radius: rho, stratum_level: level }
            })
            .collect()
    }

    pub(crate) fn simulate(&self, specs: &[TrajectorySpec]) -> Result<Bundle> {
        simulate_bundle(self.sys, self.set, specs, &self.times, false)
    }

    /// `c`: sup over the long-time window of zero-input distances.
    fn fit_c(&self, bundle: &Bundle) -> f64 {
        bundle
            .samples
            .iter()
            .filter(|s| s.input_level == 0.0)
            .flat_map(|s| s.distances[self.tail_from..].iter().copied())
            .fold(0.0, f64::max)
    }

    /// `γ`: inflated monotone envelope of level → long-time excess distance.
    fn fit_gamma(&self, bundle: &Bundle, c: f64) -> Result<ComparisonFunction> {
        let values: Vec<f64> = self
            .levels
            .iter()
            .map(|&level| {
                bundle
                    .samples
                    .iter()
                    .filter(|s| s.stratum_radius == 0.0 && s.stratum_level == level)
                    .flat_map(|s| s.distances[self.tail_from..].iter().copied())
                    .fold(0.0, f64::max)
                    - c
            })
            .collect();
        envelope_to_kinf(&self.levels, &values, ENVELOPE_INFLATION)
    }

    /// Radius bins for the transient envelope: `{0} ∪ radii`.
    fn radius_bins(&self) -> Vec<f64> {
        let mut bins = vec![0.0];
        bins.extend(self.budget.radii.iter().copied());
        bins.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bins.dedup();
        bins
    }

    /// The transient envelope `ω(r, t)`: per radius bin, the running-max (from
    /// the right) of `d(t) − γ(‖u‖) − c`, clamped at zero and monotonized
    /// upward along the radius axis.
    fn omega(&self, bundle: &Bundle, gamma: &ComparisonFunction, c: f64) -> Vec<Vec<f64>> {
        let bins = self.radius_bins();
        let nt = self.times.len();
        let mut omega = vec![vec![0.0f64; nt]; bins.len()];
        for sample in &bundle.samples {
            let bi = bins
                .iter()
                .position(|&b| b == sample.stratum_radius)
                .expect("stratum radius is a bin");
            let g = gamma.eval_unchecked(sample.input_level);
            for (j, &d) in sample.distances.iter().enumerate() {
                let v = (d - g - c).max(0.0);
                if v > omega[bi][j] {
                    omega[bi][j] = v;
                }
            }
        }
        // Nonincreasing in t: reverse running max (a KL bound valid at t must
        // also cover everything later).
        for row in omega.iter_mut() {
            for j in (0..nt.saturating_sub(1)).rev() {
                row[j] = row[j].max(row[j + 1]);
            }
        }
        // Nondecreasing in r: running max up the bins.
        for i in 1..bins.len() {
            for j in 0..nt {
                omega[i][j] = omega[i][j].max(omega[i - 1][j]);
            }
        }
        omega
    }

    fn adversarial_bounds(&self) -> SearchBounds {
        SearchBounds {
            x0_radius: self.budget.radii.iter().copied().fold(0.0, f64::max),
            u_level_max: self.budget.u_max,
            horizon: 4.0 * self.budget.time_horizon,
            segments: 8,
        }
    }

    fn adversarial_evals(&self) -> usize {
        // Scale the trajectory budget down on stiff high-dimensional systems.
        let cost = self.sys.cost_hint().max(1.0);
        ((1200.0 * 100.0 / cost) as usize).clamp(48, 1200)
    }

    pub(crate) fn run_adversary(&self, candidate: CandidateCertificate) -> Result<Verdict> {
        let problem = FalsificationProblem {
            system: self.sys,
            set_a: self.set,
            candidate,
            bounds: self.adversarial_bounds(),
            n_evals: self.adversarial_evals(),
            restarts: 12,
            seed: self.budget.seed ^ 0xadef,
            tolerance: 1e-3,
        };
        Ok(falsify(&problem)?.verdict)
    }

    pub(crate) fn validation_size(&self) -> usize {
        (self.budget.n_states * self.budget.n_inputs * self.budget.radii.len()).clamp(128, 1024)
    }
}

fn divergence_report(bundle: &Bundle, rounds: usize) -> Option<FitReport> {
    bundle.divergence.as_ref().map(|w| {
        FitReport::falsified(
            Verdict::falsified(w.clone()).with_stat("divergence", 1.0),
            rounds,
        )
    })
}

fn fit_with_form(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    budget: &SampleBudget,
    tolerance: f64,
    form: FitForm,
) -> Result<FitReport> {
    let harness = FitHarness::new(sys, set, budget)?;
    let bundle = harness.simulate(&harness.fit_specs(0xf17))?;
    if let Some(report) = divergence_report(&bundle, 0) {
        return Ok(report);
    }

    let mut c = match form {
        FitForm::Isps => harness.fit_c(&bundle),
        FitForm::Iss | FitForm::Cuag => 0.0,
    };
    let mut gamma = harness.fit_gamma(&bundle, c)?;

    // CUAG searches the smallest offset C on a grid; the other forms fit a
    // single beta with C = 0.
    let c_offsets: Vec<f64> = match form {
        FitForm::Cuag => {
            let scale = harness.fit_c(&bundle).max(0.05);
            let mut grid: Vec<f64> =
                [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 4.0].iter().map(|f| f * scale).collect();
            grid.dedup();
            grid
        }
        _ => vec![0.0],
    };

    let bins = harness.radius_bins();
    let mut rounds = 0usize;
    for &c_offset in &c_offsets {
        // Build omega against the current gamma/c; the zero-radius row must
        // vanish for a K-class sigma to dominate it, so absorb leftovers into
        // c where the form allows it.
        let mut omega = harness.omega(&bundle, &gamma, c);
        if form == FitForm::Isps {
            let row0_max = omega[0].iter().copied().fold(0.0, f64::max);
            if row0_max > 0.0 && bins[0] + c_offset == 0.0 {
                c += row0_max * 1.01 + 1e-12;
                gamma = harness.fit_gamma(&bundle, c)?;
                omega = harness.omega(&bundle, &gamma, c);
            }
        }
        let shifted: Vec<f64> = bins.iter().map(|b| b + c_offset).collect();
        let grid = match OmegaGrid::new(shifted, harness.times.clone(), omega) {
            Ok(g) => g,
            Err(_) => continue,
        };
        let mut beta = match kl_majorize(&grid) {
            Ok(b) => b,
            Err(_) => continue,
        };

        // Validation rounds with multiplicative inflation on failure.
        let n_val = harness.validation_size();
        let mut certified = false;
        let mut residual_max = 0.0f64;
        for round in 0..5 {
            rounds += 1;
            let vbundle = harness.simulate(&harness.validation_specs(n_val, 0x9a0 + round as u64))?;
            if let Some(report) = divergence_report(&vbundle, rounds) {
                return Ok(report);
            }
            let mut worst = 0.0f64;
            let mut kappa = 1.0f64;
            let mut c_floor = 0.0f64;
            for s in &vbundle.samples {
                let g = gamma.eval_unchecked(s.input_level);
                for (j, &d) in s.distances.iter().enumerate() {
                    let decay_part = beta.eval_unchecked(s.d0 + c_offset, harness.times[j]);
                    let bound = decay_part + g + c;
                    let r = d - bound;
                    if r > worst {
                        worst = r;
                    }
                    if r > tolerance {
                        let variable = decay_part + g;
                        if variable <= 1e-9 {
                            c_floor = c_floor.max(d);
                        } else {
                            kappa = kappa.max((d - c) / variable);
                        }
                    }
                }
            }
            residual_max = worst;
            if worst <= tolerance {
                certified = true;
                break;
            }
            if form == FitForm::Isps && c_floor > c {
                c = c_floor * 1.05 + 1e-12;
            }
            if kappa > 1.0 {
                let f = kappa * ENVELOPE_INFLATION;
                beta = beta.scale_sigma(f)?;
                gamma = gamma.scale(f)?;
            } else if c_floor == 0.0 {
                // No usable inflation direction; give up on this C.
                break;
            }
        }
        if !certified {
            continue;
        }

        let candidate = match form {
            FitForm::Isps => CandidateCertificate::Isps {
                beta: beta.clone(),
                gamma: gamma.clone(),
                c,
            },
            FitForm::Iss => CandidateCertificate::Iss { beta: beta.clone(), gamma: gamma.clone() },
            FitForm::Cuag => CandidateCertificate::Cuag {
                beta: beta.clone(),
                gamma: gamma.clone(),
                c_offset,
            },
        };
        let adv = harness.run_adversary(candidate.clone())?;
        if adv.is_falsified() {
            return Ok(FitReport::falsified(adv, rounds).with_defeated(candidate));
        }

        let report = match form {
            FitForm::Cuag => FitReport {
                outcome: FitOutcome::Certified,
                verdict: Verdict::consistent()
                    .with_stat("residual_max", residual_max)
                    .with_stat("c_offset", c_offset)
                    .with_stat("rounds", rounds as f64),
                certificate: None,
                cuag_certificate: Some(CuagCertificate {
                    beta,
                    gamma,
                    c_offset,
                    set_a: set.clone(),
                    residual_max,
                    samples_validated: n_val,
                }),
                defeated: None,
                rounds,
            },
            _ => FitReport {
                outcome: FitOutcome::Certified,
                verdict: Verdict::consistent()
                    .with_stat("residual_max", residual_max)
                    .with_stat("c", c)
                    .with_stat("rounds", rounds as f64),
                certificate: Some(GainCertificate {
                    beta,
                    gamma,
                    c,
                    set_a: set.clone(),
                    residual_max,
                    samples_validated: n_val,
                }),
                cuag_certificate: None,
                defeated: None,
                rounds,
            },
        };
        return Ok(report);
    }

    Ok(FitReport::inconclusive("validation_exhausted", rounds))
}

/// Fits an ISpS certificate `d(t) ≤ β(d₀, t) + γ(‖u‖) + c` w.r.t. `set`.
pub fn fit_isps(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    budget: &SampleBudget,
    tolerance: f64,
) -> Result<FitReport> {
    fit_with_form(sys, set, budget, tolerance, FitForm::Isps)
}

/// Fits an ISS certificate `d(t) ≤ β(d₀, t) + γ(‖u‖)` (the `c = 0` family).
pub fn fit_iss(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    budget: &SampleBudget,
    tolerance: f64,
) -> Result<FitReport> {
    fit_with_form(sys, set, budget, tolerance, FitForm::Iss)
}

/// Fits a CUAG certificate `d(t) ≤ β(d₀ + C, t) + γ(‖u‖)`, choosing the
/// smallest grid offset `C` that validates.
pub fn fit_cuag(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    budget: &SampleBudget,
    tolerance: f64,
) -> Result<FitReport> {
    fit_with_form(sys, set, budget, tolerance, FitForm::Cuag)
}

/// The ISS criterion: CUAG w.r.t. `set` plus robust 0-invariance of `set`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IssReport {
    pub verdict: Verdict,
    pub invariance: Verdict,
    pub robustness: RobustnessReport,
    pub cuag: Option<Verdict>,
    /// Full ISS certificate (`c = 0`) when all legs pass.
    pub certificate: Option<GainCertificate>,
}

/// Conjunction runner for ISS w.r.t. a set: 0-invariance, robust
/// 0-invariance, CUAG, then a full `c = 0` certificate fit.
pub fn check_iss_wrt_set(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    budget: &SampleBudget,
    tolerance: f64,
) -> Result<IssReport> {
    let invariance = check_s_invariance(sys, set, 0.0, budget)?;
    if !invariance.is_consistent() {
        let verdict = invariance.clone();
        return Ok(IssReport {
            verdict,
            invariance,
            robustness: RobustnessReport { delta: None, verdict: Verdict::inconclusive() },
            cuag: None,
            certificate: None,
        });
    }
    // Representative (ε, h) probe for the robustness definition.
    let eps_rob = 0.25 * (1.0 + set.inflation()).min(2.0);
    let h_rob = (budget.time_horizon / 5.0).max(1.0);
    let robustness = check_robust_s_invariance(sys, set, 0.0, eps_rob, h_rob, budget)?;
    if !robustness.verdict.is_consistent() {
        let verdict = robustness.verdict.clone();
        return Ok(IssReport {
            verdict,
            invariance,
            robustness,
            cuag: None,
            certificate: None,
        });
    }
    let cuag = fit_with_form(sys, set, budget, tolerance, FitForm::Cuag)?;
    if cuag.outcome != FitOutcome::Certified {
        let verdict = cuag.verdict.clone();
        return Ok(IssReport {
            verdict,
            invariance,
            robustness,
            cuag: Some(cuag.verdict),
            certificate: None,
        });
    }
    let iss = fit_with_form(sys, set, budget, tolerance, FitForm::Iss)?;
    let verdict = match iss.outcome {
        FitOutcome::Certified => Verdict::consistent()
            .with_stat("residual_max", iss.certificate.as_ref().map(|c| c.residual_max).unwrap_or(0.0)),
        _ => iss.verdict.clone(),
    };
    Ok(IssReport {
        verdict,
        invariance,
        robustness,
        cuag: Some(cuag.verdict),
        certificate: iss.certificate,
    })
}
