//! Seeded sampling utilities and the parallel trajectory-bundle harness.
//!
//! All randomness is derived from `(seed, stream, index)` so parallel
//! schedules cannot change results: each trajectory owns its generator and
//! results are collected in sample order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sets::{BoundedSetApprox, StateVector};
use crate::signal::InputSignal;
use crate::system::{random_input_value, ControlSystem};
use crate::verdict::Witness;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic per-(stream, index) generator derivation.
pub fn derive_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(seed ^ stream.wrapping_mul(0xA24BAED4963EE407)) ^ index);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Sampling budget shared by the estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBudget {
    /// States sampled per radius stratum.
    pub n_states: usize,
    /// Inputs sampled per level stratum.
    pub n_inputs: usize,
    /// Simulation horizon per trajectory (seconds).
    pub time_horizon: f64,
    /// Distance-to-set radii for state strata.
    pub radii: Vec<f64>,
    /// Target tolerances for attainment checks.
    pub epsilons: Vec<f64>,
    /// Largest input sup-norm exercised.
    pub u_max: f64,
    pub seed: u64,
}

impl SampleBudget {
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_inputs == 0 {
            return Err(Error::Config("budget needs n_states >= 1 and n_inputs >= 1".into()));
        }
        if !(self.time_horizon > 0.0) || !self.time_horizon.is_finite() {
            return Err(Error::Config(format!(
                "budget horizon must be positive, got {}",
                self.time_horizon
            )));
        }
        if self.radii.is_empty() || self.epsilons.is_empty() {
            return Err(Error::Config("budget radii and epsilons must be nonempty".into()));
        }
        if self.radii.iter().any(|r| !(*r > 0.0)) || self.epsilons.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Config("budget radii and epsilons must be positive".into()));
        }
        if !(self.u_max > 0.0) {
            return Err(Error::Config(format!("budget u_max must be positive, got {}", self.u_max)));
        }
        Ok(())
    }

    /// Small default suitable for the low-dimensional benchmark systems.
    pub fn desk(seed: u64) -> Self {
        Self {
            n_states: 8,
            n_inputs: 6,
            time_horizon: 10.0,
            radii: vec![0.5, 1.0, 2.0, 5.0, 10.0],
            epsilons: vec![0.25, 0.5, 1.0],
            u_max: 10.0,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.n_states = ((self.n_states as f64 * factor).round() as usize).max(1);
        self.n_inputs = ((self.n_inputs as f64 * factor).round() as usize).max(1);
        self
    }
}

/// Grid-aligned checkpoint times `0, s, 2s, …, horizon` with `s` a multiple of
/// `grid_step` (uniform trace sampling that stays bit-exact under replay).
pub fn checkpoints(horizon: f64, grid_step: f64, max_points: usize) -> Vec<f64> {
    let cells = (horizon / grid_step).round().max(1.0);
    let stride = (cells / max_points as f64).ceil().max(1.0);
    let step = stride * grid_step;
    let n = (horizon / step).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| step * k as f64).collect();
    if let Some(last) = times.last() {
        if horizon - last > 1e-9 {
            times.push(horizon);
        }
    }
    times
}

/// Uniform direction on the unit sphere of the Euclidean norm.
pub fn random_direction(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                // Box-Muller keeps the direction isotropic.
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                (-2.0 * u1.ln()).sqrt() * u2.cos()
            })
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Samples a state at distance at most `rho` from the set, anchored at a
/// random cloud point. With `on_boundary` the actual set distance is driven
/// to `rho` (secant correction along the ray, so dense multi-point clouds
/// also get boundary samples at the exact stratum radius).
pub fn sample_near_set(
    rng: &mut impl Rng,
    set: &BoundedSetApprox,
    rho: f64,
    on_boundary: bool,
) -> StateVector {
    let anchor = set.points()[rng.gen_range(0..set.points().len())].clone();
    let dir = random_direction(rng, set.dim());
    let target = if on_boundary { rho } else { rho * rng.gen_range(0.0..=1.0) };
    if target <= 0.0 {
        // A point of the set itself (anywhere inside the inflation ball).
        let radius = set.inflation() * rng.gen_range(0.0..=1.0);
        return anchor.iter().zip(&dir).map(|(a, d)| a + d * radius).collect();
    }
    let at = |s: f64| -> StateVector {
        anchor.iter().zip(&dir).map(|(a, d)| a + d * s).collect()
    };
    let mut s = set.inflation() + target;
    let mut x = at(s);
    let mut d = set.distance(&x).expect("anchored sample has the set's dimension");
    let mut s_prev = 0.0f64;
    let mut d_prev = 0.0f64;
    for _ in 0..16 {
        if (d - target).abs() <= 1e-9 * target.max(1.0) {
            break;
        }
        let slope = if s != s_prev { ((d - d_prev) / (s - s_prev)).max(0.1) } else { 1.0 };
        s_prev = s;
        d_prev = d;
        s = (s + (target - d) / slope).max(0.0);
        x = at(s);
        d = set.distance(&x).expect("anchored sample has the set's dimension");
    }
    x
}

/// Adversarial input presets plus seeded random fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Zero,
    ConstantMax,
    BangBang,
    ZeroTail,
    Random,
}

/// Builds one input of the given kind at sup-norm `level`.
pub fn make_input(
    rng: &mut impl Rng,
    kind: InputKind,
    dim: usize,
    grid_step: f64,
    cells: usize,
    level: f64,
) -> InputSignal {
    if dim == 0 || level == 0.0 || matches!(kind, InputKind::Zero) {
        return InputSignal::zero(grid_step, dim.max(1));
    }
    let mut axis = vec![0.0; dim];
    axis[0] = level;
    let values: Vec<Vec<f64>> = match kind {
        InputKind::Zero => unreachable!(),
        InputKind::ConstantMax => vec![axis; cells],
        InputKind::BangBang => (0..cells)
            .map(|k| {
                let mut v = axis.clone();
                if k % 2 == 1 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                v
            })
            .collect(),
        InputKind::ZeroTail => (0..cells)
            .map(|k| if k < cells / 2 { axis.clone() } else { vec![0.0; dim] })
            .collect(),
        InputKind::Random => (0..cells).map(|_| random_input_value(rng, dim, level)).collect(),
    };
    InputSignal::new(grid_step, dim, values).expect("generated signal is valid")
}

/// Stratified inputs at a given level: the adversarial presets first, then
/// seeded random piecewise-constant signals.
pub fn input_strata(
    rng: &mut impl Rng,
    n_inputs: usize,
    dim: usize,
    grid_step: f64,
    cells: usize,
    level: f64,
) -> Vec<InputSignal> {
    let presets = [InputKind::ConstantMax, InputKind::BangBang, InputKind::ZeroTail];
    (0..n_inputs)
        .map(|k| {
            let kind = presets.get(k).copied().unwrap_or(InputKind::Random);
            make_input(rng, kind, dim, grid_step, cells, level)
        })
        .collect()
}

/// One simulated trajectory against a reference set.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub x0: StateVector,
    pub input: InputSignal,
    /// Distance of `x0` to the set.
    pub d0: f64,
    /// `sup_norm` of the input.
    pub input_level: f64,
    /// The radius stratum this sample was drawn for.
    pub stratum_radius: f64,
    /// The input-level stratum this sample was drawn for.
    pub stratum_level: f64,
    /// Distance of `φ(t_j)` to the set, per checkpoint.
    pub distances: Vec<f64>,
    /// Checkpoint states, retained on request.
    pub states: Option<Vec<StateVector>>,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub times: Vec<f64>,
    pub samples: Vec<TrajectorySample>,
    /// First divergence encountered, if any (by sample order).
    pub divergence: Option<Witness>,
}

/// A specification of one trajectory to run.
#[derive(Debug, Clone)]
pub struct TrajectorySpec {
    pub x0: StateVector,
    pub input: InputSignal,
    pub stratum_radius: f64,
    pub stratum_level: f64,
}

/// Simulates all specs in parallel and collects them in sample order.
pub fn simulate_bundle(
    sys: &dyn ControlSystem,
    set: &BoundedSetApprox,
    specs: &[TrajectorySpec],
    times: &[f64],
    keep_states: bool,
) -> Result<Bundle> {
    let results: Vec<Result<TrajectorySample>> = specs
        .par_iter()
        .map(|spec| {
            let states = sys.flow_trace(times, &spec.x0, &spec.input)?;
            let distances = states
                .iter()
                .map(|s| set.distance(s))
                .collect::<Result<Vec<f64>>>()?;
            Ok(TrajectorySample {
                d0: set.distance(&spec.x0)?,
                input_level: spec.input.sup_norm(),
                stratum_radius: spec.stratum_radius,
                stratum_level: spec.stratum_level,
                distances,
                states: if keep_states { Some(states) } else { None },
                x0: spec.x0.clone(),
                input: spec.input.clone(),
            })
        })
        .collect();

    let mut samples = Vec::with_capacity(results.len());
    let mut divergence = None;
    for (spec, res) in specs.iter().zip(results) {
        match res {
            Ok(s) => samples.push(s),
            Err(Error::Divergence { t, norm }) => {
                if divergence.is_none() {
                    divergence = Some(Witness {
                        t,
                        x0: spec.x0.clone(),
                        input: spec.input.clone(),
                        residual: norm,
                        description: "trajectory left the overflow guard".into(),
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Bundle { times: times.to_vec(), samples, divergence })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_rngs_are_deterministic_and_distinct() {
        let mut a = derive_rng(7, 1, 0);
        let mut b = derive_rng(7, 1, 0);
        let mut c = derive_rng(7, 1, 1);
        let va: f64 = a.gen();
        assert_eq!(va, b.gen::<f64>());
        assert_ne!(va, c.gen::<f64>());
    }

    #[test]
    fn checkpoints_are_grid_aligned() {
        let ts = checkpoints(10.0, 0.5, 16);
        assert_eq!(ts[0], 0.0);
        assert_eq!(*ts.last().unwrap(), 10.0);
        for t in &ts {
            let cells = t / 0.5;
            assert!((cells - cells.round()).abs() < 1e-9, "{t} not grid aligned");
        }
    }

    #[test]
    fn boundary_sampling_hits_exact_radius() {
        let set = BoundedSetApprox::origin(1, crate::sets::StateNorm::Euclidean);
        let mut rng = derive_rng(1, 2, 3);
        let x = sample_near_set(&mut rng, &set, 2.5, true);
        assert!((set.distance(&x).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn input_presets_respect_level() {
        let mut rng = derive_rng(9, 0, 0);
        for kind in [
            InputKind::Zero,
            InputKind::ConstantMax,
            InputKind::BangBang,
            InputKind::ZeroTail,
            InputKind::Random,
        ] {
            let u = make_input(&mut rng, kind, 1, 0.5, 10, 1.5);
            assert!(u.sup_norm() <= 1.5 + 1e-12, "{kind:?} exceeded level");
        }
    }
}
