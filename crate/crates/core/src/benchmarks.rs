//! Benchmark control systems with known stability status, realized by the
//! fixed-substep integrator, plus planted-defect test doubles for the axiom
//! checker.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::integrate::{Rhs, Rk4Integrator};
use crate::sets::{BoundedSetApprox, StateNorm, StateVector};
use crate::signal::InputSignal;
use crate::system::ControlSystem;

/// An ODE `ẋ = f(x, u)` together with its integrator settings.
#[derive(Clone)]
pub struct OdeSystem {
    name: String,
    state_dim: usize,
    input_dim: usize,
    rhs: Arc<Rhs>,
    integrator: Rk4Integrator,
    flow_tolerance: f64,
    norm: StateNorm,
    grid_hint: f64,
}

impl OdeSystem {
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        input_dim: usize,
        rhs: Arc<Rhs>,
    ) -> Self {
        Self {
            name: name.into(),
            state_dim,
            input_dim,
            rhs,
            // h_max = 0.01 holds the linear benchmark within 1e-9 of its
            // closed form over t <= 20 (global RK4 error ~ h^4/120).
            integrator: Rk4Integrator::new(0.01),
            flow_tolerance: 1e-9,
            norm: StateNorm::Euclidean,
            grid_hint: 0.5,
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.integrator = Rk4Integrator::new(h_max);
        self
    }

    pub fn with_flow_tolerance(mut self, tol: f64) -> Self {
        self.flow_tolerance = tol;
        self
    }

    pub fn with_norm(mut self, norm: StateNorm) -> Self {
        self.norm = norm;
        self
    }

    pub fn h_max(&self) -> f64 {
        self.integrator.h_max
    }
}

impl ControlSystem for OdeSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn flow_tolerance(&self) -> f64 {
        self.flow_tolerance
    }

    fn state_norm(&self) -> StateNorm {
        self.norm
    }

    fn input_grid_hint(&self) -> f64 {
        self.grid_hint
    }

    fn cost_hint(&self) -> f64 {
        self.state_dim as f64 / self.integrator.h_max
    }

    fn flow(&self, t: f64, x: &StateVector, u: &InputSignal) -> Result<StateVector> {
        self.integrator.integrate(&*self.rhs, t, x, u)
    }

    fn flow_trace(&self, times: &[f64], x: &StateVector, u: &InputSignal) -> Result<Vec<StateVector>> {
        self.integrator.integrate_trace(&*self.rhs, times, x, u)
    }
}

/// Method-of-lines discretization of the semilinear heat equation
/// `x_t = x_ss − x³ + u` on `[0, 1]` with Dirichlet boundary, `N` interior
/// nodes, sup-norm state space.
pub struct DiscretizedEvolutionSystem {
    n_grid: usize,
    inner: OdeSystem,
}

impl DiscretizedEvolutionSystem {
    pub fn reaction_diffusion(n_grid: usize) -> Self {
        let dx = 1.0 / (n_grid as f64 + 1.0);
        let inv_dx2 = 1.0 / (dx * dx);
        let rhs: Arc<Rhs> = Arc::new(move |x: &[f64], u: &[f64], out: &mut [f64]| {
            let n = x.len();
            let f = u.first().copied().unwrap_or(0.0);
            for i in 0..n {
                let left = if i == 0 { 0.0 } else { x[i - 1] };
                let right = if i + 1 == n { 0.0 } else { x[i + 1] };
                out[i] = (left - 2.0 * x[i] + right) * inv_dx2 - x[i] * x[i] * x[i] + f;
            }
        });
        // Explicit RK4 stability: |h·λ_max| < 2.78 with λ_max ≈ 4/Δx².
        let h_max = 2.5 / (4.0 * inv_dx2);
        let inner = OdeSystem::new(
            format!("reaction-diffusion-{n_grid}"),
            n_grid,
            1,
            rhs,
        )
        .with_h_max(h_max)
        .with_flow_tolerance(1e-6)
        .with_norm(StateNorm::Sup);
        Self { n_grid, inner }
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }
}

impl ControlSystem for DiscretizedEvolutionSystem {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn flow_tolerance(&self) -> f64 {
        self.inner.flow_tolerance()
    }

    fn state_norm(&self) -> StateNorm {
        self.inner.state_norm()
    }

    fn input_grid_hint(&self) -> f64 {
        self.inner.input_grid_hint()
    }

    fn cost_hint(&self) -> f64 {
        self.inner.cost_hint()
    }

    fn flow(&self, t: f64, x: &StateVector, u: &InputSignal) -> Result<StateVector> {
        self.inner.flow(t, x, u)
    }

    fn flow_trace(&self, times: &[f64], x: &StateVector, u: &InputSignal) -> Result<Vec<StateVector>> {
        self.inner.flow_trace(times, x, u)
    }
}

/// The second-difference Dirichlet Laplacian `A_N` (dense, for test probes).
pub fn second_difference_matrix(n_grid: usize) -> Vec<Vec<f64>> {
    let dx = 1.0 / (n_grid as f64 + 1.0);
    let inv_dx2 = 1.0 / (dx * dx);
    let mut m = vec![vec![0.0; n_grid]; n_grid];
    for i in 0..n_grid {
        m[i][i] = -2.0 * inv_dx2;
        if i > 0 {
            m[i][i - 1] = inv_dx2;
        }
        if i + 1 < n_grid {
            m[i][i + 1] = inv_dx2;
        }
    }
    m
}

/// Machine-readable description of a catalog system: its known stability
/// status, the oracle justifying it, and the canonical analysis set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemManifest {
    pub name: String,
    pub kind: String,
    pub grid_size: Option<usize>,
    pub state_dim: usize,
    pub input_dim: usize,
    pub expected_isps: bool,
    pub analysis_set: BoundedSetApprox,
    pub status: String,
    pub oracle: String,
}

pub struct CatalogEntry {
    pub system: Arc<dyn ControlSystem>,
    pub manifest: SystemManifest,
}

fn ode_manifest(
    sys: &dyn ControlSystem,
    expected_isps: bool,
    analysis_set: BoundedSetApprox,
    status: &str,
    oracle: &str,
) -> SystemManifest {
    SystemManifest {
        name: sys.name().to_string(),
        kind: "ode".into(),
        grid_size: None,
        state_dim: sys.state_dim(),
        input_dim: sys.input_dim(),
        expected_isps,
        analysis_set,
        status: status.into(),
        oracle: oracle.into(),
    }
}

pub fn linear_system() -> OdeSystem {
    OdeSystem::new(
        "linear",
        1,
        1,
        Arc::new(|x: &[f64], u: &[f64], dx: &mut [f64]| {
            dx[0] = -x[0] + u[0];
        }),
    )
}

pub fn biased_system() -> OdeSystem {
    OdeSystem::new(
        "biased",
        1,
        1,
        Arc::new(|x: &[f64], u: &[f64], dx: &mut [f64]| {
            dx[0] = -x[0] + u[0] + 1.0;
        }),
    )
}

pub fn integrator_system() -> OdeSystem {
    OdeSystem::new(
        "integrator",
        1,
        1,
        Arc::new(|_x: &[f64], u: &[f64], dx: &mut [f64]| {
            dx[0] = u[0];
        }),
    )
}

pub fn saturated_bias_system() -> OdeSystem {
    OdeSystem::new(
        "saturated-bias",
        1,
        1,
        Arc::new(|x: &[f64], u: &[f64], dx: &mut [f64]| {
            dx[0] = -x[0] + u[0].clamp(-1.0, 1.0) + 1.0;
        }),
    )
}

pub fn planar_limit_cycle_system() -> OdeSystem {
    OdeSystem::new(
        "planar-limit-cycle",
        2,
        1,
        Arc::new(|x: &[f64], u: &[f64], dx: &mut [f64]| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            // Radial part r(1-r) plus rotation; the input couples radially
            // through r/(1+r), smooth at the origin.
            let c = u[0] / (1.0 + r);
            dx[0] = (1.0 - r) * x[0] - x[1] + c * x[0];
            dx[1] = (1.0 - r) * x[1] + x[0] + c * x[1];
        }),
    )
}

/// All benchmark systems with their manifests. The reaction-diffusion family
/// is included at N in {16, 32, 64}; the N = 128 reference is available via
/// [`reaction_diffusion_oracle`].
pub fn catalog() -> Vec<CatalogEntry> {
    let mut entries = Vec::new();

    let linear = linear_system();
    let set = BoundedSetApprox::origin(1, StateNorm::Euclidean);
    entries.push(CatalogEntry {
        manifest: ode_manifest(
            &linear,
            true,
            set,
            "ISS w.r.t. {0}",
            "closed form |x(t)| <= e^{-t}|x0| + sup|u|",
        ),
        system: Arc::new(linear),
    });

    let biased = biased_system();
    let set = BoundedSetApprox::singleton(vec![1.0], StateNorm::Euclidean).unwrap();
    entries.push(CatalogEntry {
        manifest: ode_manifest(
            &biased,
            true,
            set,
            "ISpS with c = 1, not ISS w.r.t. {0}; ISS w.r.t. {1}",
            "shift y = x - 1 reduces to the linear benchmark",
        ),
        system: Arc::new(biased),
    });

    let integrator = integrator_system();
    let set = BoundedSetApprox::origin(1, StateNorm::Euclidean);
    entries.push(CatalogEntry {
        manifest: ode_manifest(
            &integrator,
            false,
            set,
            "not ISpS (forward complete, BRS)",
            "u = const delta gives x(t) = x0 + delta*t, unbounded for any delta > 0",
        ),
        system: Arc::new(integrator),
    });

    let sat = saturated_bias_system();
    let set = BoundedSetApprox::singleton(vec![1.0], StateNorm::Euclidean).unwrap();
    entries.push(CatalogEntry {
        manifest: ode_manifest(
            &sat,
            true,
            set,
            "ISpS; ISS w.r.t. {1} (bounded forcing)",
            "|x(t) - 1| <= e^{-t}|x0 - 1| + min(sup|u|, 1)",
        ),
        system: Arc::new(sat),
    });

    let cycle = planar_limit_cycle_system();
    let set = BoundedSetApprox::ball(vec![0.0, 0.0], 1.0, StateNorm::Euclidean).unwrap();
    entries.push(CatalogEntry {
        manifest: ode_manifest(
            &cycle,
            true,
            set,
            "ISpS w.r.t. the unit circle (nontrivial attracting set); analysis set is the closed unit disk",
            "radial comparison dr/dt = r(1-r) + u r/(1+r); r_eq <= sqrt(1 + sup|u|)",
        ),
        system: Arc::new(cycle),
    });

    for n in [16usize, 32, 64] {
        let sys = DiscretizedEvolutionSystem::reaction_diffusion(n);
        let set = BoundedSetApprox::origin(n, StateNorm::Sup);
        entries.push(CatalogEntry {
            manifest: SystemManifest {
                name: sys.name().to_string(),
                kind: "discretized-pde".into(),
                grid_size: Some(n),
                state_dim: n,
                input_dim: 1,
                expected_isps: true,
                analysis_set: set,
                status: "ISS w.r.t. {0} in the sup norm (method-of-lines discretization)".into(),
                oracle: "fine-grid simulation reference at N = 128; Dirichlet Laplacian is negative definite, -x^3 is monotone damping".into(),
            },
            system: Arc::new(sys),
        });
    }

    entries
}

/// The N = 128 fine-grid reference discretization (not part of the catalog).
pub fn reaction_diffusion_oracle() -> DiscretizedEvolutionSystem {
    DiscretizedEvolutionSystem::reaction_diffusion(128)
}

/// Looks a catalog system up by name.
pub fn find(name: &str) -> Option<CatalogEntry> {
    catalog().into_iter().find(|e| e.manifest.name == name)
}

pub fn catalog_names() -> Vec<String> {
    catalog().into_iter().map(|e| e.manifest.name).collect()
}

/// Planted-defect systems for validating the axiom checker. They are not part
/// of the catalog.
pub mod doubles {
    use super::*;

    struct IdentityBreaking {
        inner: OdeSystem,
    }

    impl ControlSystem for IdentityBreaking {
        fn name(&self) -> &str {
            "double-identity-breaking"
        }
        fn state_dim(&self) -> usize {
            self.inner.state_dim()
        }
        fn input_dim(&self) -> usize {
            self.inner.input_dim()
        }
        fn flow_tolerance(&self) -> f64 {
            self.inner.flow_tolerance()
        }
        fn flow(&self, t: f64, x: &StateVector, u: &InputSignal) -> Result<StateVector> {
            if t == 0.0 {
                // The planted defect: phi(0, x, u) = 2x.
                return Ok(x.iter().map(|v| 2.0 * v).collect());
            }
            self.inner.flow(t, x, u)
        }
    }

    /// A flow violating the identity axiom: `φ(0, x, u) = 2x`.
    pub fn identity_breaking() -> impl ControlSystem {
        IdentityBreaking { inner: linear_system() }
    }

    struct CausalityBreaking {
        inner: OdeSystem,
    }

    impl ControlSystem for CausalityBreaking {
        fn name(&self) -> &str {
            "double-causality-breaking"
        }
        fn state_dim(&self) -> usize {
            self.inner.state_dim()
        }
        fn input_dim(&self) -> usize {
            self.inner.input_dim()
        }
        fn flow_tolerance(&self) -> f64 {
            self.inner.flow_tolerance()
        }
        fn flow(&self, t: f64, x: &StateVector, u: &InputSignal) -> Result<StateVector> {
            let mut out = self.inner.flow(t, x, u)?;
            // The planted defect: the state at time t peeks one second ahead.
            let future = u.value_at(t + 1.0);
            for (o, f) in out.iter_mut().zip(&future) {
                *o += 0.1 * f * t;
            }
            Ok(out)
        }
    }

    /// A flow violating causality: `φ(t, x, u)` depends on `u` beyond `t`.
    pub fn causality_breaking() -> impl ControlSystem {
        CausalityBreaking { inner: linear_system() }
    }

    struct JumpFlow {
        inner: OdeSystem,
    }

    impl ControlSystem for JumpFlow {
        fn name(&self) -> &str {
            "double-discontinuous"
        }
        fn state_dim(&self) -> usize {
            self.inner.state_dim()
        }
        fn input_dim(&self) -> usize {
            self.inner.input_dim()
        }
        fn flow_tolerance(&self) -> f64 {
            self.inner.flow_tolerance()
        }
        fn flow(&self, t: f64, x: &StateVector, u: &InputSignal) -> Result<StateVector> {
            let mut out = self.inner.flow(t, x, u)?;
            if t >= 0.5 {
                // The planted defect: a fixed jump after t = 0.5.
                out[0] += 2.0;
            }
            Ok(out)
        }
    }

    /// A flow with a state jump at `t = 0.5` (violates continuity and robust
    /// invariance of any small set).
    pub fn discontinuous() -> impl ControlSystem {
        JumpFlow { inner: linear_system() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::check_axioms;
    use approx::assert_relative_eq;

    #[test]
    fn linear_flow_matches_closed_form_within_1e9() {
        let sys = linear_system();
        let u = InputSignal::zero(0.5, 1);
        let x = sys.flow(1.0, &vec![1.0], &u).unwrap();
        assert_relative_eq!(x[0], (-1.0f64).exp(), epsilon = 1e-9);
        // And over the long horizon used by the spec.
        let x = sys.flow(20.0, &vec![1.0], &u).unwrap();
        assert_relative_eq!(x[0], (-20.0f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn integrator_accumulates_constant_input() {
        let sys = integrator_system();
        let u = InputSignal::constant(0.5, vec![0.1], 200).unwrap();
        let x = sys.flow(100.0, &vec![0.0], &u).unwrap();
        assert_relative_eq!(x[0], 10.0, epsilon = 1e-6);
    }

    #[test]
    fn biased_converges_to_one() {
        let sys = biased_system();
        let u = InputSignal::zero(0.5, 1);
        let x = sys.flow(15.0, &vec![0.0], &u).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn catalog_has_at_least_six_systems() {
        assert!(catalog().len() >= 6);
    }

    #[test]
    fn fourth_order_convergence_on_linear_benchmark() {
        // Halving the substep must shrink the closed-form error by >= 8x.
        let u = InputSignal::new(0.5, 1, vec![vec![0.4], vec![-0.2], vec![0.7]]).unwrap();
        let mut rng = crate::sampling::derive_rng(11, 3, 0);
        use rand::Rng;
        for _ in 0..10 {
            let x0 = rng.gen_range(-2.0..2.0);
            // Grid-aligned horizons with cell-dividing steps keep the halving
            // of the realized substep exact.
            let t = 0.5 * rng.gen_range(1..=6) as f64;
            let exact = closed_form_linear(x0, t, &u);
            let coarse = linear_system().with_h_max(0.125);
            let fine = linear_system().with_h_max(0.0625);
            let e_coarse = (coarse.flow(t, &vec![x0], &u).unwrap()[0] - exact).abs();
            let e_fine = (fine.flow(t, &vec![x0], &u).unwrap()[0] - exact).abs();
            if e_fine < 1e-14 {
                continue; // both at roundoff
            }
            assert!(
                e_coarse / e_fine >= 8.0,
                "expected 4th-order convergence, got ratio {} ({e_coarse} vs {e_fine})",
                e_coarse / e_fine
            );
        }
    }

    fn closed_form_linear(x0: f64, t: f64, u: &InputSignal) -> f64 {
        // Piecewise-constant variation of constants for dx = -x + u.
        let gh = u.grid_step();
        let mut x = x0;
        let mut done = 0.0;
        let mut cell = 0;
        while done < t {
            let span = (t - done).min(gh);
            let uv = u.cell_value(cell).map(|v| v[0]).unwrap_or(0.0);
            x = uv + (x - uv) * (-span).exp();
            done += span;
            cell += 1;
        }
        x
    }

    #[test]
    fn laplacian_is_symmetric_negative_definite() {
        let m = second_difference_matrix(8);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(m[i][j], m[j][i]);
            }
        }
        let mut rng = crate::sampling::derive_rng(5, 1, 0);
        use rand::Rng;
        for _ in 0..20 {
            let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut quad = 0.0;
            for i in 0..8 {
                for j in 0..8 {
                    quad += v[i] * m[i][j] * v[j];
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum();
            assert!(quad <= 1e-12 * norm, "quadratic form must be <= 0, got {quad}");
        }
    }

    #[test]
    fn axioms_consistent_on_linear() {
        let verdict = check_axioms(&linear_system(), 20, 5.0, 42).unwrap();
        assert!(verdict.is_consistent(), "unexpected: {verdict:?}");
    }

    #[test]
    fn axioms_catch_identity_double() {
        let verdict = check_axioms(&doubles::identity_breaking(), 20, 5.0, 42).unwrap();
        assert!(verdict.is_falsified());
        assert!(verdict.witness.unwrap().description.contains("identity"));
    }

    #[test]
    fn axioms_catch_causality_double() {
        let verdict = check_axioms(&doubles::causality_breaking(), 20, 5.0, 42).unwrap();
        assert!(verdict.is_falsified());
        let w = verdict.witness.unwrap();
        assert!(
            w.description.contains("causality") || w.description.contains("cocycle"),
            "unexpected witness: {}",
            w.description
        );
    }

    #[test]
    fn axioms_reject_zero_budget() {
        let err = check_axioms(&linear_system(), 0, 5.0, 1).unwrap_err();
        assert!(matches!(err, crate::error::Error::Precondition(_)));
    }
}
