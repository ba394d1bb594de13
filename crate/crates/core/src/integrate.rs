//! Fixed-substep classic Runge-Kutta integration of `ẋ = f(x, u)`.
//!
//! Substeps never straddle an input grid boundary, so the realized flow is
//! deterministic, right-continuous in the input switching times, and exactly
//! reentrant — integrating `[0, t+h]` performs the same substep sequence as
//! integrating `[0, t]` followed by `[t, t+h]` when `t` is grid-aligned.

use crate::error::{Error, Result};
use crate::signal::InputSignal;

/// Norm overflow guard: beyond this the trajectory counts as diverged.
pub const OVERFLOW_GUARD: f64 = 1e12;

/// Right-hand side `f(x, u_value, dx_out)`.
pub type Rhs = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

#[derive(Debug, Clone, Copy)]
pub struct Rk4Integrator {
    /// Maximum substep length; the realized substep divides each grid cell.
    pub h_max: f64,
}

impl Rk4Integrator {
    pub fn new(h_max: f64) -> Self {
        assert!(h_max > 0.0, "h_max must be positive");
        Self { h_max }
    }

    /// Integrates to `t_final`, returning the final state.
    pub fn integrate(
        &self,
        rhs: &Rhs,
        t_final: f64,
        x0: &[f64],
        u: &InputSignal,
    ) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        self.run(rhs, &[t_final], x0, u, &mut |_, x| out.push(x.to_vec()))?;
        Ok(out.pop().expect("one checkpoint requested"))
    }

    /// Integrates once, recording the state at each requested time.
    /// `times` must be sorted ascending and nonnegative.
    pub fn integrate_trace(
        &self,
        rhs: &Rhs,
        times: &[f64],
        x0: &[f64],
        u: &InputSignal,
    ) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(times.len());
        self.run(rhs, times, x0, u, &mut |_, x| out.push(x.to_vec()))?;
        Ok(out)
    }

    fn run(
        &self,
        rhs: &Rhs,
        times: &[f64],
        x0: &[f64],
        u: &InputSignal,
        record: &mut dyn FnMut(f64, &[f64]),
    ) -> Result<()> {
        debug_assert!(times.windows(2).all(|w| w[0] <= w[1]));
        let t_final = *times.last().unwrap_or(&0.0);
        if !(t_final >= 0.0) || !t_final.is_finite() {
            return Err(Error::Domain(format!("integration horizon must be finite and >= 0, got {t_final}")));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("initial state must be finite".into()));
        }

        let n = x0.len();
        let gh = u.grid_step();
        let zeros = vec![0.0; u.dim()];
        let mut x = x0.to_vec();
        let mut next_record = 0usize;
        let mut elapsed = 0.0f64;
        while next_record < times.len() && times[next_record] <= 0.0 {
            record(0.0, &x);
            next_record += 1;
        }

        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut stage = vec![0.0; n];

        let mut cell = 0usize;
        let mut remaining = t_final;
        while remaining > 1e-15 {
            // Never straddle a grid boundary: cap the span at the cell end.
            let cell_left = (cell + 1) as f64 * gh - elapsed;
            let mut span = remaining.min(cell_left.max(1e-15));
            // Split the cell at requested checkpoint times inside it.
            if next_record < times.len() {
                let offset = times[next_record] - elapsed;
                if offset > 1e-15 && offset < span - 1e-15 {
                    span = offset;
                }
            }
            let uval = u.cell_value(cell).unwrap_or(&zeros);
            let substeps = ((span / self.h_max).ceil() as usize).max(1);
            let dt = span / substeps as f64;
            for _ in 0..substeps {
                rk4_step(rhs, &mut x, uval, dt, &mut k1, &mut k2, &mut k3, &mut k4, &mut stage);
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !norm.is_finite() || norm > OVERFLOW_GUARD {
                    return Err(Error::Divergence { t: elapsed, norm });
                }
            }
            elapsed += span;
            remaining -= span;
            // Advance the cell only when its full width has been consumed.
            let consumed = elapsed - cell as f64 * gh;
            if consumed >= gh - 1e-12 {
                cell += 1;
            }
            while next_record < times.len() && times[next_record] <= elapsed + 1e-12 {
                record(elapsed, &x);
                next_record += 1;
            }
        }
        // Horizon 0 or checkpoints at/before the final time not yet emitted.
        while next_record < times.len() {
            record(elapsed, &x);
            next_record += 1;
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn rk4_step(
    rhs: &Rhs,
    x: &mut [f64],
    u: &[f64],
    dt: f64,
    k1: &mut [f64],
    k2: &mut [f64],
    k3: &mut [f64],
    k4: &mut [f64],
    stage: &mut [f64],
) {
    let n = x.len();
    rhs(x, u, k1);
    for i in 0..n {
        stage[i] = x[i] + 0.5 * dt * k1[i];
    }
    rhs(stage, u, k2);
    for i in 0..n {
        stage[i] = x[i] + 0.5 * dt * k2[i];
    }
    rhs(stage, u, k3);
    for i in 0..n {
        stage[i] = x[i] + dt * k3[i];
    }
    rhs(stage, u, k4);
    for i in 0..n {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}
