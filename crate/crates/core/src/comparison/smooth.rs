//! Double-average smoothing of attainment-time tables and the average
//! operator on strictly increasing functions that underpins its monotonicity.

use crate::error::{Error, Result};

/// Samples `τ̃(ε_i, R_j)`, nonincreasing in `ε` and nondecreasing in `R`
/// (non-strict accepted). Rows are indexed by `ε`, columns by `R`.
#[derive(Debug, Clone)]
pub struct TauGrid {
    eps: Vec<f64>,
    r: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TauGrid {
    pub fn new(eps: Vec<f64>, r: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if eps.is_empty() || r.is_empty() {
            return Err(Error::Data("tau grid must be nonempty on both axes".into()));
        }
        for axis in [&eps, &r] {
            if axis[0] <= 0.0 {
                return Err(Error::Data("tau grid axes must be positive".into()));
            }
            for w in axis.windows(2) {
                if !(w[1] > w[0]) {
                    return Err(Error::Data(format!(
                        "grid axis must be strictly increasing: {} -> {}",
                        w[0], w[1]
                    )));
                }
            }
        }
        if values.len() != eps.len() || values.iter().any(|row| row.len() != r.len()) {
            return Err(Error::Shape(format!("tau values must be {}x{}", eps.len(), r.len())));
        }
        for (i, row) in values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Data(format!(
                        "tau({}, {}) = {v} must be finite and nonnegative",
                        eps[i], r[j]
                    )));
                }
            }
        }
        for j in 0..r.len() {
            for i in 1..eps.len() {
                if values[i][j] > values[i - 1][j] {
                    return Err(Error::Data(format!(
                        "tau not nonincreasing in eps at (eps={}, R={}) -> (eps={}, R={}): {} < {}",
                        eps[i - 1],
                        r[j],
                        eps[i],
                        r[j],
                        values[i - 1][j],
                        values[i][j]
                    )));
                }
            }
        }
        for i in 0..eps.len() {
            for j in 1..r.len() {
                if values[i][j] < values[i][j - 1] {
                    return Err(Error::Data(format!(
                        "tau not nondecreasing in R at (eps={}, R={}) -> (eps={}, R={}): {} > {}",
                        eps[i],
                        r[j - 1],
                        eps[i],
                        r[j],
                        values[i][j - 1],
                        values[i][j]
                    )));
                }
            }
        }
        Ok(Self { eps, r, values })
    }

    fn strictly_monotone(&self) -> bool {
        for j in 0..self.r.len() {
            for i in 1..self.eps.len() {
                if self.values[i][j] >= self.values[i - 1][j] {
                    return false;
                }
            }
        }
        for i in 0..self.eps.len() {
            for j in 1..self.r.len() {
                if self.values[i][j] <= self.values[i][j - 1] {
                    return false;
                }
            }
        }
        true
    }

    /// Bilinear interpolation of the raw samples inside the grid rectangle.
    fn interpolate(&self, e: f64, rr: f64) -> Result<f64> {
        let (eps, r) = (&self.eps, &self.r);
        let tol = 1e-12;
        if e < eps[0] - tol || e > eps[eps.len() - 1] + tol || rr < r[0] - tol || rr > r[r.len() - 1] + tol
        {
            return Err(Error::Extent(format!(
                "query ({e}, {rr}) outside grid [{}, {}] x [{}, {}]",
                eps[0],
                eps[eps.len() - 1],
                r[0],
                r[r.len() - 1]
            )));
        }
        let e = e.clamp(eps[0], eps[eps.len() - 1]);
        let rr = rr.clamp(r[0], r[r.len() - 1]);
        let i = eps.partition_point(|&v| v <= e).clamp(1, eps.len() - 1);
        let j = r.partition_point(|&v| v <= rr).clamp(1, r.len() - 1);
        let (e0, e1) = (eps[i - 1], eps[i]);
        let (r0, r1) = (r[j - 1], r[j]);
        let fe = (e - e0) / (e1 - e0);
        let fr = (rr - r0) / (r1 - r0);
        let v00 = self.values[i - 1][j - 1];
        let v01 = self.values[i - 1][j];
        let v10 = self.values[i][j - 1];
        let v11 = self.values[i][j];
        Ok(v00 * (1.0 - fe) * (1.0 - fr)
            + v01 * (1.0 - fe) * fr
            + v10 * fe * (1.0 - fr)
            + v11 * fe * fr)
    }
}

/// Strictness-repair slope applied to non-strict grids (`+δ·R − δ·ε`).
const REPAIR_DELTA: f64 = 1e-9;
/// Relative convergence target for the quadrature refinement.
const QUAD_TOL: f64 = 1e-8;

/// The smoothed attainment-time surface
/// `τ(ε, R) = 2/(εR) ∫_R^{2R} ∫_{ε/2}^{ε} τ̃(ε₁, R₁) dε₁ dR₁`.
#[derive(Debug, Clone)]
pub struct SmoothedTau {
    grid: TauGrid,
    perturb: bool,
}

impl SmoothedTau {
    /// The integrand: the bilinear interpolant, with the strictness repair
    /// added when the raw grid is not strictly monotone.
    pub fn tau_tilde(&self, eps: f64, r: f64) -> Result<f64> {
        let base = self.grid.interpolate(eps, r)?;
        if self.perturb {
            Ok(base + REPAIR_DELTA * r - REPAIR_DELTA * eps)
        } else {
            Ok(base)
        }
    }

    /// Evaluates the double average. Needs samples down to `ε/2` and up to
    /// `2R`; queries whose stencil leaves the grid raise an extent error.
    pub fn tau(&self, eps: f64, r: f64) -> Result<f64> {
        if !(eps > 0.0 && r > 0.0) {
            return Err(Error::Domain(format!("tau requires eps, R > 0, got ({eps}, {r})")));
        }
        let tol = 1e-12;
        let (e_axis, r_axis) = (&self.grid.eps, &self.grid.r);
        if eps / 2.0 < e_axis[0] - tol
            || eps > e_axis[e_axis.len() - 1] + tol
            || r < r_axis[0] - tol
            || 2.0 * r > r_axis[r_axis.len() - 1] + tol
        {
            return Err(Error::Extent(format!(
                "stencil [{}, {eps}] x [{r}, {}] not covered by grid [{}, {}] x [{}, {}]",
                eps / 2.0,
                2.0 * r,
                e_axis[0],
                e_axis[e_axis.len() - 1],
                r_axis[0],
                r_axis[r_axis.len() - 1]
            )));
        }

        // Breakpoints: stencil corners plus interior grid lines. The integrand
        // is bilinear between them, so the product trapezoid rule is exact
        // after the first refinement.
        let xs = breakpoints(eps / 2.0, eps, e_axis);
        let ys = breakpoints(r, 2.0 * r, r_axis);

        let mut prev = self.trapezoid(&xs, &ys)?;
        let (mut xs, mut ys) = (xs, ys);
        for _ in 0..20 {
            xs = bisect(&xs);
            ys = bisect(&ys);
            let cur = self.trapezoid(&xs, &ys)?;
            let diff = (cur - prev).abs();
            if diff <= QUAD_TOL * cur.abs().max(1e-300) || diff < 1e-14 {
                prev = cur;
                break;
            }
            prev = cur;
        }
        let area = (eps / 2.0) * r;
        Ok(prev / area)
    }

    fn trapezoid(&self, xs: &[f64], ys: &[f64]) -> Result<f64> {
        let mut vals = vec![vec![0.0; ys.len()]; xs.len()];
        for (a, &x) in xs.iter().enumerate() {
            for (b, &y) in ys.iter().enumerate() {
                vals[a][b] = self.tau_tilde(x, y)?;
            }
        }
        let mut total = 0.0;
        for a in 1..xs.len() {
            let wx = xs[a] - xs[a - 1];
            for b in 1..ys.len() {
                let wy = ys[b] - ys[b - 1];
                total += wx * wy / 4.0
                    * (vals[a - 1][b - 1] + vals[a - 1][b] + vals[a][b - 1] + vals[a][b]);
            }
        }
        Ok(total)
    }
}

fn breakpoints(lo: f64, hi: f64, axis: &[f64]) -> Vec<f64> {
    let mut xs = vec![lo];
    for &a in axis {
        if a > lo && a < hi {
            xs.push(a);
        }
    }
    xs.push(hi);
    xs
}

fn bisect(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len() * 2 - 1);
    for w in xs.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.push(*xs.last().unwrap());
    out
}

/// Wraps a monotone sample grid into the smoothed, strictly monotone and
/// continuous surface used as the uniform attainment time.
pub fn monotone_smooth_tau(grid: TauGrid) -> Result<SmoothedTau> {
    let perturb = !grid.strictly_monotone();
    Ok(SmoothedTau { grid, perturb })
}

/// `g(t) = (1/t) ∫_0^t f(s) ds` by refined trapezoid quadrature; the sampled
/// values of `f` must be strictly increasing on `[0, t]`.
pub fn lemma2_average<F: Fn(f64) -> f64>(f: F, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("lemma2_average requires t > 0, got {t}")));
    }
    let check = 64usize;
    let mut prev_val = f(0.0);
    for k in 1..=check {
        let s = t * k as f64 / check as f64;
        let v = f(s);
        if !(v > prev_val) {
            return Err(Error::Precondition(format!(
                "f must be strictly increasing on [0, {t}]: f({}) = {prev_val}, f({s}) = {v}",
                t * (k - 1) as f64 / check as f64
            )));
        }
        prev_val = v;
    }

    let mut n = check;
    let mut prev = trapz(&f, t, n);
    for _ in 0..16 {
        n *= 2;
        let cur = trapz(&f, t, n);
        let diff = (cur - prev).abs();
        prev = cur;
        if diff <= QUAD_TOL * cur.abs().max(1e-300) {
            break;
        }
    }
    Ok(prev / t)
}

fn trapz<F: Fn(f64) -> f64>(f: &F, t: f64, n: usize) -> f64 {
    let h = t / n as f64;
    let mut acc = 0.5 * (f(0.0) + f(t));
    for k in 1..n {
        acc += f(h * k as f64);
    }
    acc * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid_from(
        eps: Vec<f64>,
        r: Vec<f64>,
        f: impl Fn(f64, f64) -> f64,
    ) -> TauGrid {
        let values = eps
            .iter()
            .map(|&e| r.iter().map(|&rr| f(e, rr)).collect())
            .collect();
        TauGrid::new(eps, r, values).unwrap()
    }

    fn dense(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
    }

    #[test]
    fn constant_grid_averages_to_constant() {
        let g = grid_from(dense(0.25, 4.0, 8), dense(0.25, 8.0, 8), |_, _| 7.0);
        let tau = monotone_smooth_tau(g).unwrap();
        assert_relative_eq!(tau.tau(1.0, 2.0).unwrap(), 7.0, max_relative = 1e-6);
        assert_relative_eq!(tau.tau(2.0, 0.5).unwrap(), 7.0, max_relative = 1e-6);
    }

    #[test]
    fn linear_in_r_gives_three_halves_r() {
        // τ̃(ε, R) = R: (1/R)∫_R^{2R} s ds = 3R/2.
        let g = grid_from(dense(0.25, 4.0, 8), dense(0.25, 8.0, 16), |_, rr| rr);
        let tau = monotone_smooth_tau(g).unwrap();
        for r in [0.5, 1.0, 2.5] {
            assert_relative_eq!(tau.tau(1.0, r).unwrap(), 1.5 * r, max_relative = 1e-6);
        }
    }

    #[test]
    fn reciprocal_in_eps_gives_log_average() {
        // τ̃(ε, R) = 1/ε: (2/ε)∫_{ε/2}^{ε} ds/s = (2/ε)·ln 2.
        // 1/ε is convex, so refine the grid enough for the bilinear
        // interpolant to track it to the unit-test tolerance.
        let g = grid_from(dense(0.25, 4.0, 4096), dense(0.25, 8.0, 4), |e, _| 1.0 / e);
        let tau = monotone_smooth_tau(g).unwrap();
        for eps in [0.75, 1.0, 2.0] {
            let want = 2.0 / eps * 2.0f64.ln();
            assert_relative_eq!(tau.tau(eps, 1.0).unwrap(), want, max_relative = 1e-6);
        }
    }

    #[test]
    fn smoothed_surface_strictly_monotone_and_dominating() {
        // Constant grid: strictness comes entirely from the repair term.
        let g = grid_from(dense(0.25, 4.0, 6), dense(0.25, 8.0, 6), |_, _| 3.0);
        let tau = monotone_smooth_tau(g).unwrap();
        let t1 = tau.tau(1.0, 1.0).unwrap();
        let t2 = tau.tau(1.0, 2.0).unwrap();
        let t3 = tau.tau(2.0, 1.0).unwrap();
        assert!(t2 > t1, "tau must strictly increase in R: {t1} vs {t2}");
        assert!(t3 < t1, "tau must strictly decrease in eps: {t1} vs {t3}");
        // Node domination against the repaired integrand.
        assert!(t1 >= tau.tau_tilde(1.0, 1.0).unwrap());
    }

    #[test]
    fn stencil_outside_grid_is_extent_error() {
        let g = grid_from(dense(1.0, 2.0, 2), dense(1.0, 2.0, 2), |_, _| 1.0);
        let tau = monotone_smooth_tau(g).unwrap();
        assert!(matches!(tau.tau(1.5, 1.5), Err(Error::Extent(_))));
        assert!(matches!(tau.tau(1.0, 0.5), Err(Error::Extent(_))));
    }

    #[test]
    fn lemma2_linear() {
        assert_relative_eq!(lemma2_average(|s| s, 2.0).unwrap(), 1.0, max_relative = 1e-8);
    }

    #[test]
    fn lemma2_rejects_constant() {
        assert!(matches!(lemma2_average(|_| 3.0, 1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn lemma2_exponential() {
        let got = lemma2_average(|s| s.exp(), 1.0).unwrap();
        assert_relative_eq!(got, 1.0f64.exp() - 1.0, max_relative = 1e-7);
    }

    #[test]
    fn lemma2_rejects_nonpositive_horizon() {
        assert!(matches!(lemma2_average(|s| s, 0.0), Err(Error::Domain(_))));
        assert!(matches!(lemma2_average(|s| s, -1.0), Err(Error::Domain(_))));
    }
}
