//! Constructive KL majorization of a monotone sample grid.

use crate::error::{Error, Result};

use super::{ComparisonFunction, KLFunction};

/// Samples `ω(r_i, t_j)`, nondecreasing in `r` and nonincreasing in `t`.
/// Rows are indexed by `r`, columns by `t`.
#[derive(Debug, Clone)]
pub struct OmegaGrid {
    r: Vec<f64>,
    t: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl OmegaGrid {
    pub fn new(r: Vec<f64>, t: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if r.is_empty() || t.is_empty() {
            return Err(Error::Data("omega grid must be nonempty on both axes".into()));
        }
        for axis in [&r, &t] {
            for w in axis.windows(2) {
                if !(w[1] > w[0]) {
                    return Err(Error::Data(format!(
                        "grid axis must be strictly increasing: {} -> {}",
                        w[0], w[1]
                    )));
                }
            }
        }
        if r[0] < 0.0 || t[0] < 0.0 {
            return Err(Error::Data("grid axes must be nonnegative".into()));
        }
        if values.len() != r.len() || values.iter().any(|row| row.len() != t.len()) {
            return Err(Error::Shape(format!(
                "omega values must be {}x{}",
                r.len(),
                t.len()
            )));
        }
        for (i, row) in values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Data(format!(
                        "omega({}, {}) = {v} must be finite and nonnegative",
                        r[i], t[j]
                    )));
                }
            }
        }
        // Monotonicity: nondecreasing along r, nonincreasing along t.
        for j in 0..t.len() {
            for i in 1..r.len() {
                if values[i][j] < values[i - 1][j] {
                    return Err(Error::Data(format!(
                        "omega not nondecreasing in r at nodes (r={}, t={}) -> (r={}, t={}): {} > {}",
                        r[i - 1],
                        t[j],
                        r[i],
                        t[j],
                        values[i - 1][j],
                        values[i][j]
                    )));
                }
            }
        }
        for i in 0..r.len() {
            for j in 1..t.len() {
                if values[i][j] > values[i][j - 1] {
                    return Err(Error::Data(format!(
                        "omega not nonincreasing in t at nodes (r={}, t={}) -> (r={}, t={}): {} < {}",
                        r[i],
                        t[j - 1],
                        r[i],
                        t[j],
                        values[i][j - 1],
                        values[i][j]
                    )));
                }
            }
        }
        Ok(Self { r, t, values })
    }

    pub fn r_axis(&self) -> &[f64] {
        &self.r
    }

    pub fn t_axis(&self) -> &[f64] {
        &self.t
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

const SIGMA_INFLATION: f64 = 1.01;
const STRICT_REL: f64 = 1e-6;
const STRICT_ABS: f64 = 1e-12;

/// Fits `β ∈ KL` with `β(r_i, t_j) ≥ ω(r_i, t_j)` at every grid node (exact
/// inequality, verified).
///
/// Construction: `σ` is the 1.01-inflated envelope of `ω(·, t_0)` (the column
/// maximum, since `ω` is nonincreasing in `t`); the decay profile is the
/// normalized envelope of the top row `ω(r_max, ·)` with an exponential tail
/// matching the last observed ratio. `σ` is then inflated multiplicatively
/// until domination holds node by node.
pub fn kl_majorize(omega: &OmegaGrid) -> Result<KLFunction> {
    let nr = omega.r.len();
    let nt = omega.t.len();

    // A K-class sigma vanishes at r = 0: a positive value there cannot be
    // dominated by any factorized KL bound.
    if omega.r[0] == 0.0 {
        for j in 0..nt {
            if omega.values[0][j] > 0.0 {
                return Err(Error::Data(format!(
                    "omega(0, {}) = {} > 0 cannot be dominated by a KL function",
                    omega.t[j], omega.values[0][j]
                )));
            }
        }
    }

    let top_row_max = omega.values[nr - 1][0];
    if top_row_max == 0.0 {
        // The whole grid is zero; any valid KL function dominates.
        return KLFunction::new(
            ComparisonFunction::identity(),
            ComparisonFunction::exp_decay(1.0)?,
        );
    }

    // --- decay profile from the top row, normalized and made strictly
    // decreasing from the right so the L-class invariants hold.
    let mut env: Vec<f64> = omega.values[nr - 1].iter().map(|v| v / top_row_max).collect();
    for j in (0..nt.saturating_sub(1)).rev() {
        let floor = env[j + 1] * (1.0 + STRICT_REL) + STRICT_ABS;
        if env[j] < floor {
            env[j] = floor;
        }
    }
    if env[nt - 1] <= 0.0 {
        env[nt - 1] = STRICT_ABS;
        // Keep strict decrease against the repaired last entry.
        for j in (0..nt - 1).rev() {
            let floor = env[j + 1] * (1.0 + STRICT_REL) + STRICT_ABS;
            if env[j] < floor {
                env[j] = floor;
            }
        }
    }
    let mut decay_knots: Vec<(f64, f64)> = Vec::with_capacity(nt + 1);
    if omega.t[0] > 0.0 {
        decay_knots.push((0.0, env[0] * (1.0 + STRICT_REL) + STRICT_ABS));
    }
    decay_knots.extend(omega.t.iter().copied().zip(env.iter().copied()));
    let rate = if decay_knots.len() >= 2 {
        let (t0, v0) = decay_knots[decay_knots.len() - 2];
        let (t1, v1) = decay_knots[decay_knots.len() - 1];
        ((v0 / v1).ln() / (t1 - t0)).max(1e-9)
    } else {
        1.0
    };
    let decay_raw = ComparisonFunction::class_l(decay_knots, rate)?;
    let norm = decay_raw.evaluate(0.0)?;
    let decay = decay_raw.scale(1.0 / norm)?;

    // --- sigma: inflated envelope of the first column, strictly increasing.
    let mut sig: Vec<(f64, f64)> = Vec::with_capacity(nr + 1);
    if omega.r[0] > 0.0 {
        sig.push((0.0, 0.0));
    }
    let mut prev = 0.0;
    for i in 0..nr {
        let raw = if omega.r[i] == 0.0 {
            0.0
        } else {
            omega.values[i][0] * SIGMA_INFLATION
        };
        let floor = if omega.r[i] == 0.0 {
            0.0
        } else {
            prev * (1.0 + STRICT_REL) + STRICT_ABS
        };
        let v = raw.max(floor);
        sig.push((omega.r[i], v));
        prev = v;
    }
    let tail_slope = if sig.len() >= 2 {
        let (r0, v0) = sig[sig.len() - 2];
        let (r1, v1) = sig[sig.len() - 1];
        ((v1 - v0) / (r1 - r0)).max(1e-9)
    } else {
        1.0
    };
    let mut sigma = ComparisonFunction::class_kinf(sig, tail_slope)?;

    // --- inflate sigma until beta dominates omega at every node.
    for _ in 0..64 {
        let mut need = 1.0f64;
        for i in 0..nr {
            for j in 0..nt {
                let w = omega.values[i][j];
                if w == 0.0 {
                    continue;
                }
                let lhs = sigma.eval_unchecked(omega.r[i]) * decay.eval_unchecked(omega.t[j]);
                if lhs < w {
                    need = need.max(w / lhs);
                }
            }
        }
        if need == 1.0 {
            return KLFunction::new(sigma, decay);
        }
        sigma = sigma.scale(need * (1.0 + 1e-12))?;
    }
    Err(Error::Data(
        "kl_majorize failed to reach node-wise domination after inflation rounds".into(),
    ))
}
