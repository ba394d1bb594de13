//! Piecewise-constant input signals on a uniform grid with a zero tail.
//!
//! This is the smallest input space satisfying the shift-invariance and
//! concatenation axioms together with the max-norm concatenation bound
//! `‖concat(u, v)‖ ≤ max(‖u‖, ‖v‖)`, which sup-norm spaces provide and
//! integral norms do not.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSignal {
    grid_step: f64,
    dim: usize,
    values: Vec<Vec<f64>>,
}

/// Grid-index rounding guard: times within ~1e-9 cells of a boundary are
/// treated as lying on it.
const GRID_FUDGE: f64 = 1e-9;

impl InputSignal {
    pub fn new(grid_step: f64, dim: usize, values: Vec<Vec<f64>>) -> Result<Self> {
        if !(grid_step > 0.0) || !grid_step.is_finite() {
            return Err(Error::Data(format!("grid_step must be positive, got {grid_step}")));
        }
        for v in &values {
            if v.len() != dim {
                return Err(Error::Shape(format!(
                    "input value of dimension {} in a signal of dimension {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data("input values must be finite".into()));
            }
        }
        Ok(Self { grid_step, dim, values })
    }

    pub fn zero(grid_step: f64, dim: usize) -> Self {
        Self { grid_step, dim, values: Vec::new() }
    }

    /// Constant value over `cells` grid cells, zero afterwards.
    pub fn constant(grid_step: f64, value: Vec<f64>, cells: usize) -> Result<Self> {
        let dim = value.len();
        Self::new(grid_step, dim, vec![value; cells])
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn cell_value(&self, cell: usize) -> Option<&[f64]> {
        self.values.get(cell).map(|v| v.as_slice())
    }

    /// Right-continuous evaluation: value on `[k·h, (k+1)·h)`, zero beyond the
    /// stored cells.
    pub fn value_at(&self, s: f64) -> Vec<f64> {
        if s < 0.0 {
            return vec![0.0; self.dim];
        }
        let k = (s / self.grid_step + GRID_FUDGE).floor();
        if k >= self.values.len() as f64 {
            return vec![0.0; self.dim];
        }
        self.values[k as usize].clone()
    }

    /// `sup_t |u(t)|` with the Euclidean norm on input values.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    fn cell_index(&self, tau: f64) -> usize {
        (tau / self.grid_step + GRID_FUDGE).floor().max(0.0) as usize
    }

    /// Time shift `u(· + τ)`; τ is rounded down to the grid.
    pub fn shift(&self, tau: f64) -> Result<Self> {
        if !(tau >= 0.0) {
            return Err(Error::Domain(format!("shift requires tau >= 0, got {tau}")));
        }
        let k = self.cell_index(tau);
        let values = if k >= self.values.len() {
            Vec::new()
        } else {
            self.values[k..].to_vec()
        };
        Ok(Self { grid_step: self.grid_step, dim: self.dim, values })
    }

    /// Keeps the cells before `t`, zero afterwards (used by the causality
    /// axiom check).
    pub fn truncate_after(&self, t: f64) -> Self {
        let k = self.cell_index(t).min(self.values.len());
        Self { grid_step: self.grid_step, dim: self.dim, values: self.values[..k].to_vec() }
    }

    /// Resamples onto a finer grid by mid-cell sampling (exact when the grid
    /// steps have an integer ratio).
    fn resample(&self, grid_step: f64) -> Self {
        if grid_step == self.grid_step {
            return self.clone();
        }
        let n = ((self.values.len() as f64 * self.grid_step) / grid_step).ceil() as usize;
        let values = (0..n)
            .map(|k| self.value_at(grid_step * k as f64 + grid_step / 2.0))
            .collect();
        Self { grid_step, dim: self.dim, values }
    }

    /// Concatenation at time `t`: `self` on `[0, t)`, `other(· − t)` after.
    /// Mismatched grid steps are resampled to the finer one; `t` rounds down
    /// to the grid.
    pub fn concat(&self, other: &Self, t: f64) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Shape(format!(
                "concat of signals with dimensions {} and {}",
                self.dim, other.dim
            )));
        }
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("concat requires t >= 0, got {t}")));
        }
        let step = self.grid_step.min(other.grid_step);
        let head = self.resample(step);
        let tail = other.resample(step);
        let k = head.cell_index(t);
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(k + tail.values.len());
        for cell in 0..k {
            values.push(head.cell_value(cell).map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; self.dim]));
        }
        values.extend(tail.values.iter().cloned());
        Ok(Self { grid_step: step, dim: self.dim, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(values: &[f64]) -> InputSignal {
        InputSignal::new(1.0, 1, values.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    #[test]
    fn shift_by_zero_is_identity() {
        let u = scalar(&[1.0, 2.0, 3.0]);
        assert_eq!(u.shift(0.0).unwrap(), u);
    }

    #[test]
    fn shift_drops_leading_cells() {
        let u = scalar(&[1.0, 2.0, 3.0]);
        assert_eq!(u.shift(1.0).unwrap(), scalar(&[2.0, 3.0]));
    }

    #[test]
    fn shift_past_end_is_zero_signal() {
        let u = scalar(&[1.0, 2.0]);
        let s = u.shift(10.0).unwrap();
        assert_eq!(s.cells().len(), 0);
        assert_eq!(s.sup_norm(), 0.0);
    }

    #[test]
    fn concat_splices_at_grid_time() {
        let u1 = scalar(&[1.0]);
        let u2 = scalar(&[3.0]);
        assert_eq!(u1.concat(&u2, 1.0).unwrap(), scalar(&[1.0, 3.0]));
    }

    #[test]
    fn concat_of_zeros_is_zero() {
        let z = InputSignal::zero(1.0, 1);
        let c = z.concat(&z, 5.0).unwrap();
        assert_eq!(c.sup_norm(), 0.0);
    }

    #[test]
    fn concat_with_zero_tail_never_grows_norm() {
        let u = scalar(&[2.0, -1.0, 0.5]);
        let z = InputSignal::zero(1.0, 1);
        for t in [0.0, 1.0, 2.0, 3.0, 7.0] {
            let c = u.concat(&z, t).unwrap();
            assert!(c.sup_norm() <= u.sup_norm());
        }
    }

    #[test]
    fn concat_resamples_to_finer_grid() {
        let coarse = InputSignal::new(1.0, 1, vec![vec![4.0]]).unwrap();
        let fine = InputSignal::new(0.5, 1, vec![vec![1.0], vec![2.0]]).unwrap();
        let c = coarse.concat(&fine, 1.0).unwrap();
        assert_eq!(c.grid_step(), 0.5);
        assert_eq!(c.value_at(0.0), vec![4.0]);
        assert_eq!(c.value_at(0.5), vec![4.0]);
        assert_eq!(c.value_at(1.0), vec![1.0]);
        assert_eq!(c.value_at(1.5), vec![2.0]);
    }

    #[test]
    fn value_beyond_list_is_zero() {
        let u = scalar(&[1.0]);
        assert_eq!(u.value_at(5.0), vec![0.0]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let u = scalar(&[1.0]);
        let v = InputSignal::zero(1.0, 2);
        assert!(matches!(u.concat(&v, 1.0), Err(Error::Shape(_))));
    }
}
