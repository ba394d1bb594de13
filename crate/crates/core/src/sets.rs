//! State vectors, norms, and bounded-set approximations with distance queries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A state is a finite coordinate vector; the norm lives on the set/system.
pub type StateVector = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateNorm {
    Euclidean,
    Sup,
}

impl StateNorm {
    pub fn norm(&self, x: &[f64]) -> f64 {
        match self {
            StateNorm::Euclidean => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            StateNorm::Sup => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    pub fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self {
            StateNorm::Euclidean => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            StateNorm::Sup => x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs())),
        }
    }
}

/// Finite point cloud with a uniform inflation radius: represents
/// `∪_p closed_ball(p, inflation)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedSetApprox {
    points: Vec<StateVector>,
    inflation: f64,
    norm: StateNorm,
}

impl BoundedSetApprox {
    pub fn new(points: Vec<StateVector>, inflation: f64, norm: StateNorm) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Data("bounded set approximation needs at least one point".into()));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::Shape("points must have dimension >= 1".into()));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::Shape(format!(
                    "mixed point dimensions {} and {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("set points must be finite".into()));
            }
        }
        if !(inflation >= 0.0) || !inflation.is_finite() {
            return Err(Error::Data(format!("inflation must be nonnegative, got {inflation}")));
        }
        Ok(Self { points, inflation, norm })
    }

    pub fn singleton(point: StateVector, norm: StateNorm) -> Result<Self> {
        Self::new(vec![point], 0.0, norm)
    }

    pub fn ball(center: StateVector, radius: f64, norm: StateNorm) -> Result<Self> {
        Self::new(vec![center], radius, norm)
    }

    pub fn origin(dim: usize, norm: StateNorm) -> Self {
        Self::new(vec![vec![0.0; dim]], 0.0, norm).unwrap()
    }

    pub fn points(&self) -> &[StateVector] {
        &self.points
    }

    pub fn inflation(&self) -> f64 {
        self.inflation
    }

    pub fn norm(&self) -> StateNorm {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Distance from `x` to the inflated cloud:
    /// `max(0, min_p ‖x − p‖ − inflation)`.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "state of dimension {} against a set of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self.distance_unchecked(x))
    }

    pub(crate) fn distance_unchecked(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let nearest = self
            .points
            .iter()
            .map(|p| self.norm.dist(x, p))
            .fold(f64::INFINITY, f64::min);
        (nearest - self.inflation).max(0.0)
    }

    /// `‖A‖ = max_p (‖p‖ + inflation)`, finite by construction.
    pub fn set_norm_bound(&self) -> f64 {
        self.points
            .iter()
            .map(|p| self.norm.norm(p))
            .fold(0.0, f64::max)
            + self.inflation
    }

    /// Minkowski inflation `B_eps(A)` by enlarging the inflation radius.
    pub fn inflate(&self, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::Domain(format!("inflation increment must be >= 0, got {eps}")));
        }
        Ok(Self {
            points: self.points.clone(),
            inflation: self.inflation + eps,
            norm: self.norm,
        })
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> Result<bool> {
        Ok(self.distance(x)? <= slack)
    }

    pub fn with_points(&self, points: Vec<StateVector>, inflation: f64) -> Result<Self> {
        Self::new(points, inflation, self.norm)
    }
}
