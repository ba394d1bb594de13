//! Numerical toolkit for input-to-state (practical) stability analysis.
//!
//! The crate provides the abstract control-system interface `(X, U, φ)` with
//! sampled axiom checks, a benchmark catalog with fixed-step integrators,
//! comparison-function calculus (K/K∞/L/KL), estimators and certificate
//! fitters for BRS/UGB/LIM/ULIM/UAG/CUAG/ISpS/ISS, reachable-set prolongation
//! constructions, and a derivative-free falsifier for candidate certificates.

pub mod benchmarks;
pub mod comparison;
pub mod error;
pub mod estimators;
pub mod falsify;
pub mod integrate;
pub mod prolongation;
pub mod report;
pub mod sampling;
pub mod sets;
pub mod signal;
pub mod system;
pub mod verdict;

pub use error::{Error, Result};
