//! Sampled checkers and certificate fitters for the stability properties:
//! reachability bounds, limit properties, uniform boundedness, invariance,
//! and the ISpS/CUAG/ISS gain fitters.
//!
//! Every `consistent` verdict is sampling-based, never a proof; only
//! witness-carrying `falsified` verdicts are definitive.

mod fit;
mod invariance;
mod limits;
mod reach;
mod ugb;

pub use fit::{
    check_iss_wrt_set, fit_cuag, fit_isps, fit_iss, CuagCertificate, FitOutcome, FitReport,
    GainCertificate, IssReport,
};
pub use invariance::{check_robust_s_invariance, check_s_invariance, RobustnessReport};
pub use limits::{
    check_lim, check_uag, estimate_ulim, AttainmentNode, AttainmentTable, LimitReport,
};
pub use reach::{check_brs, BrsReport};
pub use ugb::{check_ugb, UgbCertificate, UgbReport};

use crate::comparison::ComparisonFunction;
use crate::error::Result;
use crate::sets::BoundedSetApprox;
use crate::system::ControlSystem;

/// Distance slack separating discretization noise from a genuine set exit.
pub fn membership_slack(set: &BoundedSetApprox, sys: &dyn ControlSystem) -> f64 {
    set.inflation() * 1e-3 + sys.flow_tolerance()
}

/// Envelope inflation applied before validation: biases certificates toward
/// soundness over tightness.
pub const ENVELOPE_INFLATION: f64 = 1.05;

/// Fraction of the horizon treated as "long time" when splitting constant
/// offsets from gains.
pub const TAIL_FRACTION: f64 = 0.75;

/// Input sup-norm levels exercised per fitting run, as fractions of `u_max`.
pub const LEVEL_FRACTIONS: [f64; 9] = [0.01, 0.05, 0.1, 0.2, 0.35, 0.5, 0.7, 0.85, 1.0];

/// Monotone (isotonic-style) upper envelope turned into a `K∞` function:
/// running max over the level grid, multiplicative inflation, strictness
/// repair, linear tail.
pub(crate) fn envelope_to_kinf(
    levels: &[f64],
    values: &[f64],
    inflation: f64,
) -> Result<ComparisonFunction> {
    debug_assert_eq!(levels.len(), values.len());
    let mut knots = vec![(0.0, 0.0)];
    let mut run = 0.0f64;
    let mut prev_v = 0.0f64;
    let mut prev_l = 0.0f64;
    for (&l, &v) in levels.iter().zip(values) {
        if l <= prev_l {
            continue;
        }
        run = run.max(v.max(0.0));
        let inflated = run * inflation;
        let strict = (prev_v * (1.0 + 1e-9) + 1e-12).max(inflated);
        knots.push((l, strict));
        prev_v = strict;
        prev_l = l;
    }
    let tail = if knots.len() >= 2 {
        let (l0, v0) = knots[knots.len() - 2];
        let (l1, v1) = knots[knots.len() - 1];
        ((v1 - v0) / (l1 - l0)).max(1e-9)
    } else {
        1.0
    };
    ComparisonFunction::class_kinf(knots, tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_is_monotone_and_dominates() {
        let levels = [0.5, 1.0, 2.0, 4.0];
        let values = [0.4, 0.3, 1.9, 2.0];
        let g = envelope_to_kinf(&levels, &values, 1.05).unwrap();
        // running max: 0.4, 0.4, 1.9, 2.0, inflated by 1.05
        for (l, v) in levels.iter().zip([0.4, 0.4, 1.9, 2.0]) {
            assert!(g.evaluate(*l).unwrap() >= v, "envelope must dominate at {l}");
        }
        assert!(g.evaluate(0.0).unwrap() == 0.0);
    }

    #[test]
    fn envelope_of_zeros_is_tiny_but_valid() {
        let g = envelope_to_kinf(&[1.0, 2.0], &[0.0, 0.0], 1.05).unwrap();
        assert!(g.evaluate(2.0).unwrap() < 1e-9);
    }
}
