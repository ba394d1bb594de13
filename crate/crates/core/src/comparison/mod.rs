//! Calculus of comparison functions.
//!
//! Everything here is piecewise linear on a knot grid with a class-dependent
//! tail: linear extension for `K`/`K∞`, exponential decay for `L`. That family
//! is closed under every operation the stability estimators need (evaluation,
//! inversion, composition, pointwise max/sum, envelope domination), and the
//! monotonicity checks become knot-local.

mod majorize;
mod smooth;

pub use majorize::{kl_majorize, OmegaGrid};
pub use smooth::{lemma2_average, monotone_smooth_tau, SmoothedTau, TauGrid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class tag: `K` (strictly increasing, zero at zero), `Kinf` (unbounded `K`),
/// `L` (strictly decreasing to zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FunctionClass {
    K,
    Kinf,
    L,
}

impl std::fmt::Display for FunctionClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FunctionClass::K => write!(f, "K"),
            FunctionClass::Kinf => write!(f, "Kinf"),
            FunctionClass::L => write!(f, "L"),
        }
    }
}

/// Extension beyond the last knot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    /// Linear continuation with the given positive slope (`K`/`Kinf`).
    Slope(f64),
    /// Exponential decay `v_last * exp(-rate * (r - r_last))` (`L`).
    Rate(f64),
}

/// A scalar comparison function represented by knots plus a tail.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonFunction {
    class: FunctionClass,
    knots: Vec<(f64, f64)>,
    tail: Tail,
}

fn ensure_finite(knots: &[(f64, f64)]) -> Result<()> {
    for &(r, v) in knots {
        if !r.is_finite() || !v.is_finite() {
            return Err(Error::Data(format!("non-finite knot ({r}, {v})")));
        }
    }
    Ok(())
}

impl ComparisonFunction {
    /// Builds a class-`K` function. Knots must start at `(0, 0)`, be strictly
    /// increasing in both coordinates; `tail_slope > 0`.
    pub fn class_k(knots: Vec<(f64, f64)>, tail_slope: f64) -> Result<Self> {
        Self::increasing(FunctionClass::K, knots, tail_slope)
    }

    /// Builds a class-`K∞` function (same shape constraints as `K`; the
    /// positive tail slope makes it unbounded).
    pub fn class_kinf(knots: Vec<(f64, f64)>, tail_slope: f64) -> Result<Self> {
        Self::increasing(FunctionClass::Kinf, knots, tail_slope)
    }

    fn increasing(class: FunctionClass, knots: Vec<(f64, f64)>, tail_slope: f64) -> Result<Self> {
        ensure_finite(&knots)?;
        if knots.is_empty() {
            return Err(Error::Data("comparison function needs at least one knot".into()));
        }
        if knots[0] != (0.0, 0.0) {
            return Err(Error::Data(format!(
                "class {class} requires first knot (0, 0), got ({}, {})",
                knots[0].0, knots[0].1
            )));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(Error::Data(format!(
                    "class {class} knots must be strictly increasing in both coordinates: ({}, {}) -> ({}, {})",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        if !(tail_slope > 0.0) || !tail_slope.is_finite() {
            return Err(Error::Data(format!("tail slope must be positive, got {tail_slope}")));
        }
        Ok(Self { class, knots, tail: Tail::Slope(tail_slope) })
    }

    /// Builds a class-`L` function: values strictly decreasing and positive,
    /// first knot at `r = 0`, exponential tail with `tail_rate > 0`.
    pub fn class_l(knots: Vec<(f64, f64)>, tail_rate: f64) -> Result<Self> {
        ensure_finite(&knots)?;
        if knots.is_empty() {
            return Err(Error::Data("comparison function needs at least one knot".into()));
        }
        if knots[0].0 != 0.0 {
            return Err(Error::Data(format!(
                "class L requires first knot at r = 0, got r = {}",
                knots[0].0
            )));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 < w[0].1) {
                return Err(Error::Data(format!(
                    "class L knots must strictly decrease in value: ({}, {}) -> ({}, {})",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        let last = knots.last().unwrap();
        if !(last.1 > 0.0) {
            return Err(Error::Data(format!(
                "class L last value must stay positive (got {}); the exponential tail carries the decay to 0",
                last.1
            )));
        }
        if !(tail_rate > 0.0) || !tail_rate.is_finite() {
            return Err(Error::Data(format!("tail rate must be positive, got {tail_rate}")));
        }
        Ok(Self { class: FunctionClass::L, knots, tail: Tail::Rate(tail_rate) })
    }

    /// The identity function `r ↦ r` as a `K∞` element.
    pub fn identity() -> Self {
        Self::class_kinf(vec![(0.0, 0.0), (1.0, 1.0)], 1.0).unwrap()
    }

    /// `r ↦ slope · r` as a `K∞` element.
    pub fn linear(slope: f64) -> Result<Self> {
        Self::class_kinf(vec![(0.0, 0.0), (1.0, slope)], slope)
    }

    /// `t ↦ exp(-rate · t)` as an `L` element (exact for all `t ≥ 0`).
    pub fn exp_decay(rate: f64) -> Result<Self> {
        Self::class_l(vec![(0.0, 1.0)], rate)
    }

    pub fn class(&self) -> FunctionClass {
        self.class
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    pub fn is_k_family(&self) -> bool {
        matches!(self.class, FunctionClass::K | FunctionClass::Kinf)
    }

    /// Evaluates at `r ≥ 0`: linear interpolation on knots, class tail beyond.
    pub fn evaluate(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("comparison functions are defined on r >= 0, got {r}")));
        }
        Ok(self.eval_unchecked(r))
    }

    pub(crate) fn eval_unchecked(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        let (r_last, v_last) = *self.knots.last().unwrap();
        if r >= r_last {
            return match self.tail {
                Tail::Slope(s) => v_last + s * (r - r_last),
                Tail::Rate(k) => v_last * (-k * (r - r_last)).exp(),
            };
        }
        // partition_point: first knot with knot.0 > r; r < r_last so idx < len.
        let idx = self.knots.partition_point(|&(kr, _)| kr <= r);
        let (r0, v0) = self.knots[idx - 1];
        let (r1, v1) = self.knots[idx];
        if r == r0 {
            return v0;
        }
        v0 + (v1 - v0) * (r - r0) / (r1 - r0)
    }

    /// Functional inverse of a `K∞` function: knots swapped, exact at knots.
    pub fn invert(&self) -> Result<Self> {
        if self.class != FunctionClass::Kinf {
            return Err(Error::Class(format!(
                "invert requires class Kinf, got {}",
                self.class
            )));
        }
        let knots = self.knots.iter().map(|&(r, v)| (v, r)).collect();
        let slope = match self.tail {
            Tail::Slope(s) => 1.0 / s,
            Tail::Rate(_) => unreachable!("Kinf carries a slope tail"),
        };
        Self::class_kinf(knots, slope)
    }

    fn tail_slope(&self) -> f64 {
        match self.tail {
            Tail::Slope(s) => s,
            Tail::Rate(_) => 0.0,
        }
    }

    /// Left inverse evaluation for the K family: smallest `r` with `f(r) = y`.
    fn preimage(&self, y: f64) -> f64 {
        debug_assert!(self.is_k_family() && y >= 0.0);
        let (r_last, v_last) = *self.knots.last().unwrap();
        if y >= v_last {
            return r_last + (y - v_last) / self.tail_slope();
        }
        let idx = self.knots.partition_point(|&(_, kv)| kv <= y);
        let (r0, v0) = self.knots[idx - 1];
        let (r1, v1) = self.knots[idx];
        if y == v0 {
            return r0;
        }
        r0 + (r1 - r0) * (y - v0) / (v1 - v0)
    }

    fn require_k_pair(a: &Self, b: &Self, op: &str) -> Result<()> {
        if !a.is_k_family() || !b.is_k_family() {
            return Err(Error::Class(format!(
                "{op} requires K/Kinf operands, got {} and {}",
                a.class, b.class
            )));
        }
        Ok(())
    }

    fn joint_class(a: &Self, b: &Self) -> FunctionClass {
        if a.class == FunctionClass::Kinf && b.class == FunctionClass::Kinf {
            FunctionClass::Kinf
        } else {
            FunctionClass::K
        }
    }

    /// Composition `f ∘ g` for the K family. Exact: the result's knot grid is
    /// the union of `g`'s knots with the preimages under `g` of `f`'s knots.
    pub fn compose(f: &Self, g: &Self) -> Result<Self> {
        Self::require_k_pair(f, g, "compose")?;
        let mut xs: Vec<f64> = g.knots.iter().map(|&(r, _)| r).collect();
        for &(fr, _) in &f.knots {
            xs.push(g.preimage(fr));
        }
        xs.retain(|x| x.is_finite() && *x >= 0.0);
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        let knots: Vec<(f64, f64)> = xs
            .iter()
            .map(|&x| (x, f.eval_unchecked(g.eval_unchecked(x))))
            .collect();
        let slope = f.tail_slope() * g.tail_slope();
        Self::increasing(Self::joint_class(f, g), knots, slope)
    }

    /// Pointwise maximum over the K family; crossing points become knots so
    /// the result is exact everywhere, not just on the union grid.
    pub fn pointwise_max(f: &Self, g: &Self) -> Result<Self> {
        Self::require_k_pair(f, g, "pointwise_max")?;
        let mut xs = Self::union_grid(f, g);
        // Crossing inside a segment adds a breakpoint.
        let mut crossings = Vec::new();
        for w in xs.windows(2) {
            let (x0, x1) = (w[0], w[1]);
            let d0 = f.eval_unchecked(x0) - g.eval_unchecked(x0);
            let d1 = f.eval_unchecked(x1) - g.eval_unchecked(x1);
            if d0 * d1 < 0.0 {
                crossings.push(x0 + (x1 - x0) * d0 / (d0 - d1));
            }
        }
        // One more potential crossing between the two tail lines.
        let x_last = *xs.last().unwrap();
        let (sf, sg) = (f.tail_slope(), g.tail_slope());
        let d_last = f.eval_unchecked(x_last) - g.eval_unchecked(x_last);
        if sf != sg {
            let x_star = x_last + d_last / (sg - sf);
            if x_star > x_last {
                crossings.push(x_star);
            }
        }
        xs.extend(crossings);
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        let knots: Vec<(f64, f64)> = xs
            .iter()
            .map(|&x| (x, f.eval_unchecked(x).max(g.eval_unchecked(x))))
            .collect();
        Self::increasing(Self::joint_class(f, g), knots, sf.max(sg))
    }

    /// Pointwise sum over the K family (exact on the union grid).
    pub fn add(f: &Self, g: &Self) -> Result<Self> {
        Self::require_k_pair(f, g, "add")?;
        let xs = Self::union_grid(f, g);
        let knots: Vec<(f64, f64)> = xs
            .iter()
            .map(|&x| (x, f.eval_unchecked(x) + g.eval_unchecked(x)))
            .collect();
        Self::increasing(Self::joint_class(f, g), knots, f.tail_slope() + g.tail_slope())
    }

    fn union_grid(f: &Self, g: &Self) -> Vec<f64> {
        let mut xs: Vec<f64> = f.knots.iter().chain(g.knots.iter()).map(|&(r, _)| r).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        xs
    }

    /// Multiplies all values (and the tail parameterization for the K family)
    /// by `factor > 0`. Preserves the class.
    pub fn scale(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::Domain(format!("scale factor must be positive, got {factor}")));
        }
        let knots = self.knots.iter().map(|&(r, v)| (r, v * factor)).collect();
        match self.tail {
            Tail::Slope(s) => Self::increasing(self.class, knots, s * factor),
            // Scaling an L function leaves the decay rate untouched.
            Tail::Rate(k) => Self::class_l(knots, k),
        }
    }
}

/// JSON wire format: `{class, knots: [[r, v], ...], tail: {kind, param}}`.
#[derive(Serialize, Deserialize)]
struct ComparisonFunctionDto {
    class: FunctionClass,
    knots: Vec<[f64; 2]>,
    tail: TailDto,
}

#[derive(Serialize, Deserialize)]
struct TailDto {
    kind: String,
    param: f64,
}

impl Serialize for ComparisonFunction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let tail = match self.tail {
            Tail::Slope(s) => TailDto { kind: "slope".into(), param: s },
            Tail::Rate(k) => TailDto { kind: "rate".into(), param: k },
        };
        ComparisonFunctionDto {
            class: self.class,
            knots: self.knots.iter().map(|&(r, v)| [r, v]).collect(),
            tail,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComparisonFunction {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let dto = ComparisonFunctionDto::deserialize(deserializer)?;
        let knots: Vec<(f64, f64)> = dto.knots.iter().map(|&[r, v]| (r, v)).collect();
        let built = match (dto.class, dto.tail.kind.as_str()) {
            (FunctionClass::K, "slope") => ComparisonFunction::class_k(knots, dto.tail.param),
            (FunctionClass::Kinf, "slope") => ComparisonFunction::class_kinf(knots, dto.tail.param),
            (FunctionClass::L, "rate") => ComparisonFunction::class_l(knots, dto.tail.param),
            (class, kind) => Err(Error::Class(format!("tail kind '{kind}' invalid for class {class}"))),
        };
        built.map_err(serde::de::Error::custom)
    }
}

/// A factorized KL bound `β(r, t) = σ(r) · decay(t)` with `σ ∈ K∞` and
/// `decay ∈ L` normalized to `decay(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KLFunction {
    sigma: ComparisonFunction,
    decay: ComparisonFunction,
}

impl KLFunction {
    pub fn new(sigma: ComparisonFunction, decay: ComparisonFunction) -> Result<Self> {
        if sigma.class() != FunctionClass::Kinf {
            return Err(Error::Class(format!("KL sigma must be Kinf, got {}", sigma.class())));
        }
        if decay.class() != FunctionClass::L {
            return Err(Error::Class(format!("KL decay must be L, got {}", decay.class())));
        }
        if decay.eval_unchecked(0.0) != 1.0 {
            return Err(Error::Data(format!(
                "KL decay must be normalized to decay(0) = 1, got {}",
                decay.eval_unchecked(0.0)
            )));
        }
        Ok(Self { sigma, decay })
    }

    /// Normalizes `decay(0)` to exactly 1 and folds the factor into `sigma`.
    pub fn normalized(sigma: ComparisonFunction, decay: ComparisonFunction) -> Result<Self> {
        let d0 = decay.evaluate(0.0)?;
        if !(d0 > 0.0) {
            return Err(Error::Data(format!("decay(0) must be positive, got {d0}")));
        }
        let sigma = sigma.scale(d0)?;
        let decay = decay.scale(1.0 / d0)?;
        // v / v is exactly 1.0 for finite positive v.
        Self::new(sigma, decay)
    }

    pub fn sigma(&self) -> &ComparisonFunction {
        &self.sigma
    }

    pub fn decay(&self) -> &ComparisonFunction {
        &self.decay
    }

    pub fn evaluate(&self, r: f64, t: f64) -> Result<f64> {
        Ok(self.sigma.evaluate(r)? * self.decay.evaluate(t)?)
    }

    pub(crate) fn eval_unchecked(&self, r: f64, t: f64) -> f64 {
        self.sigma.eval_unchecked(r) * self.decay.eval_unchecked(t)
    }

    /// Scales the `σ` factor; the decay profile is unchanged.
    pub fn scale_sigma(&self, factor: f64) -> Result<Self> {
        Ok(Self { sigma: self.sigma.scale(factor)?, decay: self.decay.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn evaluate_identity_and_zero() {
        let id = ComparisonFunction::identity();
        assert_eq!(id.evaluate(0.5).unwrap(), 0.5);
        assert_eq!(id.evaluate(0.0).unwrap(), 0.0);
        assert_eq!(id.evaluate(7.25).unwrap(), 7.25);
    }

    #[test]
    fn evaluate_tail_extension() {
        // knots (0,0),(1,2), tail slope 3: f(2) = 2 + 3·(2−1) = 5.
        let f = ComparisonFunction::class_kinf(vec![(0.0, 0.0), (1.0, 2.0)], 3.0).unwrap();
        assert_eq!(f.evaluate(2.0).unwrap(), 5.0);
        assert_eq!(f.evaluate(0.5).unwrap(), 1.0);
    }

    #[test]
    fn evaluate_rejects_negative() {
        let f = ComparisonFunction::identity();
        assert!(matches!(f.evaluate(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn l_class_decays_to_zero() {
        let d = ComparisonFunction::exp_decay(1.0).unwrap();
        assert_eq!(d.evaluate(0.0).unwrap(), 1.0);
        assert_relative_eq!(d.evaluate(1.0).unwrap(), (-1.0f64).exp(), max_relative = 1e-15);
        assert!(d.evaluate(200.0).unwrap() < 1e-80);
    }

    #[test]
    fn invert_identity_and_linear() {
        let id = ComparisonFunction::identity();
        let inv = id.invert().unwrap();
        assert_eq!(inv.evaluate(0.3).unwrap(), 0.3);

        let f = ComparisonFunction::linear(2.0).unwrap();
        let g = f.invert().unwrap();
        assert_eq!(g.evaluate(f.evaluate(1.0).unwrap()).unwrap(), 1.0);
        assert_eq!(g.evaluate(1.0).unwrap(), 0.5);
    }

    #[test]
    fn invert_swaps_knots() {
        let f = ComparisonFunction::class_kinf(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 4.0)], 4.0).unwrap();
        let g = f.invert().unwrap();
        assert_eq!(g.knots(), &[(0.0, 0.0), (1.0, 1.0), (4.0, 2.0)]);
    }

    #[test]
    fn invert_requires_kinf() {
        let f = ComparisonFunction::class_k(vec![(0.0, 0.0), (1.0, 1.0)], 1.0).unwrap();
        assert!(matches!(f.invert(), Err(Error::Class(_))));
        let l = ComparisonFunction::exp_decay(1.0).unwrap();
        assert!(matches!(l.invert(), Err(Error::Class(_))));
    }

    #[test]
    fn compose_linear() {
        let f = ComparisonFunction::linear(2.0).unwrap();
        let g = ComparisonFunction::linear(3.0).unwrap();
        let fg = ComparisonFunction::compose(&f, &g).unwrap();
        assert_relative_eq!(fg.evaluate(1.0).unwrap(), 6.0, max_relative = 1e-12);
        assert_relative_eq!(fg.evaluate(10.0).unwrap(), 60.0, max_relative = 1e-12);
    }

    #[test]
    fn max_of_identity_is_identity() {
        let id = ComparisonFunction::identity();
        let m = ComparisonFunction::pointwise_max(&id, &id).unwrap();
        for r in [0.0, 0.25, 1.0, 3.5] {
            assert_eq!(m.evaluate(r).unwrap(), r);
        }
    }

    #[test]
    fn add_matches_pointwise_sum() {
        // r + (piecewise-linear r²) at the union grid.
        let id = ComparisonFunction::identity();
        let sq = ComparisonFunction::class_kinf(
            vec![(0.0, 0.0), (0.5, 0.25), (1.0, 1.0), (2.0, 4.0)],
            4.0,
        )
        .unwrap();
        let s = ComparisonFunction::add(&id, &sq).unwrap();
        assert_relative_eq!(s.evaluate(1.0).unwrap(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(s.evaluate(0.5).unwrap(), 0.75, max_relative = 1e-12);
        for r in [0.0, 0.3, 0.7, 1.5, 2.5] {
            let want = id.evaluate(r).unwrap() + sq.evaluate(r).unwrap();
            assert_relative_eq!(s.evaluate(r).unwrap(), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn max_handles_crossings_exactly() {
        let f = ComparisonFunction::linear(2.0).unwrap();
        let g = ComparisonFunction::class_kinf(vec![(0.0, 0.0), (1.0, 1.0)], 5.0).unwrap();
        let m = ComparisonFunction::pointwise_max(&f, &g).unwrap();
        for r in [0.0, 0.5, 1.0, 1.2, 1.4, 2.0, 10.0] {
            let want = f.evaluate(r).unwrap().max(g.evaluate(r).unwrap());
            assert_relative_eq!(m.evaluate(r).unwrap(), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn mixed_class_algebra_rejected() {
        let id = ComparisonFunction::identity();
        let l = ComparisonFunction::exp_decay(1.0).unwrap();
        assert!(matches!(ComparisonFunction::compose(&id, &l), Err(Error::Class(_))));
        assert!(matches!(ComparisonFunction::pointwise_max(&id, &l), Err(Error::Class(_))));
        assert!(matches!(ComparisonFunction::add(&l, &l), Err(Error::Class(_))));
    }

    #[test]
    fn kl_weak_triangle_structure() {
        let beta = KLFunction::new(
            ComparisonFunction::linear(2.5).unwrap(),
            ComparisonFunction::exp_decay(0.7).unwrap(),
        )
        .unwrap();
        for (a, b, t) in [(0.1, 0.4, 0.0), (1.0, 1.0, 2.0), (3.0, 0.2, 5.0)] {
            let lhs = beta.evaluate(a + b, t).unwrap();
            let rhs = beta.evaluate(2.0 * a, t).unwrap() + beta.evaluate(2.0 * b, t).unwrap();
            assert!(lhs <= rhs + 1e-12, "weak triangle failed: {lhs} > {rhs}");
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let f = ComparisonFunction::class_kinf(
            vec![(0.0, 0.0), (0.1, 0.3333333333333333), (2.0, 7.1)],
            0.123456789,
        )
        .unwrap();
        let json = serde_json::to_string(&f).unwrap();
        let back: ComparisonFunction = serde_json::from_str(&json).unwrap();
        assert_eq!(f, back);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }
}
