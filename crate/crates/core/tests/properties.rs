//! Property-based invariants: comparison-function calculus, input-signal
//! axioms, and set-distance geometry.

use isps_core::comparison::{
    kl_majorize, lemma2_average, monotone_smooth_tau, ComparisonFunction, KLFunction, OmegaGrid,
    TauGrid,
};
use isps_core::sets::{BoundedSetApprox, StateNorm};
use isps_core::signal::InputSignal;
use proptest::prelude::*;

/// Random K∞ function as strictly increasing knots plus tail slope.
fn kinf_strategy() -> impl Strategy<Value = ComparisonFunction> {
    (
        prop::collection::vec(0.01f64..2.0, 1..6),
        prop::collection::vec(0.01f64..2.0, 1..6),
        0.05f64..3.0,
    )
        .prop_map(|(dr, dv, slope)| {
            let mut knots = vec![(0.0, 0.0)];
            let (mut r, mut v) = (0.0, 0.0);
            for (a, b) in dr.iter().zip(&dv) {
                r += a;
                v += b;
                knots.push((r, v));
            }
            ComparisonFunction::class_kinf(knots, slope).unwrap()
        })
}

fn kl_strategy() -> impl Strategy<Value = KLFunction> {
    (kinf_strategy(), 0.1f64..2.0)
        .prop_map(|(sigma, rate)| {
            KLFunction::new(sigma, ComparisonFunction::exp_decay(rate).unwrap()).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn k_functions_vanish_at_zero_and_increase(f in kinf_strategy(), a in 0.0f64..20.0, b in 0.0f64..20.0) {
        prop_assert_eq!(f.evaluate(0.0).unwrap(), 0.0);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if hi - lo > 1e-12 {
            prop_assert!(f.evaluate(lo).unwrap() < f.evaluate(hi).unwrap());
        }
    }

    #[test]
    fn invert_is_an_involution_on_knots(f in kinf_strategy()) {
        let back = f.invert().unwrap().invert().unwrap();
        prop_assert_eq!(f.knots(), back.knots());
    }

    #[test]
    fn inverse_round_trip_at_knots(f in kinf_strategy()) {
        let inv = f.invert().unwrap();
        for &(r, v) in f.knots() {
            prop_assert_eq!(inv.evaluate(v).unwrap(), r);
        }
    }

    #[test]
    fn kl_weak_triangle(beta in kl_strategy(), a in 0.0f64..10.0, b in 0.0f64..10.0, t in 0.0f64..10.0) {
        let lhs = beta.evaluate(a + b, t).unwrap();
        let rhs = beta.evaluate(2.0 * a, t).unwrap() + beta.evaluate(2.0 * b, t).unwrap();
        prop_assert!(lhs <= rhs + 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn majorization_dominates_exactly(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..5.0, 4), 3),
    ) {
        // Monotonize the raw draws so they form a valid omega grid.
        let r_axis = vec![0.5, 1.0, 2.0];
        let t_axis = vec![0.0, 1.0, 2.0, 3.0];
        let mut vals = rows;
        for row in vals.iter_mut() {
            for j in (0..3).rev() {
                if row[j] < row[j + 1] {
                    row[j] = row[j + 1];
                }
            }
        }
        for i in 1..3 {
            for j in 0..4 {
                if vals[i][j] < vals[i - 1][j] {
                    vals[i][j] = vals[i - 1][j];
                }
            }
        }
        let omega = OmegaGrid::new(r_axis.clone(), t_axis.clone(), vals.clone()).unwrap();
        let beta = kl_majorize(&omega).unwrap();
        for (i, &r) in r_axis.iter().enumerate() {
            for (j, &t) in t_axis.iter().enumerate() {
                // Exact inequality, no tolerance.
                prop_assert!(beta.evaluate(r, t).unwrap() >= vals[i][j]);
            }
        }
    }

    #[test]
    fn lemma2_average_is_strictly_increasing(
        slopes in prop::collection::vec(0.05f64..2.0, 1..5),
        t1 in 0.1f64..3.0,
        dt in 0.1f64..3.0,
    ) {
        // Piecewise-linear strictly increasing f with random segment slopes.
        let f = move |s: f64| -> f64 {
            let seg = 1.0f64;
            let mut acc = 0.0;
            let mut rem = s;
            for (k, sl) in slopes.iter().enumerate() {
                let w = rem.min(seg);
                acc += sl * w;
                rem -= w;
                if rem <= 0.0 {
                    return acc;
                }
                if k + 1 == slopes.len() {
                    acc += slopes[slopes.len() - 1] * rem;
                    return acc;
                }
            }
            acc
        };
        let t2 = t1 + dt;
        let g1 = lemma2_average(&f, t1).unwrap();
        let g2 = lemma2_average(&f, t2).unwrap();
        prop_assert!(g1 < g2, "averages must strictly increase: {} vs {}", g1, g2);
    }
}

#[test]
fn smoothed_tau_monotone_on_fifty_probe_pairs() {
    // A non-strict grid (plateaus) exercises the strictness repair.
    let eps: Vec<f64> = (0..9).map(|k| 0.25 + 0.5 * k as f64).collect();
    let r: Vec<f64> = (0..9).map(|k| 0.25 + k as f64).collect();
    let values: Vec<Vec<f64>> = eps
        .iter()
        .map(|&e| r.iter().map(|&rr| (6.0 - e).max(1.0).floor() + rr.floor()).collect())
        .collect();
    let grid = TauGrid::new(eps.clone(), r.clone(), values).unwrap();
    let tau = monotone_smooth_tau(grid).unwrap();

    let mut rng_state = 0x12345u64;
    let mut next = move || {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
        (rng_state >> 33) as f64 / (1u64 << 31) as f64
    };
    for _ in 0..50 {
        let e = 1.0 + 2.0 * next();
        let r1 = 0.5 + 1.5 * next();
        let r2 = r1 + 0.25 + next();
        let t1 = tau.tau(e, r1).unwrap();
        let t2 = tau.tau(e, r2).unwrap();
        assert!(t2 > t1, "tau({e}, {r2}) = {t2} must exceed tau({e}, {r1}) = {t1}");

        let e1 = 1.0 + next();
        let e2 = e1 + 0.2 + next();
        let te1 = tau.tau(e1, 1.5).unwrap();
        let te2 = tau.tau(e2, 1.5).unwrap();
        assert!(te1 > te2, "tau must strictly decrease in eps: {te1} vs {te2}");
    }
    // Node domination against the repaired integrand inside the coverable
    // region.
    for &e in &[1.25, 1.75, 2.25] {
        for &rr in &[1.25, 2.25, 3.25] {
            assert!(tau.tau(e, rr).unwrap() >= tau.tau_tilde(e, rr).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_never_increases_sup_norm(
        cells in prop::collection::vec(-3.0f64..3.0, 0..12),
        tau in 0.0f64..8.0,
    ) {
        let u = InputSignal::new(0.5, 1, cells.iter().map(|&c| vec![c]).collect()).unwrap();
        let shifted = u.shift(tau).unwrap();
        prop_assert!(shifted.sup_norm() <= u.sup_norm() + 1e-15);
    }

    #[test]
    fn concat_bounded_by_max_of_norms(
        a in prop::collection::vec(-3.0f64..3.0, 0..10),
        b in prop::collection::vec(-3.0f64..3.0, 0..10),
        t in 0.0f64..6.0,
    ) {
        let u1 = InputSignal::new(0.5, 1, a.iter().map(|&c| vec![c]).collect()).unwrap();
        let u2 = InputSignal::new(0.5, 1, b.iter().map(|&c| vec![c]).collect()).unwrap();
        let w = u1.concat(&u2, t).unwrap();
        prop_assert!(w.sup_norm() <= u1.sup_norm().max(u2.sup_norm()) + 1e-15);
    }

    #[test]
    fn set_distance_triangle_and_norm_relation(
        points in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..6),
        inflation in 0.0f64..2.0,
        x in prop::collection::vec(-8.0f64..8.0, 2),
        y in prop::collection::vec(-8.0f64..8.0, 2),
    ) {
        let set = BoundedSetApprox::new(points, inflation, StateNorm::Euclidean).unwrap();
        let dx = set.distance(&x).unwrap();
        let dy = set.distance(&y).unwrap();
        let step = StateNorm::Euclidean.dist(&x, &y);
        // |d(x) - d(y)| <= |x - y|
        prop_assert!((dx - dy).abs() <= step + 1e-12);
        // |x| - |A| <= d(x) <= |x| + |A|
        let nx = StateNorm::Euclidean.norm(&x);
        let na = set.set_norm_bound();
        prop_assert!(dx >= nx - na - 1e-12);
        prop_assert!(dx <= nx + na + 1e-12);
        // Points of the cloud are inside.
        for p in set.points() {
            prop_assert_eq!(set.distance(p).unwrap(), 0.0);
        }
    }

    #[test]
    fn comparison_json_round_trips_bitwise(f in kinf_strategy()) {
        let json = serde_json::to_string(&f).unwrap();
        let back: ComparisonFunction = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }
}
