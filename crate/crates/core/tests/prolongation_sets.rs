//! Prolongation-set construction oracles on the closed-form benchmarks.

use isps_core::benchmarks::{biased_system, integrator_system, linear_system};
use isps_core::comparison::ComparisonFunction;
use isps_core::prolongation::{
    build_prolongation, check_prolongation_invariance, cloud_slack, downsample_farthest,
    f_eps_profile, lipschitz_estimate, offset_constant, theorem2_pipeline, ProlongationSet,
};
use isps_core::sampling::{derive_rng, SampleBudget};
use isps_core::sets::{BoundedSetApprox, StateNorm};
use rand::Rng;

fn budget() -> SampleBudget {
    SampleBudget {
        n_states: 8,
        n_inputs: 6,
        time_horizon: 10.0,
        radii: vec![0.5, 1.0, 2.0, 5.0],
        epsilons: vec![0.5, 1.0],
        u_max: 4.0,
        seed: 42,
    }
}

fn origin() -> BoundedSetApprox {
    BoundedSetApprox::origin(1, StateNorm::Euclidean)
}

fn linear_prolongation(eps: f64) -> ProlongationSet {
    build_prolongation(
        &linear_system(),
        &origin(),
        eps,
        &ComparisonFunction::identity(),
        &budget(),
    )
    .unwrap()
}

#[test]
fn linear_cloud_radius_matches_closed_form() {
    // |x(t)| <= e^{-t} + 0.5 (1 - e^{-t}) <= 1, sup attained at t = 0.
    let p = linear_prolongation(1.0);
    let slack = cloud_slack(&linear_system(), 1.0);
    let radius = p.cloud.set_norm_bound();
    assert!(radius >= 0.9, "cloud radius {radius} too small");
    assert!(radius <= 1.0 + slack + 1e-8, "cloud radius {radius} too large");
    assert!(p.return_fraction >= 0.99, "return fraction {}", p.return_fraction);
    assert!(!p.inconclusive);
    assert_eq!(p.s_level, 0.5);
}

#[test]
fn ball_containment_within_slack() {
    let p = linear_prolongation(1.0);
    let slack = cloud_slack(&linear_system(), 1.0);
    // Base points sit in the cloud exactly; random points of B_eps(A) are
    // within membership slack.
    for bp in p.base.points() {
        assert_eq!(p.cloud.distance(bp).unwrap(), 0.0);
    }
    let mut rng = derive_rng(3, 1, 0);
    for _ in 0..200 {
        let x = vec![rng.gen_range(-1.0..1.0)];
        assert!(
            p.cloud.distance(&x).unwrap() <= slack,
            "point {x:?} escapes the cloud"
        );
    }
}

#[test]
fn degenerate_small_eps_cloud_stays_near_ball() {
    // Near-zero forcing around an equilibrium set: cloud ≈ B_eps(A).
    let p = linear_prolongation(0.125);
    let radius = p.cloud.set_norm_bound();
    let slack = cloud_slack(&linear_system(), 0.125);
    assert!(radius <= 0.125 + slack + 1e-8, "cloud radius {radius}");
}

#[test]
fn biased_cloud_bounded_around_equilibrium() {
    let set = BoundedSetApprox::singleton(vec![1.0], StateNorm::Euclidean).unwrap();
    let p = build_prolongation(
        &biased_system(),
        &set,
        1.0,
        &ComparisonFunction::identity(),
        &budget(),
    )
    .unwrap();
    // Shifted closed form: |x - 1| <= e^{-t} + 0.5 (1 - e^{-t}) <= 1.
    let slack = cloud_slack(&biased_system(), 1.0);
    for pt in p.cloud.points() {
        assert!(
            (pt[0] - 1.0).abs() <= 1.0 + slack + 1e-8,
            "cloud point {pt:?} outside the shifted ball"
        );
    }
}

#[test]
fn cloud_invariance_at_gamma_inverse_level_and_zero() {
    let p = linear_prolongation(1.0);
    let report = check_prolongation_invariance(&linear_system(), &p, &budget()).unwrap();
    assert!(report.s_verdict.is_consistent(), "{:?}", report.s_verdict);
    assert!(report.zero_verdict.is_consistent(), "{:?}", report.zero_verdict);
    assert!(report.verdict.is_consistent());
}

#[test]
fn truncated_cloud_is_not_invariant() {
    // Planted defect: drop the late-time (small |x|) states from the cloud of
    // a contracting system; trajectories re-enter the gap and exit the
    // remaining point set.
    let p = linear_prolongation(1.0);
    let kept: Vec<Vec<f64>> = p
        .cloud
        .points()
        .iter()
        .filter(|pt| pt[0].abs() > 0.5)
        .cloned()
        .collect();
    let truncated = ProlongationSet {
        cloud: BoundedSetApprox::new(kept, p.cloud.inflation(), StateNorm::Euclidean).unwrap(),
        ..p
    };
    let report =
        check_prolongation_invariance(&linear_system(), &truncated, &budget()).unwrap();
    assert!(report.verdict.is_falsified(), "{:?}", report.verdict);
}

#[test]
fn offset_constant_examples() {
    // Identical sets: C within slack.
    let p = linear_prolongation(1.0);
    let c_self = offset_constant(&p.cloud.clone(), &p).unwrap();
    assert!(c_self <= 1e-9, "C = {c_self} for identical sets");

    // A = {0}, cloud = ball(0, 1): C ≈ 1.
    let a = origin();
    let ball = BoundedSetApprox::ball(vec![0.0], 1.0, StateNorm::Euclidean).unwrap();
    let p_ball = ProlongationSet {
        base: a.clone(),
        epsilon: 1.0,
        gamma: ComparisonFunction::identity(),
        s_level: 0.5,
        horizon_used: 1.0,
        return_fraction: 1.0,
        inconclusive: false,
        cloud: ball,
        original_points: 1,
    };
    let c = offset_constant(&a, &p_ball).unwrap();
    assert!((c - 1.0).abs() <= 1e-6, "C = {c}, expected 1");

    // A = ball(0, 1), cloud = ball(0, 3): C ≈ 2.
    let a1 = BoundedSetApprox::ball(vec![0.0], 1.0, StateNorm::Euclidean).unwrap();
    let p3 = ProlongationSet {
        cloud: BoundedSetApprox::ball(vec![0.0], 3.0, StateNorm::Euclidean).unwrap(),
        base: a1.clone(),
        ..p_ball
    };
    let c = offset_constant(&a1, &p3).unwrap();
    assert!((c - 2.0).abs() <= 1e-6, "C = {c}, expected 2");
}

#[test]
fn offset_constant_rejects_broken_containment() {
    let a = BoundedSetApprox::singleton(vec![5.0], StateNorm::Euclidean).unwrap();
    let p = linear_prolongation(1.0);
    assert!(offset_constant(&a, &p).is_err());
}

#[test]
fn f_eps_profile_vanishes_below_eps_and_grows_above() {
    let report = f_eps_profile(
        &linear_system(),
        &origin(),
        &ComparisonFunction::identity(),
        0.5,
        &[0.25, 0.5, 1.0, 2.0],
        &budget(),
    )
    .unwrap();
    assert!(report.zero_region_ok, "f_hat below eps: {:?}", report.f_hat);
    assert!(report.monotone_violation.is_none(), "{:?}", report.monotone_violation);
    // s = 2: nested closed-form reach bounds give a strictly positive gap no
    // larger than the cloud-radius difference.
    let f2 = *report.f_hat.last().unwrap();
    assert!(f2 > 0.0, "f_hat(2) = {f2}");
    assert!(f2 <= 2.0 - 0.5 + 2.0 * report.slack, "f_hat(2) = {f2}");
    // sigma_eps dominates on the grid.
    for (s, v) in report.s_grid.iter().zip(&report.f_hat) {
        assert!(report.sigma_eps.evaluate(*s).unwrap() >= *v);
    }
}

#[test]
fn clouds_nest_with_the_construction_parameter() {
    let p_small = linear_prolongation(0.5);
    let p_big = linear_prolongation(1.0);
    let slack = cloud_slack(&linear_system(), 1.0);
    for pt in p_small.cloud.points() {
        assert!(
            p_big.cloud.distance(pt).unwrap() <= slack,
            "nesting violated at {pt:?}"
        );
    }
}

#[test]
fn lipschitz_estimate_finite_and_stable_under_doubling() {
    let a = lipschitz_estimate(&linear_system(), 2.0, 2.0, 24, 7).unwrap();
    let b = lipschitz_estimate(&linear_system(), 2.0, 2.0, 48, 7).unwrap();
    assert!(a.l_hat.is_finite() && a.l_hat > 0.0);
    assert!(
        (b.l_hat - a.l_hat).abs() <= 0.2 * a.l_hat.max(1.0),
        "unstable Lipschitz estimate: {} vs {}",
        a.l_hat,
        b.l_hat
    );
}

#[test]
fn pipeline_consistent_on_linear() {
    let report = theorem2_pipeline(&linear_system(), &budget(), 1.0, 1e-3).unwrap();
    assert!(report.verdict.is_consistent(), "{:#?}", report.legs);
    let norm = report.cloud_norm.unwrap();
    assert!(norm <= 1.2, "cloud norm {norm} at eps = 1");
}

#[test]
fn pipeline_consistent_on_biased_with_cloud_near_one() {
    let report = theorem2_pipeline(&biased_system(), &budget(), 1.0, 1e-3).unwrap();
    assert!(report.verdict.is_consistent(), "{:#?}", report.legs);
    // The settle ball has radius c ≈ 1 and the prolongation inflates it by
    // roughly eps; everything stays within a few units of the equilibrium.
    let norm = report.cloud_norm.unwrap();
    assert!(norm <= 3.5, "cloud norm {norm}");
}

#[test]
fn pipeline_stops_at_isps_for_integrator() {
    let report = theorem2_pipeline(&integrator_system(), &budget(), 1.0, 1e-3).unwrap();
    assert!(!report.verdict.is_consistent());
    let last = report.legs.last().unwrap();
    assert_eq!(last.name, "isps-fit");
    assert!(last.verdict.is_falsified());
}

#[test]
fn farthest_point_downsampling_keeps_extremes() {
    let points: Vec<Vec<f64>> = (0..1000).map(|k| vec![k as f64 / 999.0]).collect();
    let kept = downsample_farthest(&points, 10, StateNorm::Euclidean);
    assert_eq!(kept.len(), 10);
    assert!(kept.iter().any(|p| p[0] == 0.0));
    assert!(kept.iter().any(|p| p[0] == 1.0));
}
