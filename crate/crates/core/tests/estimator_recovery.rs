//! End-to-end estimator behavior: equivariance, initialization quality and
//! Jacobian consistency.

use nalgebra::{DMatrix, Vector3};

use uwbpose_core::estimator::{initial_guess, solve_pose, SolverConfig};
use uwbpose_core::fim::assemble_jacobian;
use uwbpose_core::geometry::{exp_so3, log_so3, AxisAngle, Pose};
use uwbpose_core::range::{add_noise, derive_seed, range_vector, SensorLayout, SplitMix64};
use uwbpose_core::sim::TrialConfig;

fn reference_layout() -> SensorLayout<f64> {
    TrialConfig::new(1.25, 1.6, 10.0).layout().unwrap()
}

fn random_pose(rng: &mut SplitMix64) -> Pose<f64> {
    let phi = AxisAngle::new(
        Vector3::new(rng.next_sym(), rng.next_sym(), rng.next_sym()).normalize()
            * (rng.next_f64() * 2.5),
    );
    Pose::from_parts(
        &phi,
        Vector3::new(
            6.0 + 8.0 * rng.next_f64(),
            -5.0 + 10.0 * rng.next_f64(),
            -2.0 + 4.0 * rng.next_f64(),
        ),
    )
}

/// Moving anchors and pose by a common rigid transform transforms the
/// recovered pose by exactly that transform (noiseless ranges).
#[test]
fn estimate_is_equivariant_under_global_transforms() {
    let layout = reference_layout();
    let solver = SolverConfig::default();
    let mut rng = SplitMix64::new(606);
    for _ in 0..10 {
        let truth = random_pose(&mut rng);
        let ranges = range_vector(&truth, &layout);
        let init = initial_guess(&layout, &ranges, &solver).unwrap();
        let est = solve_pose(&layout, &ranges, &init, &solver).unwrap();

        let g = Pose::from_parts(
            &AxisAngle::new(
                Vector3::new(rng.next_sym(), rng.next_sym(), rng.next_sym()).normalize() * 1.3,
            ),
            Vector3::new(rng.next_sym(), rng.next_sym(), rng.next_sym()) * 12.0,
        );
        let moved_anchors: Vec<Vector3<f64>> =
            layout.anchors().iter().map(|a| g.transform_point(a)).collect();
        let moved_layout = SensorLayout::new(moved_anchors, layout.tags().to_vec()).unwrap();
        // Distances are Euclidean-invariant, so the same range set applies.
        let moved_init = initial_guess(&moved_layout, &ranges, &solver).unwrap();
        let moved_est = solve_pose(&moved_layout, &ranges, &moved_init, &solver).unwrap();

        let expected = g.compose(&est.pose);
        let dt = (moved_est.pose.translation() - expected.translation()).norm();
        let dr = (moved_est.pose.rotation() - expected.rotation()).abs().max();
        assert!(dt < 1e-6, "translation equivariance broken: {dt}");
        assert!(dr < 1e-6, "rotation equivariance broken: {dr}");
    }
}

/// The two-stage initialization puts the solver within a few iterations of
/// the optimum in nearly every noisy trial.
#[test]
fn initialization_yields_fast_convergence() {
    let layout = reference_layout();
    let solver = SolverConfig::default();
    let pose = Pose::from_parts(
        &AxisAngle::new(Vector3::new(0.3, -0.5, 0.8)),
        Vector3::new(10.0, 0.0, 0.0),
    );
    let exact = range_vector(&pose, &layout);
    let trials = 200;
    let mut fast = 0;
    for k in 0..trials {
        let noisy = add_noise(&exact, 0.05, derive_seed(4141, k));
        let Ok(init) = initial_guess(&layout, &noisy, &solver) else {
            continue;
        };
        if let Ok(est) = solve_pose(&layout, &noisy, &init, &solver) {
            if est.iterations <= 20 {
                fast += 1;
            }
        }
    }
    assert!(
        fast * 100 >= trials * 95,
        "only {fast}/{trials} trials converged within 20 iterations"
    );
}

/// Noiseless two-stage bootstrap recovers the exact pose on its own.
#[test]
fn initial_guess_alone_recovers_noiseless_pose() {
    let layout = reference_layout();
    let solver = SolverConfig::default();
    let mut rng = SplitMix64::new(808);
    for _ in 0..20 {
        let truth = random_pose(&mut rng);
        let ranges = range_vector(&truth, &layout);
        let guess = initial_guess(&layout, &ranges, &solver).unwrap();
        let e_t = (guess.translation() - truth.translation()).norm();
        let e_phi = log_so3(&(truth.rotation().transpose() * guess.rotation()))
            .unwrap()
            .angle();
        assert!(e_t < 1e-6, "translation error {e_t}");
        assert!(e_phi < 1e-6, "rotation error {e_phi}");
    }
}

/// The solver's Jacobian agrees with central finite differences of the
/// range model at random valid configurations.
#[test]
fn jacobian_matches_finite_differences_at_random_configurations() {
    let mut rng = SplitMix64::new(909);
    let step = 1e-6;
    let mut checked = 0;
    while checked < 100 {
        let anchors: Vec<Vector3<f64>> = (0..4)
            .map(|_| Vector3::new(rng.next_sym(), rng.next_sym(), rng.next_sym()) * 2.0)
            .collect();
        let tags: Vec<Vector3<f64>> = (0..3)
            .map(|_| Vector3::new(rng.next_sym(), rng.next_sym(), rng.next_sym()) * 0.8)
            .collect();
        let Ok(layout) = SensorLayout::new(anchors, tags) else {
            continue;
        };
        let pose = random_pose(&mut rng);
        let Ok(j) = assemble_jacobian(&pose, &layout) else {
            continue;
        };
        let j = j.full();
        let mut worst: f64 = 0.0;
        for col in 0..6 {
            let mut plus = [0.0; 6];
            plus[col] = step;
            let pp = pose.retract(
                &Vector3::new(plus[0], plus[1], plus[2]),
                &Vector3::new(plus[3], plus[4], plus[5]),
            );
            let mut minus = [0.0; 6];
            minus[col] = -step;
            let pm = pose.retract(
                &Vector3::new(minus[0], minus[1], minus[2]),
                &Vector3::new(minus[3], minus[4], minus[5]),
            );
            let rp = range_vector(&pp, &layout);
            let rm = range_vector(&pm, &layout);
            for row in 0..layout.num_ranges() {
                let fd = (rp.values()[row] - rm.values()[row]) / (2.0 * step);
                let denom = j[(row, col)].abs().max(1.0);
                worst = worst.max((fd - j[(row, col)]).abs() / denom);
            }
        }
        assert!(worst < 1e-5, "finite-difference mismatch {worst}");
        checked += 1;
    }
}

/// Rotation retraction is right-multiplicative: perturbing the estimate by
/// exp(δφ) on the right reproduces the solver's own step direction.
#[test]
fn retraction_is_right_multiplicative() {
    let pose = Pose::from_parts(
        &AxisAngle::new(Vector3::new(0.4, 0.2, -0.7)),
        Vector3::new(3.0, -1.0, 2.0),
    );
    let dphi = Vector3::new(1e-3, -2e-3, 3e-3);
    let stepped = pose.retract(&Vector3::zeros(), &dphi);
    let expected = pose.rotation() * exp_so3(&AxisAngle::new(dphi));
    assert!((stepped.rotation() - expected).abs().max() < 1e-15);
    // A left-multiplicative update differs at first order by the adjoint.
    let left = exp_so3(&AxisAngle::new(dphi)) * pose.rotation();
    assert!((stepped.rotation() - left).abs().max() > 1e-7);
}

/// The whole solve path also instantiates at f32 (with correspondingly
/// widened expectations).
#[test]
fn solver_runs_at_f32() {
    let layout = SensorLayout::<f32>::new(
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(3.0, 0.0, 0.0),
            Vector3::new(0.0, 3.0, 0.0),
            Vector3::new(1.0, 1.0, 2.0),
        ],
        vec![
            Vector3::new(0.5, 0.0, 0.0),
            Vector3::new(-0.25, 0.4, 0.0),
            Vector3::new(-0.25, -0.4, 0.0),
        ],
    )
    .unwrap();
    let truth = Pose::<f32>::from_parts(
        &AxisAngle::new(Vector3::new(0.2, -0.1, 0.4)),
        Vector3::new(8.0, 1.0, 0.5),
    );
    let ranges = range_vector(&truth, &layout);
    let solver = SolverConfig::<f32> {
        gradient_tolerance: 1e-3,
        step_tolerance: 1e-6,
        ..SolverConfig::default()
    };
    let init = initial_guess(&layout, &ranges, &solver).unwrap();
    let est = solve_pose(&layout, &ranges, &init, &solver).unwrap();
    assert!(est.converged);
    let e_t = (est.pose.translation() - truth.translation()).norm();
    assert!(e_t < 1e-2, "f32 translation error {e_t}");
}

/// Non-convergence carries the best estimate (so callers can still report
/// the pose with a converged=false flag).
#[test]
fn non_convergence_carries_estimate() {
    let layout = reference_layout();
    let solver = SolverConfig {
        max_iterations: 1,
        gradient_tolerance: 1e-300,
        ..SolverConfig::default()
    };
    let pose = Pose::from_parts(&AxisAngle::zero(), Vector3::new(10.0, 0.0, 0.0));
    let noisy = add_noise(&range_vector(&pose, &layout), 0.05, 1);
    let init = Pose::from_parts(&AxisAngle::zero(), Vector3::new(9.0, 1.0, 0.5));
    match solve_pose(&layout, &noisy, &init, &solver) {
        Err(uwbpose_core::estimator::EstimatorError::DidNotConverge(est)) => {
            assert!(!est.converged);
            assert_eq!(est.jacobian_at_solution.nrows(), layout.num_ranges());
            let _: &DMatrix<f64> = &est.jacobian_at_solution;
        }
        other => panic!("expected DidNotConverge, got {other:?}"),
    }
}
