//! Deployment planning on live simulations, and the fitted error models
//! against held-out sweep data.

use uwbpose_core::estimator::SolverConfig;
use uwbpose_core::fim::error_models;
use uwbpose_core::planner::{fit_linear, plan_deployment, PlanRequest, XSemantics};
use uwbpose_core::sim::{sweep, SweepAxis, TrialConfig};

/// Fit the translation model on four of five sweep rows and predict the
/// held-out row within 10%.
#[test]
fn error_model_predicts_held_out_sweep_point() {
    let solver = SolverConfig::default();
    let base = TrialConfig {
        trials: 100,
        orientation_samples: 2,
        azimuth_samples: 4,
        seed: 11,
        ..TrialConfig::new(1.25, 1.6, 10.0)
    };
    let grid = [0.9, 1.1, 1.3, 1.5, 1.7];
    let table = sweep(SweepAxis::La, &grid, &base, &solver).unwrap();

    let holdout = 2usize;
    let train: Vec<(f64, f64)> = table
        .rows
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != holdout)
        .map(|(_, r)| (r.d / r.z_a, r.e_t_rmse))
        .collect();
    let fit = fit_linear(&train, XSemantics::DOverZa).unwrap();
    let held = &table.rows[holdout];

    // Through the generic prediction interface, with the σ-normalized slope.
    let normalized = fit.sigma_normalized(base.sigma_d);
    let prediction = error_models(
        held.d,
        held.z_a,
        held.h1,
        base.sigma_d,
        &normalized,
        &normalized,
    );
    let rel = (prediction.e_t - held.e_t_rmse).abs() / held.e_t_rmse;
    assert!(
        rel < 0.10,
        "held-out point missed by {:.1}%: predicted {} measured {}",
        rel * 100.0,
        prediction.e_t,
        held.e_t_rmse
    );
}

/// Live two-step planning on a small grid: sane outputs, positive fit
/// slopes, validation consistent with the confirmation run.
#[test]
fn live_plan_small_grid() {
    let solver = SolverConfig::default();
    let base = TrialConfig {
        trials: 20,
        orientation_samples: 2,
        azimuth_samples: 2,
        seed: 5,
        ..TrialConfig::new(1.0, 1.0, 8.0)
    };
    let req = PlanRequest::new(
        8.0,
        0.4,
        0.35,
        0.05,
        vec![0.8, 1.1, 1.4, 1.7],
        vec![0.8, 1.2, 1.6],
    );
    let plan = plan_deployment(&req, &base, &solver).unwrap();

    assert!(plan.l_a_min >= 0.8 && plan.l_a_min <= 1.7, "L_a {}", plan.l_a_min);
    assert!(plan.l_t_min >= 0.8 && plan.l_t_min <= 1.6, "L_t {}", plan.l_t_min);
    assert!(plan.translation_fit.slope > 0.0);
    assert!(plan.orientation_fit.slope > 0.0);
    assert!(plan.translation_fit.pearson_r >= 0.95);
    assert!(plan.orientation_fit.pearson_r >= 0.95);
    assert!(plan.predicted_e_t <= 0.4 + 1e-9);
    assert!(plan.predicted_e_phi <= 0.35 + 1e-9);

    let (Some(e_t), Some(e_phi)) = (plan.confirmed_e_t, plan.confirmed_e_phi) else {
        panic!("live plan must run a confirmation simulation");
    };
    if plan.validated {
        assert!(e_t <= 0.4 * 1.1 + 1e-12);
        assert!(e_phi <= 0.35 * 1.1 + 1e-12);
    } else {
        assert!(e_t > 0.4 * 1.1 || e_phi > 0.35 * 1.1);
    }

    // Serialization round-trip of the artifact consumed downstream.
    let text = plan.to_json();
    let back = uwbpose_core::DeploymentPlanF64::from_json(&text).unwrap();
    assert_eq!(plan, back);
}
