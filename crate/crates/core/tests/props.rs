//! Property tests for the geometry and range-model invariants.

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

use uwbpose_core::geometry::{
    exp_so3, hat, log_so3, simplex_metrics, vee, AxisAngle, Pose, Simplex,
};
use uwbpose_core::range::{mirror_pose, range_vector, SensorLayout};

fn arb_vec3(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-scale..scale, -scale..scale, -scale..scale)
        .prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn arb_axis_angle() -> impl Strategy<Value = AxisAngle<f64>> {
    (arb_vec3(1.0), 1e-4..3.0).prop_filter_map("nonzero axis", |(axis, angle)| {
        if axis.norm() < 1e-3 || angle >= std::f64::consts::PI {
            None
        } else {
            Some(AxisAngle::new(axis.normalize() * angle))
        }
    })
}

fn arb_pose(translation_scale: f64) -> impl Strategy<Value = Pose<f64>> {
    (arb_axis_angle(), arb_vec3(translation_scale))
        .prop_map(|(phi, t)| Pose::from_parts(&phi, t))
}

proptest! {
    #[test]
    fn hat_vee_roundtrip(v in arb_vec3(10.0)) {
        let m = hat(&v);
        // Skew symmetry and exact inversion.
        prop_assert!((m + m.transpose()).abs().max() == 0.0);
        prop_assert_eq!(vee(&m).unwrap(), v);
    }

    #[test]
    fn hat_acts_as_cross_product(v in arb_vec3(5.0), w in arb_vec3(5.0)) {
        let lhs = hat(&v) * w;
        let rhs = v.cross(&w);
        prop_assert!((lhs - rhs).abs().max() < 1e-12);
    }

    #[test]
    fn exp_log_roundtrip(phi in arb_axis_angle()) {
        let r = exp_so3(&phi);
        let back = log_so3(&r).unwrap();
        prop_assert!((back.vector() - phi.vector()).abs().max() < 1e-8);
        let r2 = exp_so3(&back);
        prop_assert!((r2 - r).abs().max() < 1e-8);
    }

    #[test]
    fn rotations_preserve_norm(phi in arb_axis_angle(), v in arb_vec3(10.0)) {
        let r = exp_so3(&phi);
        prop_assert!(((r * v).norm() - v.norm()).abs() < 1e-9);
    }

    #[test]
    fn simplex_metrics_euclidean_invariant(
        phi in arb_axis_angle(),
        t in arb_vec3(20.0),
        jitter in arb_vec3(0.5),
    ) {
        let base = vec![
            Vector3::new(1.0, 0.1, -0.2) + jitter,
            Vector3::new(-0.6, 0.8, 0.3),
            Vector3::new(-0.2, -0.9, 0.1),
            Vector3::new(0.2, 0.1, 1.1),
        ];
        let Ok(s) = Simplex::new(&base) else { return Ok(()); };
        let m0 = simplex_metrics(&s);
        let r = exp_so3(&phi);
        let moved: Vec<Vector3<f64>> = base.iter().map(|v| r * v + t).collect();
        let m1 = simplex_metrics(&Simplex::new(&moved).unwrap());
        prop_assert!((m0.circumradius - m1.circumradius).abs() < 1e-9);
        prop_assert!((m0.content - m1.content).abs() < 1e-9);
        for (a, b) in m0.altitudes.iter().zip(&m1.altitudes) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn ranges_invariant_under_global_transform(
        pose in arb_pose(8.0),
        g_phi in arb_axis_angle(),
        g_t in arb_vec3(15.0),
    ) {
        let layout = SensorLayout::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(2.0, 0.0, 0.0),
                Vector3::new(0.0, 2.0, 0.0),
                Vector3::new(0.7, 0.7, 1.5),
            ],
            vec![
                Vector3::new(0.4, 0.0, 0.0),
                Vector3::new(-0.2, 0.35, 0.0),
                Vector3::new(-0.2, -0.35, 0.0),
            ],
        ).unwrap();
        let g = Pose::from_parts(&g_phi, g_t);
        let moved_anchors: Vec<Vector3<f64>> =
            layout.anchors().iter().map(|a| g.transform_point(a)).collect();
        let moved_layout = SensorLayout::new(moved_anchors, layout.tags().to_vec()).unwrap();
        let moved_pose = g.compose(&pose);
        let r0 = range_vector(&pose, &layout);
        let r1 = range_vector(&moved_pose, &moved_layout);
        for (a, b) in r0.values().iter().zip(r1.values()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn mirror_preserves_ranges_over_coplanar_anchors(pose in arb_pose(6.0)) {
        let layout = SensorLayout::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(2.5, 0.0, 0.0),
                Vector3::new(0.0, 2.5, 0.0),
                Vector3::new(2.5, 2.5, 0.0),
            ],
            vec![
                Vector3::new(0.4, 0.0, 0.0),
                Vector3::new(-0.2, 0.35, 0.0),
                Vector3::new(-0.2, -0.35, 0.0),
            ],
        ).unwrap();
        let mirrored = mirror_pose(&pose, &layout).unwrap();
        let r0 = range_vector(&pose, &layout);
        let r1 = range_vector(&mirrored, &layout);
        for (a, b) in r0.values().iter().zip(r1.values()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn two_tags_ambiguous_about_their_axis(pose in arb_pose(6.0), angle in -3.0..3.0f64) {
        // With two tags, rotating the body about the line through the two
        // transformed tag positions leaves every range unchanged.
        let layout = SensorLayout::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(2.0, 0.0, 0.0),
                Vector3::new(0.0, 2.0, 0.0),
                Vector3::new(0.7, 0.7, 1.5),
            ],
            vec![Vector3::new(0.4, 0.0, 0.1), Vector3::new(-0.4, 0.1, 0.0)],
        ).unwrap();
        let q1 = pose.transform_point(&layout.tags()[0]);
        let q2 = pose.transform_point(&layout.tags()[1]);
        let axis = (q2 - q1).normalize();
        let spin = exp_so3(&AxisAngle::new(axis * angle));
        // Rotation about the line through q1 with direction `axis`.
        let turned = Pose::new(
            spin * pose.rotation(),
            spin * (pose.translation() - q1) + q1,
        ).unwrap();
        let r0 = range_vector(&pose, &layout);
        let r1 = range_vector(&turned, &layout);
        for (a, b) in r0.values().iter().zip(r1.values()) {
            prop_assert!((a - b).abs() < 1e-9, "ranges changed under axis spin");
        }
    }
}

#[test]
fn mirror_pose_matches_reflection_composition_for_planar_tags() {
    // For a planar tag constellation the refit mirror pose reproduces the
    // closed-form composition of the two plane reflections.
    let layout = SensorLayout::<f64>::new(
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(2.0, 0.0, 0.0),
            Vector3::new(0.0, 2.0, 0.0),
        ],
        vec![
            Vector3::new(0.5, 0.0, 0.0),
            Vector3::new(-0.25, 0.4, 0.0),
            Vector3::new(-0.25, -0.4, 0.0),
        ],
    )
    .unwrap();
    let pose = Pose::from_parts(
        &AxisAngle::new(Vector3::new(0.3, 0.1, -0.4)),
        Vector3::new(4.0, -2.0, 1.7),
    );
    let mirrored = mirror_pose(&pose, &layout).unwrap();
    assert!((mirrored.rotation().determinant() - 1.0).abs() < 1e-9);
    for tag in layout.tags() {
        let q = pose.transform_point(tag);
        let qm = mirrored.transform_point(tag);
        // Reflection through z = 0.
        assert!((q.x - qm.x).abs() < 1e-9);
        assert!((q.y - qm.y).abs() < 1e-9);
        assert!((q.z + qm.z).abs() < 1e-9);
    }
}

#[test]
fn regular_layouts_pass_optimality_with_zero_slack() {
    use uwbpose_core::geometry::{check_simplex_optimality, regular_layout, SimplexKind};
    for r in [0.5f64, 1.0, 2.5] {
        let tri = regular_layout(SimplexKind::Triangle, r);
        let slacks = check_simplex_optimality(&tri);
        assert!(slacks.sum_h_sq_slack.abs() < 1e-9);
        assert!(slacks.content_slack.abs() < 1e-9);
        let tet = regular_layout(SimplexKind::Tetrahedron, r);
        let slacks = check_simplex_optimality(&tet);
        assert!(slacks.sum_h_sq_slack.abs() < 1e-9);
        assert!(slacks.content_slack.abs() < 1e-9);
    }
}

#[test]
fn rotation_matrix_f32_roundtrip() {
    let phi = uwbpose_core::AxisAngleF32::new(nalgebra::Vector3::new(0.4f32, -0.2, 0.6));
    let r: Matrix3<f32> = exp_so3(&phi);
    let back = log_so3(&r).unwrap();
    assert!((back.vector() - phi.vector()).abs().max() < 1e-5);
}
