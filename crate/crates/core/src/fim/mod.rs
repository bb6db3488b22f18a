//! Fisher-information machinery: range Jacobian assembly, the CRLB, the
//! orientation information matrix `H_φ` and its altitude-based ceiling, and
//! the closed-form anchor/tag placement analysis.

mod altitude;

pub use altitude::{
    altitude_analysis, dfdz, error_models, error_models_with_threshold, solve_tag_height,
    translation_floor, AltitudeAnalysis, AltitudeOptions, ErrorPrediction, TagHeightSolution,
    DEFAULT_PHI_VALIDITY_THRESHOLD,
};

use nalgebra::{DMatrix, Matrix3, Matrix6, Vector3};

use crate::estimator::pose_from_correspondences;
use crate::geometry::{hat, simplex_metrics, Pose, Simplex};
use crate::range::SensorLayout;
use crate::scalar::{c, scaled_tol, Real};

/// Errors from the information analysis.
#[derive(Debug, Clone, PartialEq)]
pub enum FimError {
    /// A tag sits on top of an anchor; the range direction is undefined.
    ZeroRange { tag: usize, anchor: usize },
    /// The Jacobian is rank deficient: the CRLB is unbounded along
    /// `direction` (components [translation | so(3)]).
    RankDeficient {
        smallest_singular_value: f64,
        direction: [f64; 6],
    },
    /// Input is outside the validity region of a closed-form result.
    AssumptionViolated { reason: String },
}

impl std::fmt::Display for FimError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FimError::ZeroRange { tag, anchor } => {
                write!(f, "zero range between tag {tag} and anchor {anchor}")
            }
            FimError::RankDeficient {
                smallest_singular_value,
                direction,
            } => write!(
                f,
                "rank-deficient Jacobian (smallest singular value {smallest_singular_value:.3e}); unbounded along [{:.3}, {:.3}, {:.3}, {:.3}, {:.3}, {:.3}]",
                direction[0], direction[1], direction[2], direction[3], direction[4], direction[5]
            ),
            FimError::AssumptionViolated { reason } => {
                write!(f, "assumption violated: {reason}")
            }
        }
    }
}

impl std::error::Error for FimError {}

/// Range Jacobian split into its translation and rotation blocks.
///
/// Row (i, j) (row-major by tag then anchor, matching `RangeSet`):
/// the translation block row is the unit vector `u_ijᵀ` from anchor j to the
/// transformed tag i; the rotation block row is `−u_ijᵀ · C · hat(ⁱp_B)`,
/// the derivative of the range under the right-multiplicative update
/// `C ← C·exp(δφ)` (verified against finite differences by the test suite).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseJacobian<T: Real> {
    j_t: DMatrix<T>,
    j_phi: DMatrix<T>,
}

impl<T: Real> PoseJacobian<T> {
    /// Translation block, (m·n) × 3.
    pub fn j_t(&self) -> &DMatrix<T> {
        &self.j_t
    }

    /// Rotation block, (m·n) × 3 (meters per radian).
    pub fn j_phi(&self) -> &DMatrix<T> {
        &self.j_phi
    }

    /// Stacked (m·n) × 6 Jacobian `[J_t | J_phi]`.
    pub fn full(&self) -> DMatrix<T> {
        let rows = self.j_t.nrows();
        let mut j = DMatrix::zeros(rows, 6);
        j.view_mut((0, 0), (rows, 3)).copy_from(&self.j_t);
        j.view_mut((0, 3), (rows, 3)).copy_from(&self.j_phi);
        j
    }

    pub fn nrows(&self) -> usize {
        self.j_t.nrows()
    }
}

fn jacobian_impl<T: Real>(
    pose: &Pose<T>,
    layout: &SensorLayout<T>,
    min_range: T,
) -> Result<PoseJacobian<T>, FimError> {
    let rows = layout.num_ranges();
    let mut j_t = DMatrix::zeros(rows, 3);
    let mut j_phi = DMatrix::zeros(rows, 3);
    for (i, tag) in layout.tags().iter().enumerate() {
        let q = pose.transform_point(tag);
        let rot_hat = pose.rotation() * hat(tag);
        for (j, anchor) in layout.anchors().iter().enumerate() {
            let diff = q - anchor;
            let d = diff.norm();
            if d <= min_range {
                return Err(FimError::ZeroRange { tag: i, anchor: j });
            }
            let u = diff / d;
            let row = i * layout.num_anchors() + j;
            j_t.set_row(row, &u.transpose());
            j_phi.set_row(row, &(-(u.transpose() * rot_hat)));
        }
    }
    Ok(PoseJacobian { j_t, j_phi })
}

/// Range Jacobian at a pose. Errors with `ZeroRange` if any tag-anchor
/// distance is below 1e-9.
pub fn assemble_jacobian<T: Real>(
    pose: &Pose<T>,
    layout: &SensorLayout<T>,
) -> Result<PoseJacobian<T>, FimError> {
    jacobian_impl(pose, layout, scaled_tol(1e-9))
}

/// Solver-internal variant that clamps near-zero ranges instead of failing,
/// so a pathological intermediate iterate cannot abort a solve.
pub(crate) fn pose_jacobian_clamped<T: Real>(
    pose: &Pose<T>,
    layout: &SensorLayout<T>,
) -> PoseJacobian<T> {
    match jacobian_impl(pose, layout, T::zero()) {
        Ok(j) => j,
        Err(_) => {
            // A tag exactly on an anchor: nudge via the epsilon-clamped path.
            jacobian_impl_clamped(pose, layout)
        }
    }
}

fn jacobian_impl_clamped<T: Real>(pose: &Pose<T>, layout: &SensorLayout<T>) -> PoseJacobian<T> {
    let rows = layout.num_ranges();
    let mut j_t = DMatrix::zeros(rows, 3);
    let mut j_phi = DMatrix::zeros(rows, 3);
    for (i, tag) in layout.tags().iter().enumerate() {
        let q = pose.transform_point(tag);
        let rot_hat = pose.rotation() * hat(tag);
        for (j, anchor) in layout.anchors().iter().enumerate() {
            let diff = q - anchor;
            let d = diff.norm().max(c(1e-15));
            let u = diff / d;
            let row = i * layout.num_anchors() + j;
            j_t.set_row(row, &u.transpose());
            j_phi.set_row(row, &(-(u.transpose() * rot_hat)));
        }
    }
    PoseJacobian { j_t, j_phi }
}

/// CRLB report: spectrum, covariance floor and orientation information.
#[derive(Debug, Clone, PartialEq)]
pub struct FimReport<T: Real> {
    /// The six singular values of `[J_t | J_phi]`, descending.
    pub singular_values: [T; 6],
    /// `σ_d² (JᵀJ)⁻¹`, blocks in m² (translation) and rad² (rotation).
    pub crlb: Matrix6<T>,
    /// Norm of the third column of `J_t`.
    pub j3_norm: T,
    /// Smallest eigenvalue of `H_φ`, the orientation information after
    /// eliminating translation.
    pub lambda3_h_phi: T,
    /// The altitude ceiling `h₁²‖J₃^{tag 1}‖²` when evaluated (requires the
    /// canonical frames; see [`orientation_bound`]).
    pub bound_h1: Option<T>,
}

impl<T: Real> FimReport<T> {
    /// Attach the altitude ceiling computed by [`orientation_bound`]. Note
    /// that the bound's `lambda3` is evaluated in the canonical frames,
    /// where it coincides with this report's `lambda3_h_phi` up to the
    /// body-frame choice (exactly, for pure body rotations).
    pub fn with_orientation_bound(mut self, bound: &OrientationBound<T>) -> Self {
        self.bound_h1 = Some(bound.ceiling);
        self
    }
}

/// Schur complement of the FIM eliminating translation:
/// `H_φ = J_φᵀ (I − J_t (J_tᵀJ_t)⁻¹ J_tᵀ) J_φ`, computed via a thin QR of
/// `J_t` for stability.
pub fn h_phi<T: Real>(j: &PoseJacobian<T>) -> Matrix3<T> {
    let qr = j.j_t.clone().qr();
    let q = qr.q();
    let projected = &j.j_phi - &q * (q.transpose() * &j.j_phi);
    let h = projected.transpose() * projected;
    // Symmetrize against rounding.
    Matrix3::from_fn(|r, cidx| (h[(r, cidx)] + h[(cidx, r)]) * c(0.5))
}

/// Cramér-Rao lower bound from a Jacobian and the range noise level:
/// `crlb = σ_d² (JᵀJ)⁻¹`, whose eigenvalues are `σ_d²/s_j²` for the six
/// singular values of `J`.
pub fn crlb<T: Real>(j: &PoseJacobian<T>, sigma_d: T) -> Result<FimReport<T>, FimError> {
    let full = j.full();
    let svd = full.svd(true, true);
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let singular_values: [T; 6] =
        std::array::from_fn(|k| svd.singular_values[order[k]]);

    let threshold = scaled_tol::<T>(1e-10);
    if singular_values[5] <= threshold {
        let v_t = svd.v_t.as_ref().expect("svd requested v_t");
        let dir = v_t.row(order[5]);
        return Err(FimError::RankDeficient {
            smallest_singular_value: singular_values[5].to_f64().unwrap_or(0.0),
            direction: std::array::from_fn(|k| dir[k].to_f64().unwrap_or(f64::NAN)),
        });
    }

    let v_t = svd.v_t.expect("svd requested v_t");
    let mut cov = Matrix6::<T>::zeros();
    for k in 0..6 {
        let s = svd.singular_values[k];
        let col = v_t.row(k).transpose();
        let outer = &col * col.transpose();
        cov += outer * (sigma_d * sigma_d / (s * s));
    }

    let h = h_phi(j);
    let lambda3 = h
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().expect("bounded scalar"), |a, b| a.min(b));

    Ok(FimReport {
        singular_values,
        crlb: cov,
        j3_norm: j.j_t.column(2).norm(),
        lambda3_h_phi: lambda3,
        bound_h1: None,
    })
}

// ---------------------------------------------------------------------------
// Canonical frames
// ---------------------------------------------------------------------------

/// Rigid transform taking four anchors into the canonical global frame:
/// the base face opposite the shortest altitude in z = 0, the remaining
/// anchor (the apex) above it at height z_a > 0. Returns the transform,
/// z_a, and the anchor order placing the apex last.
pub fn anchor_canonical_frame<T: Real>(
    anchors: &[Vector3<T>],
) -> Result<(Pose<T>, T, Vec<usize>), FimError> {
    if anchors.len() != 4 {
        return Err(FimError::AssumptionViolated {
            reason: format!(
                "anchor canonicalization needs exactly 4 anchors, got {}",
                anchors.len()
            ),
        });
    }
    let simplex = Simplex::new(anchors).map_err(|e| FimError::AssumptionViolated {
        reason: format!("anchor tetrahedron degenerate: {e}"),
    })?;
    let metrics = simplex_metrics(&simplex);
    let apex = (0..4)
        .min_by(|&a, &b| {
            metrics.altitudes[a]
                .partial_cmp(&metrics.altitudes[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap();
    let base: Vec<usize> = (0..4).filter(|&k| k != apex).collect();
    let order: Vec<usize> = base.iter().copied().chain([apex]).collect();

    let b0 = anchors[base[0]];
    let e1 = (anchors[base[1]] - b0).normalize();
    let mut normal = (anchors[base[1]] - b0)
        .cross(&(anchors[base[2]] - b0))
        .normalize();
    if (anchors[apex] - b0).dot(&normal) < T::zero() {
        normal = -normal;
    }
    let e2 = normal.cross(&e1);
    // Coordinates of each anchor in the right-handed frame (e1, e2, normal)
    // with origin at the base centroid.
    let centroid = (anchors[base[0]] + anchors[base[1]] + anchors[base[2]]) / c::<T>(3.0);
    let canonical: Vec<Vector3<T>> = order
        .iter()
        .map(|&k| {
            let d: Vector3<T> = anchors[k] - centroid;
            Vector3::new(d.dot(&e1), d.dot(&e2), d.dot(&normal))
        })
        .collect();
    let ordered: Vec<Vector3<T>> = order.iter().map(|&k| anchors[k]).collect();
    let transform = pose_from_correspondences(&ordered, &canonical).map_err(|e| {
        FimError::AssumptionViolated {
            reason: format!("anchor canonicalization failed: {e}"),
        }
    })?;
    let z_a = metrics.altitudes[apex];
    Ok((transform, z_a, order))
}

/// Rigid transform taking three tags into the canonical body frame: all tags
/// in z = 0, the two tags opposite the shortest altitude on the x-axis, the
/// remaining tag (tag 1) at positive y. Returns the transform, h₁, and the
/// tag order placing tag 1 first.
pub fn tag_canonical_frame<T: Real>(
    tags: &[Vector3<T>],
) -> Result<(Pose<T>, T, Vec<usize>), FimError> {
    if tags.len() != 3 {
        return Err(FimError::AssumptionViolated {
            reason: format!("tag canonicalization needs exactly 3 tags, got {}", tags.len()),
        });
    }
    let simplex = Simplex::new(tags).map_err(|e| FimError::AssumptionViolated {
        reason: format!("tag triangle degenerate: {e}"),
    })?;
    let metrics = simplex_metrics(&simplex);
    let tag1 = (0..3)
        .min_by(|&a, &b| {
            metrics.altitudes[a]
                .partial_cmp(&metrics.altitudes[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap();
    let others: Vec<usize> = (0..3).filter(|&k| k != tag1).collect();
    let order = vec![tag1, others[0], others[1]];

    let a = tags[others[0]];
    let e_x = (tags[others[1]] - a).normalize();
    let rel = tags[tag1] - a;
    let e_y = (rel - e_x * rel.dot(&e_x)).normalize();
    let e_z = e_x.cross(&e_y);
    let canonical: Vec<Vector3<T>> = order
        .iter()
        .map(|&k| {
            let d = tags[k] - a;
            Vector3::new(d.dot(&e_x), d.dot(&e_y), d.dot(&e_z))
        })
        .collect();
    let ordered: Vec<Vector3<T>> = order.iter().map(|&k| tags[k]).collect();
    let transform = pose_from_correspondences(&ordered, &canonical).map_err(|e| {
        FimError::AssumptionViolated {
            reason: format!("tag canonicalization failed: {e}"),
        }
    })?;
    let h1 = metrics.altitudes[tag1];
    Ok((transform, h1, order))
}

/// The smallest orientation-information eigenvalue and its altitude ceiling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationBound<T: Real> {
    /// `λ₃(H_φ)` evaluated in the canonical frames.
    pub lambda3: T,
    /// `h₁² ‖J_t^{tag 1} · n̂‖₂²` where `n̂` is the tag-plane normal (the
    /// rotated body z-axis). This is the pointwise form of the altitude
    /// ceiling: the tag-1 rows of `J_φ`'s first column equal
    /// `h₁ · u_1jᵀ C e₃`, so `λ₃ ≤ ‖J_φ1‖₂² = ceiling` at every pose. At
    /// identity orientation `n̂ = e₃` and the ceiling reduces to
    /// `h₁²‖J₃^{tag 1}‖₂²`, the form whose far-field value is
    /// `h₁² · 3z_a²/(4d²)`.
    pub ceiling: T,
    /// Shortest altitude of the tag triangle.
    pub h1: T,
    /// `‖J₃^{tag 1}‖₂²`: squared norm of tag 1's block of the literal third
    /// `J_t` column (global z). Coincides with `ceiling / h₁²` at identity
    /// orientation.
    pub j3_tag1_norm_sq: T,
}

/// Evaluate `λ₃(H_φ)` and its altitude ceiling with anchors and tags
/// re-expressed in their canonical frames (base anchors in z = 0 with the
/// apex at z_a; tags in z = 0 with the shortest-altitude tag first).
///
/// Requires exactly 4 anchors and 3 tags, the configuration the bound is
/// stated for.
pub fn orientation_bound<T: Real>(
    pose: &Pose<T>,
    layout: &SensorLayout<T>,
) -> Result<OrientationBound<T>, FimError> {
    let (g, _z_a, anchor_order) = anchor_canonical_frame(layout.anchors())?;
    let (b, h1, tag_order) = tag_canonical_frame(layout.tags())?;

    let anchors: Vec<Vector3<T>> = anchor_order
        .iter()
        .map(|&k| g.transform_point(&layout.anchors()[k]))
        .collect();
    let tags: Vec<Vector3<T>> = tag_order
        .iter()
        .map(|&k| b.transform_point(&layout.tags()[k]))
        .collect();
    let canonical_layout =
        SensorLayout::new(anchors, tags).map_err(|e| FimError::AssumptionViolated {
            reason: format!("canonical layout invalid: {e}"),
        })?;
    // x_canonical_G = g(pose(b⁻¹(x_canonical_B)))
    let canonical_pose = g.compose(pose).compose(&b.inverse());

    let j = assemble_jacobian(&canonical_pose, &canonical_layout)?;
    let h = h_phi(&j);
    let lambda3 = h
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().expect("bounded scalar"), |a, b| a.min(b));

    let n = canonical_layout.num_anchors();
    let tag_plane_normal = canonical_pose.rotation().column(2).into_owned();
    let mut normal_sq = T::zero();
    let mut j3_sq = T::zero();
    for row in 0..n {
        let u = Vector3::new(
            j.j_t()[(row, 0)],
            j.j_t()[(row, 1)],
            j.j_t()[(row, 2)],
        );
        let along_normal = u.dot(&tag_plane_normal);
        normal_sq += along_normal * along_normal;
        j3_sq += u.z * u.z;
    }

    Ok(OrientationBound {
        lambda3,
        ceiling: h1 * h1 * normal_sq,
        h1,
        j3_tag1_norm_sq: j3_sq,
    })
}
