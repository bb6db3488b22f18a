//! Rotation matrices, the so(3) hat/vee maps and the exponential/logarithm
//! between axis-angle vectors and rotation matrices.

use nalgebra::{Matrix3, Vector3};

use super::GeometryError;
use crate::scalar::{c, scaled_tol, Real};

/// A rigid-body transform: `x_global = rotation * x_body + translation`.
///
/// The rotation block is validated on construction: `RᵀR − I` and
/// `det(R) − 1` must both be below 1e-9 (widened to a small multiple of
/// machine epsilon for narrower scalar types).
#[derive(Debug, Clone, PartialEq)]
pub struct Pose<T: Real> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
}

impl<T: Real> Pose<T> {
    /// Build a pose, checking the rotation invariants.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self, GeometryError> {
        let defect = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        let tol = scaled_tol::<T>(1e-9);
        if defect > tol || (det - T::one()).abs() > tol {
            return Err(GeometryError::NotARotation {
                orthogonality_defect: defect.to_f64().unwrap_or(f64::NAN),
                det: det.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Identity transform.
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Pose from an axis-angle rotation vector and a translation.
    pub fn from_parts(phi: &AxisAngle<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation: exp_so3(phi),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    /// The rotation as its axis-angle vector (principal branch).
    pub fn axis_angle(&self) -> AxisAngle<T> {
        log_so3(&self.rotation).expect("pose rotation is valid by construction")
    }

    /// Map a point from the body frame into the global frame.
    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    /// Composition: `(self ∘ other)(x) = self(other(x))`.
    pub fn compose(&self, other: &Pose<T>) -> Pose<T> {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Inverse transform.
    pub fn inverse(&self) -> Pose<T> {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Right-multiplicative retraction used by the pose solver:
    /// translation moves additively, rotation by `R · exp(δφ)`, i.e. the
    /// perturbation lives in the body frame. A left-multiplicative update
    /// (`exp(δφ)·R`, world-frame perturbation) differs by the adjoint:
    /// `R·exp(δφ) = exp(R δφ)·R`.
    pub fn retract(&self, dt: &Vector3<T>, dphi: &Vector3<T>) -> Pose<T> {
        Pose {
            rotation: self.rotation * exp_so3(&AxisAngle::new(*dphi)),
            translation: self.translation + dt,
        }
    }
}

/// An so(3) element: rotation axis scaled by the angle in radians.
///
/// The logarithm map returns the principal branch, `‖phi‖ ≤ π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle<T: Real> {
    phi: Vector3<T>,
}

impl<T: Real> AxisAngle<T> {
    pub fn new(phi: Vector3<T>) -> Self {
        Self { phi }
    }

    pub fn zero() -> Self {
        Self {
            phi: Vector3::zeros(),
        }
    }

    pub fn vector(&self) -> &Vector3<T> {
        &self.phi
    }

    /// Rotation angle, `‖phi‖`.
    pub fn angle(&self) -> T {
        self.phi.norm()
    }
}

/// Skew-symmetric (wedge) matrix of a 3-vector: `hat(v) * w = v × w`.
pub fn hat<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

/// Inverse of [`hat`]: extract the 3-vector from a skew-symmetric matrix.
pub fn vee<T: Real>(m: &Matrix3<T>) -> Result<Vector3<T>, GeometryError> {
    let asym = (m + m.transpose()).abs().max();
    if asym > scaled_tol::<T>(1e-9) {
        return Err(GeometryError::NonSkewInput {
            max_asymmetry: asym.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]))
}

/// Rodrigues exponential map so(3) → SO(3), with a second-order Taylor
/// fallback below `‖phi‖ = 1e-6` where the closed-form coefficients lose
/// precision.
pub fn exp_so3<T: Real>(phi: &AxisAngle<T>) -> Matrix3<T> {
    let theta = phi.angle();
    let k = hat(phi.vector());
    let (a, b) = if theta < c(1e-6) {
        let t2 = theta * theta;
        // sin θ / θ and (1 − cos θ) / θ² expanded to O(θ⁴)
        (T::one() - t2 / c(6.0), c::<T>(0.5) - t2 / c(24.0))
    } else {
        let t2 = theta * theta;
        (theta.sin() / theta, (T::one() - theta.cos()) / t2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Logarithm map SO(3) → so(3), principal branch (`‖phi‖ ≤ π`).
///
/// Near θ = π the antisymmetric part of `R` vanishes, so the axis is
/// recovered from the symmetric part `(R + I)/2 = a aᵀ` instead; at exactly
/// π, where ±axis are equivalent, the representative with its first nonzero
/// component positive is returned.
pub fn log_so3<T: Real>(r: &Matrix3<T>) -> Result<AxisAngle<T>, GeometryError> {
    // Reuse the Pose validation for the rotation invariants.
    let defect = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = r.determinant();
    let tol = scaled_tol::<T>(1e-9);
    if defect > tol || (det - T::one()).abs() > tol {
        return Err(GeometryError::NotARotation {
            orthogonality_defect: defect.to_f64().unwrap_or(f64::NAN),
            det: det.to_f64().unwrap_or(f64::NAN),
        });
    }

    let half = c::<T>(0.5);
    let cos_theta = ((r.trace() - T::one()) * half).clamp(-T::one(), T::one());
    let theta = cos_theta.acos();
    let w = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    ) * half; // = sin θ · axis

    if theta < c(1e-6) {
        // sin θ ≈ θ: w already is phi to second order.
        return Ok(AxisAngle::new(w));
    }

    if T::pi() - theta > c(1e-4) {
        return Ok(AxisAngle::new(w * (theta / theta.sin())));
    }

    // θ → π branch: (R + I)/2 = a aᵀ. Take the column with the largest
    // diagonal entry and normalize.
    let s = (r + Matrix3::identity()) * half;
    let mut best = 0;
    for i in 1..3 {
        if s[(i, i)] > s[(best, best)] {
            best = i;
        }
    }
    let mut axis = s.column(best) / s[(best, best)].sqrt();
    // Orient the axis: consistent with the antisymmetric part when it is
    // meaningful, otherwise first nonzero component positive.
    let dot = axis.dot(&w);
    if dot.abs() > T::eps() * c(64.0) {
        if dot < T::zero() {
            axis = -axis;
        }
    } else {
        for i in 0..3 {
            if axis[i].abs() > T::eps() * c(64.0) {
                if axis[i] < T::zero() {
                    axis = -axis;
                }
                break;
            }
        }
    }
    Ok(AxisAngle::new(axis * theta))
}
