//! Rigid-body transforms, so(3) maps and simplex (triangle / tetrahedron)
//! geometry, including the altitude/circumradius optimality inequalities
//! used to justify regular sensor layouts.

mod rotation;
mod simplex;

pub use rotation::{exp_so3, hat, log_so3, vee, AxisAngle, Pose};
pub use simplex::{
    check_simplex_optimality, regular_layout, simplex_metrics, OptimalitySlacks, Simplex,
    SimplexKind, SimplexMetrics, DEFAULT_DEGENERACY_EPSILON,
};

/// Errors from geometric constructors and operations.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometryError {
    /// `vee` was given a matrix whose antisymmetry defect exceeds tolerance.
    NonSkewInput { max_asymmetry: f64 },
    /// A matrix failed the rotation invariants (orthogonal, det = +1).
    NotARotation { orthogonality_defect: f64, det: f64 },
    /// Simplex vertices are collinear (triangle) or coplanar (tetrahedron).
    DegenerateSimplex { content: f64 },
    /// A simplex must have exactly 3 or 4 vertices.
    InvalidVertexCount { got: usize },
}

impl std::fmt::Display for GeometryError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeometryError::NonSkewInput { max_asymmetry } => {
                write!(f, "matrix is not skew-symmetric (defect {max_asymmetry:.3e})")
            }
            GeometryError::NotARotation {
                orthogonality_defect,
                det,
            } => write!(
                f,
                "matrix is not a rotation (orthogonality defect {orthogonality_defect:.3e}, det {det:.6})"
            ),
            GeometryError::DegenerateSimplex { content } => {
                write!(f, "degenerate simplex (content {content:.3e})")
            }
            GeometryError::InvalidVertexCount { got } => {
                write!(f, "simplex needs 3 or 4 vertices, got {got}")
            }
        }
    }
}

impl std::error::Error for GeometryError {}
