//! Triangle and tetrahedron geometry: altitudes, circumradius, content, and
//! the optimality inequalities that single out regular simplexes.

use nalgebra::{Matrix3, Vector3};

use super::GeometryError;
use crate::scalar::{c, Real};

/// Default degeneracy threshold on the simplex content proxy
/// (`|6V|` in m³ for a tetrahedron, `‖e₁ × e₂‖` in m² for a triangle).
pub const DEFAULT_DEGENERACY_EPSILON: f64 = 1e-12;

/// Simplex flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexKind {
    Triangle,
    Tetrahedron,
}

/// A non-degenerate triangle (3 vertices) or tetrahedron (4 vertices) in 3-D.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex<T: Real> {
    vertices: Vec<Vector3<T>>,
}

impl<T: Real> Simplex<T> {
    /// Build a simplex from 3 or 4 vertices with the default degeneracy
    /// threshold.
    pub fn new(vertices: &[Vector3<T>]) -> Result<Self, GeometryError> {
        Self::with_epsilon(vertices, c(DEFAULT_DEGENERACY_EPSILON))
    }

    /// Build a simplex with an explicit degeneracy threshold.
    pub fn with_epsilon(vertices: &[Vector3<T>], eps: T) -> Result<Self, GeometryError> {
        match vertices.len() {
            3 => {
                let cross =
                    (vertices[1] - vertices[0]).cross(&(vertices[2] - vertices[0]));
                if cross.norm() <= eps {
                    return Err(GeometryError::DegenerateSimplex {
                        content: cross.norm().to_f64().unwrap_or(0.0),
                    });
                }
            }
            4 => {
                if six_volume(vertices).abs() <= eps {
                    return Err(GeometryError::DegenerateSimplex {
                        content: six_volume(vertices).abs().to_f64().unwrap_or(0.0),
                    });
                }
            }
            got => return Err(GeometryError::InvalidVertexCount { got }),
        }
        Ok(Self {
            vertices: vertices.to_vec(),
        })
    }

    pub fn kind(&self) -> SimplexKind {
        if self.vertices.len() == 3 {
            SimplexKind::Triangle
        } else {
            SimplexKind::Tetrahedron
        }
    }

    pub fn vertices(&self) -> &[Vector3<T>] {
        &self.vertices
    }
}

/// Signed volume times six of the tetrahedron spanned by four points.
fn six_volume<T: Real>(v: &[Vector3<T>]) -> T {
    Matrix3::from_columns(&[v[1] - v[0], v[2] - v[0], v[3] - v[0]]).determinant()
}

/// Per-simplex geometric summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexMetrics<T: Real> {
    /// Altitude from each vertex to the opposite edge (triangle) or face
    /// (tetrahedron), in vertex order.
    pub altitudes: Vec<T>,
    /// Radius of the circumscribed circle / sphere.
    pub circumradius: T,
    /// Area (m², triangle) or volume (m³, tetrahedron).
    pub content: T,
}

/// Altitudes, circumradius and content of a simplex.
pub fn simplex_metrics<T: Real>(s: &Simplex<T>) -> SimplexMetrics<T> {
    let v = s.vertices();
    match s.kind() {
        SimplexKind::Triangle => {
            let area = (v[1] - v[0]).cross(&(v[2] - v[0])).norm() * c(0.5);
            let two = c::<T>(2.0);
            let altitudes = (0..3)
                .map(|i| {
                    let opposite = (v[(i + 2) % 3] - v[(i + 1) % 3]).norm();
                    two * area / opposite
                })
                .collect();
            let a = (v[1] - v[0]).norm();
            let b = (v[2] - v[1]).norm();
            let cc = (v[0] - v[2]).norm();
            SimplexMetrics {
                altitudes,
                circumradius: a * b * cc / (c::<T>(4.0) * area),
                content: area,
            }
        }
        SimplexKind::Tetrahedron => {
            let volume = six_volume(v).abs() / c(6.0);
            let three = c::<T>(3.0);
            let altitudes = (0..4)
                .map(|i| {
                    let f: Vec<Vector3<T>> =
                        (0..4).filter(|&j| j != i).map(|j| v[j]).collect();
                    let face_area = (f[1] - f[0]).cross(&(f[2] - f[0])).norm() * c(0.5);
                    three * volume / face_area
                })
                .collect();
            SimplexMetrics {
                altitudes,
                circumradius: tetrahedron_circumradius(v),
                content: volume,
            }
        }
    }
}

/// Circumradius via the linear system `2(vⱼ − v₀)·c = ‖vⱼ‖² − ‖v₀‖²`.
fn tetrahedron_circumradius<T: Real>(v: &[Vector3<T>]) -> T {
    let a = Matrix3::from_rows(&[
        ((v[1] - v[0]) * c::<T>(2.0)).transpose(),
        ((v[2] - v[0]) * c::<T>(2.0)).transpose(),
        ((v[3] - v[0]) * c::<T>(2.0)).transpose(),
    ]);
    let b = Vector3::new(
        v[1].norm_squared() - v[0].norm_squared(),
        v[2].norm_squared() - v[0].norm_squared(),
        v[3].norm_squared() - v[0].norm_squared(),
    );
    let center = a
        .lu()
        .solve(&b)
        .expect("non-degenerate tetrahedron has a circumcenter");
    (center - v[0]).norm()
}

/// Nonnegative slacks of the regularity inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalitySlacks<T: Real> {
    /// Tetrahedron: `(64/9)R² − Σhᵢ²`. Triangle: `(27/4)R² − Σhᵢ²`.
    pub sum_h_sq_slack: T,
    /// Tetrahedron: `V − (√3/8)(h₁h₂h₃h₄)^(3/4)`.
    /// Triangle: `√3·S − (h₁h₂h₃)^(2/3)`.
    pub content_slack: T,
}

/// Evaluate the altitude/circumradius and content inequalities; both slacks
/// are zero exactly when the simplex is regular.
///
/// The radical exponents (3/4 for the tetrahedron product, 2/3 for the
/// triangle product) are the dimension-consistent readings; they are
/// verified numerically to reach equality on regular simplexes by this
/// crate's test suite.
pub fn check_simplex_optimality<T: Real>(s: &Simplex<T>) -> OptimalitySlacks<T> {
    let m = simplex_metrics(s);
    let sum_h_sq = m
        .altitudes
        .iter()
        .fold(T::zero(), |acc, h| acc + *h * *h);
    let h_product: T = m.altitudes.iter().copied().fold(T::one(), |a, b| a * b);
    match s.kind() {
        SimplexKind::Triangle => OptimalitySlacks {
            sum_h_sq_slack: c::<T>(27.0 / 4.0) * m.circumradius * m.circumradius - sum_h_sq,
            content_slack: c::<T>(3.0).sqrt() * m.content - h_product.powf(c(2.0 / 3.0)),
        },
        SimplexKind::Tetrahedron => OptimalitySlacks {
            sum_h_sq_slack: c::<T>(64.0 / 9.0) * m.circumradius * m.circumradius - sum_h_sq,
            content_slack: m.content
                - c::<T>(3.0).sqrt() / c::<T>(8.0) * h_product.powf(c(3.0 / 4.0)),
        },
    }
}

/// Regular triangle or tetrahedron with the given circumradius.
///
/// The triangle lies in the z = 0 plane centered on the origin, first vertex
/// on the +x axis. The tetrahedron has its circumcenter at the origin, a
/// horizontal base, and the fourth vertex (the apex) on the +z axis.
pub fn regular_layout<T: Real>(kind: SimplexKind, circumradius: T) -> Simplex<T> {
    assert!(
        circumradius > T::zero(),
        "circumradius must be positive"
    );
    let r = circumradius;
    let vertices = match kind {
        SimplexKind::Triangle => (0..3)
            .map(|i| {
                let angle = c::<T>(2.0) * T::pi() * c(i as f64) / c(3.0);
                Vector3::new(r * angle.cos(), r * angle.sin(), T::zero())
            })
            .collect::<Vec<_>>(),
        SimplexKind::Tetrahedron => {
            // Base at z = -R/3 with horizontal radius 2√2/3 · R, apex at +R.
            let base_z = -r / c(3.0);
            let base_r = r * c::<T>(8.0).sqrt() / c(3.0);
            let mut v: Vec<Vector3<T>> = (0..3)
                .map(|i| {
                    let angle = c::<T>(2.0) * T::pi() * c(i as f64) / c(3.0);
                    Vector3::new(base_r * angle.cos(), base_r * angle.sin(), base_z)
                })
                .collect();
            v.push(Vector3::new(T::zero(), T::zero(), r));
            v
        }
    };
    Simplex::new(&vertices).expect("regular simplex is never degenerate")
}
