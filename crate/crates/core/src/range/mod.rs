//! TOA range measurement model between tags on the tracked node and anchors
//! on the host node, Gaussian noise injection, and the coplanar-anchor
//! mirror ambiguity.

mod noise;

pub use noise::{derive_seed, SplitMix64};

use nalgebra::{Matrix3, Vector3};

use crate::geometry::Pose;
use crate::scalar::{c, Real};

/// Anchor positions in the host (global) frame and tag positions in the
/// tracked node's body frame.
///
/// Throughout the crate, index `i` runs over tags and `j` over anchors;
/// stacked measurement vectors are row-major by tag then anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorLayout<T: Real> {
    anchors_g: Vec<Vector3<T>>,
    tags_b: Vec<Vector3<T>>,
}

impl<T: Real> SensorLayout<T> {
    /// Validate that no two anchors and no two tags coincide
    /// (minimum pairwise distance 1e-6 m).
    pub fn new(
        anchors_g: Vec<Vector3<T>>,
        tags_b: Vec<Vector3<T>>,
    ) -> Result<Self, RangeError> {
        if anchors_g.is_empty() || tags_b.is_empty() {
            return Err(RangeError::InvalidLayout {
                reason: "need at least one anchor and one tag".into(),
            });
        }
        let min_sep: T = c(1e-6);
        for (name, pts) in [("anchors", &anchors_g), ("tags", &tags_b)] {
            for a in 0..pts.len() {
                for b in (a + 1)..pts.len() {
                    if (pts[a] - pts[b]).norm() <= min_sep {
                        return Err(RangeError::InvalidLayout {
                            reason: format!("{name} {a} and {b} coincide"),
                        });
                    }
                }
            }
        }
        Ok(Self { anchors_g, tags_b })
    }

    pub fn anchors(&self) -> &[Vector3<T>] {
        &self.anchors_g
    }

    pub fn tags(&self) -> &[Vector3<T>] {
        &self.tags_b
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors_g.len()
    }

    pub fn num_tags(&self) -> usize {
        self.tags_b.len()
    }

    /// Number of range measurements, `m · n`.
    pub fn num_ranges(&self) -> usize {
        self.anchors_g.len() * self.tags_b.len()
    }
}

/// Stacked tag-to-anchor distances, row-major by tag then anchor, plus the
/// noise standard deviation they carry.
///
/// Noiseless generation yields strictly positive entries; noisy sets are
/// passed through unclamped, so entries can go nonpositive when a distance
/// is comparable to `sigma` (outside the operating regime of interest).
#[derive(Debug, Clone, PartialEq)]
pub struct RangeSet<T: Real> {
    values: Vec<T>,
    sigma: T,
}

impl<T: Real> RangeSet<T> {
    pub fn new(values: Vec<T>, sigma: T) -> Self {
        Self { values, sigma }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Entry for tag `i`, anchor `j` given `n` anchors per tag.
    pub fn get(&self, tag: usize, anchor: usize, num_anchors: usize) -> T {
        self.values[tag * num_anchors + anchor]
    }
}

/// Errors from the range model.
#[derive(Debug, Clone, PartialEq)]
pub enum RangeError {
    /// Layout invariants violated (coincident sensors, empty sets).
    InvalidLayout { reason: String },
    /// The anchors are not coplanar, so the mirror ambiguity does not exist.
    NoCoplanarPlane { singular_value_ratio: f64 },
    /// A range vector's length does not match the layout.
    LengthMismatch { expected: usize, got: usize },
}

impl std::fmt::Display for RangeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RangeError::InvalidLayout { reason } => write!(f, "invalid layout: {reason}"),
            RangeError::NoCoplanarPlane {
                singular_value_ratio,
            } => write!(
                f,
                "anchors are not coplanar (plane-fit singular value ratio {singular_value_ratio:.3e}); the mirror ambiguity does not exist"
            ),
            RangeError::LengthMismatch { expected, got } => {
                write!(f, "range vector has {got} entries, layout requires {expected}")
            }
        }
    }
}

impl std::error::Error for RangeError {}

/// Noiseless ranges for a pose: entry (i, j) is the distance from
/// transformed tag i to anchor j.
pub fn range_vector<T: Real>(pose: &Pose<T>, layout: &SensorLayout<T>) -> RangeSet<T> {
    let mut values = Vec::with_capacity(layout.num_ranges());
    for tag in layout.tags() {
        let q = pose.transform_point(tag);
        for anchor in layout.anchors() {
            values.push((q - anchor).norm());
        }
    }
    RangeSet::new(values, T::zero())
}

/// Add i.i.d. Gaussian noise `N(0, sigma²)` to each range. Deterministic for
/// a given seed; the result's `sigma` field records the injected level.
pub fn add_noise<T: Real>(ranges: &RangeSet<T>, sigma: T, seed: u64) -> RangeSet<T> {
    assert!(sigma >= T::zero(), "sigma must be nonnegative");
    let mut rng = SplitMix64::new(seed);
    let values = ranges
        .values()
        .iter()
        .map(|&d| d + sigma * c::<T>(rng.next_standard_normal()))
        .collect();
    RangeSet::new(values, sigma)
}

/// Best-fit plane through a point set: (centroid, unit normal, ratio of
/// smallest to largest singular value of the centered matrix).
pub(crate) fn fit_plane<T: Real>(points: &[Vector3<T>]) -> (Vector3<T>, Vector3<T>, T) {
    let k = points.len();
    let centroid = points.iter().fold(Vector3::<T>::zeros(), |a, p| a + p) / c::<T>(k as f64);
    let mut cov = Matrix3::<T>::zeros();
    for p in points {
        let d: Vector3<T> = p - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    // Orders of the eigenvalues of the covariance; singular values of the
    // centered matrix are their square roots.
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let s_max = eig.eigenvalues[idx[0]].max(T::zero()).sqrt();
    let s_min = eig.eigenvalues[idx[2]].max(T::zero()).sqrt();
    let normal = eig.eigenvectors.column(idx[2]).into_owned();
    let ratio = if s_max > T::zero() {
        s_min / s_max
    } else {
        T::zero()
    };
    (centroid, normal.normalize(), ratio)
}

/// Reflect a point through the plane `(point_on_plane, unit_normal)`.
fn reflect<T: Real>(p: &Vector3<T>, on_plane: &Vector3<T>, normal: &Vector3<T>) -> Vector3<T> {
    let h = (p - on_plane).dot(normal);
    p - normal * (h + h)
}

/// The pose reflected through the anchors' common plane, with handedness
/// restored; its ranges equal the input pose's ranges whenever the tag
/// constellation is planar (always true for the minimal 3-tag setup).
///
/// Coplanarity test: smallest singular value of the centered anchor matrix
/// below 1e-9 of the largest. Non-coplanar anchors mean the ambiguity does
/// not exist and `NoCoplanarPlane` is returned.
pub fn mirror_pose<T: Real>(
    pose: &Pose<T>,
    layout: &SensorLayout<T>,
) -> Result<Pose<T>, RangeError> {
    let (centroid, normal, ratio) = fit_plane(layout.anchors());
    // A single anchor gives a zero centered matrix; any plane through it
    // works, including the one fit_plane picked.
    if layout.num_anchors() > 1 && ratio >= c(1e-9) {
        return Err(RangeError::NoCoplanarPlane {
            singular_value_ratio: ratio.to_f64().unwrap_or(f64::NAN),
        });
    }

    let reflected: Vec<Vector3<T>> = layout
        .tags()
        .iter()
        .map(|p| reflect(&pose.transform_point(p), &centroid, &normal))
        .collect();

    // Refit a proper rigid transform tag_B -> reflected position. With at
    // least 3 non-collinear tags this is the exact mirror pose; degenerate
    // tag sets fall back to composing the two plane reflections directly
    // (global anchor plane, body tag plane), which is proper by construction.
    if let Ok(pose) = crate::estimator::pose_from_correspondences(layout.tags(), &reflected) {
        return Ok(pose);
    }
    let (tag_centroid, tag_normal, _) = fit_plane(layout.tags());
    let g = Matrix3::<T>::identity() - normal * normal.transpose() * c::<T>(2.0);
    let b = Matrix3::<T>::identity() - tag_normal * tag_normal.transpose() * c::<T>(2.0);
    let rotation = g * pose.rotation() * b;
    // Translation fixed by mapping the tag centroid's image correctly:
    // x ↦ G(T(B(x - c_b) + c_b)) + reflection offset of the anchor plane.
    let offset = normal * (centroid.dot(&normal) + centroid.dot(&normal));
    let t_b = tag_centroid - b * tag_centroid;
    let translation = g * (pose.rotation() * t_b + pose.translation()) + offset;
    Ok(Pose::new(rotation, translation).expect("composition of reflections is proper"))
}
