//! Nonlinear least-squares solvers: single-point trilateration, full pose
//! estimation by Levenberg-Marquardt on (translation, so(3)), and the
//! two-stage tag-position bootstrap used for initialization.

mod lm;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::fim;
use crate::geometry::Pose;
use crate::range::{fit_plane, RangeSet, SensorLayout};
use crate::scalar::{c, Real};

/// Levenberg-Marquardt settings; every knob of the damping schedule and
/// all stopping tolerances are exposed here.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T: Real> {
    pub max_iterations: usize,
    /// Stop when `‖Jᵀr‖₂` falls below this.
    pub gradient_tolerance: T,
    /// Stop when an accepted step is shorter than this.
    pub step_tolerance: T,
    pub initial_damping: T,
    pub damping_up: T,
    pub damping_down: T,
    /// Reject layouts that cannot determine a unique pose (fewer than 3
    /// non-collinear tags or 4 non-coplanar anchors). Disable to reproduce
    /// ambiguity experiments.
    pub degeneracy_guard: bool,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            // The attainable gradient floor on a noisy range problem is
            // sqrt(ulp(cost)·λ(JᵀJ)) ≈ 2e-8 in f64 for unlucky draws; 1e-7
            // sits above it while staying six orders below the measurement
            // scale.
            gradient_tolerance: c(1e-7),
            step_tolerance: c(1e-12),
            initial_damping: c(1e-3),
            damping_up: c(10.0),
            damping_down: c(0.1),
            degeneracy_guard: true,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    fn validate(&self) -> Result<(), EstimatorError<T>> {
        let ok = self.max_iterations >= 1
            && self.gradient_tolerance > T::zero()
            && self.step_tolerance > T::zero()
            && self.initial_damping > T::zero()
            && self.damping_up > T::one()
            && self.damping_down > T::zero()
            && self.damping_down < T::one();
        if ok {
            Ok(())
        } else {
            Err(EstimatorError::InvalidInput {
                reason: "solver config out of range".into(),
            })
        }
    }
}

/// Result of a pose solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate<T: Real> {
    pub pose: Pose<T>,
    pub converged: bool,
    pub iterations: usize,
    /// Sum of squared range residuals (m²) at the solution.
    pub final_cost: T,
    /// (m·n) × 6 Jacobian at the solution, columns [translation | so(3)].
    pub jacobian_at_solution: DMatrix<T>,
    /// Cost after each accepted step; non-increasing.
    pub cost_history: Vec<T>,
}

/// Result of a point trilateration.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate<T: Real> {
    pub point: Vector3<T>,
    pub converged: bool,
    pub iterations: usize,
    /// Sum of squared range residuals (m²) at the solution.
    pub final_cost: T,
}

/// Errors from the solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorError<T: Real> {
    /// Iteration cap hit with the gradient still above tolerance; the best
    /// estimate found is carried along.
    DidNotConverge(Box<PoseEstimate<T>>),
    /// Trilateration counterpart of `DidNotConverge`.
    PointDidNotConverge(Box<PointEstimate<T>>),
    /// Anchors collinear: the point problem has a rotational ambiguity.
    DegenerateGeometry { reason: String },
    /// Layout cannot determine a unique pose (guard enabled).
    DegenerateLayout { reason: String },
    /// Correspondence points are collinear.
    CollinearPoints,
    /// Mismatched lengths, too few measurements, bad config.
    InvalidInput { reason: String },
}

impl<T: Real> std::fmt::Display for EstimatorError<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorError::DidNotConverge(est) => write!(
                f,
                "did not converge after {} iterations (cost {:.6e})",
                est.iterations,
                est.final_cost.to_f64().unwrap_or(f64::NAN)
            ),
            EstimatorError::PointDidNotConverge(est) => write!(
                f,
                "trilateration did not converge after {} iterations (cost {:.6e})",
                est.iterations,
                est.final_cost.to_f64().unwrap_or(f64::NAN)
            ),
            EstimatorError::DegenerateGeometry { reason } => {
                write!(f, "degenerate geometry: {reason}")
            }
            EstimatorError::DegenerateLayout { reason } => {
                write!(f, "degenerate layout: {reason}")
            }
            EstimatorError::CollinearPoints => write!(f, "correspondence points are collinear"),
            EstimatorError::InvalidInput { reason } => write!(f, "invalid input: {reason}"),
        }
    }
}

impl<T: Real> std::error::Error for EstimatorError<T> {}

/// Singular-value ratio threshold below which a point set counts as
/// collinear / coplanar for the degeneracy guards.
const GUARD_SV_RATIO: f64 = 1e-6;

/// Ratios s₂/s₁ and s₃/s₁ of the centered coordinate matrix of a point set.
fn spread_ratios<T: Real>(points: &[Vector3<T>]) -> (T, T) {
    let k = points.len();
    let centroid = points.iter().fold(Vector3::<T>::zeros(), |a, p| a + p) / c::<T>(k as f64);
    let mut cov = Matrix3::<T>::zeros();
    for p in points {
        let d: Vector3<T> = p - centroid;
        cov += d * d.transpose();
    }
    let mut ev: Vec<T> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let s: Vec<T> = ev.iter().map(|e| e.max(T::zero()).sqrt()).collect();
    if s[0] <= T::zero() {
        (T::zero(), T::zero())
    } else {
        (s[1] / s[0], s[2] / s[0])
    }
}

fn points_collinear<T: Real>(points: &[Vector3<T>]) -> bool {
    points.len() < 3 || spread_ratios(points).0 < c(GUARD_SV_RATIO)
}

fn points_coplanar<T: Real>(points: &[Vector3<T>]) -> bool {
    points.len() < 4 || spread_ratios(points).1 < c(GUARD_SV_RATIO)
}

/// Non-degeneracy check shared by `solve_pose` and `initial_guess`.
fn check_layout<T: Real>(layout: &SensorLayout<T>) -> Result<(), EstimatorError<T>> {
    if layout.num_tags() < 3 || points_collinear(layout.tags()) {
        return Err(EstimatorError::DegenerateLayout {
            reason: "need at least 3 non-collinear tags".into(),
        });
    }
    if layout.num_anchors() < 4 || points_coplanar(layout.anchors()) {
        return Err(EstimatorError::DegenerateLayout {
            reason: "need at least 4 non-coplanar anchors".into(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Trilateration
// ---------------------------------------------------------------------------

struct PointProblem<'a, T: Real> {
    anchors: &'a [Vector3<T>],
    distances: &'a [T],
}

impl<T: Real> lm::LmProblem<T> for PointProblem<'_, T> {
    type State = Vector3<T>;

    fn dim(&self) -> usize {
        3
    }

    fn residuals(&self, x: &Self::State) -> DVector<T> {
        DVector::from_iterator(
            self.anchors.len(),
            self.anchors
                .iter()
                .zip(self.distances)
                .map(|(a, &d)| (x - a).norm() - d),
        )
    }

    fn jacobian(&self, x: &Self::State) -> DMatrix<T> {
        let mut j = DMatrix::zeros(self.anchors.len(), 3);
        for (row, a) in self.anchors.iter().enumerate() {
            let diff = x - a;
            let d = diff.norm().max(c(1e-15));
            j.set_row(row, &(diff / d).transpose());
        }
        j
    }

    fn apply_step(&self, x: &Self::State, dx: &DVector<T>) -> Self::State {
        x + Vector3::new(dx[0], dx[1], dx[2])
    }
}

/// Locate a point from anchor positions and measured distances, starting at
/// `init`, by Levenberg-Marquardt on `Σᵢ (dᵢ − ‖p − pᵃᵢ‖)²`.
pub fn trilaterate<T: Real>(
    anchors: &[Vector3<T>],
    distances: &[T],
    init: &Vector3<T>,
    cfg: &SolverConfig<T>,
) -> Result<PointEstimate<T>, EstimatorError<T>> {
    cfg.validate()?;
    if anchors.len() < 3 {
        return Err(EstimatorError::InvalidInput {
            reason: format!("need at least 3 anchors, got {}", anchors.len()),
        });
    }
    if anchors.len() != distances.len() {
        return Err(EstimatorError::InvalidInput {
            reason: format!(
                "{} anchors but {} distances",
                anchors.len(),
                distances.len()
            ),
        });
    }
    if points_collinear(anchors) {
        return Err(EstimatorError::DegenerateGeometry {
            reason: "anchors are collinear".into(),
        });
    }

    let problem = PointProblem { anchors, distances };
    let out = lm::minimize(&problem, *init, cfg);
    let estimate = PointEstimate {
        point: out.state,
        converged: out.converged,
        iterations: out.iterations,
        final_cost: out.final_cost,
    };
    if estimate.converged {
        Ok(estimate)
    } else {
        Err(EstimatorError::PointDidNotConverge(Box::new(estimate)))
    }
}

// ---------------------------------------------------------------------------
// Rigid alignment (orthogonal Procrustes with det +1)
// ---------------------------------------------------------------------------

/// Least-squares rigid transform aligning `points_b` onto `points_g`
/// (Kabsch algorithm, proper rotation enforced).
pub fn pose_from_correspondences<T: Real>(
    points_b: &[Vector3<T>],
    points_g: &[Vector3<T>],
) -> Result<Pose<T>, EstimatorError<T>> {
    if points_b.len() != points_g.len() || points_b.len() < 3 {
        return Err(EstimatorError::InvalidInput {
            reason: format!(
                "need matching point sets of at least 3, got {} and {}",
                points_b.len(),
                points_g.len()
            ),
        });
    }
    if points_collinear(points_b) || points_collinear(points_g) {
        return Err(EstimatorError::CollinearPoints);
    }

    let k = c::<T>(points_b.len() as f64);
    let cb = points_b.iter().fold(Vector3::<T>::zeros(), |a, p| a + p) / k;
    let cg = points_g.iter().fold(Vector3::<T>::zeros(), |a, p| a + p) / k;

    let mut h = Matrix3::<T>::zeros();
    for (b, g) in points_b.iter().zip(points_g) {
        h += (b - cb) * (g - cg).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let d = (v_t.transpose() * u.transpose()).determinant();
    let sign = if d < T::zero() { -T::one() } else { T::one() };
    let fix = Matrix3::from_diagonal(&Vector3::new(T::one(), T::one(), sign));
    let rotation = v_t.transpose() * fix * u.transpose();
    let translation = cg - rotation * cb;
    Pose::new(rotation, translation).map_err(|_| EstimatorError::InvalidInput {
        reason: "alignment produced an invalid rotation".into(),
    })
}

// ---------------------------------------------------------------------------
// Pose solve
// ---------------------------------------------------------------------------

struct PoseProblem<'a, T: Real> {
    layout: &'a SensorLayout<T>,
    measured: &'a [T],
}

impl<T: Real> lm::LmProblem<T> for PoseProblem<'_, T> {
    type State = Pose<T>;

    fn dim(&self) -> usize {
        6
    }

    fn residuals(&self, x: &Self::State) -> DVector<T> {
        let predicted = crate::range::range_vector(x, self.layout);
        DVector::from_iterator(
            self.measured.len(),
            predicted
                .values()
                .iter()
                .zip(self.measured)
                .map(|(&p, &m)| p - m),
        )
    }

    fn jacobian(&self, x: &Self::State) -> DMatrix<T> {
        fim::pose_jacobian_clamped(x, self.layout).full()
    }

    fn apply_step(&self, x: &Self::State, dx: &DVector<T>) -> Self::State {
        x.retract(
            &Vector3::new(dx[0], dx[1], dx[2]),
            &Vector3::new(dx[3], dx[4], dx[5]),
        )
    }
}

/// Full 6-DOF pose estimate minimizing the stacked squared range residuals.
/// The rotation update is right-multiplicative (`C ← C·exp(δφ)`), the
/// translation update additive.
pub fn solve_pose<T: Real>(
    layout: &SensorLayout<T>,
    ranges: &RangeSet<T>,
    init: &Pose<T>,
    cfg: &SolverConfig<T>,
) -> Result<PoseEstimate<T>, EstimatorError<T>> {
    cfg.validate()?;
    if ranges.len() != layout.num_ranges() {
        return Err(EstimatorError::InvalidInput {
            reason: format!(
                "range vector has {} entries, layout requires {}",
                ranges.len(),
                layout.num_ranges()
            ),
        });
    }
    if layout.num_ranges() < 6 {
        return Err(EstimatorError::InvalidInput {
            reason: format!(
                "pose has 6 degrees of freedom but only {} measurements",
                layout.num_ranges()
            ),
        });
    }
    if cfg.degeneracy_guard {
        check_layout(layout)?;
    }

    let problem = PoseProblem {
        layout,
        measured: ranges.values(),
    };
    let out = lm::minimize(&problem, init.clone(), cfg);
    let estimate = PoseEstimate {
        pose: out.state,
        converged: out.converged,
        iterations: out.iterations,
        final_cost: out.final_cost,
        jacobian_at_solution: out.jacobian,
        cost_history: out.cost_history,
    };
    if estimate.converged {
        Ok(estimate)
    } else {
        Err(EstimatorError::DidNotConverge(Box::new(estimate)))
    }
}

// ---------------------------------------------------------------------------
// Two-stage initialization
// ---------------------------------------------------------------------------

/// Closed-form linearized multilateration: subtracting the first range
/// equation from the rest leaves a linear system in the point. Solved by
/// SVD with a rank cutoff so coplanar anchor sets yield the in-plane part.
fn linear_multilateration<T: Real>(anchors: &[Vector3<T>], distances: &[T]) -> Vector3<T> {
    let n = anchors.len();
    let mut a = DMatrix::<T>::zeros(n - 1, 3);
    let mut b = DVector::<T>::zeros(n - 1);
    for j in 1..n {
        let row = (anchors[j] - anchors[0]) * c::<T>(2.0);
        a.set_row(j - 1, &row.transpose());
        b[j - 1] = anchors[j].norm_squared() - anchors[0].norm_squared()
            - (distances[j] * distances[j] - distances[0] * distances[0]);
    }
    let svd = a.svd(true, true);
    let cutoff = svd.singular_values.max() * c(1e-9);
    svd.solve(&b, cutoff)
        .map(|x| Vector3::new(x[0], x[1], x[2]))
        .unwrap_or_else(|_| {
            anchors.iter().fold(Vector3::<T>::zeros(), |acc, p| acc + p) / c::<T>(n as f64)
        })
}

/// Initial pose from ranges alone: trilaterate each tag's global position
/// (two starts mirrored through the anchor best-fit plane, keep the lower
/// cost), then align the body-frame tags onto those positions.
pub fn initial_guess<T: Real>(
    layout: &SensorLayout<T>,
    ranges: &RangeSet<T>,
    cfg: &SolverConfig<T>,
) -> Result<Pose<T>, EstimatorError<T>> {
    cfg.validate()?;
    if ranges.len() != layout.num_ranges() {
        return Err(EstimatorError::InvalidInput {
            reason: format!(
                "range vector has {} entries, layout requires {}",
                ranges.len(),
                layout.num_ranges()
            ),
        });
    }
    check_layout(layout)?;

    let n = layout.num_anchors();
    let (plane_point, plane_normal, _) = fit_plane(layout.anchors());
    let mut tag_positions = Vec::with_capacity(layout.num_tags());

    for i in 0..layout.num_tags() {
        let distances: Vec<T> = (0..n).map(|j| ranges.get(i, j, n)).collect();
        let lin = linear_multilateration(layout.anchors(), &distances);

        // Split into in-plane part and a height magnitude consistent with
        // the measured distances, giving the two mirrored starts.
        let height = (lin - plane_point).dot(&plane_normal);
        let in_plane = lin - plane_normal * height;
        let mean_sq_excess = distances
            .iter()
            .zip(layout.anchors())
            .map(|(&d, a)| d * d - (in_plane - a).norm_squared())
            .fold(T::zero(), |acc, x| acc + x)
            / c(n as f64);
        let h_mag = mean_sq_excess.max(T::zero()).sqrt().max(height.abs());

        let starts = [in_plane + plane_normal * h_mag, in_plane - plane_normal * h_mag];
        let mut best: Option<PointEstimate<T>> = None;
        let mut last_err = None;
        for start in &starts {
            match trilaterate(layout.anchors(), &distances, start, cfg) {
                Ok(est) => {
                    if best.as_ref().is_none_or(|b| est.final_cost < b.final_cost) {
                        best = Some(est);
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        match best {
            Some(est) => tag_positions.push(est.point),
            None => return Err(last_err.expect("at least one start attempted")),
        }
    }

    pose_from_correspondences(layout.tags(), &tag_positions)
}
