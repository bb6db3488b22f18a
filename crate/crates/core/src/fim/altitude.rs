//! Closed-form anchor-placement analysis: the optimal tag height, the
//! resulting floor on the third Jacobian column, its monotonicity in the
//! apex height, and the fitted linear error models.
//!
//! Conventions: anchors sit in the canonical frame with all but one in the
//! z = 0 plane and the apex at height `z_a > 0`. `rho` vectors hold each
//! tag's horizontal distance to every anchor, apex last.

use super::FimError;
use crate::planner::LinearFit;
use crate::scalar::{c, Real};

/// Predicted orientation errors above this are outside the small-error
/// regime of the linear model (radians).
pub const DEFAULT_PHI_VALIDITY_THRESHOLD: f64 = 0.5;

/// Validity-region options for the closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltitudeOptions<T: Real> {
    /// Require `ρ_ij > k_validity · z_a`; √3 is the value under which the
    /// stationarity root is provably unique.
    pub k_validity: T,
}

impl<T: Real> Default for AltitudeOptions<T> {
    fn default() -> Self {
        Self {
            k_validity: c::<T>(3.0).sqrt(),
        }
    }
}

/// Root of the stationarity equation for one tag: optimal height and the
/// tag's contribution to the squared floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagHeightSolution<T: Real> {
    /// The unique stationary tag height in (0, z_a).
    pub z_opt: T,
    /// This tag's term of the squared floor, evaluated directly at the
    /// root: `Σ_base z²/d² + (z − z_a)²/d_a²`.
    pub j_contrib: T,
}

fn validate_rho<T: Real>(z_a: T, rho: &[T], opts: &AltitudeOptions<T>) -> Result<(), FimError> {
    if z_a <= T::zero() {
        return Err(FimError::AssumptionViolated {
            reason: "apex height z_a must be positive".into(),
        });
    }
    if rho.len() < 2 {
        return Err(FimError::AssumptionViolated {
            reason: "need at least one base anchor and the apex".into(),
        });
    }
    let threshold = opts.k_validity * z_a;
    for (j, &r) in rho.iter().enumerate() {
        if r <= threshold {
            return Err(FimError::AssumptionViolated {
                reason: format!(
                    "horizontal distance rho[{j}] = {:.4} must exceed k·z_a = {:.4}",
                    r.to_f64().unwrap_or(f64::NAN),
                    threshold.to_f64().unwrap_or(f64::NAN)
                ),
            });
        }
    }
    Ok(())
}

/// Derivative (up to a factor 2) of the tag's squared third-column norm with
/// respect to its height: zero at the optimal height.
fn stationarity<T: Real>(z: T, z_a: T, rho: &[T]) -> T {
    let apex = rho.len() - 1;
    let dz = z - z_a;
    let da_sq = rho[apex] * rho[apex] + dz * dz;
    let mut f = rho[apex] * rho[apex] * dz / (da_sq * da_sq);
    for &r in &rho[..apex] {
        let d_sq = r * r + z * z;
        f += r * r * z / (d_sq * d_sq);
    }
    f
}

/// Solve the stationarity equation by bisection on (0, z_a), where the root
/// is unique; `rho` holds the tag's horizontal distances, apex last.
pub fn solve_tag_height<T: Real>(z_a: T, rho: &[T]) -> Result<TagHeightSolution<T>, FimError> {
    solve_tag_height_with(z_a, rho, &AltitudeOptions::default())
}

/// [`solve_tag_height`] with explicit validity options.
pub fn solve_tag_height_with<T: Real>(
    z_a: T,
    rho: &[T],
    opts: &AltitudeOptions<T>,
) -> Result<TagHeightSolution<T>, FimError> {
    validate_rho(z_a, rho, opts)?;
    let eps: T = c(1e-12);
    let mut lo = z_a * eps;
    let mut hi = z_a * (T::one() - eps);
    if stationarity(lo, z_a, rho) >= T::zero() || stationarity(hi, z_a, rho) <= T::zero() {
        return Err(FimError::AssumptionViolated {
            reason: "stationarity equation not bracketed on (0, z_a)".into(),
        });
    }
    for _ in 0..200 {
        let mid = (lo + hi) * c(0.5);
        if stationarity(mid, z_a, rho) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= z_a * T::eps() * c(2.0) {
            break;
        }
    }
    let z_opt = (lo + hi) * c(0.5);

    let apex = rho.len() - 1;
    let dz = z_opt - z_a;
    let mut contrib = dz * dz / (rho[apex] * rho[apex] + dz * dz);
    for &r in &rho[..apex] {
        contrib += z_opt * z_opt / (r * r + z_opt * z_opt);
    }
    Ok(TagHeightSolution {
        z_opt,
        j_contrib: contrib,
    })
}

/// Closed-form per-tag term of the squared floor (the "plug the stationarity
/// root back in" expression), algebraically equal to
/// [`TagHeightSolution::j_contrib`] at the exact root.
fn closed_form_contrib<T: Real>(z_a: T, z_opt: T, rho: &[T]) -> T {
    let apex = rho.len() - 1;
    let dz = z_opt - z_a;
    let da_sq = rho[apex] * rho[apex] + dz * dz;
    let apex_a = rho[apex] * rho[apex] / (da_sq * da_sq);

    let mut base_a_sum = T::zero();
    let mut base_inv_d_sq = T::zero();
    for &r in &rho[..apex] {
        let d_sq = r * r + z_opt * z_opt;
        base_a_sum += r * r / (d_sq * d_sq);
        base_inv_d_sq += T::one() / d_sq;
    }
    let total = apex_a + base_a_sum;
    let bracket = base_a_sum * base_a_sum / da_sq + apex_a * apex_a * base_inv_d_sq;
    z_a * z_a * bracket / (total * total)
}

/// The minimum over tag heights of the third Jacobian column's norm — the
/// translation-accuracy floor set by the apex height. `rho_matrix` holds one
/// row of horizontal distances per tag, apex last in each row.
///
/// Strictly increasing in `z_a` over the validity region.
pub fn translation_floor<T: Real>(z_a: T, rho_matrix: &[Vec<T>]) -> Result<T, FimError> {
    translation_floor_with(z_a, rho_matrix, &AltitudeOptions::default())
}

/// [`translation_floor`] with explicit validity options.
pub fn translation_floor_with<T: Real>(
    z_a: T,
    rho_matrix: &[Vec<T>],
    opts: &AltitudeOptions<T>,
) -> Result<T, FimError> {
    if rho_matrix.is_empty() {
        return Err(FimError::AssumptionViolated {
            reason: "need at least one tag".into(),
        });
    }
    let mut sum = T::zero();
    for rho in rho_matrix {
        let sol = solve_tag_height_with(z_a, rho, opts)?;
        sum += closed_form_contrib(z_a, sol.z_opt, rho);
    }
    Ok(sum.sqrt())
}

/// Sensitivity of the optimal tag height to the apex height, evaluated at
/// the stationarity root via the implicit function theorem. Lies strictly in
/// (0, 1) inside the validity region.
pub fn dfdz<T: Real>(z_a: T, rho: &[T]) -> Result<T, FimError> {
    dfdz_with(z_a, rho, &AltitudeOptions::default())
}

/// [`dfdz`] with explicit validity options.
pub fn dfdz_with<T: Real>(
    z_a: T,
    rho: &[T],
    opts: &AltitudeOptions<T>,
) -> Result<T, FimError> {
    let sol = solve_tag_height_with(z_a, rho, opts)?;
    let apex = rho.len() - 1;
    let dz = sol.z_opt - z_a;
    let da_sq = rho[apex] * rho[apex] + dz * dz;
    let numerator = rho[apex] * rho[apex] - c::<T>(3.0) * dz * dz;
    let mut denominator = numerator;
    for &r in &rho[..apex] {
        let d_sq = r * r + sol.z_opt * sol.z_opt;
        let weight = (r * r * da_sq * da_sq * da_sq)
            / (rho[apex] * rho[apex] * d_sq * d_sq * d_sq);
        denominator += weight * (r * r - c::<T>(3.0) * sol.z_opt * sol.z_opt);
    }
    let value = numerator / denominator;
    if value <= T::zero() || value >= T::one() {
        return Err(FimError::AssumptionViolated {
            reason: format!(
                "df/dz_a = {:.6} outside (0, 1); configuration outside validity region",
                value.to_f64().unwrap_or(f64::NAN)
            ),
        });
    }
    Ok(value)
}

/// Aggregate altitude analysis for a whole layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AltitudeAnalysis<T: Real> {
    /// Apex anchor height (shortest tetrahedron altitude).
    pub z_a: T,
    /// Optimal height per tag.
    pub z_opt: Vec<T>,
    /// The floor on the third Jacobian column norm.
    pub j_floor: T,
    /// Height sensitivity per tag.
    pub dfdz: Vec<T>,
}

/// Run the full closed-form analysis for an apex height and a per-tag matrix
/// of horizontal distances (apex last in each row).
pub fn altitude_analysis<T: Real>(
    z_a: T,
    rho_matrix: &[Vec<T>],
) -> Result<AltitudeAnalysis<T>, FimError> {
    let opts = AltitudeOptions::default();
    let mut z_opt = Vec::with_capacity(rho_matrix.len());
    let mut sensitivities = Vec::with_capacity(rho_matrix.len());
    for rho in rho_matrix {
        z_opt.push(solve_tag_height_with(z_a, rho, &opts)?.z_opt);
        sensitivities.push(dfdz_with(z_a, rho, &opts)?);
    }
    Ok(AltitudeAnalysis {
        z_a,
        z_opt,
        j_floor: translation_floor_with(z_a, rho_matrix, &opts)?,
        dfdz: sensitivities,
    })
}

/// Predicted errors from the fitted linear models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPrediction<T: Real> {
    /// `C₁ σ_d d / z_a + D₁` (meters).
    pub e_t: T,
    /// `C₂ σ_d d / (z_a h₁) + D₂` (radians).
    pub e_phi: T,
    /// False when the orientation prediction exceeds the small-error
    /// validity threshold.
    pub e_phi_within_validity: bool,
}

/// Evaluate the linear error models at a geometry. The fits must carry
/// σ-normalized slopes (the constants C₁, C₂), as produced by
/// [`LinearFit::sigma_normalized`](crate::planner::LinearFit::sigma_normalized).
pub fn error_models<T: Real>(
    d: T,
    z_a: T,
    h1: T,
    sigma_d: T,
    translation_fit: &LinearFit<T>,
    orientation_fit: &LinearFit<T>,
) -> ErrorPrediction<T> {
    error_models_with_threshold(
        d,
        z_a,
        h1,
        sigma_d,
        translation_fit,
        orientation_fit,
        c(DEFAULT_PHI_VALIDITY_THRESHOLD),
    )
}

/// [`error_models`] with an explicit orientation-validity threshold.
#[allow(clippy::too_many_arguments)]
pub fn error_models_with_threshold<T: Real>(
    d: T,
    z_a: T,
    h1: T,
    sigma_d: T,
    translation_fit: &LinearFit<T>,
    orientation_fit: &LinearFit<T>,
    phi_validity_threshold: T,
) -> ErrorPrediction<T> {
    let e_t = translation_fit.slope * sigma_d * d / z_a + translation_fit.intercept;
    let e_phi =
        orientation_fit.slope * sigma_d * d / (z_a * h1) + orientation_fit.intercept;
    ErrorPrediction {
        e_t,
        e_phi,
        e_phi_within_validity: e_phi <= phi_validity_threshold,
    }
}
