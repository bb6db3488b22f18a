//! Two-step sensor deployment: fit linear error models from sweeps, validate
//! them with the Pearson correlation, then invert for the smallest anchor
//! scale and tag scale that meet the error targets.

use serde::{Deserialize, Serialize};

use crate::range::derive_seed;
use crate::scalar::{c, Real};
use crate::sim::{max_error_over_poses, sweep, SweepAxis, SweepTable, SimError, TrialConfig};
use crate::estimator::SolverConfig;

/// Meaning of the regressor in a [`LinearFit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum XSemantics {
    /// x = d / z_a
    #[serde(rename = "d/z_a")]
    DOverZa,
    /// x = d / (z_a · h₁)
    #[serde(rename = "d/(z_a*h1)")]
    DOverZaH1,
    /// x = d
    #[serde(rename = "d")]
    D,
    /// x = 1 / z_a
    #[serde(rename = "1/z_a")]
    InvZa,
}

/// Ordinary least-squares line with its Pearson correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct LinearFit<T: Real> {
    pub slope: T,
    pub intercept: T,
    pub pearson_r: T,
    pub x_semantics: XSemantics,
}

impl<T: Real> LinearFit<T> {
    /// Divide the slope by the noise level it was fitted at, turning it into
    /// the σ-independent constant expected by
    /// [`error_models`](crate::fim::error_models).
    pub fn sigma_normalized(&self, sigma_d: T) -> LinearFit<T> {
        LinearFit {
            slope: self.slope / sigma_d,
            ..*self
        }
    }
}

/// Errors from fitting and planning.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanError {
    /// Fewer than 3 points or zero x-variance.
    DegenerateFit,
    /// The linear model does not hold (|r| below the threshold).
    LowCorrelation { pearson_r: f64, step: &'static str },
    /// No grid point meets the target; carries the best achievable value.
    TargetInfeasible {
        target: f64,
        best_achievable: f64,
        step: &'static str,
    },
    /// Geometry outside the validity region of the linear models.
    AssumptionViolated { reason: String },
    /// Underlying simulation failed.
    Sim(SimError),
}

impl std::fmt::Display for PlanError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlanError::DegenerateFit => {
                write!(f, "degenerate fit: need ≥ 3 points with varying x")
            }
            PlanError::LowCorrelation { pearson_r, step } => write!(
                f,
                "linear model invalid at {step}: Pearson r = {pearson_r:.4} below threshold"
            ),
            PlanError::TargetInfeasible {
                target,
                best_achievable,
                step,
            } => write!(
                f,
                "target {target:.4} infeasible at {step}: best achievable {best_achievable:.4}"
            ),
            PlanError::AssumptionViolated { reason } => {
                write!(f, "assumption violated: {reason}")
            }
            PlanError::Sim(e) => write!(f, "simulation failed: {e}"),
        }
    }
}

impl std::error::Error for PlanError {}

impl From<SimError> for PlanError {
    fn from(e: SimError) -> Self {
        PlanError::Sim(e)
    }
}

/// Ordinary least-squares fit of y on x, plus the Pearson correlation of
/// the pairs.
pub fn fit_linear<T: Real>(
    points: &[(T, T)],
    x_semantics: XSemantics,
) -> Result<LinearFit<T>, PlanError> {
    let n = points.len();
    if n < 3 {
        return Err(PlanError::DegenerateFit);
    }
    let nf: T = c(n as f64);
    let mean_x = points.iter().map(|p| p.0).fold(T::zero(), |a, b| a + b) / nf;
    let mean_y = points.iter().map(|p| p.1).fold(T::zero(), |a, b| a + b) / nf;
    let mut sxx = T::zero();
    let mut syy = T::zero();
    let mut sxy = T::zero();
    for (x, y) in points {
        let dx = *x - mean_x;
        let dy = *y - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= T::zero() {
        return Err(PlanError::DegenerateFit);
    }
    let slope = sxy / sxx;
    let pearson_r = if syy <= T::zero() {
        // Exactly constant y: the line fits perfectly.
        T::one()
    } else {
        sxy / (sxx * syy).sqrt()
    };
    Ok(LinearFit {
        slope,
        intercept: mean_y - slope * mean_x,
        pearson_r,
        x_semantics,
    })
}

/// Inputs to [`plan_deployment`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest<T: Real> {
    /// Largest working distance the deployment must support (m).
    pub d_max: T,
    /// Translation RMSE target (m).
    pub e_t_target: T,
    /// Orientation RMSE target (rad).
    pub e_phi_target: T,
    /// Range noise level (m).
    pub sigma_d: T,
    /// Candidate anchor circumradii, ascending (m).
    pub l_a_grid: Vec<T>,
    /// Candidate tag circumradii, ascending (m).
    pub l_t_grid: Vec<T>,
    /// Inversion targets `E / safety_margin` to absorb Monte-Carlo noise.
    pub safety_margin: T,
    /// Minimum acceptable |Pearson r| for the linear fits.
    pub min_pearson: T,
    /// Re-run step (i) at half the top tag scale and warn if the anchor
    /// answer shifts by more than 10%.
    pub check_lt_sensitivity: bool,
}

impl<T: Real> PlanRequest<T> {
    pub fn new(
        d_max: T,
        e_t_target: T,
        e_phi_target: T,
        sigma_d: T,
        l_a_grid: Vec<T>,
        l_t_grid: Vec<T>,
    ) -> Self {
        Self {
            d_max,
            e_t_target,
            e_phi_target,
            sigma_d,
            l_a_grid,
            l_t_grid,
            safety_margin: c(1.05),
            min_pearson: c(0.95),
            check_lt_sensitivity: true,
        }
    }
}

/// A planned deployment: minimal layout scales, the fitted models behind
/// them, and the confirmation run's verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct DeploymentPlan<T: Real> {
    #[serde(rename = "L_a_min")]
    pub l_a_min: T,
    #[serde(rename = "L_t_min")]
    pub l_t_min: T,
    /// Model-predicted errors at (L_a_min, L_t_min, d_max).
    pub predicted_e_t: T,
    pub predicted_e_phi: T,
    /// Step-(i) fit: E_t_max against d/z_a.
    pub translation_fit: LinearFit<T>,
    /// Step-(ii) fit: E_phi_max against d/(z_a·h₁).
    pub orientation_fit: LinearFit<T>,
    /// Confirmation simulation measured at most 1.1 × both targets.
    pub validated: bool,
    /// Measured errors of the confirmation run, when one was executed.
    pub confirmed_e_t: Option<T>,
    pub confirmed_e_phi: Option<T>,
    /// Layout scale convention for L_a / L_t.
    pub convention: String,
    pub warnings: Vec<String>,
}

impl<T: Real> DeploymentPlan<T> {
    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String>
    where
        T: serde::de::DeserializeOwned,
    {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}

struct StepFit<T: Real> {
    fit: LinearFit<T>,
    /// Smallest admissible regressor value solving fit(x) ≤ target/margin.
    x_required: T,
    best_achievable: T,
}

/// Fit error against the regressor and invert for the largest x (smallest
/// geometry) still meeting the target; errors grow with x.
fn fit_and_invert<T: Real>(
    points: &[(T, T)],
    x_semantics: XSemantics,
    target: T,
    margin: T,
    min_pearson: T,
    step: &'static str,
) -> Result<StepFit<T>, PlanError> {
    let fit = fit_linear(points, x_semantics)?;
    if fit.pearson_r.abs() < min_pearson {
        return Err(PlanError::LowCorrelation {
            pearson_r: fit.pearson_r.to_f64().unwrap_or(f64::NAN),
            step,
        });
    }
    if fit.slope <= T::zero() {
        return Err(PlanError::AssumptionViolated {
            reason: format!("{step}: fitted slope is not positive"),
        });
    }
    let best_achievable = points
        .iter()
        .map(|p| p.1)
        .fold(T::max_value().expect("bounded"), |a, b| a.min(b));
    let x_required = (target / margin - fit.intercept) / fit.slope;
    if x_required <= T::zero() {
        return Err(PlanError::TargetInfeasible {
            target: target.to_f64().unwrap_or(f64::NAN),
            best_achievable: best_achievable.to_f64().unwrap_or(f64::NAN),
            step,
        });
    }
    Ok(StepFit {
        fit,
        x_required,
        best_achievable,
    })
}

fn step_one_points<T: Real>(
    table: &SweepTable<T>,
) -> Result<Vec<(T, T)>, PlanError> {
    Ok(table
        .rows
        .iter()
        .map(|r| (r.d / r.z_a, r.e_t_rmse))
        .collect())
}

fn step_two_points<T: Real>(table: &SweepTable<T>) -> Vec<(T, T)> {
    table
        .rows
        .iter()
        .map(|r| (r.d / (r.z_a * r.h1), r.e_phi_rmse))
        .collect()
}

const CONVENTION: &str = "L_a, L_t are circumradii; z_a = (4/3)L_a, h1 = (3/2)L_t";

/// Run the two-step deployment procedure with fresh simulations.
///
/// Step (i): at `d_max` with the largest candidate tag scale, sweep the
/// anchor scale, fit `E_t_max` against `d/z_a` and invert for the smallest
/// admissible `z_a` (hence `L_a_min`). Step (ii): fix `L_a_min`, sweep the
/// tag scale, fit `E_phi_max` against `d/(z_a·h₁)` and invert for `L_t_min`.
/// A confirmation simulation at the planned geometry sets `validated` iff
/// both measured errors are within 1.1 × their targets.
pub fn plan_deployment<T: Real>(
    req: &PlanRequest<T>,
    base: &TrialConfig<T>,
    solver: &SolverConfig<T>,
) -> Result<DeploymentPlan<T>, PlanError> {
    validate_request(req)?;
    let mut warnings = Vec::new();

    // Step (i): anchors, with tags large enough not to matter.
    let lt_top = *req.l_t_grid.last().expect("validated non-empty");
    let step1 = run_step_one(req, base, solver, lt_top, 0)?;
    let l_a_min = step1.l_a_min;

    if req.check_lt_sensitivity {
        let halved = run_step_one(req, base, solver, lt_top * c(0.5), 1)?;
        let shift = (halved.l_a_min - l_a_min).abs() / l_a_min;
        if shift > c(0.1) {
            warnings.push(format!(
                "step (i) is sensitive to the tag scale: L_a_min shifts by {:.1}% when L_t is halved; the largest candidate L_t may not be 'adequately large'",
                shift.to_f64().unwrap_or(f64::NAN) * 100.0
            ));
        }
    }

    // Step (ii): tags, at the planned anchor scale.
    let mut cfg2 = base.clone();
    cfg2.d = req.d_max;
    cfg2.sigma_d = req.sigma_d;
    cfg2.l_a = l_a_min;
    cfg2.seed = derive_seed(base.seed, 1_000_002);
    let table2 = sweep(SweepAxis::Lt, &req.l_t_grid, &cfg2, solver)?;
    let z_a = cfg2.z_a();
    let inverted2 = fit_and_invert(
        &step_two_points(&table2),
        XSemantics::DOverZaH1,
        req.e_phi_target,
        req.safety_margin,
        req.min_pearson,
        "step (ii): tag scale",
    )?;
    // x = d/(z_a·h1) ≤ x_required  ⇒  h1 ≥ d/(z_a·x_required).
    let h1_required = req.d_max / (z_a * inverted2.x_required);
    let l_t_min = clamp_to_grid(
        h1_required * c(2.0 / 3.0),
        &req.l_t_grid,
        req.e_phi_target,
        inverted2.best_achievable,
        "step (ii): tag scale",
    )?;

    // Confirmation run at the planned geometry.
    let mut confirm = base.clone();
    confirm.d = req.d_max;
    confirm.sigma_d = req.sigma_d;
    confirm.l_a = l_a_min;
    confirm.l_t = l_t_min;
    confirm.seed = derive_seed(base.seed, 1_000_003);
    let measured = max_error_over_poses(&confirm, solver)?;
    let slack: T = c(1.1);
    let validated = measured.e_t_max <= req.e_t_target * slack
        && measured.e_phi_max <= req.e_phi_target * slack;

    let predicted_e_t = step1.fit.slope * (req.d_max / (l_a_min * c(4.0 / 3.0)))
        + step1.fit.intercept;
    let predicted_e_phi = inverted2.fit.slope
        * (req.d_max / (z_a * l_t_min * c(1.5)))
        + inverted2.fit.intercept;

    Ok(DeploymentPlan {
        l_a_min,
        l_t_min,
        predicted_e_t,
        predicted_e_phi,
        translation_fit: step1.fit,
        orientation_fit: inverted2.fit,
        validated,
        confirmed_e_t: Some(measured.e_t_max),
        confirmed_e_phi: Some(measured.e_phi_max),
        convention: CONVENTION.into(),
        warnings,
    })
}

struct StepOneResult<T: Real> {
    l_a_min: T,
    fit: LinearFit<T>,
}

fn run_step_one<T: Real>(
    req: &PlanRequest<T>,
    base: &TrialConfig<T>,
    solver: &SolverConfig<T>,
    l_t: T,
    salt: u64,
) -> Result<StepOneResult<T>, PlanError> {
    let mut cfg = base.clone();
    cfg.d = req.d_max;
    cfg.sigma_d = req.sigma_d;
    cfg.l_t = l_t;
    cfg.seed = derive_seed(base.seed, 1_000_000 + salt);
    let table = sweep(SweepAxis::La, &req.l_a_grid, &cfg, solver)?;
    let inverted = fit_and_invert(
        &step_one_points(&table)?,
        XSemantics::DOverZa,
        req.e_t_target,
        req.safety_margin,
        req.min_pearson,
        "step (i): anchor scale",
    )?;
    // x = d/z_a ≤ x_required  ⇒  z_a ≥ d/x_required.
    let z_a_required = req.d_max / inverted.x_required;
    let l_a_min = clamp_to_grid(
        z_a_required * c(0.75),
        &req.l_a_grid,
        req.e_t_target,
        inverted.best_achievable,
        "step (i): anchor scale",
    )?;
    Ok(StepOneResult {
        l_a_min,
        fit: inverted.fit,
    })
}

/// Clamp a continuous inversion answer into the candidate grid: below the
/// grid the smallest candidate suffices; above it the target is infeasible.
fn clamp_to_grid<T: Real>(
    value: T,
    grid: &[T],
    target: T,
    best_achievable: T,
    step: &'static str,
) -> Result<T, PlanError> {
    let lo = grid[0];
    let hi = *grid.last().unwrap();
    if value > hi {
        return Err(PlanError::TargetInfeasible {
            target: target.to_f64().unwrap_or(f64::NAN),
            best_achievable: best_achievable.to_f64().unwrap_or(f64::NAN),
            step,
        });
    }
    Ok(value.max(lo))
}

/// Offline variant: plan from two precomputed sweep tables (an L_a sweep for
/// step (i) and an L_t sweep for step (ii)). No confirmation simulation is
/// run, so the plan is never `validated`.
pub fn plan_from_tables<T: Real>(
    req: &PlanRequest<T>,
    step1_table: &SweepTable<T>,
    step2_table: &SweepTable<T>,
) -> Result<DeploymentPlan<T>, PlanError> {
    validate_request(req)?;
    let mut warnings =
        vec!["planned from offline sweep tables; no confirmation simulation run".to_string()];

    let inverted1 = fit_and_invert(
        &step_one_points(step1_table)?,
        XSemantics::DOverZa,
        req.e_t_target,
        req.safety_margin,
        req.min_pearson,
        "step (i): anchor scale",
    )?;
    let z_a_required = req.d_max / inverted1.x_required;
    let l_a_min = clamp_to_grid(
        z_a_required * c(0.75),
        &req.l_a_grid,
        req.e_t_target,
        inverted1.best_achievable,
        "step (i): anchor scale",
    )?;

    let step2_za = step2_table
        .rows
        .first()
        .map(|r| r.z_a)
        .ok_or(PlanError::DegenerateFit)?;
    let planned_za = l_a_min * c(4.0 / 3.0);
    let za_shift = (step2_za - planned_za).abs() / planned_za;
    if za_shift > c(0.1) {
        warnings.push(format!(
            "step (ii) table was computed at z_a = {:.3}, {:.1}% away from the planned z_a = {:.3}",
            step2_za.to_f64().unwrap_or(f64::NAN),
            za_shift.to_f64().unwrap_or(f64::NAN) * 100.0,
            planned_za.to_f64().unwrap_or(f64::NAN)
        ));
    }

    let inverted2 = fit_and_invert(
        &step_two_points(step2_table),
        XSemantics::DOverZaH1,
        req.e_phi_target,
        req.safety_margin,
        req.min_pearson,
        "step (ii): tag scale",
    )?;
    let h1_required = req.d_max / (step2_za * inverted2.x_required);
    let l_t_min = clamp_to_grid(
        h1_required * c(2.0 / 3.0),
        &req.l_t_grid,
        req.e_phi_target,
        inverted2.best_achievable,
        "step (ii): tag scale",
    )?;

    let predicted_e_t = inverted1.fit.slope * (req.d_max / planned_za) + inverted1.fit.intercept;
    let predicted_e_phi = inverted2.fit.slope
        * (req.d_max / (step2_za * l_t_min * c(1.5)))
        + inverted2.fit.intercept;

    Ok(DeploymentPlan {
        l_a_min,
        l_t_min,
        predicted_e_t,
        predicted_e_phi,
        translation_fit: inverted1.fit,
        orientation_fit: inverted2.fit,
        validated: false,
        confirmed_e_t: None,
        confirmed_e_phi: None,
        convention: CONVENTION.into(),
        warnings,
    })
}

fn validate_request<T: Real>(req: &PlanRequest<T>) -> Result<(), PlanError> {
    if req.e_t_target <= T::zero()
        || req.e_phi_target <= T::zero()
        || req.d_max <= T::zero()
        || req.sigma_d < T::zero()
    {
        return Err(PlanError::AssumptionViolated {
            reason: "targets, d_max must be positive and sigma_d nonnegative".into(),
        });
    }
    for (name, grid) in [("L_a", &req.l_a_grid), ("L_t", &req.l_t_grid)] {
        if grid.is_empty() {
            return Err(PlanError::AssumptionViolated {
                reason: format!("{name} grid is empty"),
            });
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] <= T::zero() {
            return Err(PlanError::AssumptionViolated {
                reason: format!("{name} grid must be positive and strictly ascending"),
            });
        }
    }
    if req.safety_margin < T::one() {
        return Err(PlanError::AssumptionViolated {
            reason: "safety margin must be at least 1".into(),
        });
    }
    Ok(())
}
