//! Monte-Carlo experiment harness: RMSE of translation/orientation over
//! noisy-range trials, the max-over-poses protocol at fixed horizontal
//! distance, and parameter sweeps producing plot-ready tables.
//!
//! Layout convention: `L_a` and `L_t` are the circumradii of the regular
//! anchor tetrahedron and tag triangle, so `z_a = (4/3)·L_a` and
//! `h₁ = (3/2)·L_t`. Both derived values are recorded in every sweep row.
//!
//! Seed discipline: every trial's noise seed derives from the config seed
//! through [`derive_seed`] chains (sweep row → pose grid point → trial), so
//! results are bit-identical regardless of evaluation order or parallelism.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nalgebra::{Matrix3, Vector3};

use crate::estimator::{initial_guess, solve_pose, EstimatorError, SolverConfig};
use crate::geometry::{log_so3, regular_layout, Pose, SimplexKind};
use crate::range::{add_noise, derive_seed, range_vector, SensorLayout};
use crate::scalar::{c, Real};

/// Parameters of one Monte-Carlo experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig<T: Real> {
    /// Circumradius of the regular anchor tetrahedron (m).
    pub l_a: T,
    /// Circumradius of the regular tag triangle (m).
    pub l_t: T,
    /// Horizontal distance of the tracked node (m).
    pub d: T,
    /// Altitude of the tracked node (m).
    pub z: T,
    /// Range noise standard deviation (m).
    pub sigma_d: T,
    /// Monte-Carlo trials per pose.
    pub trials: usize,
    /// Base seed; all randomness derives from it.
    pub seed: u64,
    /// Orientation grid size for the max-over-poses protocol.
    pub orientation_samples: usize,
    /// Azimuth grid size for the max-over-poses protocol.
    pub azimuth_samples: usize,
}

impl<T: Real> TrialConfig<T> {
    /// Config with the standard defaults: σ_d = 5 cm, 50 trials, z = 0,
    /// 16 orientations × 4 azimuths.
    pub fn new(l_a: T, l_t: T, d: T) -> Self {
        Self {
            l_a,
            l_t,
            d,
            z: T::zero(),
            sigma_d: c(0.05),
            trials: 50,
            seed: 0,
            orientation_samples: 16,
            azimuth_samples: 4,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.trials < 1
            || self.sigma_d < T::zero()
            || self.l_a <= T::zero()
            || self.l_t <= T::zero()
            || self.d <= T::zero()
            || self.orientation_samples < 1
            || self.azimuth_samples < 1
        {
            return Err(SimError::Setup(
                "trial config out of range (need trials ≥ 1, sigma_d ≥ 0, L_a, L_t, d > 0)"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Regular layout for this config.
    pub fn layout(&self) -> Result<SensorLayout<T>, SimError> {
        let anchors = regular_layout(SimplexKind::Tetrahedron, self.l_a);
        let tags = regular_layout(SimplexKind::Triangle, self.l_t);
        SensorLayout::new(anchors.vertices().to_vec(), tags.vertices().to_vec())
            .map_err(|e| SimError::Setup(e.to_string()))
    }

    /// Apex-anchor altitude under the circumradius convention.
    pub fn z_a(&self) -> T {
        self.l_a * c(4.0 / 3.0)
    }

    /// Shortest tag-triangle altitude under the circumradius convention.
    pub fn h1(&self) -> T {
        self.l_t * c(1.5)
    }
}

/// Errors from the simulation harness.
#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    /// More than 20% of the trials at a pose failed to converge.
    TooManyFailures { failures: usize, trials: usize },
    /// Configuration or layout problem that aborts the experiment.
    Setup(String),
}

impl std::fmt::Display for SimError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimError::TooManyFailures { failures, trials } => {
                write!(f, "{failures} of {trials} trials failed to converge")
            }
            SimError::Setup(reason) => write!(f, "simulation setup: {reason}"),
        }
    }
}

impl std::error::Error for SimError {}

/// RMSE over converged trials at one pose, plus the failure count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialStats<T: Real> {
    pub e_t_rmse: T,
    pub e_phi_rmse: T,
    pub trials: usize,
    /// Trials excluded from the RMSE because the estimator did not converge.
    pub failures: usize,
}

/// Translation and orientation error of an estimate against the truth.
pub fn pose_errors<T: Real>(truth: &Pose<T>, estimate: &Pose<T>) -> (T, T) {
    let e_t = (truth.translation() - estimate.translation()).norm();
    let relative = truth.rotation().transpose() * estimate.rotation();
    let e_phi = match log_so3(&relative) {
        Ok(phi) => phi.angle(),
        // The product of two valid rotations can only fail the strict
        // orthogonality check through rounding; renormalize via svd.
        Err(_) => {
            let svd = relative.svd(true, true);
            let r = svd.u.unwrap() * svd.v_t.unwrap();
            log_so3(&r).map(|p| p.angle()).unwrap_or_else(|_| T::zero())
        }
    };
    (e_t, e_phi)
}

/// One Monte-Carlo experiment at a fixed pose: noisy ranges → two-stage
/// initial guess → pose solve, RMSE across trials. Non-converged trials are
/// counted and excluded; more than 20% of them is an error.
pub fn run_pose_trials<T: Real>(
    pose: &Pose<T>,
    cfg: &TrialConfig<T>,
    solver: &SolverConfig<T>,
) -> Result<TrialStats<T>, SimError> {
    cfg.validate()?;
    let layout = cfg.layout()?;
    run_pose_trials_with_layout(pose, &layout, cfg, solver)
}

enum TrialOutcome<T> {
    Success { e_t: T, e_phi: T },
    /// Estimator did not converge on this trial's noise draw.
    Failure,
    /// Structural problem that should abort the whole experiment.
    Abort(SimError),
}

/// Per-trial estimation failures are counted, structural problems abort.
fn classify_trial_error<T: Real>(e: EstimatorError<T>) -> TrialOutcome<T> {
    match e {
        EstimatorError::DidNotConverge(_)
        | EstimatorError::PointDidNotConverge(_)
        | EstimatorError::CollinearPoints => TrialOutcome::Failure,
        other => TrialOutcome::Abort(SimError::Setup(other.to_string())),
    }
}

fn run_pose_trials_with_layout<T: Real>(
    pose: &Pose<T>,
    layout: &SensorLayout<T>,
    cfg: &TrialConfig<T>,
    solver: &SolverConfig<T>,
) -> Result<TrialStats<T>, SimError> {
    let exact = range_vector(pose, layout);

    let outcomes: Vec<TrialOutcome<T>> = (0..cfg.trials)
        .into_par_iter()
        .map(|k| {
            let noisy = add_noise(&exact, cfg.sigma_d, derive_seed(cfg.seed, k as u64));
            let init = match initial_guess(layout, &noisy, solver) {
                Ok(p) => p,
                Err(e) => return classify_trial_error(e),
            };
            match solve_pose(layout, &noisy, &init, solver) {
                Ok(est) => {
                    let (e_t, e_phi) = pose_errors(pose, &est.pose);
                    TrialOutcome::Success { e_t, e_phi }
                }
                Err(e) => classify_trial_error(e),
            }
        })
        .collect();

    let mut failures = 0;
    let mut sum_t = T::zero();
    let mut sum_phi = T::zero();
    for outcome in outcomes {
        match outcome {
            TrialOutcome::Success { e_t, e_phi } => {
                sum_t += e_t * e_t;
                sum_phi += e_phi * e_phi;
            }
            TrialOutcome::Failure => failures += 1,
            TrialOutcome::Abort(e) => return Err(e),
        }
    }
    if failures * 5 > cfg.trials {
        return Err(SimError::TooManyFailures {
            failures,
            trials: cfg.trials,
        });
    }
    let successes = cfg.trials - failures;
    let denom: T = c(successes.max(1) as f64);
    Ok(TrialStats {
        e_t_rmse: (sum_t / denom).sqrt(),
        e_phi_rmse: (sum_phi / denom).sqrt(),
        trials: cfg.trials,
        failures,
    })
}

/// Maximum RMSE over the pose grid at fixed horizontal distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxErrors<T: Real> {
    pub e_t_max: T,
    pub e_phi_max: T,
    /// Total failures across the whole grid.
    pub failures: usize,
}

/// Van der Corput radical inverse in the given base.
fn halton(index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Deterministic low-discrepancy orientation set: identity first, then
/// uniform rotations from the (2,3,5)-Halton points via the subgroup
/// algorithm on quaternions.
pub fn orientation_grid<T: Real>(samples: usize) -> Vec<Matrix3<T>> {
    (0..samples)
        .map(|k| {
            if k == 0 {
                return Matrix3::identity();
            }
            let u1 = halton(k as u64, 2);
            let u2 = halton(k as u64, 3);
            let u3 = halton(k as u64, 5);
            let two_pi = std::f64::consts::TAU;
            let x = (1.0 - u1).sqrt() * (two_pi * u2).sin();
            let y = (1.0 - u1).sqrt() * (two_pi * u2).cos();
            let z = u1.sqrt() * (two_pi * u3).sin();
            let w = u1.sqrt() * (two_pi * u3).cos();
            rotation_from_quaternion(c(w), c(x), c(y), c(z))
        })
        .collect()
}

fn rotation_from_quaternion<T: Real>(w: T, x: T, y: T, z: T) -> Matrix3<T> {
    let two = c::<T>(2.0);
    Matrix3::new(
        T::one() - two * (y * y + z * z),
        two * (x * y - w * z),
        two * (x * z + w * y),
        two * (x * y + w * z),
        T::one() - two * (x * x + z * z),
        two * (y * z - w * x),
        two * (x * z - w * y),
        two * (y * z + w * x),
        T::one() - two * (x * x + y * y),
    )
}

/// The deterministic pose grid searched by [`max_error_over_poses`]:
/// azimuths at fixed horizontal distance `d` and altitude `z`, crossed with
/// the orientation grid.
pub fn pose_grid<T: Real>(cfg: &TrialConfig<T>) -> Vec<Pose<T>> {
    let orientations = orientation_grid::<T>(cfg.orientation_samples);
    let mut poses = Vec::with_capacity(cfg.azimuth_samples * cfg.orientation_samples);
    for a in 0..cfg.azimuth_samples {
        let theta = c::<T>(2.0) * T::pi() * c(a as f64) / c(cfg.azimuth_samples as f64);
        let position = Vector3::new(cfg.d * theta.cos(), cfg.d * theta.sin(), cfg.z);
        for r in &orientations {
            poses.push(Pose::new(*r, position).expect("grid rotations are orthonormal"));
        }
    }
    poses
}

/// Worst-case RMSE over the deterministic pose grid (azimuth × orientation)
/// at the config's horizontal distance. Each grid point gets its own derived
/// seed, so refinement only appends points.
pub fn max_error_over_poses<T: Real>(
    cfg: &TrialConfig<T>,
    solver: &SolverConfig<T>,
) -> Result<MaxErrors<T>, SimError> {
    cfg.validate()?;
    let layout = cfg.layout()?;
    let poses = pose_grid(cfg);

    let stats: Vec<Result<TrialStats<T>, SimError>> = poses
        .par_iter()
        .enumerate()
        .map(|(point, pose)| {
            let point_cfg = TrialConfig {
                seed: derive_seed(cfg.seed, point as u64),
                ..cfg.clone()
            };
            run_pose_trials_with_layout(pose, &layout, &point_cfg, solver)
        })
        .collect();

    let mut out = MaxErrors {
        e_t_max: T::zero(),
        e_phi_max: T::zero(),
        failures: 0,
    };
    for s in stats {
        let s = s?;
        out.e_t_max = out.e_t_max.max(s.e_t_rmse);
        out.e_phi_max = out.e_phi_max.max(s.e_phi_rmse);
        out.failures += s.failures;
    }
    Ok(out)
}

/// Sweepable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "d")]
    D,
    #[serde(rename = "z")]
    Z,
    #[serde(rename = "L_a")]
    La,
    #[serde(rename = "L_t")]
    Lt,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::D => "d",
            SweepAxis::Z => "z",
            SweepAxis::La => "L_a",
            SweepAxis::Lt => "L_t",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "d" => Ok(SweepAxis::D),
            "z" => Ok(SweepAxis::Z),
            "L_a" | "l_a" => Ok(SweepAxis::La),
            "L_t" | "l_t" => Ok(SweepAxis::Lt),
            other => Err(format!("unknown sweep axis '{other}' (want d, z, L_a or L_t)")),
        }
    }
}

/// One gridded result of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct SweepRow<T: Real> {
    pub d: T,
    pub z: T,
    #[serde(rename = "L_a")]
    pub l_a: T,
    #[serde(rename = "L_t")]
    pub l_t: T,
    pub z_a: T,
    pub h1: T,
    #[serde(rename = "E_t_rmse")]
    pub e_t_rmse: T,
    #[serde(rename = "E_phi_rmse")]
    pub e_phi_rmse: T,
    pub trials: usize,
    pub failures: usize,
    pub seed: u64,
}

/// Gridded Monte-Carlo results, the substrate of the error-vs-geometry
/// analysis and of deployment planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct SweepTable<T: Real> {
    pub rows: Vec<SweepRow<T>>,
}

pub const SWEEP_CSV_HEADER: &str =
    "d,z,L_a,L_t,z_a,h1,E_t_rmse,E_phi_rmse,trials,failures,seed";

impl<T: Real> SweepTable<T> {
    /// Render as CSV with the fixed header; floats use Rust's shortest
    /// round-trip formatting so output is byte-stable.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let f = |v: T| format!("{}", v.to_f64().unwrap_or(f64::NAN));
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                f(r.d),
                f(r.z),
                f(r.l_a),
                f(r.l_t),
                f(r.z_a),
                f(r.h1),
                f(r.e_t_rmse),
                f(r.e_phi_rmse),
                r.trials,
                r.failures,
                r.seed
            ));
        }
        out
    }

    /// Parse a table from the CSV dialect produced by [`Self::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, SimError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| SimError::Setup("empty CSV".into()))?;
        if header.trim() != SWEEP_CSV_HEADER {
            return Err(SimError::Setup(format!(
                "unexpected CSV header '{header}'"
            )));
        }
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(SimError::Setup(format!(
                    "line {}: expected 11 fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let num = |s: &str| -> Result<T, SimError> {
                s.trim()
                    .parse::<f64>()
                    .map(|v| c(v))
                    .map_err(|e| SimError::Setup(format!("line {}: {e}", lineno + 2)))
            };
            rows.push(SweepRow {
                d: num(fields[0])?,
                z: num(fields[1])?,
                l_a: num(fields[2])?,
                l_t: num(fields[3])?,
                z_a: num(fields[4])?,
                h1: num(fields[5])?,
                e_t_rmse: num(fields[6])?,
                e_phi_rmse: num(fields[7])?,
                trials: fields[8].trim().parse().map_err(|e| {
                    SimError::Setup(format!("line {}: {e}", lineno + 2))
                })?,
                failures: fields[9].trim().parse().map_err(|e| {
                    SimError::Setup(format!("line {}: {e}", lineno + 2))
                })?,
                seed: fields[10].trim().parse().map_err(|e| {
                    SimError::Setup(format!("line {}: {e}", lineno + 2))
                })?,
            });
        }
        Ok(Self { rows })
    }

    /// Render as a JSON array of records.
    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(&self.rows).expect("sweep rows serialize")
    }
}

/// Run the max-over-poses protocol along one parameter axis. Each grid value
/// gets its own seed derived from the base seed and grid index, so tables
/// are reproducible and rows independent.
pub fn sweep<T: Real>(
    axis: SweepAxis,
    grid: &[T],
    base: &TrialConfig<T>,
    solver: &SolverConfig<T>,
) -> Result<SweepTable<T>, SimError> {
    if grid.is_empty() {
        return Err(SimError::Setup("sweep grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimError::Setup("sweep grid must be strictly ascending".into()));
    }

    let rows: Vec<Result<SweepRow<T>, SimError>> = grid
        .par_iter()
        .enumerate()
        .map(|(idx, &value)| {
            let mut cfg = base.clone();
            match axis {
                SweepAxis::D => cfg.d = value,
                SweepAxis::Z => cfg.z = value,
                SweepAxis::La => cfg.l_a = value,
                SweepAxis::Lt => cfg.l_t = value,
            }
            cfg.seed = derive_seed(base.seed, idx as u64);
            let max = max_error_over_poses(&cfg, solver)?;
            Ok(SweepRow {
                d: cfg.d,
                z: cfg.z,
                l_a: cfg.l_a,
                l_t: cfg.l_t,
                z_a: cfg.z_a(),
                h1: cfg.h1(),
                e_t_rmse: max.e_t_max,
                e_phi_rmse: max.e_phi_max,
                trials: cfg.trials,
                failures: max.failures,
                seed: cfg.seed,
            })
        })
        .collect();

    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(SweepTable { rows })
}
