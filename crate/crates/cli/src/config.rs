//! JSON run configuration: one document drives every subcommand, unknown
//! fields are rejected, and all randomness flows from its seed.

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;

use uwbpose_core::estimator::SolverConfig;
use uwbpose_core::geometry::{regular_layout, Pose, SimplexKind};
use uwbpose_core::range::SensorLayout;
use uwbpose_core::sim::TrialConfig;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default = "default_sigma")]
    pub sigma_d: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_orientation_samples")]
    pub orientation_samples: usize,
    #[serde(default = "default_azimuth_samples")]
    pub azimuth_samples: usize,
    /// Horizontal distance of the tracked node (m).
    #[serde(default)]
    pub d: Option<f64>,
    /// Altitude of the tracked node (m).
    #[serde(default)]
    pub z: f64,
    /// Circumradius of the regular anchor tetrahedron (m).
    #[serde(default)]
    pub l_a: Option<f64>,
    /// Circumradius of the regular tag triangle (m).
    #[serde(default)]
    pub l_t: Option<f64>,
    #[serde(default)]
    pub solver: SolverSection,
    /// Explicit sensor positions; overrides l_a / l_t.
    #[serde(default)]
    pub layout: Option<LayoutSection>,
    #[serde(default)]
    pub pose: Option<PoseSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub plan: Option<PlanSection>,
}

fn default_sigma() -> f64 {
    0.05
}

fn default_trials() -> usize {
    50
}

fn default_orientation_samples() -> usize {
    16
}

fn default_azimuth_samples() -> usize {
    4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "d_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "d_gradient_tolerance")]
    pub gradient_tolerance: f64,
    #[serde(default = "d_step_tolerance")]
    pub step_tolerance: f64,
    #[serde(default = "d_initial_damping")]
    pub initial_damping: f64,
    #[serde(default = "d_damping_up")]
    pub damping_up: f64,
    #[serde(default = "d_damping_down")]
    pub damping_down: f64,
    #[serde(default = "d_guard")]
    pub degeneracy_guard: bool,
}

fn d_max_iterations() -> usize {
    SolverConfig::<f64>::default().max_iterations
}
fn d_gradient_tolerance() -> f64 {
    SolverConfig::<f64>::default().gradient_tolerance
}
fn d_step_tolerance() -> f64 {
    SolverConfig::<f64>::default().step_tolerance
}
fn d_initial_damping() -> f64 {
    SolverConfig::<f64>::default().initial_damping
}
fn d_damping_up() -> f64 {
    SolverConfig::<f64>::default().damping_up
}
fn d_damping_down() -> f64 {
    SolverConfig::<f64>::default().damping_down
}
fn d_guard() -> bool {
    true
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            max_iterations: d_max_iterations(),
            gradient_tolerance: d_gradient_tolerance(),
            step_tolerance: d_step_tolerance(),
            initial_damping: d_initial_damping(),
            damping_up: d_damping_up(),
            damping_down: d_damping_down(),
            degeneracy_guard: d_guard(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSection {
    pub anchors: Vec<[f64; 3]>,
    pub tags: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSection {
    /// Row-major 3×3 rotation matrix.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// One of `d`, `z`, `L_a`, `L_t`.
    pub axis: String,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub d_max: f64,
    pub e_t_target: f64,
    pub e_phi_target: f64,
    pub l_a_grid: Vec<f64>,
    pub l_t_grid: Vec<f64>,
    #[serde(default = "d_safety_margin")]
    pub safety_margin: f64,
    #[serde(default = "d_min_pearson")]
    pub min_pearson: f64,
    #[serde(default = "d_guard")]
    pub check_lt_sensitivity: bool,
    /// Offline mode: precomputed L_a-sweep and L_t-sweep tables (CSV paths);
    /// when both are present no simulation is run.
    #[serde(default)]
    pub sweep_table_step1: Option<String>,
    #[serde(default)]
    pub sweep_table_step2: Option<String>,
}

fn d_safety_margin() -> f64 {
    1.05
}

fn d_min_pearson() -> f64 {
    0.95
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("config parse error: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::input(format!(
                "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn solver_config(&self) -> SolverConfig<f64> {
        SolverConfig {
            max_iterations: self.solver.max_iterations,
            gradient_tolerance: self.solver.gradient_tolerance,
            step_tolerance: self.solver.step_tolerance,
            initial_damping: self.solver.initial_damping,
            damping_up: self.solver.damping_up,
            damping_down: self.solver.damping_down,
            degeneracy_guard: self.solver.degeneracy_guard,
        }
    }

    /// Explicit layout if given, else regular layouts from l_a / l_t.
    pub fn sensor_layout(&self) -> Result<SensorLayout<f64>, CliError> {
        if let Some(section) = &self.layout {
            let anchors = section.anchors.iter().map(|a| Vector3::from(*a)).collect();
            let tags = section.tags.iter().map(|t| Vector3::from(*t)).collect();
            return SensorLayout::new(anchors, tags)
                .map_err(|e| CliError::input(format!("layout: {e}")));
        }
        let (Some(l_a), Some(l_t)) = (self.l_a, self.l_t) else {
            return Err(CliError::input(
                "config needs either an explicit layout or both l_a and l_t".into(),
            ));
        };
        if l_a <= 0.0 || l_t <= 0.0 {
            return Err(CliError::input("l_a and l_t must be positive".into()));
        }
        let anchors = regular_layout(SimplexKind::Tetrahedron, l_a);
        let tags = regular_layout(SimplexKind::Triangle, l_t);
        SensorLayout::new(anchors.vertices().to_vec(), tags.vertices().to_vec())
            .map_err(|e| CliError::input(format!("layout: {e}")))
    }

    pub fn pose(&self) -> Result<Pose<f64>, CliError> {
        let Some(section) = &self.pose else {
            return Err(CliError::input("config needs a pose section".into()));
        };
        let rotation = Matrix3::from_row_slice(&section.rotation);
        Pose::new(rotation, Vector3::from(section.translation))
            .map_err(|e| CliError::input(format!("pose: {e}")))
    }

    pub fn trial_config(&self) -> Result<TrialConfig<f64>, CliError> {
        let (Some(l_a), Some(l_t)) = (self.l_a, self.l_t) else {
            return Err(CliError::input("config needs l_a and l_t".into()));
        };
        self.trial_config_with(l_a, l_t)
    }

    /// Base config for planning: layout scales are placeholders here (the
    /// planner sweeps them), the distance is pinned to the plan's d_max.
    pub fn trial_config_for_plan(&self, d_max: f64) -> Result<TrialConfig<f64>, CliError> {
        let mut cfg = self.trial_config_with(self.l_a.unwrap_or(1.0), self.l_t.unwrap_or(1.0));
        if cfg.is_err() && self.d.is_none() {
            // d is irrelevant for planning (d_max rules); synthesize it.
            let mut with_d = self.clone();
            with_d.d = Some(d_max);
            cfg = with_d.trial_config_with(self.l_a.unwrap_or(1.0), self.l_t.unwrap_or(1.0));
        }
        let mut cfg = cfg?;
        cfg.d = d_max;
        Ok(cfg)
    }

    fn trial_config_with(&self, l_a: f64, l_t: f64) -> Result<TrialConfig<f64>, CliError> {
        let Some(d) = self.d else {
            return Err(CliError::input("config needs d (horizontal distance)".into()));
        };
        Ok(TrialConfig {
            l_a,
            l_t,
            d,
            z: self.z,
            sigma_d: self.sigma_d,
            trials: self.trials,
            seed: self.seed,
            orientation_samples: self.orientation_samples,
            azimuth_samples: self.azimuth_samples,
        })
    }
}
