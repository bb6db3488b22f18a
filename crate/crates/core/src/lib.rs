//! Relative 6-DOF pose estimation between two rigid bodies from pairwise
//! UWB-style range measurements.
//!
//! The crate covers the full pipeline:
//!
//! - [`geometry`] — rigid transforms, so(3) maps, simplex geometry and the
//!   regularity inequalities behind regular sensor layouts.
//! - [`range`] — the tag-to-anchor TOA range model, reproducible Gaussian
//!   noise, and the coplanar-anchor mirror ambiguity.
//! - [`estimator`] — trilateration and Levenberg-Marquardt pose estimation
//!   on (translation, so(3)), with a two-stage bootstrap for initialization.
//! - [`fim`] — Jacobian assembly, the Cramér-Rao lower bound, the
//!   orientation information `H_φ` with its altitude ceiling, and the
//!   closed-form anchor/tag placement analysis.
//! - [`sim`] — Monte-Carlo RMSE experiments, the max-over-poses protocol and
//!   parameter sweeps.
//! - [`planner`] — the two-step deployment procedure inverting fitted linear
//!   error models for minimal sensor scales.
//!
//! All numerics are generic over the [`Real`] scalar; the `*F64` aliases
//! below pin the working precision used by the CLI and the test suite.

pub mod estimator;
pub mod fim;
pub mod geometry;
pub mod planner;
pub mod range;
pub mod scalar;
pub mod sim;

pub use scalar::Real;

/// f64 working-precision aliases.
pub type PoseF64 = geometry::Pose<f64>;
pub type AxisAngleF64 = geometry::AxisAngle<f64>;
pub type SimplexF64 = geometry::Simplex<f64>;
pub type SensorLayoutF64 = range::SensorLayout<f64>;
pub type RangeSetF64 = range::RangeSet<f64>;
pub type SolverConfigF64 = estimator::SolverConfig<f64>;
pub type PoseEstimateF64 = estimator::PoseEstimate<f64>;
pub type PoseJacobianF64 = fim::PoseJacobian<f64>;
pub type FimReportF64 = fim::FimReport<f64>;
pub type TrialConfigF64 = sim::TrialConfig<f64>;
pub type SweepTableF64 = sim::SweepTable<f64>;
pub type LinearFitF64 = planner::LinearFit<f64>;
pub type DeploymentPlanF64 = planner::DeploymentPlan<f64>;

/// f32 aliases for the core math types (the simulation layer is typically
/// run at f64).
pub type PoseF32 = geometry::Pose<f32>;
pub type AxisAngleF32 = geometry::AxisAngle<f32>;
pub type SimplexF32 = geometry::Simplex<f32>;
pub type SensorLayoutF32 = range::SensorLayout<f32>;
pub type RangeSetF32 = range::RangeSet<f32>;
