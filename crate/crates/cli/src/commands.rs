//! Subcommand implementations. Each returns the primary output text (written
//! once) plus optional human summary lines for stderr.

use std::path::Path;

use serde::Serialize;

use uwbpose_core::estimator::{initial_guess, solve_pose, EstimatorError, PoseEstimate};
use uwbpose_core::fim::{
    altitude_analysis, anchor_canonical_frame, assemble_jacobian, crlb, orientation_bound,
    FimError,
};
use uwbpose_core::planner::{fit_linear, plan_deployment, plan_from_tables, PlanError, PlanRequest, XSemantics};
use uwbpose_core::range::RangeSet;
use uwbpose_core::sim::{sweep, SweepAxis, SweepTable};

use crate::config::RunConfig;
use crate::CliError;

pub struct CommandOutput {
    /// Primary machine-readable output (JSON or CSV).
    pub primary: String,
    /// Human summary lines for stderr (suppressed by --quiet).
    pub summary: Vec<String>,
    /// Nonzero when the result is degraded but still printable
    /// (non-converged solve).
    pub exit_code: i32,
}

impl CommandOutput {
    fn ok(primary: String) -> Self {
        Self {
            primary,
            summary: Vec::new(),
            exit_code: 0,
        }
    }
}

#[derive(Serialize)]
struct PoseJson {
    rotation: [f64; 9],
    translation: [f64; 3],
    converged: bool,
    iterations: usize,
    final_cost: f64,
}

impl PoseJson {
    fn from_estimate(est: &PoseEstimate<f64>) -> Self {
        let r = est.pose.rotation();
        let mut rotation = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                rotation[row * 3 + col] = r[(row, col)];
            }
        }
        let t = est.pose.translation();
        Self {
            rotation,
            translation: [t.x, t.y, t.z],
            converged: est.converged,
            iterations: est.iterations,
            final_cost: est.final_cost,
        }
    }
}

/// Parse a ranges CSV (`tag_index,anchor_index,distance_m`, 0-based indices,
/// every pair exactly once) into a row-major range set.
fn parse_ranges(text: &str, num_tags: usize, num_anchors: usize) -> Result<RangeSet<f64>, CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::input("ranges CSV is empty".into()))?;
    if header.trim() != "tag_index,anchor_index,distance_m" {
        return Err(CliError::input(format!(
            "ranges CSV header must be 'tag_index,anchor_index,distance_m', got '{header}'"
        )));
    }
    let expected = num_tags * num_anchors;
    let mut values = vec![f64::NAN; expected];
    let mut seen = vec![false; expected];
    let mut rows = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(CliError::input(format!(
                "ranges CSV line {}: expected 3 fields",
                lineno + 2
            )));
        }
        let tag: usize = fields[0].trim().parse().map_err(|e| {
            CliError::input(format!("ranges CSV line {}: tag_index: {e}", lineno + 2))
        })?;
        let anchor: usize = fields[1].trim().parse().map_err(|e| {
            CliError::input(format!("ranges CSV line {}: anchor_index: {e}", lineno + 2))
        })?;
        let distance: f64 = fields[2].trim().parse().map_err(|e| {
            CliError::input(format!("ranges CSV line {}: distance_m: {e}", lineno + 2))
        })?;
        if tag >= num_tags || anchor >= num_anchors {
            return Err(CliError::input(format!(
                "ranges CSV line {}: pair ({tag}, {anchor}) outside layout ({num_tags} tags, {num_anchors} anchors)",
                lineno + 2
            )));
        }
        let idx = tag * num_anchors + anchor;
        if seen[idx] {
            return Err(CliError::input(format!(
                "ranges CSV line {}: duplicate pair ({tag}, {anchor})",
                lineno + 2
            )));
        }
        seen[idx] = true;
        values[idx] = distance;
    }
    if rows != expected {
        return Err(CliError::input(format!(
            "ranges CSV has {rows} measurement rows, layout requires {expected} (= tags × anchors)"
        )));
    }
    Ok(RangeSet::new(values, 0.0))
}

pub fn cmd_solve(cfg: &RunConfig, ranges_path: &Path) -> Result<CommandOutput, CliError> {
    let layout = cfg.sensor_layout()?;
    let text = std::fs::read_to_string(ranges_path).map_err(|e| {
        CliError::input(format!("cannot read ranges {}: {e}", ranges_path.display()))
    })?;
    let ranges = parse_ranges(&text, layout.num_tags(), layout.num_anchors())?;
    let solver = cfg.solver_config();

    let init = initial_guess(&layout, &ranges, &solver).map_err(CliError::from_estimator)?;
    match solve_pose(&layout, &ranges, &init, &solver) {
        Ok(est) => {
            let mut out = CommandOutput::ok(to_json(&PoseJson::from_estimate(&est)));
            out.summary.push(format!(
                "converged in {} iterations, final cost {:.6e} m^2",
                est.iterations, est.final_cost
            ));
            Ok(out)
        }
        Err(EstimatorError::DidNotConverge(est)) => Ok(CommandOutput {
            primary: to_json(&PoseJson::from_estimate(&est)),
            summary: vec![format!(
                "did not converge after {} iterations (cost {:.6e} m^2)",
                est.iterations, est.final_cost
            )],
            exit_code: 3,
        }),
        Err(e) => Err(CliError::from_estimator(e)),
    }
}

#[derive(Serialize)]
struct CrlbJson {
    singular_values: [f64; 6],
    crlb_diag: [f64; 6],
    lambda3_h_phi: f64,
    j3_norm: f64,
    z_a: Option<f64>,
    h1: Option<f64>,
    translation_floor: Option<f64>,
    orientation_lambda3: Option<f64>,
    orientation_ceiling: Option<f64>,
    j3_tag1_norm_sq: Option<f64>,
    tag_height_optima: Option<Vec<f64>>,
    notes: Vec<String>,
}

pub fn cmd_crlb(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let layout = cfg.sensor_layout()?;
    let pose = cfg.pose()?;
    let j = assemble_jacobian(&pose, &layout).map_err(CliError::from_fim)?;
    let mut report = crlb(&j, cfg.sigma_d).map_err(CliError::from_fim)?;

    let mut notes = Vec::new();
    let mut out = CrlbJson {
        singular_values: report.singular_values,
        crlb_diag: std::array::from_fn(|k| report.crlb[(k, k)]),
        lambda3_h_phi: report.lambda3_h_phi,
        j3_norm: report.j3_norm,
        z_a: None,
        h1: None,
        translation_floor: None,
        orientation_lambda3: None,
        orientation_ceiling: None,
        j3_tag1_norm_sq: None,
        tag_height_optima: None,
        notes: Vec::new(),
    };

    // Analytical floors need the canonical anchor frame (4 anchors) and the
    // validity region; report them when available, note why otherwise.
    match anchor_canonical_frame(layout.anchors()) {
        Ok((g, z_a, _order)) => {
            out.z_a = Some(z_a);
            let rho: Vec<Vec<f64>> = layout
                .tags()
                .iter()
                .map(|tag| {
                    let q = g.transform_point(&pose.transform_point(tag));
                    layout
                        .anchors()
                        .iter()
                        .map(|a| {
                            let ca = g.transform_point(a);
                            ((q.x - ca.x).powi(2) + (q.y - ca.y).powi(2)).sqrt()
                        })
                        .collect()
                })
                .collect();
            match altitude_analysis(z_a, &rho) {
                Ok(analysis) => {
                    out.translation_floor = Some(analysis.j_floor);
                    out.tag_height_optima = Some(analysis.z_opt);
                }
                Err(e) => notes.push(format!("translation floor unavailable: {e}")),
            }
        }
        Err(e) => notes.push(format!("anchor canonicalization unavailable: {e}")),
    }
    match orientation_bound(&pose, &layout) {
        Ok(bound) => {
            report = report.with_orientation_bound(&bound);
            out.h1 = Some(bound.h1);
            out.orientation_lambda3 = Some(bound.lambda3);
            out.orientation_ceiling = report.bound_h1;
            out.j3_tag1_norm_sq = Some(bound.j3_tag1_norm_sq);
        }
        Err(e) => notes.push(format!("orientation ceiling unavailable: {e}")),
    }
    out.notes = notes;

    Ok(CommandOutput::ok(to_json(&out)))
}

/// The regressor used for the sweep summary's Pearson line.
fn summary_regressor(axis: SweepAxis) -> Option<(XSemantics, &'static str)> {
    match axis {
        SweepAxis::D => Some((XSemantics::D, "d")),
        SweepAxis::La => Some((XSemantics::DOverZa, "d/z_a")),
        SweepAxis::Lt => Some((XSemantics::DOverZaH1, "d/(z_a*h1)")),
        SweepAxis::Z => None,
    }
}

pub fn cmd_sweep(cfg: &RunConfig, format: crate::OutputFormat) -> Result<CommandOutput, CliError> {
    let Some(section) = &cfg.sweep else {
        return Err(CliError::input("config needs a sweep section".into()));
    };
    let axis: SweepAxis = section
        .axis
        .parse()
        .map_err(|e: String| CliError::input(e))?;
    if section.grid.is_empty() {
        return Err(CliError::input("sweep grid is empty".into()));
    }
    let base = cfg.trial_config()?;
    let solver = cfg.solver_config();
    let table = sweep(axis, &section.grid, &base, &solver).map_err(CliError::from_sim)?;

    let mut summary = Vec::new();
    if let Some((semantics, label)) = summary_regressor(axis) {
        let points: Vec<(f64, f64)> = table
            .rows
            .iter()
            .map(|r| {
                let x = match semantics {
                    XSemantics::D => r.d,
                    XSemantics::DOverZa => r.d / r.z_a,
                    XSemantics::DOverZaH1 => r.d / (r.z_a * r.h1),
                    XSemantics::InvZa => 1.0 / r.z_a,
                };
                let y = match semantics {
                    XSemantics::DOverZaH1 => r.e_phi_rmse,
                    _ => r.e_t_rmse,
                };
                (x, y)
            })
            .collect();
        match fit_linear(&points, semantics) {
            Ok(fit) => {
                let which = if matches!(semantics, XSemantics::DOverZaH1) {
                    "E_phi"
                } else {
                    "E_t"
                };
                summary.push(format!(
                    "pearson r of {which} vs {label}: {:.4} (slope {:.6}, intercept {:.6})",
                    fit.pearson_r, fit.slope, fit.intercept
                ));
            }
            Err(e) => summary.push(format!("no linear summary: {e}")),
        }
    }

    let primary = match format {
        crate::OutputFormat::Csv => table.to_csv(),
        crate::OutputFormat::Json => table.to_json(),
    };
    Ok(CommandOutput {
        primary,
        summary,
        exit_code: 0,
    })
}

pub fn cmd_plan(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let Some(section) = &cfg.plan else {
        return Err(CliError::input("config needs a plan section".into()));
    };
    let mut req = PlanRequest::new(
        section.d_max,
        section.e_t_target,
        section.e_phi_target,
        cfg.sigma_d,
        section.l_a_grid.clone(),
        section.l_t_grid.clone(),
    );
    req.safety_margin = section.safety_margin;
    req.min_pearson = section.min_pearson;
    req.check_lt_sensitivity = section.check_lt_sensitivity;

    let plan = match (&section.sweep_table_step1, &section.sweep_table_step2) {
        (Some(p1), Some(p2)) => {
            let t1 = load_table(p1)?;
            let t2 = load_table(p2)?;
            plan_from_tables(&req, &t1, &t2).map_err(CliError::from_plan)?
        }
        (None, None) => {
            let mut base = cfg.trial_config_for_plan(section.d_max)?;
            base.sigma_d = cfg.sigma_d;
            let solver = cfg.solver_config();
            plan_deployment(&req, &base, &solver).map_err(CliError::from_plan)?
        }
        _ => {
            return Err(CliError::input(
                "offline planning needs both sweep_table_step1 and sweep_table_step2".into(),
            ))
        }
    };

    let summary = vec![
        format!(
            "L_a_min = {:.4} m, L_t_min = {:.4} m (circumradius convention)",
            plan.l_a_min, plan.l_t_min
        ),
        format!(
            "fits: E_t vs d/z_a r = {:.4}; E_phi vs d/(z_a*h1) r = {:.4}",
            plan.translation_fit.pearson_r, plan.orientation_fit.pearson_r
        ),
        format!("validated: {}", plan.validated),
    ];
    Ok(CommandOutput {
        primary: plan.to_json(),
        summary,
        exit_code: 0,
    })
}

fn load_table(path: &str) -> Result<SweepTable<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read sweep table {path}: {e}")))?;
    SweepTable::from_csv(&text).map_err(CliError::from_sim)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes")
}

impl CliError {
    pub(crate) fn from_estimator(e: EstimatorError<f64>) -> Self {
        match e {
            EstimatorError::DidNotConverge(_) | EstimatorError::PointDidNotConverge(_) => {
                CliError::new(3, format!("estimation failed: {e}"))
            }
            EstimatorError::DegenerateGeometry { .. }
            | EstimatorError::DegenerateLayout { .. }
            | EstimatorError::CollinearPoints => CliError::new(4, format!("degenerate: {e}")),
            EstimatorError::InvalidInput { .. } => CliError::input(e.to_string()),
        }
    }

    pub(crate) fn from_fim(e: FimError) -> Self {
        match e {
            FimError::RankDeficient { .. } => CliError::new(4, format!("degenerate: {e}")),
            FimError::ZeroRange { .. } => CliError::new(4, format!("degenerate: {e}")),
            FimError::AssumptionViolated { .. } => CliError::input(e.to_string()),
        }
    }

    pub(crate) fn from_sim(e: uwbpose_core::sim::SimError) -> Self {
        match e {
            uwbpose_core::sim::SimError::TooManyFailures { .. } => {
                CliError::new(3, e.to_string())
            }
            uwbpose_core::sim::SimError::Setup(_) => CliError::input(e.to_string()),
        }
    }

    pub(crate) fn from_plan(e: PlanError) -> Self {
        match e {
            PlanError::TargetInfeasible { .. } | PlanError::LowCorrelation { .. } => {
                CliError::new(5, e.to_string())
            }
            PlanError::DegenerateFit | PlanError::AssumptionViolated { .. } => {
                CliError::input(e.to_string())
            }
            PlanError::Sim(sim) => CliError::from_sim(sim),
        }
    }
}
