//! Report schema and file writers. Output depends only on the configuration,
//! so reruns are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use projctl_core::functional::{ControlSolution, Residuals};
use projctl_core::minimizer::Verdict;
use projctl_core::system::TimeGrid;
use projctl_core::uc::{ObservabilityReport, TwoTimeReport, UcReport};

use crate::config::{ObsKind, RunConfig};
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config: RunConfig,
    pub dims: Dims,
    pub checks: ChecksSummary,
    /// Every requested certification passed.
    pub certified: bool,
    pub solve: SolveSummary,
    /// Absent when the solve diverged.
    pub residuals: Option<Residuals>,
    /// Infeasibility radius of the unique-continuation witness rescaled to
    /// `‖z_T‖ = 1`: no admissible trajectory from 0 ends within it of `-z_T`.
    pub infeasibility_radius: Option<f64>,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub n_steps: usize,
    pub p_g: usize,
    pub p_w: usize,
    pub p_e: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ChecksSummary {
    pub uc: Option<UcSummary>,
    pub two_time: Option<TwoTimeSummary>,
    pub observability: Vec<ObsSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UcSummary {
    pub sigma_min: f64,
    pub holds: bool,
    pub map_dims: [usize; 2],
    /// Unit kernel vector `(z_T, g, w)` of length `n + p_G + p_W` when the property fails.
    pub witness: Option<Vec<f64>>,
}

impl From<&UcReport> for UcSummary {
    fn from(r: &UcReport) -> Self {
        Self {
            sigma_min: r.sigma_min,
            holds: r.holds,
            map_dims: [r.map_dims.0, r.map_dims.1],
            witness: r.witness.as_ref().map(|w| w.iter().copied().collect()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoTimeSummary {
    pub t_tilde: f64,
    pub restriction_ok: bool,
    pub uc_sigma_min: f64,
    pub uc_holds: bool,
    /// `null` when the constant is infinite.
    pub obs_constant: Option<f64>,
    pub certified: bool,
}

impl From<&TwoTimeReport> for TwoTimeSummary {
    fn from(r: &TwoTimeReport) -> Self {
        Self {
            t_tilde: r.t_tilde,
            restriction_ok: r.restriction_ok,
            uc_sigma_min: r.uc_tilde.sigma_min,
            uc_holds: r.uc_tilde.holds,
            obs_constant: r.obs_tilde.constant,
            certified: r.certified,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ObsSummary {
    pub kind: ObsKind,
    /// `null` when the constant is infinite.
    pub constant: Option<f64>,
    pub sigma_min: f64,
}

impl ObsSummary {
    pub fn new(kind: ObsKind, r: &ObservabilityReport) -> Self {
        Self { kind, constant: r.constant, sigma_min: r.sigma_min }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub verdict: Verdict,
    pub iterations: usize,
    pub final_residual: f64,
    pub final_objective: Option<f64>,
}

/// Pretty JSON with a trailing newline. Floats use the shortest
/// representation that parses back to the same bits.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn csv_header(first: &str, prefix: &str, dim: usize) -> String {
    let mut s = first.to_string();
    for i in 1..=dim {
        write!(s, ",{prefix}_{i}").unwrap();
    }
    s.push('\n');
    s
}

fn csv_row(s: &mut String, t: f64, col: nalgebra::DMatrixView<'_, f64>) {
    write!(s, "{t:.16e}").unwrap();
    for v in col.iter() {
        write!(s, ",{v:.16e}").unwrap();
    }
    s.push('\n');
}

/// `t, y_1..y_n` at the grid nodes.
pub fn trajectory_csv(sol: &ControlSolution, grid: &TimeGrid) -> String {
    let nodes = &sol.y.nodes;
    let mut s = csv_header("t", "y", nodes.nrows());
    for k in 0..nodes.ncols() {
        csv_row(&mut s, grid.node(k), nodes.columns(k, 1));
    }
    s
}

/// `t_mid, u_1..u_m` on the intervals.
pub fn control_csv(sol: &ControlSolution, grid: &TimeGrid) -> String {
    let u = sol.u.values();
    let mut s = csv_header("t_mid", "u", u.nrows());
    for k in 0..u.ncols() {
        csv_row(&mut s, grid.midpoint(k), u.columns(k, 1));
    }
    s
}

/// Writes `report.json` and, when a control was recovered, the two CSV files.
pub fn write_outputs(dir: &Path, report: &Report, solution: Option<(&ControlSolution, &TimeGrid)>) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), to_json(report)?)?;
    if let Some((sol, grid)) = solution {
        fs::write(dir.join("trajectory.csv"), trajectory_csv(sol, grid))?;
        fs::write(dir.join("control.csv"), control_csv(sol, grid))?;
    }
    Ok(())
}
