//! Subcommand drivers. Each returns the process exit code.

use std::path::Path;

use log::{info, warn};

use projctl_core::functional::{recover_primal, ProblemData};
use projctl_core::minimizer::{certify_infeasibility, minimize, Verdict};
use projctl_core::uc::{
    assemble_uc_map, observability_constant, two_time_check_with_tol, uc_check, ObservabilityKind, UcReport,
};

use crate::build::build_problem;
use crate::config::{ChecksConfig, ObsKind, RunConfig};
use crate::report::{ChecksSummary, Dims, ObsSummary, Report, SolveSummary, UcSummary};
use crate::{exit, CliError, Result};

fn dims(p: &ProblemData) -> Dims {
    Dims {
        n: p.system().n(),
        m: p.system().m(),
        n_steps: p.grid().n_steps(),
        p_g: p.g_space().dim(),
        p_w: p.w_space().dim(),
        p_e: p.target().final_subspace().map_or(0, |e| e.dim()),
    }
}

pub fn uc_report(p: &ProblemData, tol_uc: f64) -> Result<UcReport> {
    let map = assemble_uc_map(p.system(), p.grid(), p.g_space(), p.w_space())?;
    Ok(uc_check(&map, tol_uc))
}

fn core_kind(kind: ObsKind, checks: &ChecksConfig) -> Result<ObservabilityKind> {
    Ok(match kind {
        ObsKind::FinalState => ObservabilityKind::FinalState,
        ObsKind::InitialState => ObservabilityKind::InitialState,
        ObsKind::GeneralFinal => ObservabilityKind::GeneralFinal,
        ObsKind::GeneralInitial => ObservabilityKind::GeneralInitial,
        ObsKind::TildeT => ObservabilityKind::TildeT {
            t_tilde: checks.t_tilde.ok_or_else(|| CliError::Config("tilde_t requires checks.t_tilde".into()))?,
        },
    })
}

pub fn observability(p: &ProblemData, kind: ObsKind, checks: &ChecksConfig) -> Result<ObsSummary> {
    let r = observability_constant(p.system(), p.grid(), p.g_space(), p.w_space(), core_kind(kind, checks)?)?;
    Ok(ObsSummary::new(kind, &r))
}

/// Runs the requested certifications. Returns the summary, whether all
/// passed, and the unique-continuation report when one was computed.
fn run_checks(p: &ProblemData, checks: &ChecksConfig) -> Result<(ChecksSummary, bool, Option<UcReport>)> {
    let mut summary = ChecksSummary::default();
    let mut ok = true;
    let uc = if checks.uc { Some(uc_report(p, checks.tol_uc)?) } else { None };
    if let Some(r) = &uc {
        info!("unique continuation: sigma_min = {:e}, holds = {}", r.sigma_min, r.holds);
        ok &= r.holds;
        summary.uc = Some(UcSummary::from(r));
    }
    if let Some(t) = checks.t_tilde {
        let r = two_time_check_with_tol(p.system(), p.grid(), p.g_space(), p.w_space(), t, checks.tol_uc)?;
        info!("two-time criterion at {t}: certified = {}", r.certified);
        ok &= r.certified;
        summary.two_time = Some((&r).into());
    }
    for &kind in &checks.observability {
        let s = observability(p, kind, checks)?;
        info!("observability {kind:?}: constant = {:?}", s.constant);
        ok &= s.constant.is_some();
        summary.observability.push(s);
    }
    Ok((summary, ok, uc))
}

/// Radius certificate from the z_T-normalized witness, if the map has a kernel.
fn infeasibility_radius(p: &ProblemData, uc: &UcReport) -> Result<Option<f64>> {
    let Some(w) = uc.split_witness(p.system().n(), p.g_space().dim(), p.w_space().dim()) else {
        return Ok(None);
    };
    Ok(Some(certify_infeasibility(p, &w.with_unit_final_state())?))
}

/// `solve`: certifications, then the solve; writes the report and CSV files.
pub fn solve(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let p = build_problem(cfg)?;
    let (checks, certified, uc) = run_checks(&p, &cfg.checks)?;
    let (v, diag) = minimize(&p, &cfg.solver)?;
    info!("solver: {:?} after {} iterations, residual {:e}", diag.verdict, diag.iterations, diag.final_residual);

    let (solution, radius) = match diag.verdict {
        Verdict::DivergedInfeasible => {
            // the witness is needed for the certificate even when the check was not requested
            let uc = match uc {
                Some(r) => r,
                None => uc_report(&p, cfg.checks.tol_uc)?,
            };
            let radius = infeasibility_radius(&p, &uc)?;
            if radius.is_none() {
                warn!("solver diverged but the unique-continuation map has no kernel at this tolerance");
            }
            (None, radius)
        }
        _ => (Some(recover_primal(&p, &v)?), None),
    };
    let exit_code = match diag.verdict {
        Verdict::DivergedInfeasible => exit::INFEASIBLE,
        Verdict::MaxIters => exit::UNCERTIFIED,
        Verdict::Converged if certified => exit::OK,
        Verdict::Converged => exit::UNCERTIFIED,
    };
    let report = Report {
        config: cfg.clone(),
        dims: dims(&p),
        checks,
        certified,
        solve: SolveSummary {
            verdict: diag.verdict,
            iterations: diag.iterations,
            final_residual: diag.final_residual,
            final_objective: diag.objective_history.last().copied(),
        },
        residuals: solution.as_ref().map(|s| s.residuals),
        infeasibility_radius: radius,
        exit_code,
    };
    crate::report::write_outputs(out, &report, solution.as_ref().map(|s| (s, p.grid())))?;
    Ok(exit_code)
}

/// `check-uc`: prints the unique-continuation summary as JSON.
pub fn check_uc(cfg: &RunConfig) -> Result<(String, i32)> {
    let p = build_problem(cfg)?;
    let r = uc_report(&p, cfg.checks.tol_uc)?;
    let code = if r.holds { exit::OK } else { exit::UNCERTIFIED };
    Ok((crate::report::to_json(&UcSummary::from(&r))?, code))
}

/// `obs-constant`: prints one observability constant as JSON.
pub fn obs_constant(cfg: &RunConfig, kind: ObsKind) -> Result<(String, i32)> {
    let p = build_problem(cfg)?;
    let s = observability(&p, kind, &cfg.checks)?;
    let code = if s.constant.is_some() { exit::OK } else { exit::UNCERTIFIED };
    Ok((crate::report::to_json(&s)?, code))
}
