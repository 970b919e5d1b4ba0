//! Turns a [`RunConfig`] into solver objects.

use nalgebra::{DMatrix, DVector};

use projctl_core::functional::{ProblemData, ProblemKind, Target};
use projctl_core::models::{make_heat1d, make_ode, make_wave1d, ModelFamily};
use projctl_core::subspace::{Ambient, Subspace};
use projctl_core::system::{GridSignal, LinearSystem, TimeGrid};

use crate::config::{ModelConfig, RunConfig, SignalSpec, VectorSpec};
use crate::{CliError, Result};

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn matrix(rows: &[Vec<f64>], key: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(bad(format!("{key}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn build_system(model: &ModelConfig) -> Result<LinearSystem> {
    match model.family {
        ModelFamily::Heat1d | ModelFamily::Wave1d => {
            if model.a.is_some() || model.b.is_some() {
                return Err(bad("model.a / model.b are only accepted for family \"ode\""));
            }
            let n_modes = model.n_modes.ok_or_else(|| bad("model.n_modes is required"))?;
            let [a, b] = model.omega.ok_or_else(|| bad("model.omega is required"))?;
            let n_quad = model.n_quad.unwrap_or(4 * n_modes);
            let sys = if model.family == ModelFamily::Heat1d {
                make_heat1d(n_modes, (a, b), n_quad)?
            } else {
                make_wave1d(n_modes, (a, b), n_quad)?
            };
            Ok(sys)
        }
        ModelFamily::Ode => {
            if model.n_modes.is_some() || model.omega.is_some() || model.n_quad.is_some() {
                return Err(bad("model.n_modes / omega / n_quad are not accepted for family \"ode\""));
            }
            let a = matrix(model.a.as_deref().ok_or_else(|| bad("model.a is required"))?, "model.a")?;
            let b = matrix(model.b.as_deref().ok_or_else(|| bad("model.b is required"))?, "model.b")?;
            Ok(make_ode(a, b, "ode")?)
        }
    }
}

/// Resolves a state-space vector of length `n`.
pub fn state_vector(spec: &VectorSpec, n: usize, key: &str) -> Result<DVector<f64>> {
    match spec {
        VectorSpec::Literal(v) => {
            if v.len() != n {
                return Err(bad(format!("{key}: expected {n} entries, got {}", v.len())));
            }
            Ok(DVector::from_column_slice(v))
        }
        VectorSpec::Modes(m) => {
            let mut out = DVector::zeros(n);
            for &(idx, amp) in &m.modes {
                if idx == 0 || idx > n {
                    return Err(bad(format!("{key}: mode index {idx} outside 1..={n}")));
                }
                out[idx - 1] += amp;
            }
            Ok(out)
        }
    }
}

/// Resolves a control-space vector; modal specs go through `B^T`.
fn control_vector(spec: &VectorSpec, sys: &LinearSystem, key: &str) -> Result<DVector<f64>> {
    match spec {
        VectorSpec::Literal(_) => state_vector(spec, sys.m(), key),
        VectorSpec::Modes(_) => Ok(sys.b().transpose() * state_vector(spec, sys.n(), key)?),
    }
}

fn signal(spec: &SignalSpec, sys: &LinearSystem, grid: &TimeGrid, control: bool, key: &str) -> Result<GridSignal> {
    let dim = if control { sys.m() } else { sys.n() };
    match spec {
        SignalSpec::Exponential(e) => {
            let key = format!("{key}.vector");
            let v = if control { control_vector(&e.vector, sys, &key)? } else { state_vector(&e.vector, dim, &key)? };
            let [lo, hi] = e.support.unwrap_or([0.0, grid.horizon()]);
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(bad(format!("{key}: empty support [{lo}, {hi}]")));
            }
            let rate = e.rate;
            Ok(GridSignal::from_fn(dim, grid, |t| {
                if t >= lo && t <= hi {
                    &v * (rate * t).exp()
                } else {
                    DVector::zeros(dim)
                }
            }))
        }
        SignalSpec::Literal(l) => {
            if l.values.len() != grid.n_steps() {
                return Err(bad(format!("{key}.values: expected {} rows, got {}", grid.n_steps(), l.values.len())));
            }
            let mut out = GridSignal::zeros(dim, grid.n_steps());
            for (k, row) in l.values.iter().enumerate() {
                if row.len() != dim {
                    return Err(bad(format!("{key}.values[{k}]: expected {dim} entries, got {}", row.len())));
                }
                out.values_mut().set_column(k, &DVector::from_column_slice(row));
            }
            Ok(out)
        }
    }
}

/// `Σ c_i s_i` over the generators.
fn combine(gens: &[GridSignal], coefs: &[f64], dim: usize, grid: &TimeGrid, key: &str) -> Result<GridSignal> {
    if coefs.len() != gens.len() {
        return Err(bad(format!("{key}: expected {} coefficients, got {}", gens.len(), coefs.len())));
    }
    Ok(gens.iter().zip(coefs).fold(GridSignal::zeros(dim, grid.n_steps()), |acc, (s, &c)| acc.plus(&s.scaled(c))))
}

fn span(gens: &[GridSignal], ambient: Ambient) -> Result<Subspace> {
    if gens.is_empty() {
        Ok(Subspace::zero(ambient))
    } else {
        Ok(Subspace::from_signals(gens, ambient)?)
    }
}

/// Builds the problem described by `cfg`.
pub fn build_problem(cfg: &RunConfig) -> Result<ProblemData> {
    cfg.solver.validate()?;
    let sys = build_system(&cfg.model)?;
    let grid = TimeGrid::new(cfg.grid.horizon, cfg.grid.n_steps)?;
    let (n, m) = (sys.n(), sys.m());
    let pc = &cfg.problem;

    let g_gens = pc
        .g
        .iter()
        .enumerate()
        .map(|(i, s)| signal(s, &sys, &grid, true, &format!("problem.g[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let w_gens = pc
        .w
        .iter()
        .enumerate()
        .map(|(i, s)| signal(s, &sys, &grid, false, &format!("problem.w[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let g = span(&g_gens, Ambient::ControlSignal { m, grid })?;
    let w = span(&w_gens, Ambient::StateSignal { n, grid })?;

    let y1 = pc.y1.as_ref().map(|v| state_vector(v, n, "problem.y1")).transpose()?;
    let approx = matches!(pc.kind, ProblemKind::Approx | ProblemKind::ApproxRelaxed);
    if !approx && pc.epsilon.is_some() {
        return Err(bad("problem.epsilon is only accepted for the approximate kinds"));
    }
    if !approx && !pc.e.is_empty() {
        return Err(bad("problem.e is only accepted for the approximate kinds"));
    }
    let target = match pc.kind {
        ProblemKind::Null => {
            if y1.is_some() {
                return Err(bad("problem.y1 is not accepted for kind \"null\""));
            }
            Target::Null
        }
        ProblemKind::Exact => Target::Exact { y1: y1.ok_or_else(|| bad("problem.y1 is required"))? },
        ProblemKind::Approx | ProblemKind::ApproxRelaxed => {
            let y1 = y1.ok_or_else(|| bad("problem.y1 is required"))?;
            let epsilon = pc.epsilon.ok_or_else(|| bad("problem.epsilon is required"))?;
            let raw = pc
                .e
                .iter()
                .enumerate()
                .map(|(i, v)| state_vector(v, n, &format!("problem.e[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            let e = if raw.is_empty() {
                Subspace::zero(Ambient::State { n })
            } else {
                Subspace::orthonormalize(&raw, Ambient::State { n })?
            };
            if pc.kind == ProblemKind::Approx {
                Target::Approx { y1, epsilon, e }
            } else {
                Target::ApproxRelaxed { y1, epsilon, e }
            }
        }
    };

    let mut p = ProblemData::new(sys, grid, target)?.with_subspaces(g, w)?;
    if let Some(v) = &pc.y0 {
        p = p.with_initial_state(state_vector(v, n, "problem.y0")?)?;
    }
    if let Some(c) = &pc.g_star {
        p = p.with_g_star(combine(&g_gens, c, m, &grid, "problem.g_star")?)?;
    }
    if let Some(c) = &pc.w_star {
        p = p.with_w_star(combine(&w_gens, c, n, &grid, "problem.w_star")?)?;
    }
    Ok(p)
}
