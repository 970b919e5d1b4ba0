//! Discrete certificates for unique continuation and observability.
//!
//! Every qualitative hypothesis is turned into a statement about an assembled
//! matrix: unique continuation holds when the map
//! `(z_T, g, w) ↦ B^T z - g` has trivial kernel (smallest singular value above
//! `tol_uc`), and observability constants are inverses of generalized singular
//! values. All results are discrete-level certificates for the truncated model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{full_column_rank, generalized_constant, kernel_basis, min_singular_pair, svd_full};
use crate::models::{ModelDescriptor, Restriction};
use crate::subspace::{Ambient, Subspace};
use crate::system::{adjoint_solve, build_propagator, GridSignal, LinearSystem, StepOperator, TimeGrid};

pub const DEFAULT_TOL_UC: f64 = 1e-8;
/// Largest `n * n_steps` for which the general observability maps are assembled densely.
pub const DEFAULT_DENSE_CAP: usize = 20_000;
/// Relative singular-value cutoff for kernels and rank tests.
pub const KERNEL_REL_TOL: f64 = 1e-10;

/// Candidate kernel element `(z_T, g, w)` of the unique-continuation map.
#[derive(Debug, Clone, PartialEq)]
pub struct UcWitness {
    pub z_t: DVector<f64>,
    pub g_coef: DVector<f64>,
    pub w_coef: DVector<f64>,
}

impl UcWitness {
    pub fn from_flat(x: &DVector<f64>, n: usize, p_g: usize, p_w: usize) -> Self {
        Self {
            z_t: x.rows(0, n).into_owned(),
            g_coef: x.rows(n, p_g).into_owned(),
            w_coef: x.rows(n + p_g, p_w).into_owned(),
        }
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let mut v: Vec<f64> = self.z_t.iter().copied().collect();
        v.extend(self.g_coef.iter());
        v.extend(self.w_coef.iter());
        DVector::from_vec(v)
    }

    pub fn norm(&self) -> f64 {
        (self.z_t.norm_squared() + self.g_coef.norm_squared() + self.w_coef.norm_squared()).sqrt()
    }

    /// Rescaled so that `‖z_T‖ = 1`, when `z_T ≠ 0`.
    pub fn with_unit_final_state(&self) -> Self {
        let s = self.z_t.norm();
        if s == 0.0 {
            return self.clone();
        }
        Self { z_t: &self.z_t / s, g_coef: &self.g_coef / s, w_coef: &self.w_coef / s }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UcReport {
    pub sigma_min: f64,
    pub holds: bool,
    /// Unit right singular vector of `sigma_min` when the property fails.
    pub witness: Option<DVector<f64>>,
    pub map_dims: (usize, usize),
}

impl UcReport {
    /// Split the witness into its `(z_T, g, w)` blocks.
    pub fn split_witness(&self, n: usize, p_g: usize, p_w: usize) -> Option<UcWitness> {
        self.witness.as_ref().map(|x| UcWitness::from_flat(x, n, p_g, p_w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservabilityKind {
    /// `‖z_T‖ <= C ‖B^T z‖` for homogeneous adjoints.
    FinalState,
    /// `‖z(0)‖ <= C ‖B^T z‖` for homogeneous adjoints.
    InitialState,
    /// `‖(z_T, g, w, f)‖ <= C (‖B^T z + g‖ + ‖f + w‖)`.
    GeneralFinal,
    /// `‖(z(0), g, w, f)‖ <= C (‖B^T z + g‖ + ‖f + w‖)`.
    GeneralInitial,
    /// `‖z(T̃)‖ <= C ‖B^T z‖_{L²(0,T)}` for homogeneous adjoints.
    TildeT { t_tilde: f64 },
}

impl ObservabilityKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObservabilityKind::FinalState => "final_state",
            ObservabilityKind::InitialState => "initial_state",
            ObservabilityKind::GeneralFinal => "general_final",
            ObservabilityKind::GeneralInitial => "general_initial",
            ObservabilityKind::TildeT { .. } => "tilde_T",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilityReport {
    pub kind: ObservabilityKind,
    /// `None` when the inequality fails at the discrete level.
    pub constant: Option<f64>,
    pub sigma_min: f64,
}

/// Adjoint solves restricted to the first `k_end` intervals, terminal data at node `k_end`.
struct AdjointWindow<'a> {
    system: &'a LinearSystem,
    ops: &'a StepOperator,
    k_end: usize,
}

impl AdjointWindow<'_> {
    /// `√dt B^T z` on intervals `0..k_end`, flattened interval-major.
    fn observation(&self, z_end: &DVector<f64>, f: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.system.n();
        let f_win = GridSignal::from_matrix(f.columns(0, self.k_end).into_owned());
        let sys = self.system;
        if z_end.len() != n {
            return Err(shape_err("terminal state dimension"));
        }
        let z = adjoint_solve(sys, self.ops, z_end, &f_win)?;
        let obs = sys.b().transpose() * &z.averages * self.ops.dt().sqrt();
        Ok((DVector::from_column_slice(obs.as_slice()), z.initial()))
    }
}

fn check_subspaces(system: &LinearSystem, grid: &TimeGrid, g: &Subspace, w: &Subspace) -> Result<()> {
    let (n, m, grid) = (system.n(), system.m(), *grid);
    if g.ambient() != (Ambient::ControlSignal { m, grid }) {
        return Err(shape_err("G must live in the control-signal space"));
    }
    if w.ambient() != (Ambient::StateSignal { n, grid }) {
        return Err(shape_err("W must live in the state-signal space"));
    }
    Ok(())
}

/// Matrix of `(z_T, g_coef, w_coef) ↦ √dt (B^T z - g)` with `z` the adjoint
/// driven by `w` over the first `k_end` intervals and terminal value at node `k_end`.
fn uc_map_window(
    system: &LinearSystem,
    ops: &StepOperator,
    grid: &TimeGrid,
    g: &Subspace,
    w: &Subspace,
    k_end: usize,
) -> Result<DMatrix<f64>> {
    let n = system.n();
    let m = system.m();
    let rows = m * k_end;
    let cols = n + g.dim() + w.dim();
    let win = AdjointWindow { system, ops, k_end };
    let zero_f = DMatrix::zeros(n, grid.n_steps());
    let mut map = DMatrix::zeros(rows, cols);
    for i in 0..n {
        let (obs, _) = win.observation(&DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 }), &zero_f)?;
        map.set_column(i, &obs);
    }
    let sqdt = grid.dt().sqrt();
    for j in 0..g.dim() {
        let col = g.basis()[j].rows(0, rows) * (-sqdt);
        map.set_column(n + j, &col);
    }
    for l in 0..w.dim() {
        let wl = w.basis_signal(l);
        let (obs, _) = win.observation(&DVector::zeros(n), wl.values())?;
        map.set_column(n + g.dim() + l, &obs);
    }
    Ok(map)
}

/// Unique-continuation map on the whole horizon, in orthonormal coordinates.
pub fn assemble_uc_map(system: &LinearSystem, grid: &TimeGrid, g: &Subspace, w: &Subspace) -> Result<DMatrix<f64>> {
    check_subspaces(system, grid, g, w)?;
    let ops = build_propagator(system, grid)?;
    uc_map_window(system, &ops, grid, g, w, grid.n_steps())
}

/// SVD test of the kernel of `map`.
pub fn uc_check(map: &DMatrix<f64>, tol_uc: f64) -> UcReport {
    let dims = (map.nrows(), map.ncols());
    if map.ncols() == 0 {
        return UcReport { sigma_min: 0.0, holds: true, witness: None, map_dims: dims };
    }
    let (sigma_min, v) = min_singular_pair(map);
    let holds = sigma_min > tol_uc;
    UcReport { sigma_min, holds, witness: (!holds).then_some(v), map_dims: dims }
}

/// Observability constant of the requested kind, with the default dense-assembly cap.
pub fn observability_constant(
    system: &LinearSystem,
    grid: &TimeGrid,
    g: &Subspace,
    w: &Subspace,
    kind: ObservabilityKind,
) -> Result<ObservabilityReport> {
    observability_constant_capped(system, grid, g, w, kind, DEFAULT_DENSE_CAP)
}

pub fn observability_constant_capped(
    system: &LinearSystem,
    grid: &TimeGrid,
    g: &Subspace,
    w: &Subspace,
    kind: ObservabilityKind,
    cap: usize,
) -> Result<ObservabilityReport> {
    check_subspaces(system, grid, g, w)?;
    let ops = build_propagator(system, grid)?;
    observability_with_ops(system, &ops, grid, g, w, kind, cap)
}

fn observability_with_ops(
    system: &LinearSystem,
    ops: &StepOperator,
    grid: &TimeGrid,
    g: &Subspace,
    w: &Subspace,
    kind: ObservabilityKind,
    cap: usize,
) -> Result<ObservabilityReport> {
    let n = system.n();
    let m = system.m();
    let steps = grid.n_steps();
    let win = AdjointWindow { system, ops, k_end: steps };
    let zero_f = DMatrix::zeros(n, steps);
    let (obs, meas) = match kind {
        ObservabilityKind::FinalState | ObservabilityKind::InitialState | ObservabilityKind::TildeT { .. } => {
            let k_tilde = match kind {
                ObservabilityKind::TildeT { t_tilde } => Some(
                    grid.node_index(t_tilde)
                        .filter(|&k| k > 0)
                        .ok_or_else(|| Error::Grid(format!("T_tilde = {t_tilde} is not a positive grid node")))?,
                ),
                _ => None,
            };
            let mut obs = DMatrix::zeros(m * steps, n);
            let mut meas = DMatrix::zeros(n, n);
            for i in 0..n {
                let e = DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 });
                let z = adjoint_solve(system, ops, &e, &GridSignal::from_matrix(zero_f.clone()))?;
                let o = system.b().transpose() * &z.averages * ops.dt().sqrt();
                obs.set_column(i, &DVector::from_column_slice(o.as_slice()));
                let measured = match (kind, k_tilde) {
                    (ObservabilityKind::FinalState, _) => e,
                    (ObservabilityKind::InitialState, _) => z.initial(),
                    (_, Some(k)) => z.node(k),
                    _ => unreachable!(),
                };
                meas.set_column(i, &measured);
            }
            (obs, meas)
        }
        ObservabilityKind::GeneralFinal | ObservabilityKind::GeneralInitial => {
            if n * steps > cap {
                return Err(Error::TooLarge { size: n * steps, cap });
            }
            let (pg, pw) = (g.dim(), w.dim());
            let dim = n + pg + pw + n * steps;
            let rows_u = m * steps;
            let rows = rows_u + n * steps;
            let mut obs = DMatrix::zeros(rows, dim);
            let mut meas = DMatrix::identity(dim, dim);
            let sqdt = grid.dt().sqrt();
            // z_T columns
            for i in 0..n {
                let e = DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 });
                let (o, z0) = win.observation(&e, &zero_f)?;
                obs.view_mut((0, i), (rows_u, 1)).copy_from(&o);
                if kind == ObservabilityKind::GeneralInitial {
                    meas.view_mut((0, i), (n, 1)).copy_from(&z0);
                }
            }
            for j in 0..pg {
                obs.view_mut((0, n + j), (rows_u, 1)).copy_from(&(&g.basis()[j] * sqdt));
            }
            for l in 0..pw {
                obs.view_mut((rows_u, n + pg + l), (n * steps, 1)).copy_from(&(&w.basis()[l] * sqdt));
            }
            // f columns in metric coordinates: f = φ / √dt
            for c in 0..n * steps {
                let mut f = DMatrix::zeros(n, steps);
                f[(c % n, c / n)] = 1.0 / sqdt;
                let (o, z0) = win.observation(&DVector::zeros(n), &f)?;
                let col = n + pg + pw + c;
                obs.view_mut((0, col), (rows_u, 1)).copy_from(&o);
                obs[(rows_u + c, col)] = 1.0;
                if kind == ObservabilityKind::GeneralInitial {
                    meas.view_mut((0, col), (n, 1)).copy_from(&z0);
                }
            }
            (obs, meas)
        }
    };
    let (constant, sigma_min) = generalized_constant(&obs, &meas, KERNEL_REL_TOL);
    Ok(ObservabilityReport { kind, constant, sigma_min })
}

/// Orthonormal basis of `N = {z_T : B^T z = 0 on (0,T), z(0) = 0}` for homogeneous adjoints.
pub fn kernel_n(system: &LinearSystem, grid: &TimeGrid) -> Result<Vec<DVector<f64>>> {
    let ops = build_propagator(system, grid)?;
    kernel_n_with_ops(system, &ops, grid.n_steps())
}

/// As [`kernel_n`], for an explicitly supplied propagator.
pub fn kernel_n_with_ops(system: &LinearSystem, ops: &StepOperator, n_steps: usize) -> Result<Vec<DVector<f64>>> {
    let n = system.n();
    let m = system.m();
    let mut map = DMatrix::zeros(m * n_steps + n, n);
    let zero_f = GridSignal::zeros(n, n_steps);
    for i in 0..n {
        let e = DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 });
        let z = adjoint_solve(system, ops, &e, &zero_f)?;
        let o = system.b().transpose() * &z.averages * ops.dt().sqrt();
        map.view_mut((0, i), (m * n_steps, 1)).copy_from_slice(o.as_slice());
        map.view_mut((m * n_steps, i), (n, 1)).copy_from(&z.initial());
    }
    Ok(kernel_basis(&map, KERNEL_REL_TOL))
}

/// Outcome of the two-time criterion for the generalized null observability inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeReport {
    pub t_tilde: f64,
    /// `g ↦ g|(0,T̃)` and `w ↦ w|(0,T̃)` are injective on G and W.
    pub restriction_ok: bool,
    /// Unique continuation on `(0, T̃)`.
    pub uc_tilde: UcReport,
    /// `‖z(T̃)‖ <= C ‖B^T z‖` for homogeneous adjoints.
    pub obs_tilde: ObservabilityReport,
    /// All three checks pass.
    pub certified: bool,
}

fn restriction_injective(s: &Subspace, rows: usize) -> bool {
    if s.dim() == 0 {
        return true;
    }
    let b = s.basis_matrix();
    let head = b.rows(0, rows).into_owned() * s.ambient().weight().sqrt();
    // basis is orthonormal, so the unrestricted singular values are all 1
    let (sv, _) = svd_full(&head);
    sv[sv.len() - 1] > KERNEL_REL_TOL
}

pub fn two_time_check(
    system: &LinearSystem,
    grid: &TimeGrid,
    g: &Subspace,
    w: &Subspace,
    t_tilde: f64,
) -> Result<TwoTimeReport> {
    two_time_check_with_tol(system, grid, g, w, t_tilde, DEFAULT_TOL_UC)
}

pub fn two_time_check_with_tol(
    system: &LinearSystem,
    grid: &TimeGrid,
    g: &Subspace,
    w: &Subspace,
    t_tilde: f64,
    tol_uc: f64,
) -> Result<TwoTimeReport> {
    check_subspaces(system, grid, g, w)?;
    let k = grid
        .node_index(t_tilde)
        .filter(|&k| k > 0)
        .ok_or_else(|| Error::Grid(format!("T_tilde = {t_tilde} is not a positive grid node")))?;
    let ops = build_propagator(system, grid)?;
    let restriction_ok =
        restriction_injective(g, system.m() * k) && restriction_injective(w, system.n() * k);
    let uc_tilde = uc_check(&uc_map_window(system, &ops, grid, g, w, k)?, tol_uc);
    let obs_tilde =
        observability_with_ops(system, &ops, grid, g, w, ObservabilityKind::TildeT { t_tilde }, usize::MAX)?;
    let certified = restriction_ok && uc_tilde.holds && obs_tilde.constant.is_some();
    Ok(TwoTimeReport { t_tilde, restriction_ok, uc_tilde, obs_tilde, certified })
}

/// `Ker(Π_ω|_W) = {0}`: the restriction to ω of every nonzero element of W is nonzero.
pub fn restriction_kernel_check(w: &Subspace, restriction: &Restriction) -> Result<bool> {
    let Ambient::StateSignal { n, grid } = w.ambient() else {
        return Err(shape_err("W must be a subspace of state signals"));
    };
    if restriction.state_dim() != n {
        return Err(shape_err(format!(
            "restriction acts on dimension {}, W on dimension {n}",
            restriction.state_dim()
        )));
    }
    if w.dim() == 0 {
        return Ok(true);
    }
    let sqdt = grid.dt().sqrt();
    let cols: Vec<DVector<f64>> = (0..w.dim())
        .map(|l| {
            let r = &restriction.matrix * w.basis_signal(l).values() * sqdt;
            DVector::from_column_slice(r.as_slice())
        })
        .collect();
    Ok(full_column_rank(&DMatrix::from_columns(&cols), KERNEL_REL_TOL))
}

/// Weak-form operators `K` (restriction to `(0,T) × ω`) and `L = ∂_t + ∂_xx`
/// on `L²(0,T; L²(ω))`, both tested against `θ_a(t) η_b(x)` with
/// `θ_a = sin(aπt/T)` and `η_b` vanishing to first order at the ends of ω.
/// Integration by parts gives `K(∂_t + ∂_xx) z = L(z|_ω)`.
struct WeakForm<'a> {
    model: &'a ModelDescriptor,
    grid: TimeGrid,
    n_time: usize,
    n_space: usize,
}

impl WeakForm<'_> {
    fn eta(&self, b: usize, x: f64) -> (f64, f64) {
        let (a0, b0) = self.model.omega;
        let len = b0 - a0;
        let xi = (x - a0) / len;
        let pi = std::f64::consts::PI;
        let k = (b - 1) as f64;
        let s = (pi * xi).sin().powi(2);
        let ds = pi * (2.0 * pi * xi).sin();
        let dds = 2.0 * pi * pi * (2.0 * pi * xi).cos();
        let c = (k * pi * xi).cos();
        let dc = -k * pi * (k * pi * xi).sin();
        let ddc = -k * k * pi * pi * c;
        (s * c, (dds * c + 2.0 * ds * dc + s * ddc) / (len * len))
    }

    /// `(∫_{I_k} θ_a, ∫_{I_k} θ_a')`.
    fn theta_integrals(&self, a: usize, k: usize) -> (f64, f64) {
        let t_end = self.grid.horizon();
        let omega = a as f64 * std::f64::consts::PI / t_end;
        let (t0, t1) = (self.grid.node(k), self.grid.node(k + 1));
        ((omega * t0).cos() / omega - (omega * t1).cos() / omega, (omega * t1).sin() - (omega * t0).sin())
    }

    /// Row `(a, b)` applied to a signal given in weighted ω-coordinates
    /// (`v_q √w_q` at the quadrature nodes).
    fn apply(&self, omega_signal: &DMatrix<f64>, differentiate: bool) -> DVector<f64> {
        let nodes = &self.model.quad_nodes;
        let weights = &self.model.quad_weights;
        let mut out = DVector::zeros(self.n_time * self.n_space);
        for a in 1..=self.n_time {
            for b in 1..=self.n_space {
                let mut acc = 0.0;
                for k in 0..self.grid.n_steps() {
                    let (i_theta, i_dtheta) = self.theta_integrals(a, k);
                    for (q, x) in nodes.iter().enumerate() {
                        let (eta, d2eta) = self.eta(b, *x);
                        let kernel = if differentiate { -i_dtheta * eta + i_theta * d2eta } else { i_theta * eta };
                        acc += omega_signal[(q, k)] * weights[q].sqrt() * kernel;
                    }
                }
                out[(a - 1) * self.n_space + (b - 1)] = acc;
            }
        }
        out
    }
}

/// Injectivity of `(w, g) ↦ K w + L g` for the modal heat model, with `K` and
/// `L` realized in weak form against `n_time × n_space` test functions.
pub fn combined_restriction_check(
    w: &Subspace,
    g: &Subspace,
    model: &ModelDescriptor,
    n_time: usize,
    n_space: usize,
) -> Result<bool> {
    Ok(combined_restriction_sigma(w, g, model, n_time, n_space)?.0)
}

/// As [`combined_restriction_check`], also returning the singular-value ratio `σ_min / σ_max`.
pub fn combined_restriction_sigma(
    w: &Subspace,
    g: &Subspace,
    model: &ModelDescriptor,
    n_time: usize,
    n_space: usize,
) -> Result<(bool, f64)> {
    let (Ambient::StateSignal { n, grid }, Ambient::ControlSignal { m, grid: grid_g }) = (w.ambient(), g.ambient())
    else {
        return Err(shape_err("expected W over state signals and G over control signals"));
    };
    if grid != grid_g || n != model.n_modes || m != model.quad_nodes.len() {
        return Err(shape_err("subspaces do not match the model"));
    }
    if w.dim() + g.dim() == 0 {
        return Ok((true, 1.0));
    }
    let form = WeakForm { model, grid, n_time, n_space };
    let r = model.omega_restriction();
    let mut cols = Vec::new();
    for l in 0..w.dim() {
        cols.push(form.apply(&(&r * w.basis_signal(l).values()), false));
    }
    for j in 0..g.dim() {
        cols.push(form.apply(g.basis_signal(j).values(), true));
    }
    let (sv, _) = svd_full(&DMatrix::from_columns(&cols));
    let ratio = if sv[0] > 0.0 { sv[sv.len() - 1] / sv[0] } else { 0.0 };
    Ok((ratio > KERNEL_REL_TOL, ratio))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralClass {
    /// μ is not an eigenvalue and the unique stationary solution is visible on ω.
    UcHoldsNonresonant,
    /// μ = λ_j and `P_{H_j} w ≠ 0`: the stationary problem has no solution.
    UcHoldsNoSolution,
    /// μ = λ_j, `P_{H_j} w = 0`, and every solution is visible on ω.
    UcHoldsInfPositive,
    UcFails,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub class: SpectralClass,
    /// Indices (0-based) of the eigenvalues resonant with μ.
    pub resonant_modes: Vec<usize>,
    /// The quantity compared with the tolerance: `‖Z‖_{L²(ω)}`, `‖P_{H_j} w‖`,
    /// or the minimized `‖Z* + Φ‖_{L²(ω)}`.
    pub quantity: f64,
}

/// Classify the stationary problem `(μ + ∂_xx) Z = w` in modal coordinates
/// according to the Fredholm alternative.
pub fn spectral_uc_classify(mu: f64, w_mu: &DVector<f64>, model: &ModelDescriptor, tol: f64) -> Result<SpectralReport> {
    if w_mu.len() != model.n_modes {
        return Err(shape_err(format!("w_mu has {} modes, model has {}", w_mu.len(), model.n_modes)));
    }
    if !mu.is_finite() {
        return Err(Error::Input("mu must be finite".into()));
    }
    let r = model.omega_restriction();
    let resonant: Vec<usize> = model
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, l)| (mu - **l).abs() <= 1e-9 * l.max(1.0))
        .map(|(j, _)| j)
        .collect();
    let mut z_part = DVector::zeros(model.n_modes);
    for (j, l) in model.eigenvalues.iter().enumerate() {
        if !resonant.contains(&j) {
            z_part[j] = w_mu[j] / (mu - l);
        }
    }
    if resonant.is_empty() {
        let q = (&r * &z_part).norm();
        let class = if q > tol { SpectralClass::UcHoldsNonresonant } else { SpectralClass::UcFails };
        return Ok(SpectralReport { class, resonant_modes: resonant, quantity: q });
    }
    let proj = resonant.iter().map(|&j| w_mu[j] * w_mu[j]).sum::<f64>().sqrt();
    if proj > tol {
        return Ok(SpectralReport { class: SpectralClass::UcHoldsNoSolution, resonant_modes: resonant, quantity: proj });
    }
    // min over Φ in the eigenspace of ‖R (Z* + Φ)‖
    let basis = DMatrix::from_columns(&resonant.iter().map(|&j| r.column(j).into_owned()).collect::<Vec<_>>());
    let rhs = &r * &z_part;
    let svd = basis.clone().svd(true, true);
    let c = svd.solve(&(-&rhs), 1e-14).map_err(|e| Error::Input(e.to_string()))?;
    let q = (&rhs + &basis * c).norm();
    let class = if q > tol { SpectralClass::UcHoldsInfPositive } else { SpectralClass::UcFails };
    Ok(SpectralReport { class, resonant_modes: resonant, quantity: q })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyRole {
    /// Trajectory frequency μ_k with state subspace W_k.
    Mu,
    /// Control frequency ρ_j with control subspace G_j.
    Rho,
    /// Shared frequency handled by the combined condition.
    Combined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyDetail {
    pub role: FrequencyRole,
    pub value: f64,
    pub sigma_min: f64,
    pub passed: bool,
    pub witness: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalUcReport {
    pub passed: bool,
    pub details: Vec<FrequencyDetail>,
}

fn has_duplicates(values: &[f64]) -> bool {
    values
        .iter()
        .enumerate()
        .any(|(i, a)| values[i + 1..].iter().any(|b| (a - b).abs() <= 1e-12 * a.abs().max(1.0)))
}

fn kernel_detail(role: FrequencyRole, value: f64, stacked: DMatrix<f64>) -> FrequencyDetail {
    let (sv, v) = svd_full(&stacked);
    let smax = sv[0];
    let smin = sv[sv.len() - 1];
    let passed = smax > 0.0 && smin > KERNEL_REL_TOL * smax;
    let witness = (!passed).then(|| crate::linalg::canonical_sign(v.column(sv.len() - 1).into_owned()));
    FrequencyDetail { role, value, sigma_min: smin, passed, witness }
}

/// Modal conditions: for every μ_k, `(μ_k + A^T) z ∈ W_k` and `B^T z = 0`
/// force `z = 0`; for every ρ_j, `(ρ_j + A^T) z = 0` and `B^T z ∈ G_j` force
/// `z = 0`. Frequencies appearing in both lists are tested jointly.
pub fn modal_uc_check(
    system: &LinearSystem,
    mus: &[(f64, Subspace)],
    rhos: &[(f64, Subspace)],
) -> Result<ModalUcReport> {
    let n = system.n();
    let m = system.m();
    let mu_vals: Vec<f64> = mus.iter().map(|(v, _)| *v).collect();
    let rho_vals: Vec<f64> = rhos.iter().map(|(v, _)| *v).collect();
    if has_duplicates(&mu_vals) || has_duplicates(&rho_vals) {
        return Err(Error::Input("frequencies must be pairwise distinct".into()));
    }
    for (_, s) in mus {
        if s.ambient() != (Ambient::State { n }) {
            return Err(shape_err("each W_k must be a subspace of the state space"));
        }
    }
    for (_, s) in rhos {
        if s.ambient() != (Ambient::State { n: m }) {
            return Err(shape_err("each G_j must be a subspace of the control space"));
        }
    }
    let at = system.a().transpose();
    let bt = system.b().transpose();
    let shifted = |nu: f64| &at + DMatrix::identity(n, n) * nu;
    let complement = |s: &Subspace| DMatrix::identity(s.ambient().len(), s.ambient().len()) - s.basis_matrix() * s.basis_matrix().transpose();
    let stack = |top: DMatrix<f64>, bottom: DMatrix<f64>| {
        let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), n);
        out.view_mut((0, 0), (top.nrows(), n)).copy_from(&top);
        out.view_mut((top.nrows(), 0), (bottom.nrows(), n)).copy_from(&bottom);
        out
    };
    let shared = |nu: f64, list: &[(f64, Subspace)]| {
        list.iter().position(|(v, _)| (v - nu).abs() <= 1e-12 * nu.abs().max(1.0))
    };
    let mut details = Vec::new();
    for (mu, wk) in mus {
        let top = complement(wk) * shifted(*mu);
        if let Some(j) = shared(*mu, rhos) {
            let bottom = complement(&rhos[j].1) * &bt;
            details.push(kernel_detail(FrequencyRole::Combined, *mu, stack(top, bottom)));
        } else {
            details.push(kernel_detail(FrequencyRole::Mu, *mu, stack(top, bt.clone())));
        }
    }
    for (rho, gj) in rhos {
        if shared(*rho, mus).is_some() {
            continue;
        }
        let bottom = complement(gj) * &bt;
        details.push(kernel_detail(FrequencyRole::Rho, *rho, stack(shifted(*rho), bottom)));
    }
    let passed = details.iter().all(|d| d.passed);
    Ok(ModalUcReport { passed, details })
}
