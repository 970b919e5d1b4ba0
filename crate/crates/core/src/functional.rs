//! Dual functionals for the approximate, relaxed approximate, exact and null
//! control problems, their smooth gradients, and recovery of the primal
//! control and trajectory from a dual point.
//!
//! For a dual point `(z_T, g, w, f)` with `z` solving `z' + A^T z = f`,
//! `z(T) = z_T`, the functionals share the smooth part
//!
//! ```text
//! ½‖B^T z + g‖² + ½‖f + w‖² + <y0, z(0)> - <y1, z_T> + <B^T z, g*> + <f, w*>
//! ```
//!
//! (without the `y1` term for null control) and add `ε‖(I - P_E) z_T‖` for the
//! approximate kinds, plus `ε‖w‖` for the relaxed one. The minimizer yields
//! `u = B^T Z + G + g*` and `y = F + W + w*`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::subspace::{Ambient, Subspace};
use crate::system::{
    adjoint_solve, build_propagator, forward_solve, GridSignal, LinearSystem, StepOperator, TimeGrid, Trajectory,
};

/// Membership tolerance for `g*` in G and `w*` in W.
const MEMBERSHIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Approx,
    ApproxRelaxed,
    Exact,
    Null,
}

/// Final-time requirement of the control problem.
#[derive(Debug, Clone)]
pub enum Target {
    /// `‖y(T) - y1‖ <= ε` and `P_E y(T) = P_E y1`.
    Approx { y1: DVector<f64>, epsilon: f64, e: Subspace },
    /// As `Approx`, with the trajectory constraint relaxed to `‖P_W y - w*‖ <= ε`.
    ApproxRelaxed { y1: DVector<f64>, epsilon: f64, e: Subspace },
    /// `y(T) = y1`.
    Exact { y1: DVector<f64> },
    /// `y(T) = 0`.
    Null,
}

impl Target {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Target::Approx { .. } => ProblemKind::Approx,
            Target::ApproxRelaxed { .. } => ProblemKind::ApproxRelaxed,
            Target::Exact { .. } => ProblemKind::Exact,
            Target::Null => ProblemKind::Null,
        }
    }

    pub fn y1(&self) -> Option<&DVector<f64>> {
        match self {
            Target::Approx { y1, .. } | Target::ApproxRelaxed { y1, .. } | Target::Exact { y1 } => Some(y1),
            Target::Null => None,
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            Target::Approx { epsilon, .. } | Target::ApproxRelaxed { epsilon, .. } => Some(*epsilon),
            _ => None,
        }
    }

    pub fn final_subspace(&self) -> Option<&Subspace> {
        match self {
            Target::Approx { e, .. } | Target::ApproxRelaxed { e, .. } => Some(e),
            _ => None,
        }
    }
}

/// Data of one constrained control problem.
#[derive(Debug, Clone)]
pub struct ProblemData {
    system: LinearSystem,
    grid: TimeGrid,
    ops: StepOperator,
    g: Subspace,
    w: Subspace,
    target: Target,
    y0: DVector<f64>,
    g_star: GridSignal,
    w_star: GridSignal,
}

impl ProblemData {
    /// Problem with `G = W = {0}`, `y0 = 0` and zero prescribed projections.
    pub fn new(system: LinearSystem, grid: TimeGrid, target: Target) -> Result<Self> {
        let n = system.n();
        let m = system.m();
        let steps = grid.n_steps();
        if let Some(y1) = target.y1() {
            if y1.len() != n {
                return Err(shape_err(format!("y1 has length {}, expected {n}", y1.len())));
            }
            if y1.iter().any(|x| !x.is_finite()) {
                return Err(Error::Problem("non-finite target state".into()));
            }
        }
        if let Some(eps) = target.epsilon() {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::Problem(format!("epsilon must be positive, got {eps}")));
            }
        }
        if let Some(e) = target.final_subspace() {
            if e.ambient() != (Ambient::State { n }) {
                return Err(shape_err("E must be a subspace of the state space"));
            }
        }
        let ops = build_propagator(&system, &grid)?;
        Ok(Self {
            g: Subspace::zero(Ambient::ControlSignal { m, grid }),
            w: Subspace::zero(Ambient::StateSignal { n, grid }),
            y0: DVector::zeros(n),
            g_star: GridSignal::zeros(m, steps),
            w_star: GridSignal::zeros(n, steps),
            system,
            grid,
            ops,
            target,
        })
    }

    pub fn with_subspaces(mut self, g: Subspace, w: Subspace) -> Result<Self> {
        let (n, m, grid) = (self.system.n(), self.system.m(), self.grid);
        if g.ambient() != (Ambient::ControlSignal { m, grid }) {
            return Err(shape_err("G must live in the control-signal space of the problem grid"));
        }
        if w.ambient() != (Ambient::StateSignal { n, grid }) {
            return Err(shape_err("W must live in the state-signal space of the problem grid"));
        }
        self.g = g;
        self.w = w;
        self.check_membership()?;
        Ok(self)
    }

    pub fn with_initial_state(mut self, y0: DVector<f64>) -> Result<Self> {
        if y0.len() != self.system.n() {
            return Err(shape_err(format!("y0 has length {}, expected {}", y0.len(), self.system.n())));
        }
        self.y0 = y0;
        Ok(self)
    }

    /// Prescribed `P_G u`. Must belong to G.
    pub fn with_g_star(mut self, g_star: GridSignal) -> Result<Self> {
        if g_star.dim() != self.system.m() || g_star.n_steps() != self.grid.n_steps() {
            return Err(shape_err("g* does not match the control-signal shape"));
        }
        self.g_star = g_star;
        self.check_membership()?;
        Ok(self)
    }

    /// Prescribed `P_W y`. Must belong to W.
    pub fn with_w_star(mut self, w_star: GridSignal) -> Result<Self> {
        if w_star.dim() != self.system.n() || w_star.n_steps() != self.grid.n_steps() {
            return Err(shape_err("w* does not match the state-signal shape"));
        }
        self.w_star = w_star;
        self.check_membership()?;
        Ok(self)
    }

    /// Replace the propagator, e.g. by a deliberately degenerate one in tests.
    pub fn with_step_operator(mut self, ops: StepOperator) -> Result<Self> {
        if ops.n() != self.system.n() {
            return Err(shape_err("propagator dimension mismatch"));
        }
        self.ops = ops;
        Ok(self)
    }

    fn check_membership(&self) -> Result<()> {
        let dt = self.grid.dt();
        for (name, sub, sig) in [("g*", &self.g, &self.g_star), ("w*", &self.w, &self.w_star)] {
            let off = sig.minus(&sub.project_signal(sig)?).l2_norm(dt);
            if off > MEMBERSHIP_TOL * sig.l2_norm(dt).max(1.0) {
                return Err(Error::Problem(format!("{name} is not in its subspace (distance {off:.3e})")));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ProblemKind {
        self.target.kind()
    }
    pub fn system(&self) -> &LinearSystem {
        &self.system
    }
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn ops(&self) -> &StepOperator {
        &self.ops
    }
    pub fn g_space(&self) -> &Subspace {
        &self.g
    }
    pub fn w_space(&self) -> &Subspace {
        &self.w
    }
    pub fn target(&self) -> &Target {
        &self.target
    }
    pub fn y0(&self) -> &DVector<f64> {
        &self.y0
    }
    pub fn g_star(&self) -> &GridSignal {
        &self.g_star
    }
    pub fn w_star(&self) -> &GridSignal {
        &self.w_star
    }

    /// Magnitude of the data, used to scale divergence bounds.
    pub fn data_scale(&self) -> f64 {
        let dt = self.grid.dt();
        let y1 = self.target.y1().map_or(0.0, |v| v.norm());
        1.0 + self.y0.norm() + y1 + self.g_star.l2_norm(dt) + self.w_star.l2_norm(dt)
    }

    /// Zero dual point of the right shape.
    pub fn zero_dual(&self) -> DualVariable {
        DualVariable {
            z_t: DVector::zeros(self.system.n()),
            g_coef: DVector::zeros(self.g.dim()),
            w_coef: DVector::zeros(self.w.dim()),
            f: GridSignal::zeros(self.system.n(), self.grid.n_steps()),
        }
    }

    /// Length of the flattened dual variable.
    pub fn dual_len(&self) -> usize {
        let n = self.system.n();
        n + self.g.dim() + self.w.dim() + n * self.grid.n_steps()
    }

    fn check_dual(&self, v: &DualVariable) -> Result<()> {
        let n = self.system.n();
        if v.z_t.len() != n
            || v.g_coef.len() != self.g.dim()
            || v.w_coef.len() != self.w.dim()
            || v.f.dim() != n
            || v.f.n_steps() != self.grid.n_steps()
        {
            return Err(shape_err("dual variable does not match the problem"));
        }
        Ok(())
    }
}

/// Point `(z_T, g, w, f)` of the dual space; `g` and `w` are stored by their
/// coordinates in the orthonormal bases of G and W.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVariable {
    pub z_t: DVector<f64>,
    pub g_coef: DVector<f64>,
    pub w_coef: DVector<f64>,
    pub f: GridSignal,
}

impl DualVariable {
    /// Raw (unweighted) flattening `[z_T, g, w, f]`.
    pub fn to_flat(&self) -> DVector<f64> {
        let f = self.f.to_flat();
        let mut out = DVector::zeros(self.z_t.len() + self.g_coef.len() + self.w_coef.len() + f.len());
        let mut o = 0;
        for part in [&self.z_t, &self.g_coef, &self.w_coef, &f] {
            out.rows_mut(o, part.len()).copy_from(part);
            o += part.len();
        }
        out
    }

    /// Inverse of [`DualVariable::to_flat`] for the shapes of `like`.
    pub fn from_flat(like: &DualVariable, flat: &DVector<f64>) -> Self {
        let (n, pg, pw) = (like.z_t.len(), like.g_coef.len(), like.w_coef.len());
        let f_len = like.f.dim() * like.f.n_steps();
        assert_eq!(flat.len(), n + pg + pw + f_len);
        Self {
            z_t: flat.rows(0, n).into_owned(),
            g_coef: flat.rows(n, pg).into_owned(),
            w_coef: flat.rows(n + pg, pw).into_owned(),
            f: GridSignal::from_flat(like.f.dim(), like.f.n_steps(), &flat.rows(n + pg + pw, f_len).into_owned()),
        }
    }

    /// Flattening in orthonormal coordinates: the `f` block is scaled by `√dt`
    /// so that the Euclidean norm equals the norm of `H × G × W × L²(0,T;H)`.
    pub fn to_metric(&self, dt: f64) -> DVector<f64> {
        let mut x = self.to_flat();
        let head = self.z_t.len() + self.g_coef.len() + self.w_coef.len();
        x.rows_mut(head, x.len() - head).scale_mut(dt.sqrt());
        x
    }

    pub fn from_metric(like: &DualVariable, x: &DVector<f64>, dt: f64) -> Self {
        let mut flat = x.clone();
        let head = like.z_t.len() + like.g_coef.len() + like.w_coef.len();
        let len = flat.len() - head;
        flat.rows_mut(head, len).scale_mut(1.0 / dt.sqrt());
        Self::from_flat(like, &flat)
    }
}

/// Nonsmooth terms left to the proximal step of the minimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProxBlock {
    /// `ε‖(I - P_E) z_T‖`.
    FinalStateComplement { epsilon: f64 },
    /// `ε‖w‖`.
    TrajectoryCoefficients { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProxDescriptor {
    pub blocks: Vec<ProxBlock>,
}

impl ProxDescriptor {
    pub fn for_problem(p: &ProblemData) -> Self {
        let blocks = match &p.target {
            Target::Approx { epsilon, .. } => vec![ProxBlock::FinalStateComplement { epsilon: *epsilon }],
            Target::ApproxRelaxed { epsilon, .. } => vec![
                ProxBlock::FinalStateComplement { epsilon: *epsilon },
                ProxBlock::TrajectoryCoefficients { epsilon: *epsilon },
            ],
            Target::Exact { .. } | Target::Null => Vec::new(),
        };
        Self { blocks }
    }

    pub fn is_smooth(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Intermediate quantities shared by evaluation, gradient and recovery.
struct DualState {
    z: Trajectory,
    /// `B^T z` on each interval (interval averages of z).
    bt_z: DMatrix<f64>,
    g: GridSignal,
    w: GridSignal,
}

fn dual_state(p: &ProblemData, v: &DualVariable) -> Result<DualState> {
    p.check_dual(v)?;
    let z = adjoint_solve(&p.system, &p.ops, &v.z_t, &v.f)?;
    let bt_z = p.system.b().transpose() * &z.averages;
    let g = p.g.lift_signal(&v.g_coef)?;
    let w = p.w.lift_signal(&v.w_coef)?;
    Ok(DualState { z, bt_z, g, w })
}

/// Which data enter the linear terms.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Terms {
    /// Full functional.
    All,
    /// Homogeneous quadratic part only (`y0 = y1 = g* = w* = 0`).
    QuadraticOnly,
}

fn smooth_value(p: &ProblemData, v: &DualVariable, s: &DualState, terms: Terms) -> f64 {
    let dt = p.grid.dt();
    let obs = &s.bt_z + s.g.values();
    let src = v.f.values() + s.w.values();
    let mut j = 0.5 * dt * (obs.norm_squared() + src.norm_squared());
    if terms == Terms::All {
        j += p.y0.dot(&s.z.initial());
        if let Some(y1) = p.target.y1() {
            j -= y1.dot(&v.z_t);
        }
        j += dt * s.bt_z.dot(p.g_star.values());
        j += dt * v.f.values().dot(p.w_star.values());
    }
    j
}

fn nonsmooth_value(p: &ProblemData, v: &DualVariable) -> Result<f64> {
    let mut h = 0.0;
    match &p.target {
        Target::Approx { epsilon, e, .. } => {
            h += epsilon * e.complement(&v.z_t)?.norm();
        }
        Target::ApproxRelaxed { epsilon, e, .. } => {
            h += epsilon * e.complement(&v.z_t)?.norm();
            h += epsilon * v.w_coef.norm();
        }
        Target::Exact { .. } | Target::Null => {}
    }
    Ok(h)
}

/// Value of the smooth part only.
pub fn eval_smooth(p: &ProblemData, v: &DualVariable) -> Result<f64> {
    let s = dual_state(p, v)?;
    finite(smooth_value(p, v, &s, Terms::All))
}

/// Value of the nonsmooth (ε) part only.
pub fn eval_nonsmooth(p: &ProblemData, v: &DualVariable) -> Result<f64> {
    p.check_dual(v)?;
    finite(nonsmooth_value(p, v)?)
}

/// Full dual functional at `v`.
pub fn eval_j(p: &ProblemData, v: &DualVariable) -> Result<f64> {
    let s = dual_state(p, v)?;
    finite(smooth_value(p, v, &s, Terms::All) + nonsmooth_value(p, v)?)
}

fn finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Overflow("dual functional is not finite".into()))
    }
}

/// Gradient of the smooth part, computed with one adjoint and one forward solve.
///
/// With `u = B^T z + g + g*` and `ỹ` the state driven by `u` from `y0`, the
/// exact discrete duality gives `∂/∂z_T = ỹ(T) - y1`,
/// `∂/∂f_k = dt (f_k + w_k + w*_k - ỹ_k)`, `∂/∂g = P_G(B^T z + g)` and
/// `∂/∂w = P_W(f + w)` in coordinates.
pub fn grad_smooth(p: &ProblemData, v: &DualVariable) -> Result<(DualVariable, ProxDescriptor)> {
    let (g, _) = gradient_with_value(p, v, Terms::All)?;
    Ok((g, ProxDescriptor::for_problem(p)))
}

pub(crate) fn gradient_with_value(p: &ProblemData, v: &DualVariable, terms: Terms) -> Result<(DualVariable, f64)> {
    let s = dual_state(p, v)?;
    let value = smooth_value(p, v, &s, terms);
    let dt = p.grid.dt();
    let n = p.system.n();
    let obs = &s.bt_z + s.g.values();
    let src = v.f.values() + s.w.values();
    let (u, ydict, y0) = match terms {
        Terms::All => (&obs + p.g_star.values(), &src + p.w_star.values(), p.y0.clone()),
        Terms::QuadraticOnly => (obs.clone(), src.clone(), DVector::zeros(n)),
    };
    let traj = forward_solve(&p.system, &p.ops, &y0, &GridSignal::from_matrix(u), None)?;
    let mut z_t = traj.last();
    if terms == Terms::All {
        if let Some(y1) = p.target.y1() {
            z_t -= y1;
        }
    }
    let f = GridSignal::from_matrix((ydict - &traj.averages) * dt);
    let g_coef = p.g.signal_coords(&GridSignal::from_matrix(obs))?;
    let w_coef = p.w.signal_coords(&GridSignal::from_matrix(src))?;
    let grad = DualVariable { z_t, g_coef, w_coef, f };
    if grad.to_flat().iter().any(|x| !x.is_finite()) || !value.is_finite() {
        return Err(Error::Overflow("gradient is not finite".into()));
    }
    Ok((grad, value))
}

/// Quality measures of a recovered control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖y(T) - y1‖`, or `‖y(T)‖` for null control.
    pub final_state_error: f64,
    /// `‖P_G u - g*‖`.
    pub proj_u_error: f64,
    /// `‖P_W y - w*‖` on interval averages.
    pub proj_y_error: f64,
    /// `‖P_E (y(T) - y1)‖` for the approximate kinds, 0 otherwise.
    pub proj_e_error: f64,
    /// `‖y - (F + W + w*)‖`: mismatch between the simulated trajectory and the
    /// one predicted by the optimality conditions.
    pub duality_check: f64,
}

/// Control, trajectory and residuals recovered from a dual point.
#[derive(Debug, Clone)]
pub struct ControlSolution {
    pub u: GridSignal,
    pub y: Trajectory,
    pub residuals: Residuals,
}

/// `u = B^T Z + G + g*`, `y` simulated from `y0` under `u`.
pub fn recover_primal(p: &ProblemData, v: &DualVariable) -> Result<ControlSolution> {
    let s = dual_state(p, v)?;
    let dt = p.grid.dt();
    let u = GridSignal::from_matrix(&s.bt_z + s.g.values() + p.g_star.values());
    let y = forward_solve(&p.system, &p.ops, &p.y0, &u, None)?;
    let y_avg = y.average_signal();
    let y_end = y.last();
    let proj_u_error = p.g.project_signal(&u)?.minus(&p.g_star).l2_norm(dt);
    let proj_y_error = p.w.project_signal(&y_avg)?.minus(&p.w_star).l2_norm(dt);
    let miss = match p.target.y1() {
        Some(y1) => &y_end - y1,
        None => y_end.clone(),
    };
    let proj_e_error = match p.target.final_subspace() {
        Some(e) => e.project(&miss)?.norm(),
        None => 0.0,
    };
    let predicted = GridSignal::from_matrix(v.f.values() + s.w.values() + p.w_star.values());
    let duality_check = y_avg.minus(&predicted).l2_norm(dt);
    let residuals = Residuals {
        final_state_error: miss.norm(),
        proj_u_error,
        proj_y_error,
        proj_e_error,
        duality_check,
    };
    Ok(ControlSolution { u, y, residuals })
}
