//! Minimization of the dual functionals.
//!
//! Exact and null problems are quadratic-plus-linear and are solved by
//! conjugate gradients; the approximate kinds carry block-norm terms and use
//! proximal gradient with Barzilai–Borwein steps and backtracking. All work
//! happens in metric coordinates (see [`DualVariable::to_metric`]), where the
//! Euclidean inner product is the one of the dual space.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{gradient_with_value, DualVariable, ProblemData, ProblemKind, ProxBlock, ProxDescriptor, Terms};
use crate::uc::{kernel_n_with_ops, UcWitness};

/// Iterate-norm bound is this multiple of [`ProblemData::data_scale`] unless set explicitly.
pub const DEFAULT_DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once the fixed-point residual (gradient norm for CG, gradient
    /// mapping norm for proximal gradient) is at most this value.
    pub grad_tol: f64,
    /// Absolute bound on the iterate norm; `None` means `1e6 × data scale`.
    pub divergence_bound: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iters: 5000, grad_tol: 1e-9, divergence_bound: None }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.grad_tol.is_finite() && self.grad_tol > 0.0) {
            return Err(Error::Config(format!("grad_tol must be positive, got {}", self.grad_tol)));
        }
        if let Some(b) = self.divergence_bound {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::Config(format!("divergence_bound must be positive, got {b}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converged,
    MaxIters,
    DivergedInfeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub final_residual: f64,
    /// Objective at the start and after every iteration.
    pub objective_history: Vec<f64>,
    pub verdict: Verdict,
}

/// Minimize the dual functional of `p`.
pub fn minimize(p: &ProblemData, opts: &SolverOptions) -> Result<(DualVariable, SolveDiagnostics)> {
    opts.validate()?;
    let bound = opts.divergence_bound.unwrap_or(DEFAULT_DIVERGENCE_FACTOR * p.data_scale());
    let prox = ProxDescriptor::for_problem(p);
    if prox.is_smooth() {
        conjugate_gradient(p, opts, bound)
    } else {
        proximal_gradient(p, opts, bound, &prox)
    }
}

/// Smooth value and gradient in metric coordinates.
fn metric_gradient(p: &ProblemData, like: &DualVariable, x: &DVector<f64>, terms: Terms) -> Result<(DVector<f64>, f64)> {
    let dt = p.grid().dt();
    let v = DualVariable::from_metric(like, x, dt);
    let (g, value) = gradient_with_value(p, &v, terms)?;
    // the f block of the raw gradient carries a factor dt; in metric
    // coordinates it becomes dt / √dt = √dt
    let mut gm = g.to_flat();
    let head = like.z_t.len() + like.g_coef.len() + like.w_coef.len();
    let len = gm.len() - head;
    gm.rows_mut(head, len).scale_mut(1.0 / dt.sqrt());
    Ok((gm, value))
}

/// Projector onto the orthogonal complement of `N` acting on the `z_T` block.
struct QuotientProjector {
    basis: Vec<DVector<f64>>,
}

impl QuotientProjector {
    fn for_problem(p: &ProblemData) -> Result<Self> {
        let basis = if p.kind() == ProblemKind::Null {
            kernel_n_with_ops(p.system(), p.ops(), p.grid().n_steps())?
        } else {
            Vec::new()
        };
        Ok(Self { basis })
    }

    fn apply(&self, x: &mut DVector<f64>) {
        let n = self.basis.first().map_or(0, |b| b.len());
        for b in &self.basis {
            let c = b.dot(&x.rows(0, n));
            x.rows_mut(0, n).axpy(-c, b, 1.0);
        }
    }
}

fn diverged(x: &DVector<f64>, bound: f64) -> bool {
    !x.iter().all(|v| v.is_finite()) || x.norm() > bound
}

fn conjugate_gradient(p: &ProblemData, opts: &SolverOptions, bound: f64) -> Result<(DualVariable, SolveDiagnostics)> {
    let like = p.zero_dual();
    let dt = p.grid().dt();
    let quotient = QuotientProjector::for_problem(p)?;
    let mut x = DVector::zeros(p.dual_len());
    // S(x) = ½ xᵀQx - bᵀx with S(0) = 0, so -b is the gradient at 0
    let (g0, _) = metric_gradient(p, &like, &x, Terms::All)?;
    let mut b = -g0;
    quotient.apply(&mut b);
    let apply_q = |d: &DVector<f64>| -> Result<DVector<f64>> {
        let (mut q, _) = metric_gradient(p, &like, d, Terms::QuadraticOnly)?;
        quotient.apply(&mut q);
        Ok(q)
    };

    let mut r = b.clone();
    let mut d = r.clone();
    let mut rr = r.norm_squared();
    let mut history = vec![0.0];
    let mut verdict = Verdict::MaxIters;
    let mut iterations = 0;
    let objective = |x: &DVector<f64>, r: &DVector<f64>| 0.5 * (-b.dot(x) - r.dot(x));

    if rr.sqrt() <= opts.grad_tol {
        verdict = Verdict::Converged;
    } else {
        while iterations < opts.max_iters {
            let qd = apply_q(&d)?;
            let curvature = d.dot(&qd);
            if !(curvature.is_finite() && curvature > 0.0) {
                verdict = Verdict::DivergedInfeasible;
                break;
            }
            let alpha = rr / curvature;
            x.axpy(alpha, &d, 1.0);
            iterations += 1;
            if diverged(&x, bound) {
                verdict = Verdict::DivergedInfeasible;
                break;
            }
            if iterations % 50 == 0 {
                // refresh the recursive residual against drift
                r = &b - apply_q(&x)?;
            } else {
                r.axpy(-alpha, &qd, 1.0);
            }
            let rr_new = r.norm_squared();
            history.push(objective(&x, &r));
            if rr_new.sqrt() <= opts.grad_tol {
                let true_r = &b - apply_q(&x)?;
                if true_r.norm() <= opts.grad_tol {
                    rr = true_r.norm_squared();
                    verdict = Verdict::Converged;
                    break;
                }
                r = true_r;
                rr = r.norm_squared();
                d = r.clone();
                continue;
            }
            let beta = rr_new / rr;
            rr = rr_new;
            d = &r + beta * &d;
        }
    }
    let diag = SolveDiagnostics { iterations, final_residual: rr.sqrt(), objective_history: history, verdict };
    Ok((DualVariable::from_metric(&like, &x, dt), diag))
}

/// Block layout of the nonsmooth terms in metric coordinates. Each block is
/// `ε ‖P x‖` for an orthogonal projector `P` acting on one block of `x`.
struct ProxMap<'a> {
    p: &'a ProblemData,
    n: usize,
    pg: usize,
    pw: usize,
    blocks: Vec<ProxBlock>,
}

impl ProxMap<'_> {
    fn epsilon(b: &ProxBlock) -> f64 {
        match b {
            ProxBlock::FinalStateComplement { epsilon } | ProxBlock::TrajectoryCoefficients { epsilon } => *epsilon,
        }
    }

    /// `P x` as a full-length vector.
    fn part(&self, b: &ProxBlock, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(x.len());
        match b {
            ProxBlock::FinalStateComplement { .. } => {
                let e = self.p.target().final_subspace().expect("approximate kinds carry E");
                out.rows_mut(0, self.n).copy_from(&e.complement(&x.rows(0, self.n).into_owned())?);
            }
            ProxBlock::TrajectoryCoefficients { .. } => {
                let o = self.n + self.pg;
                out.rows_mut(o, self.pw).copy_from(&x.rows(o, self.pw));
            }
        }
        Ok(out)
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        let mut h = 0.0;
        for b in &self.blocks {
            h += Self::epsilon(b) * self.part(b, x)?.norm();
        }
        Ok(h)
    }

    /// Proximal map of `step · h` (block soft-shrinkage).
    fn apply(&self, x: &mut DVector<f64>, step: f64) -> Result<()> {
        for b in &self.blocks {
            let c = self.part(b, x)?;
            let shrink = shrink_factor(c.norm(), Self::epsilon(b) * step);
            x.axpy(shrink - 1.0, &c, 1.0);
        }
        Ok(())
    }

    /// Blocks that are nonzero at `x`.
    fn pattern(&self, x: &DVector<f64>) -> Result<Vec<bool>> {
        self.blocks.iter().map(|b| Ok(self.part(b, x)?.norm() > 0.0)).collect()
    }
}

fn shrink_factor(norm: f64, threshold: f64) -> f64 {
    if norm <= threshold {
        0.0
    } else {
        1.0 - threshold / norm
    }
}

/// Iterate with its smooth gradient and full objective. The objective is
/// carried forward by exact increments (the smooth part is quadratic), which
/// keeps the recorded history free of cancellation noise.
struct Point {
    x: DVector<f64>,
    grad: DVector<f64>,
    total: f64,
}

/// `Q d` for the homogeneous quadratic part.
fn quadratic_apply(p: &ProblemData, like: &DualVariable, d: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(metric_gradient(p, like, d, Terms::QuadraticOnly)?.0)
}

/// Newton step on the manifold where the zero blocks stay zero and the others
/// are smooth; the Hessian system is solved by truncated CG and the step is
/// globalized by an Armijo search on the full objective. Returns `None` when
/// no decrease is found.
fn newton_step(pm: &ProxMap, like: &DualVariable, at: &Point, bound: f64) -> Result<Option<Point>> {
    let p = pm.p;
    let mut active = Vec::new();
    let mut zero = Vec::new();
    for b in &pm.blocks {
        let part = pm.part(b, &at.x)?;
        let norm = part.norm();
        if norm > 0.0 {
            active.push((b, ProxMap::epsilon(b), part / norm, norm));
        } else {
            zero.push(b);
        }
    }
    let restrict = |v: &mut DVector<f64>| -> Result<()> {
        for b in &zero {
            let c = pm.part(b, v)?;
            *v -= c;
        }
        Ok(())
    };
    let mut grad = at.grad.clone();
    for (_, eps, unit, _) in &active {
        grad.axpy(*eps, unit, 1.0);
    }
    restrict(&mut grad)?;
    let gnorm = grad.norm();
    if gnorm == 0.0 {
        return Ok(None);
    }
    let hess = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let mut hv = quadratic_apply(p, like, v)?;
        for (b, eps, unit, norm) in &active {
            let pv = pm.part(b, v)?;
            hv.axpy(eps / norm, &(pv - unit * unit.dot(v)), 1.0);
        }
        restrict(&mut hv)?;
        Ok(hv)
    };

    let forcing = gnorm.sqrt().min(0.1) * gnorm;
    let mut d = DVector::zeros(grad.len());
    let mut r = -&grad;
    let mut dir = r.clone();
    let mut rr = r.norm_squared();
    for _ in 0..200 {
        let hd = hess(&dir)?;
        let curv = dir.dot(&hd);
        if !(curv.is_finite() && curv > 1e-14 * dir.norm_squared()) {
            if d.norm() == 0.0 {
                d = dir.clone();
            }
            break;
        }
        let alpha = rr / curv;
        d.axpy(alpha, &dir, 1.0);
        r.axpy(-alpha, &hd, 1.0);
        let rr_new = r.norm_squared();
        if rr_new.sqrt() <= forcing {
            break;
        }
        dir = &r + &dir * (rr_new / rr);
        rr = rr_new;
    }

    let slope = grad.dot(&d);
    if slope.is_nan() || slope >= 0.0 {
        return Ok(None);
    }
    let gd = at.grad.dot(&d);
    let dqd = d.dot(&quadratic_apply(p, like, &d)?);
    let h0 = pm.value(&at.x)?;
    let mut t = 1.0;
    for _ in 0..40 {
        let x = &at.x + &d * t;
        if !diverged(&x, bound) {
            let delta = t * gd + 0.5 * t * t * dqd + pm.value(&x)? - h0;
            if delta <= 1e-4 * t * slope {
                let (grad, _) = metric_gradient(p, like, &x, Terms::All)?;
                return Ok(Some(Point { x, grad, total: at.total + delta }));
            }
        }
        t *= 0.5;
    }
    Ok(None)
}

fn proximal_gradient(
    p: &ProblemData,
    opts: &SolverOptions,
    bound: f64,
    prox: &ProxDescriptor,
) -> Result<(DualVariable, SolveDiagnostics)> {
    let like = p.zero_dual();
    let dt = p.grid().dt();
    let pm = ProxMap { p, n: like.z_t.len(), pg: like.g_coef.len(), pw: like.w_coef.len(), blocks: prox.blocks.clone() };

    let x = DVector::zeros(p.dual_len());
    let (grad, smooth) = metric_gradient(p, &like, &x, Terms::All)?;
    let total = smooth + pm.value(&x)?;
    let mut cur = Point { x, grad, total };
    let mut history = vec![cur.total];
    let mut step = initial_step(p, &like, &cur.grad)?;
    let mut verdict = Verdict::MaxIters;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut last_pattern: Option<Vec<bool>> = None;

    while iterations < opts.max_iters {
        // backtrack until the quadratic upper model holds: dᵀQd <= ‖d‖²/step
        let (cand, d, dqd) = loop {
            let mut cand = &cur.x - step * &cur.grad;
            pm.apply(&mut cand, step)?;
            let d = &cand - &cur.x;
            if diverged(&cand, bound) {
                break (None, d, 0.0);
            }
            let dqd = d.dot(&quadratic_apply(p, &like, &d)?);
            if dqd <= d.norm_squared() / step {
                break (Some(cand), d, dqd);
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(Error::Overflow("proximal step underflow".into()));
            }
        };
        iterations += 1;
        let Some(cand) = cand else {
            cur.x += d;
            verdict = Verdict::DivergedInfeasible;
            break;
        };
        residual = d.norm() / step;
        let delta = cur.grad.dot(&d) + 0.5 * dqd + pm.value(&cand)? - pm.value(&cur.x)?;
        let (grad, _) = metric_gradient(p, &like, &cand, Terms::All)?;
        cur = Point { x: cand, grad, total: cur.total + delta };
        history.push(cur.total);
        if residual <= opts.grad_tol {
            verdict = Verdict::Converged;
            break;
        }

        // once the zero pattern of the blocks settles, try a Newton step on it
        let pattern = pm.pattern(&cur.x)?;
        if last_pattern.as_ref() == Some(&pattern) && iterations < opts.max_iters {
            if let Some(np) = newton_step(&pm, &like, &cur, bound)? {
                cur = np;
                iterations += 1;
                history.push(cur.total);
            }
        }
        last_pattern = Some(pattern);

        // alternate the two Barzilai–Borwein step lengths; dᵀ(Δgrad) = dᵀQd
        if dqd > 0.0 {
            let bb = if iterations % 2 == 1 {
                d.norm_squared() / dqd
            } else {
                let qd = quadratic_apply(p, &like, &d)?;
                dqd / qd.norm_squared()
            };
            if bb.is_finite() && bb > 0.0 {
                step = bb;
            }
        } else {
            step *= 2.0;
        }
    }
    let diag = SolveDiagnostics { iterations, final_residual: residual, objective_history: history, verdict };
    Ok((DualVariable::from_metric(&like, &cur.x, dt), diag))
}

/// Reciprocal of a curvature estimate along the initial gradient.
fn initial_step(p: &ProblemData, like: &DualVariable, g: &DVector<f64>) -> Result<f64> {
    let gn = g.norm();
    if gn == 0.0 {
        return Ok(1.0);
    }
    let (qg, _) = metric_gradient(p, like, g, Terms::QuadraticOnly)?;
    let curv = g.dot(&qg);
    Ok(if curv > 0.0 && curv.is_finite() { g.norm_squared() / curv } else { 1.0 })
}

/// Radius `r = (‖z_T‖² + ‖g‖² + ‖w‖²) / ‖z_T‖` of the neighborhood of `-z_T`
/// that no constrained trajectory from `y0 = 0` can enter, for a kernel
/// element of the unique-continuation map. Returns `f64::MAX` when `z_T = 0`
/// but `(g, w) ≠ 0`, i.e. when the constraints alone are contradictory.
pub fn certify_infeasibility(p: &ProblemData, witness: &UcWitness) -> Result<f64> {
    let n = p.system().n();
    if witness.z_t.len() != n || witness.g_coef.len() != p.g_space().dim() || witness.w_coef.len() != p.w_space().dim() {
        return Err(Error::InvalidWitness("witness shape does not match the problem".into()));
    }
    let total = witness.norm();
    if total == 0.0 || !total.is_finite() {
        return Err(Error::InvalidWitness("witness must be finite and nonzero".into()));
    }
    let zn = witness.z_t.norm();
    if zn == 0.0 {
        return Ok(f64::MAX);
    }
    Ok(total * total / zn)
}
