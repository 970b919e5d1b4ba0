//! Discretized linear system `y' = A y + B u`, exact per-interval propagation
//! and the backward adjoint `z' + A^T z = f`.
//!
//! Inputs (controls and sources) are piecewise constant on the intervals of a
//! uniform [`TimeGrid`]. On each interval the exact solution is advanced with
//! the blocks of one augmented matrix exponential, so every bilinear pairing
//! used by the dual functionals is exact and the adjoint recursion is the exact
//! transpose of the forward one.

use nalgebra::{DMatrix, DVector};

use crate::error::{shape_err, Error, Result};
use crate::models::ModelDescriptor;

/// Uniform partition of `(0, T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Grid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps < 2 {
            return Err(Error::Grid(format!("need at least 2 steps, got {n_steps}")));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Node `t_k = k dt`. The last node is returned as the horizon itself.
    pub fn node(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    /// Midpoint of interval `I_k`.
    pub fn midpoint(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt()
    }

    /// Index of the node equal to `t`, if `t` lies on the grid.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let k = x.round();
        if k < 0.0 || k > self.n_steps as f64 || (x - k).abs() > 1e-9 {
            return None;
        }
        Some(k as usize)
    }
}

/// Finite-dimensional system `(A, B)` with optional model description.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub name: String,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    pub metadata: Option<ModelDescriptor>,
}

impl LinearSystem {
    pub fn new(name: impl Into<String>, a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(shape_err(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n {
            return Err(shape_err(format!("B must have {n} rows, got {}", b.nrows())));
        }
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidSystem("non-finite matrix entry".into()));
        }
        Ok(Self { name: name.into(), a, b, metadata: None })
    }

    pub fn with_metadata(mut self, meta: ModelDescriptor) -> Self {
        self.metadata = Some(meta);
        self
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Control dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

/// Exact one-step maps for a fixed `dt`:
/// `e = exp(A dt)`, `phi = ∫_0^dt exp(A s) ds` and
/// `psi = (1/dt) ∫_0^dt ∫_0^s exp(A r) dr ds`.
#[derive(Debug, Clone)]
pub struct StepOperator {
    dt: f64,
    e: DMatrix<f64>,
    phi: DMatrix<f64>,
    psi: DMatrix<f64>,
    e_t: DMatrix<f64>,
    phi_t: DMatrix<f64>,
    psi_t: DMatrix<f64>,
}

impl StepOperator {
    /// Assemble from explicit blocks. Used to inject non-standard propagators.
    pub fn from_parts(dt: f64, e: DMatrix<f64>, phi: DMatrix<f64>, psi: DMatrix<f64>) -> Result<Self> {
        let n = e.nrows();
        for (name, m) in [("E", &e), ("Phi", &phi), ("Psi", &psi)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(shape_err(format!("{name} must be {n}x{n}")));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidSystem(format!("non-finite entry in {name}")));
            }
        }
        Ok(Self {
            dt,
            e_t: e.transpose(),
            phi_t: phi.transpose(),
            psi_t: psi.transpose(),
            e,
            phi,
            psi,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn n(&self) -> usize {
        self.e.nrows()
    }
    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }
    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }
    /// `∫_0^dt ∫_0^s exp(A r) dr ds`, i.e. `dt * psi`.
    pub fn double_integral(&self) -> DMatrix<f64> {
        &self.psi * self.dt
    }
}

/// Piecewise-constant signal: column `k` is the value on interval `I_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSignal {
    values: DMatrix<f64>,
}

impl GridSignal {
    pub fn zeros(dim: usize, n_steps: usize) -> Self {
        Self { values: DMatrix::zeros(dim, n_steps) }
    }

    pub fn from_matrix(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    /// Same value on every interval.
    pub fn constant(value: &DVector<f64>, n_steps: usize) -> Self {
        let mut values = DMatrix::zeros(value.len(), n_steps);
        for mut col in values.column_iter_mut() {
            col.copy_from(value);
        }
        Self { values }
    }

    /// Samples `f(t_mid)` on each interval.
    pub fn from_fn(dim: usize, grid: &TimeGrid, mut f: impl FnMut(f64) -> DVector<f64>) -> Self {
        let mut values = DMatrix::zeros(dim, grid.n_steps());
        for k in 0..grid.n_steps() {
            values.set_column(k, &f(grid.midpoint(k)));
        }
        Self { values }
    }

    /// Rebuild from a flat vector in interval-major order.
    pub fn from_flat(dim: usize, n_steps: usize, flat: &DVector<f64>) -> Self {
        Self { values: DMatrix::from_column_slice(dim, n_steps, flat.as_slice()) }
    }

    /// Interval-major flattening: entry `k * dim + i`.
    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_column_slice(self.values.as_slice())
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }
    pub fn n_steps(&self) -> usize {
        self.values.ncols()
    }
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.values
    }
    pub fn at(&self, k: usize) -> DVector<f64> {
        self.values.column(k).into_owned()
    }

    /// `dt Σ_k <a_k, b_k>`, the exact L² pairing of piecewise-constant signals.
    pub fn inner(&self, other: &GridSignal, dt: f64) -> f64 {
        dt * self.values.dot(&other.values)
    }

    pub fn l2_norm(&self, dt: f64) -> f64 {
        (dt * self.values.norm_squared()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { values: &self.values * s }
    }

    pub fn plus(&self, other: &GridSignal) -> Self {
        Self { values: &self.values + &other.values }
    }

    pub fn minus(&self, other: &GridSignal) -> Self {
        Self { values: &self.values - &other.values }
    }

    /// Apply a matrix to every interval value.
    pub fn map(&self, m: &DMatrix<f64>) -> Self {
        Self { values: m * &self.values }
    }
}

/// Node values and exact interval averages of a state or adjoint trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub nodes: DMatrix<f64>,
    pub averages: DMatrix<f64>,
}

impl Trajectory {
    pub fn node(&self, k: usize) -> DVector<f64> {
        self.nodes.column(k).into_owned()
    }

    pub fn initial(&self) -> DVector<f64> {
        self.node(0)
    }

    pub fn last(&self) -> DVector<f64> {
        self.node(self.nodes.ncols() - 1)
    }

    /// Interval averages viewed as a piecewise-constant signal.
    pub fn average_signal(&self) -> GridSignal {
        GridSignal::from_matrix(self.averages.clone())
    }
}

/// Matrix exponential, scaling and squaring with a Padé approximant.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().exp()
}

/// Build `E`, `Phi`, `Psi` from one exponential of `[[A, I, 0], [0, 0, I], [0, 0, 0]] dt`.
pub fn build_propagator(system: &LinearSystem, grid: &TimeGrid) -> Result<StepOperator> {
    build_propagator_dt(system.a(), grid.dt())
}

pub(crate) fn build_propagator_dt(a: &DMatrix<f64>, dt: f64) -> Result<StepOperator> {
    let n = a.nrows();
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidSystem("non-finite entry in A".into()));
    }
    let mut aug = DMatrix::zeros(3 * n, 3 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    for i in 0..n {
        aug[(i, n + i)] = dt;
        aug[(n + i, 2 * n + i)] = dt;
    }
    let ex = expm(&aug);
    let e = ex.view((0, 0), (n, n)).into_owned();
    let phi = ex.view((0, n), (n, n)).into_owned();
    let psi = ex.view((0, 2 * n), (n, n)).into_owned() / dt;
    StepOperator::from_parts(dt, e, phi, psi)
}

fn check_signal(sig: &GridSignal, dim: usize, n_steps: usize, what: &str) -> Result<()> {
    if sig.dim() != dim || sig.n_steps() != n_steps {
        return Err(shape_err(format!(
            "{what}: expected {dim}x{n_steps} signal, got {}x{}",
            sig.dim(),
            sig.n_steps()
        )));
    }
    Ok(())
}

/// Forward recursion `y_{k+1} = E y_k + Phi (B u_k + s_k)`.
pub fn forward_solve(
    system: &LinearSystem,
    ops: &StepOperator,
    y0: &DVector<f64>,
    u: &GridSignal,
    extra_source: Option<&GridSignal>,
) -> Result<Trajectory> {
    let n = system.n();
    let steps = u.n_steps();
    if ops.n() != n || y0.len() != n {
        return Err(shape_err(format!("state dimension {n} does not match y0 or propagator")));
    }
    check_signal(u, system.m(), steps, "control")?;
    if let Some(s) = extra_source {
        check_signal(s, n, steps, "source")?;
    }
    let mut drive = system.b() * u.values();
    if let Some(s) = extra_source {
        drive += s.values();
    }
    let mut nodes = DMatrix::zeros(n, steps + 1);
    let mut averages = DMatrix::zeros(n, steps);
    nodes.set_column(0, y0);
    let inv_dt = 1.0 / ops.dt;
    let mut y = y0.clone();
    for k in 0..steps {
        let d = drive.column(k);
        let avg = (&ops.phi * &y) * inv_dt + &ops.psi * d;
        let next = &ops.e * &y + &ops.phi * d;
        averages.set_column(k, &avg);
        nodes.set_column(k + 1, &next);
        y = next;
    }
    Ok(Trajectory { nodes, averages })
}

/// Backward recursion for `z' + A^T z = f`, `z(T) = z_T`:
/// `z_k = E^T z_{k+1} - Phi^T f_k`.
pub fn adjoint_solve(
    system: &LinearSystem,
    ops: &StepOperator,
    z_t: &DVector<f64>,
    f: &GridSignal,
) -> Result<Trajectory> {
    let n = system.n();
    if ops.n() != n || z_t.len() != n {
        return Err(shape_err(format!("state dimension {n} does not match z_T or propagator")));
    }
    check_signal(f, n, f.n_steps(), "adjoint source")?;
    adjoint_recursion(ops, z_t, f.values())
}

pub(crate) fn adjoint_recursion(
    ops: &StepOperator,
    z_t: &DVector<f64>,
    f: &DMatrix<f64>,
) -> Result<Trajectory> {
    let n = ops.n();
    let steps = f.ncols();
    let mut nodes = DMatrix::zeros(n, steps + 1);
    let mut averages = DMatrix::zeros(n, steps);
    nodes.set_column(steps, z_t);
    let inv_dt = 1.0 / ops.dt;
    let mut z = z_t.clone();
    for k in (0..steps).rev() {
        let fk = f.column(k);
        let avg = (&ops.phi_t * &z) * inv_dt - &ops.psi_t * fk;
        let prev = &ops.e_t * &z - &ops.phi_t * fk;
        averages.set_column(k, &avg);
        nodes.set_column(k, &prev);
        z = prev;
    }
    Ok(Trajectory { nodes, averages })
}

/// Left-hand side of the pairing identity
/// `<y(T), z_T> - <y0, z(0)> - ∫<y, f> - ∫<u, B^T z>`, which vanishes for the
/// exact discrete scheme.
pub fn duality_residual(
    system: &LinearSystem,
    ops: &StepOperator,
    y0: &DVector<f64>,
    u: &GridSignal,
    z_t: &DVector<f64>,
    f: &GridSignal,
) -> Result<f64> {
    duality_terms(system, ops, y0, u, z_t, f).map(|t| t.residual())
}

/// The four pairings entering [`duality_residual`].
#[derive(Debug, Clone, Copy)]
pub struct DualityTerms {
    pub final_pairing: f64,
    pub initial_pairing: f64,
    pub source_pairing: f64,
    pub control_pairing: f64,
}

impl DualityTerms {
    pub fn residual(&self) -> f64 {
        self.final_pairing - self.initial_pairing - self.source_pairing - self.control_pairing
    }

    /// Magnitude scale used to judge the residual.
    pub fn scale(&self) -> f64 {
        self.final_pairing.abs() + self.initial_pairing.abs() + self.source_pairing.abs() + self.control_pairing.abs()
    }
}

pub fn duality_terms(
    system: &LinearSystem,
    ops: &StepOperator,
    y0: &DVector<f64>,
    u: &GridSignal,
    z_t: &DVector<f64>,
    f: &GridSignal,
) -> Result<DualityTerms> {
    let y = forward_solve(system, ops, y0, u, None)?;
    let z = adjoint_solve(system, ops, z_t, f)?;
    let dt = ops.dt;
    let bt_z = system.b().transpose() * &z.averages;
    Ok(DualityTerms {
        final_pairing: y.last().dot(z_t),
        initial_pairing: y0.dot(&z.initial()),
        source_pairing: dt * y.averages.dot(f.values()),
        control_pairing: dt * u.values().dot(&bt_z),
    })
}
