//! Finite-dimensional subspaces of control signals, state signals or states,
//! stored with an orthonormal basis for the ambient inner product.

use nalgebra::{DMatrix, DVector};

use crate::error::{shape_err, Result};
use crate::system::{GridSignal, TimeGrid};

/// Relative cutoff below which a deflated vector is treated as dependent.
pub const RANK_TOL: f64 = 1e-10;

/// Space a [`Subspace`] lives in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ambient {
    /// `L²(0,T; R^m)` sampled as piecewise-constant signals.
    ControlSignal { m: usize, grid: TimeGrid },
    /// `L²(0,T; R^n)` sampled as piecewise-constant signals.
    StateSignal { n: usize, grid: TimeGrid },
    /// `R^n` with the Euclidean product.
    State { n: usize },
}

impl Ambient {
    /// Length of the flattened representation.
    pub fn len(&self) -> usize {
        match *self {
            Ambient::ControlSignal { m, grid } => m * grid.n_steps(),
            Ambient::StateSignal { n, grid } => n * grid.n_steps(),
            Ambient::State { n } => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Weight of the flat Euclidean product: `dt` for signals, 1 for states.
    pub fn weight(&self) -> f64 {
        match self {
            Ambient::ControlSignal { grid, .. } | Ambient::StateSignal { grid, .. } => grid.dt(),
            Ambient::State { .. } => 1.0,
        }
    }

    /// Pointwise dimension of signal values (or the state dimension).
    pub fn value_dim(&self) -> usize {
        match *self {
            Ambient::ControlSignal { m, .. } => m,
            Ambient::StateSignal { n, .. } | Ambient::State { n } => n,
        }
    }

    pub fn grid(&self) -> Option<TimeGrid> {
        match *self {
            Ambient::ControlSignal { grid, .. } | Ambient::StateSignal { grid, .. } => Some(grid),
            Ambient::State { .. } => None,
        }
    }

    pub fn is_signal(&self) -> bool {
        !matches!(self, Ambient::State { .. })
    }
}

/// Orthonormalized subspace with orthogonal projection support.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    ambient: Ambient,
    basis: Vec<DVector<f64>>,
}

impl Subspace {
    /// The trivial subspace `{0}`.
    pub fn zero(ambient: Ambient) -> Self {
        Self { ambient, basis: Vec::new() }
    }

    /// Modified Gram–Schmidt with one re-orthogonalization pass. Vectors whose
    /// norm after deflation falls below `RANK_TOL` times the largest input norm
    /// are dropped.
    pub fn orthonormalize(raw: &[DVector<f64>], ambient: Ambient) -> Result<Self> {
        let len = ambient.len();
        if let Some(v) = raw.iter().find(|v| v.len() != len) {
            return Err(shape_err(format!("subspace element of length {} in ambient of length {len}", v.len())));
        }
        let w = ambient.weight();
        let norm = |v: &DVector<f64>| (w * v.norm_squared()).sqrt();
        let max_norm = raw.iter().map(norm).fold(0.0, f64::max);
        let mut basis: Vec<DVector<f64>> = Vec::new();
        if max_norm == 0.0 {
            return Ok(Self { ambient, basis });
        }
        for v in raw {
            let mut x = v.clone();
            for _ in 0..2 {
                for b in &basis {
                    let c = w * b.dot(&x);
                    x.axpy(-c, b, 1.0);
                }
            }
            let nx = norm(&x);
            if nx > RANK_TOL * max_norm {
                basis.push(x / nx);
            }
        }
        Ok(Self { ambient, basis })
    }

    /// Orthonormalize a list of signals.
    pub fn from_signals(raw: &[GridSignal], ambient: Ambient) -> Result<Self> {
        let dim = ambient.value_dim();
        if let Some(s) = raw.iter().find(|s| s.dim() != dim || Some(s.n_steps()) != ambient.grid().map(|g| g.n_steps())) {
            return Err(shape_err(format!(
                "signal {}x{} does not fit ambient {:?}",
                s.dim(),
                s.n_steps(),
                ambient
            )));
        }
        let flat: Vec<_> = raw.iter().map(GridSignal::to_flat).collect();
        Self::orthonormalize(&flat, ambient)
    }

    pub fn ambient(&self) -> Ambient {
        self.ambient
    }

    /// Number of basis elements.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[DVector<f64>] {
        &self.basis
    }

    /// Basis element as a signal (signal ambients only).
    pub fn basis_signal(&self, i: usize) -> GridSignal {
        let grid = self.ambient.grid().expect("signal ambient");
        GridSignal::from_flat(self.ambient.value_dim(), grid.n_steps(), &self.basis[i])
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.ambient.len() {
            return Err(shape_err(format!(
                "element of length {} does not match ambient length {}",
                x.len(),
                self.ambient.len()
            )));
        }
        Ok(())
    }

    /// Ambient inner product.
    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.ambient.weight() * x.dot(y)
    }

    /// `<x, b_i>` for every basis element.
    pub fn coords(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(DVector::from_iterator(self.dim(), self.basis.iter().map(|b| self.inner(x, b))))
    }

    /// `Σ c_i b_i`.
    pub fn lift(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        if c.len() != self.dim() {
            return Err(shape_err(format!("expected {} coefficients, got {}", self.dim(), c.len())));
        }
        let mut x = DVector::zeros(self.ambient.len());
        for (ci, b) in c.iter().zip(&self.basis) {
            x.axpy(*ci, b, 1.0);
        }
        Ok(x)
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.coords(x)?;
        self.lift(&c)
    }

    /// `x - P x`.
    pub fn complement(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(x - self.project(x)?)
    }

    pub fn signal_coords(&self, s: &GridSignal) -> Result<DVector<f64>> {
        self.coords(&s.to_flat())
    }

    pub fn lift_signal(&self, c: &DVector<f64>) -> Result<GridSignal> {
        let grid = self
            .ambient
            .grid()
            .ok_or_else(|| shape_err("lift_signal on a state-space subspace"))?;
        Ok(GridSignal::from_flat(self.ambient.value_dim(), grid.n_steps(), &self.lift(c)?))
    }

    pub fn project_signal(&self, s: &GridSignal) -> Result<GridSignal> {
        let c = self.signal_coords(s)?;
        self.lift_signal(&c)
    }

    /// Matrix whose columns are the basis vectors (flattened).
    pub fn basis_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.ambient.len(), self.dim());
        for (j, b) in self.basis.iter().enumerate() {
            m.set_column(j, b);
        }
        m
    }

    /// Gram matrix of the stored basis in the ambient product.
    pub fn gram(&self) -> DMatrix<f64> {
        let b = self.basis_matrix();
        b.transpose() * &b * self.ambient.weight()
    }
}
