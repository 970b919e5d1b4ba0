//! Concrete systems: modal heat and wave equations on `(0, 1)` with Dirichlet
//! conditions and distributed control on `ω = (a, b)`, plus explicit ODEs.
//!
//! Coordinates are chosen so that every inner product is Euclidean. The control
//! space is `L²(ω)` sampled at Gauss–Legendre nodes `x_q` with weights `w_q`,
//! stored as `u_q √w_q`, which gives `B_{jq} = √w_q φ_j(x_q)` with
//! `φ_j = √2 sin(jπx)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::system::LinearSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Heat1d,
    Wave1d,
    Ode,
}

/// Spatial description of a modal model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDescriptor {
    pub family: ModelFamily,
    pub n_modes: usize,
    pub omega: (f64, f64),
    /// Quadrature nodes in ω.
    pub quad_nodes: Vec<f64>,
    pub quad_weights: Vec<f64>,
    /// Dirichlet eigenvalues `λ_j = (jπ)²`.
    pub eigenvalues: Vec<f64>,
}

impl ModelDescriptor {
    /// `φ_j(x) = √2 sin(jπx)`, with `j` starting at 1.
    pub fn eigenfunction(j: usize, x: f64) -> f64 {
        std::f64::consts::SQRT_2 * (j as f64 * PI * x).sin()
    }

    /// Matrix mapping modal coefficients to weighted point values on ω, so that
    /// `‖R a‖ = ‖Σ a_j φ_j‖_{L²(ω)}` up to quadrature error.
    pub fn omega_restriction(&self) -> DMatrix<f64> {
        let q = self.quad_nodes.len();
        DMatrix::from_fn(q, self.n_modes, |r, j| {
            self.quad_weights[r].sqrt() * Self::eigenfunction(j + 1, self.quad_nodes[r])
        })
    }

    /// State-space restriction operator for this model. For wave models only
    /// the displacement component is restricted.
    pub fn state_restriction(&self) -> Restriction {
        let r = self.omega_restriction();
        match self.family {
            ModelFamily::Wave1d => {
                let mut m = DMatrix::zeros(r.nrows(), 2 * self.n_modes);
                for j in 0..self.n_modes {
                    // displacement a_j = p_j / √λ_j
                    let s = 1.0 / self.eigenvalues[j].sqrt();
                    m.set_column(2 * j, &(r.column(j) * s));
                }
                Restriction { matrix: m }
            }
            _ => Restriction { matrix: r },
        }
    }
}

/// Linear map from the state space onto (weighted coordinates of) `L²(ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    pub matrix: DMatrix<f64>,
}

impl Restriction {
    /// Nodal state coordinates on a spatial grid: keeps the nodes flagged in
    /// `mask`, scaled by the square roots of their trapezoid weights.
    pub fn from_node_mask(nodes: &[f64], mask: &[bool]) -> Result<Self> {
        if nodes.len() != mask.len() || nodes.len() < 2 {
            return Err(shape_err("node mask must match the spatial grid"));
        }
        let weights = trapezoid_weights(nodes);
        let kept: Vec<usize> = (0..nodes.len()).filter(|&i| mask[i]).collect();
        let mut m = DMatrix::zeros(kept.len(), nodes.len());
        for (r, &i) in kept.iter().enumerate() {
            m[(r, i)] = weights[i].sqrt();
        }
        Ok(Self { matrix: m })
    }

    pub fn state_dim(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Trapezoid weights on an increasing (not necessarily uniform) grid.
pub fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = nodes[i + 1] - nodes[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// Gauss–Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = mid - half * x;
        nodes[n - 1 - i] = mid + half * x;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    (nodes, weights)
}

fn check_omega(omega: (f64, f64)) -> Result<()> {
    let (a, b) = omega;
    if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b && b <= 1.0) {
        return Err(Error::Input(format!("control interval ({a}, {b}) must satisfy 0 <= a < b <= 1")));
    }
    Ok(())
}

fn descriptor(family: ModelFamily, n_modes: usize, omega: (f64, f64), n_quad: usize) -> Result<ModelDescriptor> {
    check_omega(omega)?;
    if n_modes == 0 {
        return Err(Error::Input("n_modes must be at least 1".into()));
    }
    if n_quad < 4 * n_modes {
        return Err(Error::Input(format!("n_quad = {n_quad} is below 4 * n_modes = {}", 4 * n_modes)));
    }
    let (quad_nodes, quad_weights) = gauss_legendre(n_quad, omega.0, omega.1);
    let eigenvalues = (1..=n_modes).map(|j| (j as f64 * PI).powi(2)).collect();
    Ok(ModelDescriptor { family, n_modes, omega, quad_nodes, quad_weights, eigenvalues })
}

/// Heat equation `y_t - y_xx = u χ_ω` in modal coordinates: `A = diag(-λ_j)`.
pub fn make_heat1d(n_modes: usize, omega: (f64, f64), n_quad: usize) -> Result<LinearSystem> {
    let desc = descriptor(ModelFamily::Heat1d, n_modes, omega, n_quad)?;
    let a = DMatrix::from_diagonal(&DVector::from_iterator(n_modes, desc.eigenvalues.iter().map(|l| -l)));
    let b = desc.omega_restriction().transpose();
    Ok(LinearSystem::new(format!("heat1d[{n_modes}]"), a, b)?.with_metadata(desc))
}

/// Wave equation `y_tt - y_xx = u χ_ω` in energy coordinates
/// `(√λ_j a_j, a_j')` per mode, so that `A` is skew-symmetric.
pub fn make_wave1d(n_modes: usize, omega: (f64, f64), n_quad: usize) -> Result<LinearSystem> {
    let desc = descriptor(ModelFamily::Wave1d, n_modes, omega, n_quad)?;
    let n = 2 * n_modes;
    let mut a = DMatrix::zeros(n, n);
    for (j, lambda) in desc.eigenvalues.iter().enumerate() {
        let s = lambda.sqrt();
        a[(2 * j, 2 * j + 1)] = s;
        a[(2 * j + 1, 2 * j)] = -s;
    }
    let r = desc.omega_restriction();
    let mut b = DMatrix::zeros(n, r.nrows());
    for j in 0..n_modes {
        b.set_row(2 * j + 1, &r.column(j).transpose());
    }
    Ok(LinearSystem::new(format!("wave1d[{n_modes}]"), a, b)?.with_metadata(desc))
}

/// Explicit `(A, B)` pair.
pub fn make_ode(a: DMatrix<f64>, b: DMatrix<f64>, name: &str) -> Result<LinearSystem> {
    LinearSystem::new(name, a, b)
}

/// Names accepted by the configuration front end.
pub const MODEL_NAMES: [&str; 3] = ["heat1d", "wave1d", "ode"];
