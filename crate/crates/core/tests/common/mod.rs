//! Independent oracles and problem builders shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use projctl_core::functional::{ProblemData, Target};
use projctl_core::subspace::{Ambient, Subspace};
use projctl_core::system::{GridSignal, LinearSystem, TimeGrid};

/// Matrix exponential by scaling and squaring of a long Taylor series.
pub fn taylor_expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.abs().row_sum().max();
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let x = m / 2f64.powi(s);
    let mut term = DMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..40 {
        term = &term * &x / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `(E, Φ, Ψ)` with `E = e^{A dt}`, `Φ = ∫_0^dt e^{As} ds` and
/// `Ψ = (1/dt) ∫_0^dt ∫_0^s e^{Ar} dr ds`, from the Taylor oracle.
pub fn oracle_step(a: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut aug = DMatrix::zeros(3 * n, 3 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    aug.view_mut((0, n), (n, n)).copy_from(&(DMatrix::identity(n, n) * dt));
    aug.view_mut((n, 2 * n), (n, n)).copy_from(&(DMatrix::identity(n, n) * dt));
    let ex = taylor_expm(&aug);
    (
        ex.view((0, 0), (n, n)).into_owned(),
        ex.view((0, n), (n, n)).into_owned(),
        ex.view((0, 2 * n), (n, n)).into_owned() / dt,
    )
}

/// Dense primal solve of
/// `min ½∫|u|² + ½∫|y|²` subject to `y(T) = y1` (or 0), `P_G u = g*`, `P_W y = w*`,
/// with the exact piecewise-constant discretization. Returns `u` as an `m × N` matrix.
#[allow(clippy::too_many_arguments)]
pub fn kkt_primal(
    system: &LinearSystem,
    grid: &TimeGrid,
    y0: &DVector<f64>,
    y1: &DVector<f64>,
    g: &Subspace,
    w: &Subspace,
    g_star: &GridSignal,
    w_star: &GridSignal,
) -> DMatrix<f64> {
    let (n, m, steps, dt) = (system.n(), system.m(), grid.n_steps(), grid.dt());
    let (e, phi, psi) = oracle_step(system.a(), dt);
    let nu = m * steps;
    let phib = &phi * system.b();
    let psib = &psi * system.b();

    // y_k = c_k + Y_k u and ybar_k = cbar_k + D_k u
    let mut yk = DMatrix::<f64>::zeros(n, nu);
    let mut ck = y0.clone();
    let mut dmat = DMatrix::zeros(n * steps, nu);
    let mut cbar = DVector::zeros(n * steps);
    for k in 0..steps {
        let mut dk = &phi * &yk / dt;
        dk.view_mut((0, k * m), (n, m)).zip_apply(&psib, |a, b| *a += b);
        dmat.view_mut((k * n, 0), (n, nu)).copy_from(&dk);
        cbar.rows_mut(k * n, n).copy_from(&(&phi * &ck / dt));
        let mut next = &e * &yk;
        next.view_mut((0, k * m), (n, m)).zip_apply(&phib, |a, b| *a += b);
        yk = next;
        ck = &e * &ck;
    }

    let gb = g.basis_matrix();
    let wb = w.basis_matrix();
    let rows = n + g.dim() + w.dim();
    let mut c = DMatrix::zeros(rows, nu);
    let mut d = DVector::zeros(rows);
    c.view_mut((0, 0), (n, nu)).copy_from(&yk);
    d.rows_mut(0, n).copy_from(&(y1 - &ck));
    c.view_mut((n, 0), (g.dim(), nu)).copy_from(&(gb.transpose() * dt));
    d.rows_mut(n, g.dim()).copy_from(&(gb.transpose() * g_star.to_flat() * dt));
    let wrow = wb.transpose() * &dmat * dt;
    c.view_mut((n + g.dim(), 0), (w.dim(), nu)).copy_from(&wrow);
    d.rows_mut(n + g.dim(), w.dim())
        .copy_from(&(wb.transpose() * (w_star.to_flat() - &cbar) * dt));

    let h = (DMatrix::identity(nu, nu) + dmat.transpose() * &dmat) * dt;
    let q = dmat.transpose() * &cbar * dt;
    let mut kkt = DMatrix::zeros(nu + rows, nu + rows);
    kkt.view_mut((0, 0), (nu, nu)).copy_from(&h);
    kkt.view_mut((0, nu), (nu, rows)).copy_from(&c.transpose());
    kkt.view_mut((nu, 0), (rows, nu)).copy_from(&c);
    let mut rhs = DVector::zeros(nu + rows);
    rhs.rows_mut(0, nu).copy_from(&(-q));
    rhs.rows_mut(nu, rows).copy_from(&d);
    let sol = kkt.lu().solve(&rhs).expect("KKT matrix is nonsingular");
    DMatrix::from_column_slice(m, steps, sol.rows(0, nu).as_slice())
}

/// Signal `e^{rate t} v` on the midpoints that fall in `[from, to]`, zero elsewhere.
pub fn exp_profile(grid: &TimeGrid, rate: f64, v: &DVector<f64>, window: (f64, f64)) -> GridSignal {
    GridSignal::from_fn(v.len(), grid, |t| {
        if t >= window.0 && t <= window.1 {
            v * (rate * t).exp()
        } else {
            DVector::zeros(v.len())
        }
    })
}

pub fn unit(n: usize, i: usize) -> DVector<f64> {
    DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 })
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

pub fn gaussian_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

/// Box–Muller standard normal sample.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random system with moderate dynamics.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LinearSystem {
    let a = gaussian_mat(rng, n, n) / (n as f64).sqrt() - DMatrix::identity(n, n) * 0.3;
    let b = gaussian_mat(rng, n, m);
    LinearSystem::new("random", a, b).unwrap()
}

pub fn random_signals(rng: &mut ChaCha8Rng, dim: usize, grid: &TimeGrid, count: usize) -> Vec<GridSignal> {
    (0..count)
        .map(|_| {
            let v = gaussian_vec(rng, dim);
            let rate = rng.gen_range(-2.0..2.0);
            let freq = rng.gen_range(0.5..4.0);
            GridSignal::from_fn(dim, grid, |t| &v * ((rate * t).exp() * (freq * t).cos()))
        })
        .collect()
}

/// Random problem of the requested kind with random subspaces and data.
pub fn random_problem(rng: &mut ChaCha8Rng, kind: usize) -> ProblemData {
    let n = rng.gen_range(1..=4);
    let m = rng.gen_range(1..=2);
    let steps = rng.gen_range(4..=24);
    let grid = TimeGrid::new(rng.gen_range(0.5..2.0), steps).unwrap();
    let system = random_system(rng, n, m);
    let pg = rng.gen_range(0..=2);
    let pw = rng.gen_range(0..=2);
    let g = Subspace::from_signals(&random_signals(rng, m, &grid, pg), Ambient::ControlSignal { m, grid }).unwrap();
    let w = Subspace::from_signals(&random_signals(rng, n, &grid, pw), Ambient::StateSignal { n, grid }).unwrap();
    let pe = rng.gen_range(0..=n);
    let e = Subspace::orthonormalize(
        &(0..pe).map(|_| gaussian_vec(rng, n)).collect::<Vec<_>>(),
        Ambient::State { n },
    )
    .unwrap();
    let y1 = gaussian_vec(rng, n);
    let epsilon = rng.gen_range(0.01..0.5);
    let target = match kind % 4 {
        0 => Target::Approx { y1, epsilon, e },
        1 => Target::ApproxRelaxed { y1, epsilon, e },
        2 => Target::Exact { y1 },
        _ => Target::Null,
    };
    let g_star = g.lift_signal(&gaussian_vec(rng, g.dim())).unwrap();
    let w_star = w.lift_signal(&gaussian_vec(rng, w.dim())).unwrap();
    ProblemData::new(system, grid, target)
        .unwrap()
        .with_subspaces(g, w)
        .unwrap()
        .with_initial_state(gaussian_vec(rng, n))
        .unwrap()
        .with_g_star(g_star)
        .unwrap()
        .with_w_star(w_star)
        .unwrap()
}
