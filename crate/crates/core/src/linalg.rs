//! Small dense helpers on top of nalgebra's SVD.

use nalgebra::{DMatrix, DVector, SVD};

/// Singular values (descending) and the full right singular basis of `m`.
///
/// Wide matrices are padded with zero rows so that the returned basis always
/// spans the whole domain; the extra singular values are zero.
pub fn svd_full(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let cols = m.ncols();
    let work = if m.nrows() < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(work, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::zeros(cols, order.len());
    for (j, &i) in order.iter().enumerate() {
        v.set_column(j, &v_t.row(i).transpose());
    }
    (sv, v)
}

/// Flip the sign so that the first entry of significant size is positive.
pub fn canonical_sign(mut v: DVector<f64>) -> DVector<f64> {
    let scale = v.amax();
    if let Some(x) = v.iter().find(|x| x.abs() > 1e-8 * scale) {
        if *x < 0.0 {
            v.neg_mut();
        }
    }
    v
}

/// Smallest singular value and an associated unit right singular vector.
pub fn min_singular_pair(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let (sv, v) = svd_full(m);
    let last = sv.len() - 1;
    (sv[last], canonical_sign(v.column(last).into_owned()))
}

/// Orthonormal basis of the numerical kernel: right singular vectors whose
/// singular value is at most `rel_tol` times the largest one.
pub fn kernel_basis(m: &DMatrix<f64>, rel_tol: f64) -> Vec<DVector<f64>> {
    if m.ncols() == 0 {
        return Vec::new();
    }
    let (sv, v) = svd_full(m);
    let cutoff = rel_tol * sv[0];
    sv.iter()
        .enumerate()
        .filter(|(_, s)| **s <= cutoff)
        .map(|(j, _)| v.column(j).into_owned())
        .collect()
}

/// True when the columns of `m` are linearly independent at relative tolerance `rel_tol`.
pub fn full_column_rank(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if m.ncols() == 0 {
        return true;
    }
    let (sv, _) = svd_full(m);
    let smax = sv[0];
    smax > 0.0 && sv[sv.len() - 1] > rel_tol * smax
}

/// Best constant `C` in `‖meas x‖ <= C ‖obs x‖` over all `x`, together with
/// the smallest singular value of `obs`. Returns `None` for `C` when some
/// `x` with `obs x ≈ 0` has `meas x ≠ 0`.
pub fn generalized_constant(obs: &DMatrix<f64>, meas: &DMatrix<f64>, rel_tol: f64) -> (Option<f64>, f64) {
    assert_eq!(obs.ncols(), meas.ncols());
    let (sv, v) = svd_full(obs);
    let smin = *sv.last().unwrap_or(&0.0);
    let smax = sv.first().copied().unwrap_or(0.0);
    let meas_scale = meas.norm().max(f64::MIN_POSITIVE);
    let mut scaled_cols = Vec::new();
    for (j, s) in sv.iter().enumerate() {
        let col = meas * v.column(j);
        if *s <= rel_tol * smax || *s == 0.0 {
            if col.norm() > 1e-9 * meas_scale {
                return (None, smin);
            }
        } else {
            scaled_cols.push(col / *s);
        }
    }
    if scaled_cols.is_empty() || meas.nrows() == 0 {
        return (Some(0.0), smin);
    }
    let (s2, _) = svd_full(&DMatrix::from_columns(&scaled_cols));
    (Some(s2[0]), smin)
}
