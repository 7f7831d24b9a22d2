//! Small dense helpers shared by the decomposition stages.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Symmetric eigendecomposition with eigenvalues in decreasing order.
///
/// Each eigenvector is signed so that its largest-magnitude entry is positive
/// (first such entry on ties), which makes the output platform independent.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    reorder(&eig.eigenvalues, &eig.eigenvectors, &order)
}

/// Symmetric eigendecomposition ordered by decreasing |eigenvalue|.
pub fn sym_eigen_by_magnitude(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .total_cmp(&eig.eigenvalues[a].abs())
            .then(eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]))
            .then(a.cmp(&b))
    });
    reorder(&eig.eigenvalues, &eig.eigenvectors, &order)
}

fn reorder(
    values: &DVector<f64>,
    vectors: &DMatrix<f64>,
    order: &[usize],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = vectors.nrows();
    let mut out_vals = DVector::zeros(order.len());
    let mut out_vecs = DMatrix::zeros(n, order.len());
    for (k, &src) in order.iter().enumerate() {
        out_vals[k] = values[src];
        let mut col = vectors.column(src).into_owned();
        fix_sign(&mut col);
        out_vecs.set_column(k, &col);
    }
    (out_vals, out_vecs)
}

fn fix_sign(col: &mut DVector<f64>) {
    let mut best = 0.0_f64;
    let mut sign = 1.0;
    for &x in col.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        col.neg_mut();
    }
}

/// Inverse square root of a symmetric positive definite matrix.
///
/// Returns `None` when the smallest eigenvalue is not safely positive.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if !(max > 0.0) {
        return None;
    }
    let floor = max * 1e-14;
    if eig.eigenvalues.iter().any(|&l| !(l > floor)) {
        return None;
    }
    let scaled = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some(&eig.eigenvectors * scaled * eig.eigenvectors.transpose())
}

/// Symmetric (polar) orthogonalization `M (MᵀM)^{-1/2}`.
pub fn polar_orthogonalize(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let gram = m.transpose() * m;
    inv_sqrt_spd(&gram).map(|s| m * s)
}

/// Solves `gram · x = rhs` for a symmetric positive semidefinite `gram`.
///
/// Uses Cholesky when the system is well conditioned and falls back to an
/// eigenvalue pseudo-inverse with cutoff `1e-10 · λ_max`. The flag reports
/// whether the fallback was taken.
pub fn solve_psd(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, bool) {
    if let Some(chol) = gram.clone().cholesky() {
        let diag_max = gram.diagonal().iter().cloned().fold(0.0_f64, f64::max);
        let l = chol.l();
        let pivot_min = l.diagonal().iter().map(|x| x * x).fold(f64::INFINITY, f64::min);
        if pivot_min > diag_max * 1e-10 {
            return (chol.solve(rhs), false);
        }
    }
    (pinv_psd(gram) * rhs, true)
}

/// Eigenvalue pseudo-inverse of a symmetric matrix with cutoff `1e-10 · max|λ|`.
pub fn pinv_psd(gram: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    let cutoff = max * 1e-10;
    let inv = eig
        .eigenvalues
        .map(|l| if l.abs() > cutoff && l.abs() > 0.0 { 1.0 / l } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}
