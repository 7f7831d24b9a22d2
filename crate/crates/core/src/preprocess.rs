//! Group demeaning, dimension reduction and whitening.
//!
//! With `Yc` the subject-demeaned data and `Yc Ycᵀ = U Λ Uᵀ` its `N × N` Gram
//! matrix, the whitening map is `H = (Λ_q − σ̃² I)^{-1/2} U_qᵀ` where `σ̃²` is
//! the mean of the `N − q` discarded eigenvalues. Eigenvalues are those of the
//! Gram matrix itself (no `1/p` scaling).

use nalgebra::{DMatrix, DVector};

use crate::connmat::ConnectivityDataset;
use crate::error::{LocusError, Result};
use crate::linalg;

/// Reduced, whitened group data `Ỹ = H (Y − 1 μᵀ)`.
#[derive(Debug, Clone)]
pub struct WhitenedData {
    /// `q × p` reduced data.
    pub y_tilde: DMatrix<f64>,
    /// `q × N` whitening map.
    pub h: DMatrix<f64>,
    /// Removed group mean, length `p`.
    pub col_means: DVector<f64>,
    /// Residual variance `σ̃²` on the Gram eigenvalue scale.
    pub sigma2_resid: f64,
    /// Leading `q` Gram eigenvalues, decreasing.
    pub eigvals_top: DVector<f64>,
    /// Node count `V` of the underlying connectivity matrices.
    pub nodes: usize,
}

impl WhitenedData {
    pub fn q(&self) -> usize {
        self.y_tilde.nrows()
    }

    pub fn edges(&self) -> usize {
        self.y_tilde.ncols()
    }

    pub fn subjects(&self) -> usize {
        self.h.ncols()
    }

    /// Pseudo-inverse of `H`, i.e. `U_q (Λ_q − σ̃² I)^{1/2}`.
    pub fn h_pinv(&self) -> DMatrix<f64> {
        let scale = self.eigvals_top.map(|l| l - self.sigma2_resid);
        self.h.transpose() * DMatrix::from_diagonal(&scale)
    }
}

/// Column means and the demeaned data matrix.
pub fn demean(dataset: &ConnectivityDataset) -> (DVector<f64>, DMatrix<f64>) {
    let y = dataset.data();
    let n = y.nrows() as f64;
    let means = DVector::from_iterator(y.ncols(), y.column_iter().map(|c| c.sum() / n));
    let mut centered = y.clone();
    for (k, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[k]);
    }
    (means, centered)
}

pub fn whiten(dataset: &ConnectivityDataset, q: usize) -> Result<WhitenedData> {
    let n = dataset.subjects();
    if q == 0 || q >= n {
        return Err(LocusError::Dimension(format!(
            "number of sources q={q} must satisfy 1 <= q < N={n}"
        )));
    }
    let (col_means, centered) = demean(dataset);
    let gram = &centered * centered.transpose();
    let (mut vals, vecs) = linalg::sym_eigen_desc(&gram);

    // Eigenvalues at roundoff level are exact zeros of a rank-deficient Gram.
    let top = vals[0].max(0.0);
    let floor = top * 1e-12;
    for l in vals.iter_mut() {
        if *l < floor {
            *l = 0.0;
        }
    }
    let sigma2 = vals.rows(q, n - q).sum() / (n - q) as f64;
    let eigvals_top = vals.rows(0, q).into_owned();
    if let Some(k) = (0..q).find(|&k| eigvals_top[k] <= sigma2) {
        return Err(LocusError::degenerate(
            "preprocess",
            format!(
                "eigenvalue {} ({:e}) does not exceed the residual variance {:e}; lower q",
                k + 1,
                eigvals_top[k],
                sigma2
            ),
        ));
    }

    let u_q = vecs.columns(0, q);
    let scale = eigvals_top.map(|l| 1.0 / (l - sigma2).sqrt());
    let h = DMatrix::from_diagonal(&scale) * u_q.transpose();
    let y_tilde = &h * &centered;
    Ok(WhitenedData {
        y_tilde,
        h,
        col_means,
        sigma2_resid: sigma2,
        eigvals_top,
        nodes: dataset.nodes(),
    })
}

/// Subject loadings `A = Yc Sᵀ (S Sᵀ)^{-1}` for final sources `S` (`q × p`).
///
/// `H` is not square, so the loadings are recovered by least squares in the
/// original subject space rather than by inverting `Ã = H A`.
pub fn unmix_to_subject_space(dataset: &ConnectivityDataset, sources: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if sources.ncols() != dataset.edges() {
        return Err(LocusError::Dimension(format!(
            "sources have {} edges, dataset has {}",
            sources.ncols(),
            dataset.edges()
        )));
    }
    let (_, centered) = demean(dataset);
    let gram = sources * sources.transpose();
    let inv = gram.clone().try_inverse().filter(|inv| {
        let scale = gram.diagonal().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        inv.iter().all(|x| x.is_finite()) && scale > 0.0 && condition_ok(&gram)
    });
    let inv = inv.ok_or_else(|| {
        let zero: Vec<String> = (0..sources.nrows())
            .filter(|&l| sources.row(l).iter().all(|&x| x == 0.0))
            .map(|l| (l + 1).to_string())
            .collect();
        LocusError::degenerate(
            "preprocess",
            format!("source Gram matrix S·Sᵀ is singular (all-zero sources: [{}])", zero.join(",")),
        )
    })?;
    Ok(centered * sources.transpose() * inv)
}

fn condition_ok(gram: &DMatrix<f64>) -> bool {
    let (vals, _) = linalg::sym_eigen_desc(gram);
    let max = vals[0];
    let min = vals[vals.len() - 1];
    max > 0.0 && min > max * 1e-14
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, nodes: usize, seed: u64) -> ConnectivityDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = crate::connmat::edge_count(nodes);
        let data = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        ConnectivityDataset::new(data, nodes, None).unwrap()
    }

    #[test]
    fn demeaned_columns_are_zero() {
        let ds = random_dataset(7, 5, 1);
        let (_, c) = demean(&ds);
        for col in c.column_iter() {
            assert!(col.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn whitened_gram_diagonal_matches_eigen_oracle() {
        // N=5, p=6 (V=4), q=2 against an independent eigen solve.
        let ds = random_dataset(5, 4, 3);
        let w = whiten(&ds, 2).unwrap();
        let (_, c) = demean(&ds);
        let gram = &c * c.transpose();
        let eig = nalgebra::SymmetricEigen::new(gram.clone());
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        let sigma2 = vals[2..].iter().map(|l| if *l < vals[0] * 1e-12 { 0.0 } else { *l }).sum::<f64>() / 3.0;
        assert!((w.sigma2_resid - sigma2).abs() <= 1e-10 * vals[0]);
        let m = &w.h * &gram * w.h.transpose();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { vals[i] / (vals[i] - sigma2) } else { 0.0 };
                assert!((m[(i, j)] - expect).abs() < 1e-8 * expect.abs().max(1.0), "{i},{j}");
            }
        }
    }

    #[test]
    fn exact_rank_q_gives_pca_whitening() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, q, p) = (8, 2, 15);
        let a = DMatrix::from_fn(n, q, |_, _| rng.random_range(-1.0..1.0));
        let s = DMatrix::from_fn(q, p, |_, _| rng.random_range(-1.0..1.0));
        let ds = ConnectivityDataset::new(a * s, 6, None).unwrap();
        let w = whiten(&ds, q).unwrap();
        assert_eq!(w.sigma2_resid, 0.0);
        let ident = &w.y_tilde * w.y_tilde.transpose();
        assert!((ident - DMatrix::identity(q, q)).norm() < 1e-8);
    }

    #[test]
    fn q_n_minus_one_uses_smallest_eigenvalue() {
        let ds = random_dataset(4, 5, 5);
        let w = whiten(&ds, 3).unwrap();
        let (_, c) = demean(&ds);
        let (vals, _) = linalg::sym_eigen_desc(&(&c * c.transpose()));
        let smallest = if vals[3] < vals[0] * 1e-12 { 0.0 } else { vals[3] };
        assert_eq!(w.sigma2_resid, smallest);
    }

    #[test]
    fn q_too_large_is_dimension_error() {
        let ds = random_dataset(4, 4, 2);
        assert!(matches!(whiten(&ds, 4), Err(LocusError::Dimension(_))));
        assert!(matches!(whiten(&ds, 0), Err(LocusError::Dimension(_))));
    }

    #[test]
    fn rank_deficient_is_degenerate() {
        // Demeaned rank 1 but q = 2: λ₂ = 0 = σ̃².
        let row = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let data = DMatrix::from_fn(4, 3, |i, k| (i as f64) * row[k]);
        let ds = ConnectivityDataset::new(data, 3, None).unwrap();
        assert!(matches!(
            whiten(&ds, 2),
            Err(LocusError::Degenerate { stage: "preprocess", .. })
        ));
    }

    #[test]
    fn whiten_is_bit_reproducible() {
        let ds = random_dataset(9, 6, 11);
        let a = whiten(&ds, 3).unwrap();
        let b = whiten(&ds, 3).unwrap();
        assert_eq!(a.y_tilde, b.y_tilde);
        assert_eq!(a.h, b.h);
    }

    #[test]
    fn loadings_recovered_from_exact_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (n, q, p) = (10, 3, 21);
        let s = DMatrix::from_fn(q, p, |_, _| rng.random_range(-1.0..1.0));
        let mut a = DMatrix::from_fn(n, q, |_, _| rng.random_range(-2.0..2.0));
        // Loadings with zero column means so that Y − mean = A S exactly.
        for mut col in a.column_iter_mut() {
            let m = col.mean();
            col.add_scalar_mut(-m);
        }
        let ds = ConnectivityDataset::new(&a * &s, 7, None).unwrap();
        let est = unmix_to_subject_space(&ds, &s).unwrap();
        assert!((est - a).norm() < 1e-8);
    }

    #[test]
    fn single_source_is_scalar_projection() {
        let ds = random_dataset(6, 4, 8);
        let s = DMatrix::from_fn(1, 6, |_, k| if k == 2 { 1.0 } else { 0.0 });
        let est = unmix_to_subject_space(&ds, &s).unwrap();
        let (_, c) = demean(&ds);
        for i in 0..6 {
            assert!((est[(i, 0)] - c[(i, 2)]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_data_gives_zero_loadings() {
        let ds = ConnectivityDataset::new(DMatrix::from_element(5, 3, 2.5), 3, None).unwrap();
        let s = DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 0.5]);
        let est = unmix_to_subject_space(&ds, &s).unwrap();
        assert!(est.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn singular_sources_rejected() {
        let ds = random_dataset(5, 3, 4);
        let s = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            unmix_to_subject_space(&ds, &s),
            Err(LocusError::Degenerate { .. })
        ));
    }
}
