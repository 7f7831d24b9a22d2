//! FastICA on vectorized connectivity, used both as the comparison method
//! and to initialize the low-rank solver.
//!
//! The reduced data `Ỹ` (`q × p`) is treated as `p` samples of a
//! `q`-dimensional signal. Rows are centered across edges and sphered to unit
//! covariance, then a symmetric fixed-point iteration with the `tanh`
//! (log-cosh) contrast finds an orthogonal unmixing `W`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LocusError, Result};
use crate::linalg;
use crate::preprocess::WhitenedData;

#[derive(Debug, Clone, PartialEq)]
pub struct IcaModel {
    /// `q × p` estimated sources, `W K Ỹ`.
    pub sources: DMatrix<f64>,
    /// Orthogonal mixing on the sphered space, `Wᵀ`.
    pub mixing: DMatrix<f64>,
    /// Sphering matrix `K` applied to the edge-centered reduced data.
    pub sphering: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl IcaModel {
    /// Orthogonal unmixing `W`.
    pub fn unmixing(&self) -> DMatrix<f64> {
        self.mixing.transpose()
    }
}

/// `(W Wᵀ)^{-1/2} W`.
fn decorrelate(w: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    linalg::inv_sqrt_spd(&(w * w.transpose())).map(|s| s * w)
}

pub fn fastica(whitened: &WhitenedData, max_iter: usize, tol: f64, seed: u64) -> Result<IcaModel> {
    let y = &whitened.y_tilde;
    let (q, p) = y.shape();
    let mut centered = y.clone();
    for mut row in centered.row_iter_mut() {
        let m = row.mean();
        row.add_scalar_mut(-m);
    }
    let cov = &centered * centered.transpose() / p as f64;
    let sphering = linalg::inv_sqrt_spd(&cov)
        .ok_or_else(|| LocusError::degenerate("baselines", "reduced data has singular edge covariance"))?;
    let z = &sphering * &centered;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w0 = DMatrix::from_fn(q, q, |_, _| StandardNormal.sample(&mut rng));
    let (w, converged, iterations) = symmetric_fastica(&z, &w0, max_iter, tol)?;

    Ok(IcaModel {
        sources: &w * &sphering * y,
        mixing: w.transpose(),
        sphering,
        converged,
        iterations,
    })
}

/// Symmetric fixed-point iteration on sphered data `z` from start `w0`.
pub fn symmetric_fastica(
    z: &DMatrix<f64>,
    w0: &DMatrix<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<(DMatrix<f64>, bool, usize)> {
    let p = z.ncols() as f64;
    let singular = || LocusError::degenerate("baselines", "unmixing matrix lost rank");
    let mut w = decorrelate(w0).ok_or_else(singular)?;
    for iteration in 1..=max_iter {
        let g = (&w * z).map(f64::tanh);
        let g_prime_mean: Vec<f64> = g
            .row_iter()
            .map(|row| row.iter().map(|x| 1.0 - x * x).sum::<f64>() / p)
            .collect();
        let mut next = &g * z.transpose() / p;
        for i in 0..next.nrows() {
            for j in 0..next.ncols() {
                next[(i, j)] -= g_prime_mean[i] * w[(i, j)];
            }
        }
        let next = decorrelate(&next).ok_or_else(singular)?;
        if next.iter().any(|x| !x.is_finite()) {
            return Err(LocusError::Numeric {
                iteration,
                message: "FastICA update is not finite".into(),
            });
        }
        let lim = (&next * w.transpose())
            .diagonal()
            .iter()
            .map(|c| (c.abs() - 1.0).abs())
            .fold(0.0_f64, f64::max);
        w = next;
        if lim < tol {
            return Ok((w, true, iteration));
        }
    }
    Ok((w, false, max_iter))
}
