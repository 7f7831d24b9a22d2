use nalgebra::{DMatrix, DVector};

use crate::connmat;
use crate::error::{LocusError, Result};

/// Relative magnitude below which a diagonal weight is pruned.
pub const PRUNE_TOL: f64 = 1e-10;

/// One latent trait `S = ℒ(X D Xᵀ)` with unit-norm columns in `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankSource {
    /// `V × R` latent node coordinates.
    pub x: DMatrix<f64>,
    /// Diagonal of `D`, length `R`.
    pub d: DVector<f64>,
}

impl LowRankSource {
    pub fn new(x: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        if x.ncols() != d.len() {
            return Err(LocusError::Dimension(format!(
                "factor has {} columns but {} weights",
                x.ncols(),
                d.len()
            )));
        }
        if x.nrows() < 2 {
            return Err(LocusError::Dimension("a source needs at least 2 nodes".into()));
        }
        Ok(LowRankSource { x, d })
    }

    /// Leading `rank` eigen-pairs of a symmetric matrix, taken in the given order.
    pub fn from_eigen(values: &DVector<f64>, vectors: &DMatrix<f64>, rank: usize) -> Self {
        LowRankSource {
            x: vectors.columns(0, rank).into_owned(),
            d: values.rows(0, rank).into_owned(),
        }
    }

    pub fn rank(&self) -> usize {
        self.d.len()
    }

    pub fn nodes(&self) -> usize {
        self.x.nrows()
    }

    /// Full `V × V` reconstruction `X D Xᵀ` (diagonal included).
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut xd = self.x.clone();
        for (r, mut col) in xd.column_iter_mut().enumerate() {
            col *= self.d[r];
        }
        xd * self.x.transpose()
    }

    /// Edge vector `ℒ(X D Xᵀ)`.
    pub fn edges(&self) -> DVector<f64> {
        connmat::upper_triangle(&self.matrix())
    }

    /// True when the source reconstructs to the zero signal.
    pub fn is_degenerate(&self) -> bool {
        self.rank() == 0 || self.d.iter().all(|&w| w == 0.0) || self.x.iter().all(|&w| w == 0.0)
    }

    /// Rescales each column of `X` to unit norm, absorbing the scale into `d`.
    /// Zero columns are dropped. Returns the number of dropped columns.
    pub fn renormalize(&mut self) -> usize {
        let keep: Vec<usize> = (0..self.rank()).filter(|&r| self.x.column(r).norm() > 0.0).collect();
        let dropped = self.rank() - keep.len();
        if dropped > 0 {
            self.retain(&keep);
        }
        for r in 0..self.rank() {
            let n = self.x.column(r).norm();
            self.x.column_mut(r).unscale_mut(n);
            self.d[r] *= n * n;
        }
        dropped
    }

    /// Drops components with `|d_r| < PRUNE_TOL · max|d|`; returns how many.
    pub fn prune(&mut self) -> usize {
        let max = self.d.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
        let keep: Vec<usize> = (0..self.rank())
            .filter(|&r| max > 0.0 && self.d[r].abs() >= PRUNE_TOL * max)
            .collect();
        let dropped = self.rank() - keep.len();
        if dropped > 0 {
            self.retain(&keep);
        }
        dropped
    }

    fn retain(&mut self, keep: &[usize]) {
        self.x = self.x.select_columns(keep.iter());
        self.d = DVector::from_iterator(keep.len(), keep.iter().map(|&r| self.d[r]));
    }

    /// `X` with row `v` removed.
    pub fn others(&self, v: usize) -> DMatrix<f64> {
        self.x.clone().remove_row(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renormalize_keeps_reconstruction() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 2.0, -1.0, 0.0, 3.0, -1.0, 0.2]);
        let mut s = LowRankSource::new(x, DVector::from_vec(vec![0.7, -1.3])).unwrap();
        let before = s.edges();
        s.renormalize();
        for r in 0..2 {
            assert!((s.x.column(r).norm() - 1.0).abs() < 1e-12);
        }
        assert!((s.edges() - before).amax() < 1e-12);
    }

    #[test]
    fn zero_column_dropped() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let mut s = LowRankSource::new(x, DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(s.renormalize(), 1);
        assert_eq!(s.rank(), 1);
    }

    #[test]
    fn prune_small_weights() {
        let x = DMatrix::identity(3, 3);
        let mut s = LowRankSource::new(x, DVector::from_vec(vec![1.0, 1e-12, -0.5])).unwrap();
        assert_eq!(s.prune(), 1);
        assert_eq!(s.d.as_slice(), &[1.0, -0.5]);
    }
}
