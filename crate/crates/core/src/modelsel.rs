//! Rank selection for individual sources and BIC tuning of `(φ, ρ)`.

use std::cmp::Ordering;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::connmat::{self, ConnectivityDataset, EdgeIndex};
use crate::error::{LocusError, Result};
use crate::linalg;
use crate::preprocess;
use crate::solver::{self, LocusModel, LowRankSource, SolverConfig};

/// Default relative threshold below which a reconstructed edge counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-3;

/// Below this fraction of the data energy the residual variance is treated
/// as an exact fit.
const PERFECT_FIT_TOL: f64 = 1e-20;

/// Outcome of [`select_rank`] for one source.
#[derive(Debug, Clone, PartialEq)]
pub struct RankChoice {
    pub rank: usize,
    /// Eigen truncation of the unstructured estimate at `rank`.
    pub source: LowRankSource,
    /// `‖Ŝ − Ŝ*‖² / ‖Ŝ*‖²` on edges at the chosen rank.
    pub residual_fraction: f64,
    /// True when the closeness target was not met within the cap.
    pub capped: bool,
}

/// Ranks chosen for every source of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSelection {
    pub rho: f64,
    pub max_rank: usize,
    pub chosen_ranks: Vec<usize>,
}

/// Smallest rank whose eigen truncation of `ℒ⁻¹(s_star)` keeps the relative
/// edge residual within `1 − ρ`, capped at `max_rank`.
pub fn select_rank(s_star: &DVector<f64>, rho: f64, max_rank: usize) -> Result<RankChoice> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(LocusError::InvalidConfig(format!("rho must lie in (0, 1), got {rho}")));
    }
    let nodes = connmat::node_count_for(s_star.len())
        .ok_or_else(|| LocusError::Dimension(format!("{} is not an edge count", s_star.len())))?;
    if max_rank == 0 || max_rank >= nodes {
        return Err(LocusError::InvalidConfig(format!(
            "max_rank={max_rank} must satisfy 1 <= max_rank < V={nodes}"
        )));
    }
    let energy = s_star.norm_squared();
    if energy == 0.0 {
        return Err(LocusError::degenerate("modelsel", "unstructured source estimate is all zero"));
    }

    let m = connmat::unvectorize(s_star.as_slice(), nodes)?;
    let (vals, vecs) = linalg::sym_eigen_by_magnitude(&m);
    let index = EdgeIndex::new(nodes);
    let mut recon = DVector::zeros(s_star.len());
    let mut residual_fraction = 1.0;
    for r in 1..=max_rank {
        let (lambda, u) = (vals[r - 1], vecs.column(r - 1));
        for (k, &(a, b)) in index.pairs().iter().enumerate() {
            recon[k] += lambda * u[a] * u[b];
        }
        residual_fraction = (&recon - s_star).norm_squared() / energy;
        if residual_fraction <= 1.0 - rho {
            return Ok(RankChoice {
                rank: r,
                source: LowRankSource::from_eigen(&vals, &vecs, r),
                residual_fraction,
                capped: false,
            });
        }
    }
    warn!("rank cap {max_rank} reached with residual fraction {residual_fraction:.3} > 1 - rho");
    Ok(RankChoice {
        rank: max_rank,
        source: LowRankSource::from_eigen(&vals, &vecs, max_rank),
        residual_fraction,
        capped: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicValue {
    /// Criterion value; `-∞` on a perfect fit.
    pub value: f64,
    /// Residual variance `σ̂²`.
    pub sigma2: f64,
    /// Total number of nonzero edges over all sources.
    pub l0: usize,
    pub perfect_fit: bool,
}

/// Nonzero edges of `s` relative to its largest magnitude.
pub fn support_size(s: &[f64], zero_tol: f64) -> usize {
    let max = s.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return 0;
    }
    s.iter().filter(|x| x.abs() > zero_tol * max).count()
}

/// BIC from demeaned data, loadings `A` (`N × q`) and sources (`q × p`).
pub fn bic_from_parts(
    dataset: &ConnectivityDataset,
    loadings: &DMatrix<f64>,
    sources: &DMatrix<f64>,
    zero_tol: f64,
) -> Result<BicValue> {
    let (n, p) = (dataset.subjects(), dataset.edges());
    if loadings.shape() != (n, sources.nrows()) || sources.ncols() != p {
        return Err(LocusError::Dimension(format!(
            "model with loadings {:?} and sources {:?} does not fit a {n}×{p} dataset",
            loadings.shape(),
            sources.shape()
        )));
    }
    let (_, yc) = preprocess::demean(dataset);
    let np = (n * p) as f64;
    let residual = &yc - loadings * sources;
    let sigma2 = residual.norm_squared() / np;
    let l0: usize = sources.row_iter().map(|row| support_size(row.transpose().as_slice(), zero_tol)).sum();
    let perfect_fit = sigma2 <= PERFECT_FIT_TOL * yc.norm_squared() / np;
    let value = if perfect_fit {
        f64::NEG_INFINITY
    } else {
        np * (2.0 * std::f64::consts::PI * sigma2).ln() + np + (n as f64).ln() * l0 as f64
    };
    Ok(BicValue {
        value,
        sigma2,
        l0,
        perfect_fit,
    })
}

pub fn bic(dataset: &ConnectivityDataset, model: &LocusModel, zero_tol: f64) -> Result<BicValue> {
    bic_from_parts(dataset, &model.loadings, &model.source_matrix(), zero_tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub bic: BicValue,
    pub iterations: usize,
    pub converged: bool,
    pub ranks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningCell {
    pub phi: f64,
    pub rho: f64,
    /// Fit summary, or the error message of a failed fit.
    pub outcome: std::result::Result<CellSummary, String>,
}

#[derive(Debug, Clone)]
pub struct TuningResult {
    /// One cell per `(φ, ρ)`, in `phi_grid`-major order.
    pub grid: Vec<TuningCell>,
    pub best: (f64, f64),
    pub best_model: LocusModel,
}

impl TuningResult {
    pub fn best_cell(&self) -> &TuningCell {
        self.grid
            .iter()
            .find(|c| (c.phi, c.rho) == self.best)
            .expect("best cell is part of the grid")
    }
}

/// Lower BIC wins; ties go to the sparser model (larger `φ`, then larger `ρ`).
fn cell_order(a: (f64, f64, f64), b: (f64, f64, f64)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then_with(|| b.1.total_cmp(&a.1))
        .then_with(|| b.2.total_cmp(&a.2))
}

/// Fits every `(φ, ρ)` pair on shared whitened data and picks the BIC minimizer.
pub fn tune(
    dataset: &ConnectivityDataset,
    q: usize,
    phi_grid: &[f64],
    rho_grid: &[f64],
    config: &SolverConfig,
) -> Result<TuningResult> {
    if phi_grid.is_empty() || rho_grid.is_empty() {
        return Err(LocusError::InvalidConfig("tuning grids must be non-empty".into()));
    }
    let whitened = preprocess::whiten(dataset, q)?;
    let pairs: Vec<(f64, f64)> = phi_grid
        .iter()
        .flat_map(|&phi| rho_grid.iter().map(move |&rho| (phi, rho)))
        .collect();

    let fits: Vec<(TuningCell, Option<LocusModel>)> = pairs
        .par_iter()
        .map(|&(phi, rho)| {
            let cell_config = SolverConfig {
                phi,
                rho,
                ..config.clone()
            };
            let fitted = solver::fit(dataset, &whitened, &cell_config, None).and_then(|model| {
                let value = bic(dataset, &model, DEFAULT_ZERO_TOL)?;
                if value.value.is_nan() {
                    return Err(LocusError::Numeric {
                        iteration: model.iterations,
                        message: "BIC is NaN".into(),
                    });
                }
                Ok((value, model))
            });
            match fitted {
                Ok((value, model)) => {
                    let summary = CellSummary {
                        bic: value,
                        iterations: model.iterations,
                        converged: model.converged,
                        ranks: model.ranks(),
                    };
                    (TuningCell { phi, rho, outcome: Ok(summary) }, Some(model))
                }
                Err(e) => {
                    warn!("fit at phi={phi}, rho={rho} failed: {e}");
                    (TuningCell { phi, rho, outcome: Err(e.to_string()) }, None)
                }
            }
        })
        .collect();

    let best_index = fits
        .iter()
        .enumerate()
        .filter_map(|(i, (cell, _))| cell.outcome.as_ref().ok().map(|s| (i, (s.bic.value, cell.phi, cell.rho))))
        .min_by(|a, b| cell_order(a.1, b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| LocusError::degenerate("modelsel", "every grid cell failed to fit"))?;

    let mut grid = Vec::with_capacity(fits.len());
    let mut best_model = None;
    for (i, (cell, model)) in fits.into_iter().enumerate() {
        if i == best_index {
            best_model = model;
        }
        grid.push(cell);
    }
    let best = (grid[best_index].phi, grid[best_index].rho);
    Ok(TuningResult {
        grid,
        best,
        best_model: best_model.expect("successful cell keeps its model"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rank_one_edges(u: &[f64], scale: f64) -> DVector<f64> {
        let m = DMatrix::from_fn(u.len(), u.len(), |a, b| scale * u[a] * u[b]);
        connmat::vectorize(&m).unwrap()
    }

    #[test]
    fn exact_rank_one_selects_one() {
        // The dropped diagonal leaves a residual of order 1/V at r = 1, so the
        // vector is spread over many nodes to keep it well under 1 - ρ.
        let u: Vec<f64> = (0..60).map(|i| 1.0 + 0.2 * (i as f64).sin()).collect();
        let s = rank_one_edges(&u, 2.0);
        for rho in [0.1, 0.5, 0.9] {
            assert_eq!(select_rank(&s, rho, 4).unwrap().rank, 1);
        }
    }

    #[test]
    fn constructed_spectrum_matches_edge_energy_arithmetic() {
        // Edges (0,1), (2,3), (4,5) carry a = 1, 0.6, 0.3. Each 2×2 block of the
        // zero-diagonal matrix has eigenvalues ±a, and each of the pair restores
        // a/2 of its edge, so residual energies follow in closed form.
        let mut m = DMatrix::zeros(6, 6);
        for (k, a) in [1.0, 0.6, 0.3].into_iter().enumerate() {
            m[(2 * k, 2 * k + 1)] = a;
            m[(2 * k + 1, 2 * k)] = a;
        }
        let s = connmat::vectorize(&m).unwrap();
        let energy: f64 = 1.0 + 0.36 + 0.09;
        let residuals = [0.25 + 0.36 + 0.09, 0.36 + 0.09, 0.09 + 0.09, 0.09, 0.0225];
        for (r, rest) in residuals.iter().enumerate() {
            let rho = 1.0 - rest / energy - 1e-9;
            let choice = select_rank(&s, rho.min(0.999_999), 5).unwrap();
            assert_eq!(choice.rank, r + 1);
            assert!((choice.residual_fraction - rest / energy).abs() < 1e-12);
        }
        assert_eq!(select_rank(&s, 0.5, 5).unwrap().rank, 1);
        assert_eq!(select_rank(&s, 0.6, 5).unwrap().rank, 2);
        assert_eq!(select_rank(&s, 0.8, 5).unwrap().rank, 3);
        assert_eq!(select_rank(&s, 0.9, 5).unwrap().rank, 4);
    }

    #[test]
    fn unattainable_closeness_hits_cap() {
        let s = DVector::from_fn(45, |k, _| ((k * 7919) % 13) as f64 - 6.0);
        let choice = select_rank(&s, 0.999_999, 3).unwrap();
        assert_eq!(choice.rank, 3);
        assert!(choice.capped);
    }

    #[test]
    fn zero_target_is_degenerate() {
        let err = select_rank(&DVector::zeros(10), 0.5, 2).unwrap_err();
        assert_eq!(err.code(), "modelsel.degenerate");
    }

    proptest! {
        #[test]
        fn rank_is_monotone_in_rho(vals in prop::collection::vec(-3.0f64..3.0, 28), r1 in 0.05f64..0.95, r2 in 0.05f64..0.95) {
            let s = DVector::from_vec(vals);
            prop_assume!(s.norm() > 1e-6);
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let a = select_rank(&s, lo, 7).unwrap().rank;
            let b = select_rank(&s, hi, 7).unwrap().rank;
            prop_assert!(a <= b);
        }
    }

    fn toy_dataset() -> ConnectivityDataset {
        // N = 2, V = 3, p = 3; demeaned rows are ±(1, 2, 3).
        let data = DMatrix::from_row_slice(2, 3, &[2.0, 3.0, 4.0, 0.0, -1.0, -2.0]);
        ConnectivityDataset::new(data, 3, None).unwrap()
    }

    #[test]
    fn bic_matches_hand_computation() {
        let ds = toy_dataset();
        let loadings = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let sources = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 2.5]);
        // Residual rows (0, 0, 0.5) and (0, 0, −0.5): σ̂² = 0.5 / 6.
        let sigma2: f64 = 0.5 / 6.0;
        let expected = 6.0 * (2.0 * std::f64::consts::PI * sigma2).ln() + 6.0 + 2.0_f64.ln() * 3.0;
        let got = bic_from_parts(&ds, &loadings, &sources, DEFAULT_ZERO_TOL).unwrap();
        assert!((got.sigma2 - sigma2).abs() < 1e-15);
        assert_eq!(got.l0, 3);
        assert!((got.value - expected).abs() < 1e-10);
    }

    #[test]
    fn perfect_fit_yields_sentinel() {
        let ds = toy_dataset();
        let loadings = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let sources = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let got = bic_from_parts(&ds, &loadings, &sources, DEFAULT_ZERO_TOL).unwrap();
        assert!(got.perfect_fit);
        assert_eq!(got.value, f64::NEG_INFINITY);
        assert_eq!(got.l0, 3);
    }

    #[test]
    fn bic_increases_with_support_for_fixed_residual() {
        let ds = toy_dataset();
        let loadings = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let sparse = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 2.5, 0.0, 0.0, 0.0]);
        let mut dense = sparse.clone();
        dense.set_row(1, &DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]).row(0));
        let a = bic_from_parts(&ds, &loadings, &sparse, DEFAULT_ZERO_TOL).unwrap();
        let b = bic_from_parts(&ds, &loadings, &dense, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(a.sigma2, b.sigma2);
        assert!(b.value > a.value);
    }

    #[test]
    fn bic_invariant_to_reciprocal_rescaling() {
        let ds = toy_dataset();
        let loadings = DMatrix::from_row_slice(2, 1, &[0.7, -1.2]);
        let sources = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 2.5]);
        let a = bic_from_parts(&ds, &loadings, &sources, DEFAULT_ZERO_TOL).unwrap();
        let b = bic_from_parts(&ds, &(loadings * 4.0), &(sources / 4.0), DEFAULT_ZERO_TOL).unwrap();
        assert!((a.value - b.value).abs() < 1e-10);
        assert_eq!(a.l0, b.l0);
    }

    #[test]
    fn ties_prefer_sparser_cells() {
        let cells = [(1.0, 0.1, 0.8), (1.0, 0.2, 0.8), (1.0, 0.2, 0.9), (2.0, 0.5, 0.9)];
        let best = cells.iter().copied().min_by(|a, b| cell_order(*a, *b)).unwrap();
        assert_eq!(best, (1.0, 0.2, 0.9));
    }
}
