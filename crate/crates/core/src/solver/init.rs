use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::source::LowRankSource;
use super::{LocusModel, SolverConfig};
use crate::baselines;
use crate::connmat;
use crate::error::{LocusError, Result};
use crate::linalg;
use crate::modelsel;
use crate::preprocess::WhitenedData;

const ICA_MAX_ITER: usize = 1000;
const ICA_TOL: f64 = 1e-6;

/// Seeded Haar-like random orthogonal matrix.
pub fn random_orthogonal(q: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let g = DMatrix::from_fn(q, q, |_, _| StandardNormal.sample(&mut rng));
        if let Some(o) = linalg::polar_orthogonalize(&g) {
            return o;
        }
    }
}

/// Rank-1 source from the leading eigen-pair of `ℒ⁻¹(target)`.
pub fn seed_source(target: &DVector<f64>, nodes: usize) -> Result<LowRankSource> {
    let m = connmat::unvectorize(target.as_slice(), nodes)?;
    let (vals, vecs) = linalg::sym_eigen_by_magnitude(&m);
    if vals[0] == 0.0 {
        return Err(LocusError::degenerate("solver", "cannot seed a source from an all-zero target"));
    }
    Ok(LowRankSource::from_eigen(&vals, &vecs, 1))
}

/// Starting point from the FastICA baseline: orthogonalized ICA mixing, and
/// per-source eigen truncations with ranks chosen by the closeness rule.
/// Falls back to a seeded random rotation when ICA fails.
pub fn initialize(whitened: &WhitenedData, config: &SolverConfig) -> Result<LocusModel> {
    config.validate()?;
    let q = whitened.q();
    let nodes = whitened.nodes;
    let max_rank = config.rank_cap(nodes)?;

    let from_ica = baselines::fastica(whitened, ICA_MAX_ITER, ICA_TOL, config.seed)
        .map_err(|e| warn!("FastICA initialization failed ({e}); using a random rotation"))
        .ok()
        .and_then(|ica| linalg::polar_orthogonalize(&ica.mixing))
        .filter(|a| a.iter().all(|x| x.is_finite()));
    let a_tilde = from_ica.unwrap_or_else(|| random_orthogonal(q, config.seed));

    let targets = whitened.y_tilde.transpose() * &a_tilde;
    let sources = (0..q)
        .map(|l| {
            let target = targets.column(l).into_owned();
            match modelsel::select_rank(&target, config.rho, max_rank) {
                Ok(sel) => Ok(sel.source),
                Err(_) => seed_source(&target, nodes),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(LocusModel {
        sources,
        loadings: whitened.h_pinv() * &a_tilde,
        a_tilde,
        objective_trace: Vec::new(),
        converged: false,
        iterations: 0,
        reseeds: 0,
    })
}
