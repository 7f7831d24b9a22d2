//! Sparsity penalties for the low-rank sources.
//!
//! * `UniformL1`: edge-wise L1 on the reconstruction, `Σ_{u<v} |X(u)ᵀ D X(v)|`.
//! * `VectorL1`: L1 on the factor entries, `Σ ‖X‖₁`.
//! * `Nuclear`: nuclear norm of the reconstruction, `Σ ‖D‖_*`.
//!
//! All three share the solver's outer loop; only the Step 1 / Step 2 block
//! updates differ, and those are dispatched through [`prox_step`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::LocusError;
use crate::linalg;
use crate::solver::source::LowRankSource;
use crate::solver::steps::{fit_weights, project_node, soft_threshold};

/// Column Gram deviation from identity above which the nuclear update
/// re-diagonalises the reconstruction instead of shrinking `d` in place.
pub const NUCLEAR_GRAM_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regularizer {
    #[default]
    UniformL1,
    VectorL1,
    Nuclear,
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularizer::UniformL1 => "uniform",
            Regularizer::VectorL1 => "vector",
            Regularizer::Nuclear => "nuclear",
        })
    }
}

impl FromStr for Regularizer {
    type Err = LocusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" | "uniform_l1" => Ok(Regularizer::UniformL1),
            "vector" | "vector_l1" => Ok(Regularizer::VectorL1),
            "nuclear" => Ok(Regularizer::Nuclear),
            other => Err(LocusError::InvalidConfig(format!(
                "unknown regularizer {other:?} (expected uniform, vector or nuclear)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerKind {
    pub variant: Regularizer,
    pub weight: f64,
}

impl RegularizerKind {
    pub fn new(variant: Regularizer, weight: f64) -> Self {
        debug_assert!(weight >= 0.0);
        RegularizerKind { variant, weight }
    }
}

fn gram_deviation(x: &DMatrix<f64>) -> f64 {
    (x.transpose() * x - DMatrix::identity(x.ncols(), x.ncols())).norm()
}

/// Nuclear norm of the symmetric reconstruction `X D Xᵀ`.
fn nuclear_norm(source: &LowRankSource) -> f64 {
    if gram_deviation(&source.x) <= 1e-10 {
        source.d.iter().map(|w| w.abs()).sum()
    } else {
        let (vals, _) = linalg::sym_eigen_by_magnitude(&source.matrix());
        vals.iter().map(|l| l.abs()).sum()
    }
}

pub fn penalty_value(kind: &RegularizerKind, sources: &[LowRankSource]) -> f64 {
    if kind.weight == 0.0 {
        return 0.0;
    }
    let total: f64 = match kind.variant {
        Regularizer::UniformL1 => sources.iter().map(|s| s.edges().iter().map(|e| e.abs()).sum::<f64>()).sum(),
        Regularizer::VectorL1 => sources.iter().map(|s| s.x.iter().map(|e| e.abs()).sum::<f64>()).sum(),
        Regularizer::Nuclear => sources.iter().map(nuclear_norm).sum(),
    };
    kind.weight * total
}

/// Fixed blocks a proximal block update conditions on.
#[derive(Debug, Clone, Copy)]
pub enum ProxContext<'a> {
    /// Step 1: the target is the `V−1` projected edge values of one node;
    /// `others` is `X(−v)`, `d` the current weights.
    Node {
        others: &'a DMatrix<f64>,
        d: &'a DVector<f64>,
    },
    /// Step 2: the target is the full edge vector; `x` spans `Z`.
    Weights { x: &'a DMatrix<f64> },
    /// Shrinkage applied directly to a weight vector.
    Diagonal,
}

/// Block update for the given penalty.
pub fn prox_step(kind: &RegularizerKind, target: &DVector<f64>, ctx: ProxContext<'_>) -> DVector<f64> {
    let t = kind.weight / 2.0;
    match (ctx, kind.variant) {
        (ProxContext::Node { others, d }, Regularizer::UniformL1) => {
            project_node(others, d, &soft_threshold(target, t))
        }
        (ProxContext::Node { others, d }, Regularizer::VectorL1) => {
            soft_threshold(&project_node(others, d, target), t)
        }
        (ProxContext::Node { others, d }, Regularizer::Nuclear) => project_node(others, d, target),
        (ProxContext::Weights { x }, Regularizer::UniformL1) => fit_weights(x, &soft_threshold(target, t)),
        (ProxContext::Weights { x }, Regularizer::VectorL1) => fit_weights(x, target),
        (ProxContext::Weights { x }, Regularizer::Nuclear) => soft_threshold(&fit_weights(x, target), t),
        (ProxContext::Diagonal, Regularizer::Nuclear) => soft_threshold(target, t),
        (ProxContext::Diagonal, _) => target.clone(),
    }
}

/// Step 2 for a whole source. Returns the updated source; the nuclear penalty
/// re-diagonalises `X D Xᵀ` when the columns of `X` drift from orthonormal.
pub fn update_weights(kind: &RegularizerKind, source: &LowRankSource, target: &DVector<f64>) -> LowRankSource {
    if kind.variant == Regularizer::Nuclear && gram_deviation(&source.x) > NUCLEAR_GRAM_TOL {
        let d = fit_weights(&source.x, target);
        let fitted = LowRankSource {
            x: source.x.clone(),
            d,
        };
        let (vals, vecs) = linalg::sym_eigen_by_magnitude(&fitted.matrix());
        let eig = LowRankSource::from_eigen(&vals, &vecs, source.rank());
        return LowRankSource {
            d: prox_step(kind, &eig.d, ProxContext::Diagonal),
            x: eig.x,
        };
    }
    LowRankSource {
        x: source.x.clone(),
        d: prox_step(kind, target, ProxContext::Weights { x: &source.x }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::steps::update_node;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e1_source(nodes: usize, d: f64) -> LowRankSource {
        let mut x = DMatrix::zeros(nodes, 1);
        x[(0, 0)] = 1.0;
        LowRankSource::new(x, DVector::from_vec(vec![d])).unwrap()
    }

    fn random_source(rng: &mut ChaCha8Rng, nodes: usize, rank: usize) -> LowRankSource {
        let x = DMatrix::from_fn(nodes, rank, |_, _| rng.random_range(-1.0..1.0));
        let d = DVector::from_fn(rank, |_, _| rng.random_range(-2.0..2.0));
        let mut s = LowRankSource::new(x, d).unwrap();
        s.renormalize();
        s
    }

    #[test]
    fn penalties_on_basis_source() {
        let src = vec![e1_source(5, 2.0)];
        let pen = |v| penalty_value(&RegularizerKind::new(v, 1.0), &src);
        assert_eq!(pen(Regularizer::UniformL1), 0.0);
        assert_eq!(pen(Regularizer::VectorL1), 1.0);
        assert_eq!(pen(Regularizer::Nuclear), 2.0);
    }

    #[test]
    fn uniform_penalty_is_edge_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src = random_source(&mut rng, 9, 3);
        let m = src.matrix();
        let mut brute = 0.0;
        for u in 0..9 {
            for v in (u + 1)..9 {
                brute += m[(u, v)].abs();
            }
        }
        let value = penalty_value(&RegularizerKind::new(Regularizer::UniformL1, 1.0), &[src]);
        assert!((value - brute).abs() < 1e-12);
    }

    #[test]
    fn nuclear_matches_svd_for_orthonormal_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let raw = DMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
        let x = raw.qr().q();
        let src = LowRankSource::new(x, DVector::from_vec(vec![1.5, -0.7, 0.2])).unwrap();
        let value = penalty_value(&RegularizerKind::new(Regularizer::Nuclear, 2.0), &[src.clone()]);
        let svd_sum: f64 = src.matrix().singular_values().iter().sum();
        assert!((value - 2.0 * svd_sum).abs() < 1e-8);
        assert!((value - 2.0 * 2.4).abs() < 1e-8);
    }

    #[test]
    fn nuclear_non_orthonormal_uses_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = random_source(&mut rng, 6, 2);
        let value = penalty_value(&RegularizerKind::new(Regularizer::Nuclear, 1.0), &[src.clone()]);
        let svd_sum: f64 = src.matrix().singular_values().iter().sum();
        assert!((value - svd_sum).abs() < 1e-10);
    }

    #[test]
    fn penalty_zero_iff_weight_or_signal_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = vec![random_source(&mut rng, 6, 2)];
        for v in [Regularizer::UniformL1, Regularizer::VectorL1, Regularizer::Nuclear] {
            assert_eq!(penalty_value(&RegularizerKind::new(v, 0.0), &src), 0.0);
            assert!(penalty_value(&RegularizerKind::new(v, 0.5), &src) > 0.0);
        }
    }

    #[test]
    fn nuclear_diagonal_shrinkage() {
        let kind = RegularizerKind::new(Regularizer::Nuclear, 1.0);
        let d = prox_step(&kind, &DVector::from_vec(vec![3.0, -0.5]), ProxContext::Diagonal);
        assert_eq!(d.as_slice(), &[2.5, 0.0]);
    }

    #[test]
    fn vector_weight_zero_is_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src = random_source(&mut rng, 7, 2);
        let others = src.others(2);
        let y = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let kind = RegularizerKind::new(Regularizer::VectorL1, 0.0);
        let row = prox_step(&kind, &y, ProxContext::Node { others: &others, d: &src.d });
        assert_eq!(row, update_node(&src, 2, &y, 0.0));
    }

    #[test]
    fn uniform_dispatch_equals_solver_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let rank = rng.random_range(1..4);
            let src = random_source(&mut rng, 10, rank);
            let v = rng.random_range(0..10);
            let y = DVector::from_fn(9, |_, _| rng.random_range(-1.0..1.0));
            let phi = rng.random_range(0.0..1.0);
            let others = src.others(v);
            let kind = RegularizerKind::new(Regularizer::UniformL1, phi);
            let a = prox_step(&kind, &y, ProxContext::Node { others: &others, d: &src.d });
            let b = update_node(&src, v, &y, phi);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn nuclear_fallback_rediagonalises() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let src = random_source(&mut rng, 8, 2);
        let target = DVector::from_fn(28, |_, _| rng.random_range(-1.0..1.0));
        let out = update_weights(&RegularizerKind::new(Regularizer::Nuclear, 0.0), &src, &target);
        assert!(gram_deviation(&out.x) < 1e-10);
        // With zero weight the reconstruction equals the least-squares fit.
        let ls = LowRankSource {
            x: src.x.clone(),
            d: fit_weights(&src.x, &target),
        };
        assert!((out.edges() - ls.edges()).amax() < 1e-10);
    }

    #[test]
    fn parse_names() {
        assert_eq!("uniform".parse::<Regularizer>().unwrap(), Regularizer::UniformL1);
        assert_eq!("vector".parse::<Regularizer>().unwrap(), Regularizer::VectorL1);
        assert_eq!("NUCLEAR".parse::<Regularizer>().unwrap(), Regularizer::Nuclear);
        assert!("scad".parse::<Regularizer>().is_err());
    }
}
