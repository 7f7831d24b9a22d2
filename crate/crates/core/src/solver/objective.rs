use nalgebra::DMatrix;

use super::source::LowRankSource;
use super::LocusModel;
use crate::preprocess::WhitenedData;
use crate::regularizers::{self, Regularizer, RegularizerKind};

/// Source-domain objective `Σ_ℓ ‖ỸᵀÃ_ℓ − S_ℓ‖² + penalty`.
///
/// Equal to the data-domain form `‖Ỹ − Ã S‖²_F + penalty` whenever `Ã` is
/// orthogonal.
pub fn objective_with(
    y_tilde: &DMatrix<f64>,
    a_tilde: &DMatrix<f64>,
    sources: &[LowRankSource],
    kind: &RegularizerKind,
) -> f64 {
    let targets = y_tilde.transpose() * a_tilde;
    let fidelity: f64 = sources
        .iter()
        .enumerate()
        .map(|(l, s)| (targets.column(l) - s.edges()).norm_squared())
        .sum();
    fidelity + regularizers::penalty_value(kind, sources)
}

/// Uniform-sparsity objective of a fitted model at weight `phi`.
pub fn objective(whitened: &WhitenedData, model: &LocusModel, phi: f64) -> f64 {
    objective_with(
        &whitened.y_tilde,
        &model.a_tilde,
        &model.sources,
        &RegularizerKind::new(Regularizer::UniformL1, phi),
    )
}
