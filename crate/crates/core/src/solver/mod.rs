//! Iterative node-rotation estimation of the sparse low-rank model.
//!
//! One outer iteration:
//!
//! 1. for each source `ℓ`, sweep the nodes `v = 1..V` and update the latent
//!    coordinates `X_ℓ(v)` (threshold, then project onto `span(X_ℓ(−v) D_ℓ)`),
//!    Gauss–Seidel style so later nodes see the fresh rows;
//! 2. update the diagonal weights `d_ℓ`;
//! 3. once all sources are done, refit `Ã` by least squares and orthogonalize.
//!
//! The rank of each source is re-selected at the start of its update from the
//! thresholded, unstructured estimate.

mod init;
mod objective;
pub mod source;
pub mod steps;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};

pub use init::{initialize, random_orthogonal, seed_source};
pub use objective::{objective, objective_with};
pub use source::LowRankSource;
pub use steps::{soft_threshold, stack_sources, update_d, update_mixing, update_node};

use crate::connmat::{ConnectivityDataset, EdgeIndex};
use crate::error::{LocusError, Result};
use crate::modelsel;
use crate::preprocess::{self, WhitenedData};
use crate::regularizers::{self, ProxContext, Regularizer, RegularizerKind};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Sparsity weight `φ`.
    pub phi: f64,
    /// Rank-closeness proportion `ρ ∈ (0, 1)`.
    pub rho: f64,
    /// Rank cap; `None` means `min(V − 1, 10)`.
    pub max_rank: Option<usize>,
    /// Relative-change tolerance on `Ã`.
    pub eps1: f64,
    /// Relative-change tolerance on `S`.
    pub eps2: f64,
    pub max_iter: usize,
    pub regularizer: Regularizer,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            phi: 0.0,
            rho: 0.9,
            max_rank: None,
            eps1: 1e-4,
            eps2: 1e-4,
            max_iter: 1000,
            regularizer: Regularizer::UniformL1,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LocusError::InvalidConfig(msg));
        if !(self.phi >= 0.0 && self.phi.is_finite()) {
            return bad(format!("phi must be finite and >= 0, got {}", self.phi));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return bad("eps1 and eps2 must be positive".into());
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if self.max_rank == Some(0) {
            return bad("max_rank must be at least 1".into());
        }
        Ok(())
    }

    /// Effective rank cap for `nodes` nodes.
    pub fn rank_cap(&self, nodes: usize) -> Result<usize> {
        let cap = self.max_rank.unwrap_or_else(|| (nodes - 1).min(10));
        if cap == 0 || cap >= nodes {
            return Err(LocusError::InvalidConfig(format!(
                "max_rank={cap} must satisfy 1 <= max_rank < V={nodes}"
            )));
        }
        Ok(cap)
    }

    pub fn penalty(&self) -> RegularizerKind {
        RegularizerKind::new(self.regularizer, self.phi)
    }
}

/// Fitted decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct LocusModel {
    pub sources: Vec<LowRankSource>,
    /// `q × q` orthogonal mixing matrix on the whitened space.
    pub a_tilde: DMatrix<f64>,
    /// `N × q` subject loadings.
    pub loadings: DMatrix<f64>,
    /// Objective value at initialization followed by one entry per iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Number of times a source collapsed to zero and was re-seeded.
    pub reseeds: usize,
}

impl LocusModel {
    pub fn q(&self) -> usize {
        self.sources.len()
    }

    /// Sources as rows of a `q × p` matrix.
    pub fn source_matrix(&self) -> DMatrix<f64> {
        stack_sources(&self.sources)
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.sources.iter().map(|s| s.rank()).collect()
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

fn relative_change(new: &DMatrix<f64>, old: &DMatrix<f64>) -> f64 {
    let denom = old.norm();
    if denom == 0.0 {
        if new.norm() == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (new - old).norm() / denom
    }
}

/// Runs the node-rotation algorithm to convergence or `max_iter`.
pub fn fit(
    dataset: &ConnectivityDataset,
    whitened: &WhitenedData,
    config: &SolverConfig,
    init: Option<LocusModel>,
) -> Result<LocusModel> {
    config.validate()?;
    let q = whitened.q();
    let nodes = whitened.nodes;
    if dataset.edges() != whitened.edges() || dataset.subjects() != whitened.subjects() {
        return Err(LocusError::Dimension("dataset and whitened data disagree".into()));
    }
    let max_rank = config.rank_cap(nodes)?;
    let mut model = match init {
        Some(m) => {
            if m.q() != q || m.a_tilde.shape() != (q, q) || m.sources.iter().any(|s| s.nodes() != nodes) {
                return Err(LocusError::Dimension("initial model does not match the whitened data".into()));
            }
            m
        }
        None => initialize(whitened, config)?,
    };
    let kind = config.penalty();
    let index = EdgeIndex::new(nodes);
    let y_tilde = &whitened.y_tilde;

    model.objective_trace = vec![objective_with(y_tilde, &model.a_tilde, &model.sources, &kind)];
    model.converged = false;
    model.iterations = 0;
    let mut prev_s = model.source_matrix();

    for iteration in 1..=config.max_iter {
        let prev_a = model.a_tilde.clone();
        let targets = y_tilde.transpose() * &model.a_tilde;
        for l in 0..q {
            let target = targets.column(l).into_owned();
            let reseeded = update_source(&mut model.sources[l], &target, &kind, config.rho, max_rank, &index)
                .map_err(|e| match e {
                    LocusError::Numeric { message, .. } => LocusError::Numeric { iteration, message },
                    other => other,
                })?;
            if reseeded {
                warn!("source {} collapsed at iteration {iteration}; re-seeded from its residual", l + 1);
                model.reseeds += 1;
            }
        }

        model.a_tilde = update_mixing(whitened, &model.sources)?;
        let value = objective_with(y_tilde, &model.a_tilde, &model.sources, &kind);
        if !value.is_finite() {
            return Err(LocusError::Numeric {
                iteration,
                message: format!("objective evaluated to {value}"),
            });
        }
        model.objective_trace.push(value);
        model.iterations = iteration;

        let s = model.source_matrix();
        let change_a = relative_change(&model.a_tilde, &prev_a);
        let change_s = relative_change(&s, &prev_s);
        prev_s = s;
        debug!("iteration {iteration}: objective {value:.6e}, dA {change_a:.3e}, dS {change_s:.3e}");
        if change_a < config.eps1 && change_s < config.eps2 {
            model.converged = true;
            break;
        }
    }

    model.loadings = preprocess::unmix_to_subject_space(dataset, &model.source_matrix())?;
    Ok(model)
}

/// Steps 1 and 2 for one source. Returns true when the source had to be
/// re-seeded.
fn update_source(
    source: &mut LowRankSource,
    target: &DVector<f64>,
    kind: &RegularizerKind,
    rho: f64,
    max_rank: usize,
    index: &EdgeIndex,
) -> Result<bool> {
    let nodes = index.nodes();
    let s_star = match kind.variant {
        Regularizer::UniformL1 => soft_threshold(target, kind.weight / 2.0),
        Regularizer::VectorL1 | Regularizer::Nuclear => target.clone(),
    };
    if s_star.iter().all(|&x| x == 0.0) {
        *source = seed_source(target, nodes)?;
        return Ok(true);
    }

    let selection = modelsel::select_rank(&s_star, rho, max_rank)?;
    if selection.rank != source.rank() {
        debug!("rank {} -> {}", source.rank(), selection.rank);
        *source = selection.source;
    }
    source.prune();
    if source.is_degenerate() {
        *source = seed_source(target, nodes)?;
        return Ok(true);
    }

    // Step 1: node rotation.
    let mut y_proj = DVector::zeros(nodes - 1);
    for v in 0..nodes {
        for (slot, (_, k)) in index.incident(v).enumerate() {
            y_proj[slot] = target[k];
        }
        let others = source.others(v);
        let row = regularizers::prox_step(kind, &y_proj, ProxContext::Node { others: &others, d: &source.d });
        if row.iter().any(|x| !x.is_finite()) {
            return Err(LocusError::Numeric {
                iteration: 0,
                message: format!("node {} update produced a non-finite row", v + 1),
            });
        }
        source.x.set_row(v, &row.transpose());
    }
    source.renormalize();
    if source.is_degenerate() {
        *source = seed_source(target, nodes)?;
        return Ok(true);
    }

    // Step 2: diagonal weights.
    *source = regularizers::update_weights(kind, source, target);
    let pruned = source.prune();
    if pruned > 0 {
        debug!("pruned {pruned} negligible component(s)");
    }
    if source.is_degenerate() {
        *source = seed_source(target, nodes)?;
        return Ok(true);
    }
    Ok(false)
}
