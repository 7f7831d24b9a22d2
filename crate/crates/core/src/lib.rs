//! Sparse low-rank blind source separation of multi-subject connectivity
//! matrices.
//!
//! Each subject's symmetric `V × V` matrix is vectorized to its upper
//! triangle and modelled as a mixture of `q` latent sources, each sparse and
//! of low rank on the node grid: `Y_i = Σ_ℓ a_iℓ ℒ(X_ℓ D_ℓ X_ℓᵀ) + e_i`.
//!
//! Typical use:
//!
//! ```no_run
//! use locus_core::{preprocess, solver, synth};
//!
//! let (data, _truth) = synth::generate(&synth::SyntheticSpec::scenario_one(100, 1.0, 7))?;
//! let whitened = preprocess::whiten(&data, 3)?;
//! let config = solver::SolverConfig { phi: 0.1, ..Default::default() };
//! let model = solver::fit(&data, &whitened, &config, None)?;
//! println!("ranks {:?}", model.ranks());
//! # Ok::<(), locus_core::LocusError>(())
//! ```

pub mod baselines;
pub mod connmat;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model_io;
pub mod modelsel;
pub mod preprocess;
pub mod regularizers;
pub mod solver;
pub mod synth;

pub use connmat::{ConnectivityDataset, EdgeIndex};
pub use error::{LocusError, Result};
pub use regularizers::Regularizer;
pub use solver::{LocusModel, LowRankSource, SolverConfig};
