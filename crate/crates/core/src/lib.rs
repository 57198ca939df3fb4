//! Uncertainty-aware generalized adaptive cycle consistency (UGAC) for
//! unpaired image-to-image translation.
//!
//! Generators predict a per-pixel generalized Gaussian (mean, scale, shape)
//! for each output, and the cycle loss is that distribution's negative
//! log-likelihood of the reconstruction residual. Fixing scale and shape to
//! one recovers the usual L1 cycle loss.

pub mod data;
pub mod error;
pub mod ggd;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod perturb;
pub mod train;
pub mod tensor;
pub mod uncertainty;

pub use error::{Error, Result};
pub use tensor::{Gradients, Graph, Tensor, Var};

/// Deterministic RNG used everywhere randomness enters.
pub type Rng = rand_chacha::ChaCha8Rng;
