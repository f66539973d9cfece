//! Divergence estimation between approximate inference algorithms.
//!
//! Each inference algorithm is treated as a probabilistic model over its own
//! internal random choices. Pairing it with a meta-inference sampler that
//! reconstructs those choices from an output lets [`aide::aide`] estimate an
//! upper bound on the symmetrized KL divergence between the output
//! distributions of any two algorithms.

pub mod aide;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod inference;
pub mod kernels;
pub mod math;
pub mod model;
pub mod oracle;
pub mod rng;

pub use aide::{aide, aide_ais_vs_variational, AideConfig, AideEstimate};
pub use error::{Error, Result, Side};
