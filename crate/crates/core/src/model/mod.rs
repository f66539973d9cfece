//! Generative models `p(x, y)` with the observations `y` held inside the model.

mod bimodal;
mod hmm;
mod linreg;
mod tabular;

pub use bimodal::{BimodalParams, BimodalTarget};
pub use hmm::{DiscreteHmm, HmmForward, HmmParams};
pub use linreg::{ConjugateLinReg, GaussianPosterior, LinRegParams};
pub use tabular::TabularModel;

use crate::error::Result;
use crate::rng::SimRng;

/// Unnormalized joint density of a model with its data fixed.
pub trait Model: Send + Sync {
    type Latent: Clone + Send + Sync + std::fmt::Debug;

    /// `log p(x, y)`; `-inf` outside the support.
    fn log_joint(&self, x: &Self::Latent) -> Result<f64>;

    /// `log p(y)` when it is available in closed form.
    fn exact_log_marginal(&self) -> Option<f64> {
        None
    }
}

/// Models whose posterior can be sampled exactly with an evaluable density.
pub trait ExactPosterior: Model {
    fn log_marginal(&self) -> f64;

    /// Draw `x ~ p(x | y)` and return it with `log p(x | y)`.
    fn sample_posterior(&self, rng: &mut SimRng) -> (Self::Latent, f64);

    fn log_posterior(&self, x: &Self::Latent) -> Result<f64> {
        Ok(self.log_joint(x)? - self.log_marginal())
    }
}
