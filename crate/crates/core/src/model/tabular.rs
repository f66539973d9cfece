use super::{ExactPosterior, Model};
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, normalize_log_weights, sample_categorical};
use crate::rng::SimRng;

/// A model over the finite latent space `0..n` given by a table of `log p(x, y)`.
#[derive(Debug, Clone)]
pub struct TabularModel {
    log_joint: Vec<f64>,
    log_marginal: f64,
    posterior: Vec<f64>,
}

impl TabularModel {
    pub fn new(log_joint: Vec<f64>) -> Result<Self> {
        if log_joint.is_empty() {
            return Err(Error::invalid("tabular model needs at least one state"));
        }
        if log_joint.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::invalid(
                "tabular log densities must be finite or -inf",
            ));
        }
        let log_marginal = log_sum_exp(&log_joint);
        if log_marginal == f64::NEG_INFINITY {
            return Err(Error::invalid("tabular model has zero total mass"));
        }
        let posterior = normalize_log_weights(&log_joint);
        Ok(Self {
            log_joint,
            log_marginal,
            posterior,
        })
    }

    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        Self::new(weights.iter().map(|w| w.ln()).collect())
    }

    pub fn n_states(&self) -> usize {
        self.log_joint.len()
    }

    pub fn log_joint_table(&self) -> &[f64] {
        &self.log_joint
    }

    /// Normalized posterior probabilities.
    pub fn posterior(&self) -> &[f64] {
        &self.posterior
    }
}

impl Model for TabularModel {
    type Latent = usize;

    fn log_joint(&self, x: &usize) -> Result<f64> {
        self.log_joint
            .get(*x)
            .copied()
            .ok_or_else(|| Error::invalid(format!("state {x} outside 0..{}", self.log_joint.len())))
    }

    fn exact_log_marginal(&self) -> Option<f64> {
        Some(self.log_marginal)
    }
}

impl ExactPosterior for TabularModel {
    fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    fn sample_posterior(&self, rng: &mut SimRng) -> (usize, f64) {
        let x = sample_categorical(&self.posterior, rng);
        (x, self.log_joint[x] - self.log_marginal)
    }
}
