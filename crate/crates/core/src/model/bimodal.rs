use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::{ExactPosterior, Model};
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, normal_log_pdf};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BimodalParams {
    pub means: [f64; 2],
    pub stds: [f64; 2],
    pub weights: [f64; 2],
    /// `log p(y)`: the joint is this constant times the mixture density.
    #[serde(default)]
    pub log_evidence: f64,
}

impl Default for BimodalParams {
    fn default() -> Self {
        Self {
            means: [-3.0, 2.0],
            stds: [0.5, 0.7],
            weights: [0.1, 0.9],
            log_evidence: -2.0,
        }
    }
}

/// One-dimensional posterior that is a two-component Gaussian mixture.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(try_from = "BimodalParams", into = "BimodalParams")]
pub struct BimodalTarget {
    params: BimodalParams,
}

impl TryFrom<BimodalParams> for BimodalTarget {
    type Error = Error;

    fn try_from(params: BimodalParams) -> Result<Self> {
        if params.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("component means must be finite"));
        }
        if params.stds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("component stds must be positive"));
        }
        if params.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("component weights must be positive"));
        }
        if (params.weights[0] + params.weights[1] - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("component weights must sum to 1"));
        }
        if !params.log_evidence.is_finite() {
            return Err(Error::invalid("log_evidence must be finite"));
        }
        Ok(Self { params })
    }
}

impl From<BimodalTarget> for BimodalParams {
    fn from(b: BimodalTarget) -> Self {
        b.params
    }
}

impl BimodalTarget {
    pub fn new(params: BimodalParams) -> Result<Self> {
        Self::try_from(params)
    }

    pub fn params(&self) -> &BimodalParams {
        &self.params
    }

    /// Normalized mixture log-density.
    pub fn log_density(&self, x: f64) -> f64 {
        let p = &self.params;
        log_sum_exp(&[
            p.weights[0].ln() + normal_log_pdf(x, p.means[0], p.stds[0]),
            p.weights[1].ln() + normal_log_pdf(x, p.means[1], p.stds[1]),
        ])
    }

    /// Posterior mass of `x < threshold`.
    pub fn mass_below(&self, threshold: f64) -> f64 {
        let p = &self.params;
        (0..2)
            .map(|k| {
                let z = (threshold - p.means[k]) / p.stds[k];
                p.weights[k] * 0.5 * erfc(-z / std::f64::consts::SQRT_2)
            })
            .sum()
    }
}

impl Model for BimodalTarget {
    type Latent = f64;

    fn log_joint(&self, x: &f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::invalid("latent value must be finite"));
        }
        Ok(self.params.log_evidence + self.log_density(*x))
    }

    fn exact_log_marginal(&self) -> Option<f64> {
        Some(self.params.log_evidence)
    }
}

impl ExactPosterior for BimodalTarget {
    fn log_marginal(&self) -> f64 {
        self.params.log_evidence
    }

    fn sample_posterior(&self, rng: &mut SimRng) -> (f64, f64) {
        let p = &self.params;
        let k = if rng.random::<f64>() < p.weights[0] {
            0
        } else {
            1
        };
        let x = Normal::new(p.means[k], p.stds[k])
            .expect("validated")
            .sample(rng);
        (x, self.log_density(x))
    }
}
