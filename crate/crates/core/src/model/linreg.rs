use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{ExactPosterior, Model};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Raw linear-regression parameters as they appear in config files.
/// Matrices are row-major lists of rows.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LinRegParams {
    pub prior_mean: Vec<f64>,
    pub prior_precision: Vec<Vec<f64>>,
    pub noise_variance: f64,
    pub design: Vec<Vec<f64>>,
    pub response: Vec<f64>,
}

/// Gaussian posterior of the regression weights.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub log_evidence: f64,
}

/// Bayesian linear regression `y ~ N(X w, s2 I)`, `w ~ N(m0, L0^-1)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "LinRegParams", into = "LinRegParams")]
pub struct ConjugateLinReg {
    params: LinRegParams,
    prior_mean: DVector<f64>,
    prior_precision: DMatrix<f64>,
    prior_log_det: f64,
    design: DMatrix<f64>,
    response: DVector<f64>,
    posterior: GaussianPosterior,
    posterior_precision: DMatrix<f64>,
    posterior_chol: Cholesky<f64, Dyn>,
}

fn to_matrix(name: &str, rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::invalid(format!(
                "{name}[{i}] has length {}, expected {cols}",
                r.len()
            )));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "{name}[{i}] has a non-finite entry"
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn log_det_from_chol(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}

impl TryFrom<LinRegParams> for ConjugateLinReg {
    type Error = Error;

    fn try_from(params: LinRegParams) -> Result<Self> {
        let d = params.prior_mean.len();
        if d == 0 {
            return Err(Error::invalid("regression needs at least one weight"));
        }
        if params.prior_mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("prior_mean has a non-finite entry"));
        }
        if !(params.noise_variance.is_finite() && params.noise_variance > 0.0) {
            return Err(Error::invalid("noise_variance must be positive"));
        }
        if params.prior_precision.len() != d {
            return Err(Error::invalid("prior_precision must be d x d"));
        }
        let prior_precision = to_matrix("prior_precision", &params.prior_precision, d)?;
        if (&prior_precision - prior_precision.transpose()).abs().max() > 1e-12 {
            return Err(Error::invalid("prior_precision is not symmetric"));
        }
        let design = to_matrix("design", &params.design, d)?;
        if params.response.len() != design.nrows() {
            return Err(Error::invalid(format!(
                "response has {} entries, design has {} rows",
                params.response.len(),
                design.nrows()
            )));
        }
        if params.response.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("response has a non-finite entry"));
        }
        let prior_mean = DVector::from_vec(params.prior_mean.clone());
        let response = DVector::from_vec(params.response.clone());
        let prior_chol = Cholesky::new(prior_precision.clone()).ok_or_else(|| {
            Error::NumericalFailure("prior_precision is not positive definite".into())
        })?;
        let prior_log_det = log_det_from_chol(&prior_chol);

        let s2 = params.noise_variance;
        let posterior_precision = {
            let p = &prior_precision + design.transpose() * &design / s2;
            (&p + p.transpose()) * 0.5
        };
        let posterior_chol = Cholesky::new(posterior_precision.clone()).ok_or_else(|| {
            Error::NumericalFailure("posterior precision is not positive definite".into())
        })?;
        let n = design.nrows();
        let posterior = if n == 0 {
            let cov = prior_chol.inverse();
            GaussianPosterior {
                mean: prior_mean.clone(),
                covariance: (&cov + cov.transpose()) * 0.5,
                log_evidence: 0.0,
            }
        } else {
            let rhs = &prior_precision * &prior_mean + design.transpose() * &response / s2;
            let mean = posterior_chol.solve(&rhs);
            let cov = posterior_chol.inverse();
            let quad = response.dot(&response) / s2
                + prior_mean.dot(&(&prior_precision * &prior_mean))
                - mean.dot(&(&posterior_precision * &mean));
            let log_evidence = -0.5 * n as f64 * (2.0 * PI * s2).ln() + 0.5 * prior_log_det
                - 0.5 * log_det_from_chol(&posterior_chol)
                - 0.5 * quad;
            GaussianPosterior {
                mean,
                covariance: (&cov + cov.transpose()) * 0.5,
                log_evidence,
            }
        };
        Ok(Self {
            params,
            prior_mean,
            prior_precision,
            prior_log_det,
            design,
            response,
            posterior,
            posterior_precision,
            posterior_chol,
        })
    }
}

impl From<ConjugateLinReg> for LinRegParams {
    fn from(m: ConjugateLinReg) -> Self {
        m.params
    }
}

fn gaussian_log_density_precision(
    x: &DVector<f64>,
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
    log_det_precision: f64,
) -> f64 {
    let diff = x - mean;
    let d = x.len() as f64;
    0.5 * log_det_precision - 0.5 * d * (2.0 * PI).ln() - 0.5 * diff.dot(&(precision * &diff))
}

impl ConjugateLinReg {
    pub fn new(params: LinRegParams) -> Result<Self> {
        Self::try_from(params)
    }

    pub fn params(&self) -> &LinRegParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn n_data(&self) -> usize {
        self.design.nrows()
    }

    pub fn noise_variance(&self) -> f64 {
        self.params.noise_variance
    }

    /// Posterior mean, covariance and `log p(y)`.
    pub fn posterior(&self) -> &GaussianPosterior {
        &self.posterior
    }

    pub fn posterior_precision(&self) -> &DMatrix<f64> {
        &self.posterior_precision
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "weight vector has length {}, model has {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn log_prior(&self, x: &DVector<f64>) -> f64 {
        gaussian_log_density_precision(
            x,
            &self.prior_mean,
            &self.prior_precision,
            self.prior_log_det,
        )
    }

    /// Log-likelihood of rows `rows` of the data.
    pub fn log_likelihood_rows(&self, x: &DVector<f64>, rows: std::ops::Range<usize>) -> f64 {
        let s2 = self.params.noise_variance;
        let norm = -0.5 * (2.0 * PI * s2).ln();
        rows.map(|i| {
            let r = self.response[i] - self.design.row(i).transpose().dot(x);
            norm - 0.5 * r * r / s2
        })
        .sum()
    }

    /// Draw from the prior.
    pub fn sample_prior(&self, rng: &mut SimRng) -> DVector<f64> {
        let chol = Cholesky::new(self.prior_precision.clone()).expect("validated at construction");
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        let shift = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("nonsingular factor");
        &self.prior_mean + shift
    }
}

impl Model for ConjugateLinReg {
    type Latent = DVector<f64>;

    fn log_joint(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.log_prior(x) + self.log_likelihood_rows(x, 0..self.n_data()))
    }

    fn exact_log_marginal(&self) -> Option<f64> {
        Some(self.posterior.log_evidence)
    }
}

impl ExactPosterior for ConjugateLinReg {
    fn log_marginal(&self) -> f64 {
        self.posterior.log_evidence
    }

    fn sample_posterior(&self, rng: &mut SimRng) -> (DVector<f64>, f64) {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        // precision = L L^T, so L^-T z has covariance precision^-1
        let shift = self
            .posterior_chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("nonsingular factor");
        let x = &self.posterior.mean + shift;
        let lp = self.log_posterior(&x).expect("dimension matches");
        (x, lp)
    }

    fn log_posterior(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(gaussian_log_density_precision(
            x,
            &self.posterior.mean,
            &self.posterior_precision,
            log_det_from_chol(&self.posterior_chol),
        ))
    }
}
