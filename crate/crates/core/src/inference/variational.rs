use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernels::InitKernel;
use crate::rng::SimRng;

/// Fully factorized Gaussian `q(x) = prod_i N(x_i; mean_i, std_i^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldGaussian {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl MeanFieldGaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(Error::invalid(
                "mean and std must have the same nonzero length",
            ));
        }
        if std.iter().any(|s| !(s.is_finite() && *s > 0.0)) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid(
                "mean-field parameters must be finite with positive std",
            ));
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.dim(),
            self.std.iter().map(|s| s * s),
        ))
    }
}

impl InitKernel<DVector<f64>> for MeanFieldGaussian {
    fn sample(&self, rng: &mut SimRng) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            let z: f64 = StandardNormal.sample(rng);
            self.mean[i] + self.std[i] * z
        })
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        if x.len() != self.dim() {
            return f64::NEG_INFINITY;
        }
        (0..self.dim())
            .map(|i| {
                let z = (x[i] - self.mean[i]) / self.std[i];
                -0.5 * z * z - self.std[i].ln() - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }
}

/// The diagonal Gaussian minimizing `KL(q || p)` for a Gaussian `p`: same
/// mean, and variances equal to the reciprocal diagonal of `p`'s precision.
pub fn fit_meanfield_gaussian(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
) -> Result<MeanFieldGaussian> {
    let d = mean.len();
    if covariance.nrows() != d || covariance.ncols() != d {
        return Err(Error::invalid("covariance shape does not match the mean"));
    }
    let precision = Cholesky::new(covariance.clone())
        .ok_or_else(|| Error::NumericalFailure("covariance is not positive definite".into()))?
        .inverse();
    let std = (0..d).map(|i| (1.0 / precision[(i, i)]).sqrt()).collect();
    MeanFieldGaussian::new(mean.iter().copied().collect(), std)
}
