//! Direct importance sampling with resampling: draw `P` particles from a
//! proposal, weight them, and return one by weight.

use crate::error::{Error, Result};
use crate::kernels::{InitKernel, Target};
use crate::math::{log_mean_exp, sample_log_categorical, sample_uniform_index};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq)]
pub struct SirRun<X> {
    pub particles: Vec<X>,
    pub log_weights: Vec<f64>,
    pub index: usize,
    pub log_ml: f64,
}

impl<X> SirRun<X> {
    pub fn output(&self) -> &X {
        &self.particles[self.index]
    }
}

fn weigh<X>(proposal: &dyn InitKernel<X>, target: &Target<X>, particles: &[X]) -> Result<Vec<f64>> {
    let w: Vec<f64> = particles
        .iter()
        .map(|x| target.log_density(x) - proposal.log_density(x))
        .collect();
    if w.iter().any(|v| v.is_nan()) || w.iter().all(|&v| v == f64::NEG_INFINITY) {
        return Err(Error::DegenerateWeights { step: 0 });
    }
    Ok(w)
}

pub fn sir_run<X: 'static>(
    proposal: &dyn InitKernel<X>,
    target: &Target<X>,
    n_particles: usize,
    rng: &mut SimRng,
) -> Result<SirRun<X>> {
    if n_particles == 0 {
        return Err(Error::invalid("SIR needs at least one particle"));
    }
    let particles: Vec<X> = (0..n_particles).map(|_| proposal.sample(rng)).collect();
    let log_weights = weigh(proposal, target, &particles)?;
    let index =
        sample_log_categorical(&log_weights, rng).ok_or(Error::DegenerateWeights { step: 0 })?;
    let log_ml = log_mean_exp(&log_weights)?;
    Ok(SirRun {
        particles,
        log_weights,
        index,
        log_ml,
    })
}

/// Plant `x` at a uniformly chosen index and draw the other particles fresh.
pub fn sir_meta<X: Clone + 'static>(
    proposal: &dyn InitKernel<X>,
    target: &Target<X>,
    n_particles: usize,
    x: &X,
    rng: &mut SimRng,
) -> Result<SirRun<X>> {
    if n_particles == 0 {
        return Err(Error::invalid("SIR needs at least one particle"));
    }
    let index = sample_uniform_index(n_particles, rng);
    let particles: Vec<X> = (0..n_particles)
        .map(|i| {
            if i == index {
                x.clone()
            } else {
                proposal.sample(rng)
            }
        })
        .collect();
    let log_weights = weigh(proposal, target, &particles)?;
    let log_ml = log_mean_exp(&log_weights)?;
    Ok(SirRun {
        particles,
        log_weights,
        index,
        log_ml,
    })
}
