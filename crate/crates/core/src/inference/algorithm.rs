//! Inference algorithms paired with their meta-inference samplers.
//!
//! An algorithm produces an output `x` together with `log xi(u, x)`, and given
//! any `x` it can sample a trace `u ~ r(u; x)` and report `log xi(u, x)` for it.

use std::fmt::Debug;
use std::sync::Arc;

use super::ais::AisSampler;
use super::sir::{sir_meta, sir_run};
use super::smc::{conditional_smc, smc_log_xi, smc_run, SmcProblem, SmcSpec, Trace};
use crate::error::{Error, Result};
use crate::kernels::{AnnealingSchedule, InitKernel, MarkovKernel, Target};
use crate::model::{ExactPosterior, Model};
use crate::rng::SimRng;

/// Output of a forward run.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation<X> {
    pub output: X,
    pub log_xi: f64,
    /// `log p^(y)` for algorithms that estimate the evidence.
    pub log_ml: Option<f64>,
    /// `None` for empty-trace algorithms.
    pub trace: Option<Trace<X>>,
}

/// Output of a meta-inference run at a given `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaSimulation<X> {
    pub log_xi: f64,
    pub log_ml: Option<f64>,
    pub trace: Option<Trace<X>>,
}

pub trait InferenceAlgorithm<X>: Send + Sync {
    fn simulate(&self, rng: &mut SimRng) -> Result<Simulation<X>>;

    fn meta_simulate(&self, x: &X, rng: &mut SimRng) -> Result<MetaSimulation<X>>;

    /// The constant `log Z` in `xi = Z q(u, x) / r(u; x)`.
    fn log_z(&self) -> f64;
}

impl<X, A: InferenceAlgorithm<X> + ?Sized> InferenceAlgorithm<X> for Arc<A> {
    fn simulate(&self, rng: &mut SimRng) -> Result<Simulation<X>> {
        (**self).simulate(rng)
    }

    fn meta_simulate(&self, x: &X, rng: &mut SimRng) -> Result<MetaSimulation<X>> {
        (**self).meta_simulate(x, rng)
    }

    fn log_z(&self) -> f64 {
        (**self).log_z()
    }
}

/// SMC with conditional SMC as meta-inference; `Z = 1`.
pub struct SmcAlgorithm<P, M> {
    spec: SmcSpec<P>,
    model: Arc<M>,
}

impl<P, M> Clone for SmcAlgorithm<P, M> {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            model: Arc::clone(&self.model),
        }
    }
}

impl<P, M> SmcAlgorithm<P, M>
where
    P: SmcProblem,
    M: Model<Latent = P::State>,
{
    /// The final target of `spec` must be the joint of `model`.
    pub fn new(spec: SmcSpec<P>, model: Arc<M>) -> Self {
        Self { spec, model }
    }

    pub fn spec(&self) -> &SmcSpec<P> {
        &self.spec
    }

    pub fn model(&self) -> &Arc<M> {
        &self.model
    }
}

pub fn make_smc_algorithm<P, M>(spec: SmcSpec<P>, model: Arc<M>) -> SmcAlgorithm<P, M>
where
    P: SmcProblem,
    M: Model<Latent = P::State>,
{
    SmcAlgorithm::new(spec, model)
}

impl<P, M> InferenceAlgorithm<P::State> for SmcAlgorithm<P, M>
where
    P: SmcProblem,
    M: Model<Latent = P::State>,
{
    fn simulate(&self, rng: &mut SimRng) -> Result<Simulation<P::State>> {
        let run = smc_run(&self.spec, rng)?;
        let log_xi = smc_log_xi(self.model.as_ref(), &run)?;
        Ok(Simulation {
            output: run.output,
            log_xi,
            log_ml: Some(run.log_ml),
            trace: Some(run.trace),
        })
    }

    fn meta_simulate(&self, x: &P::State, rng: &mut SimRng) -> Result<MetaSimulation<P::State>> {
        let run = conditional_smc(&self.spec, x, rng)?;
        let log_xi = smc_log_xi(self.model.as_ref(), &run)?;
        Ok(MetaSimulation {
            log_xi,
            log_ml: Some(run.log_ml),
            trace: Some(run.trace),
        })
    }

    fn log_z(&self) -> f64 {
        0.0
    }
}

/// AIS with the reversed chain as meta-inference; `Z = 1`.
pub struct AisAlgorithm<X, M> {
    sampler: AisSampler<X>,
    model: Arc<M>,
}

impl<X, M> Clone for AisAlgorithm<X, M> {
    fn clone(&self) -> Self {
        Self {
            sampler: self.sampler.clone(),
            model: Arc::clone(&self.model),
        }
    }
}

impl<X, M> AisAlgorithm<X, M>
where
    X: Clone + Send + Sync + Debug + 'static,
    M: Model<Latent = X>,
{
    pub fn new(sampler: AisSampler<X>, model: Arc<M>) -> Self {
        Self { sampler, model }
    }

    pub fn sampler(&self) -> &AisSampler<X> {
        &self.sampler
    }

    pub fn model(&self) -> &Arc<M> {
        &self.model
    }
}

impl<X, M> InferenceAlgorithm<X> for AisAlgorithm<X, M>
where
    X: Clone + Send + Sync + Debug + 'static,
    M: Model<Latent = X>,
{
    fn simulate(&self, rng: &mut SimRng) -> Result<Simulation<X>> {
        let run = self.sampler.forward(rng)?;
        let output = run.output().clone();
        let log_xi = self.model.log_joint(&output)? - run.log_ml;
        let log_ml = run.log_ml;
        let weights = self.sampler.chain_log_weights(&run.states);
        Ok(Simulation {
            output,
            log_xi,
            log_ml: Some(log_ml),
            trace: Some(run.into_trace(weights)),
        })
    }

    fn meta_simulate(&self, x: &X, rng: &mut SimRng) -> Result<MetaSimulation<X>> {
        let run = self.sampler.reverse(x, rng)?;
        let log_xi = self.model.log_joint(x)? - run.log_ml;
        let log_ml = run.log_ml;
        let weights = self.sampler.chain_log_weights(&run.states);
        Ok(MetaSimulation {
            log_xi,
            log_ml: Some(log_ml),
            trace: Some(run.into_trace(weights)),
        })
    }

    fn log_z(&self) -> f64 {
        0.0
    }
}

/// Markov chain output after `burn_in` steps of `kernel` from `init`, cast as
/// AIS whose targets all equal the model joint.
pub fn make_mh_algorithm<X, M>(
    init: Arc<dyn InitKernel<X>>,
    kernel: Arc<dyn MarkovKernel<X>>,
    burn_in: usize,
    model: Arc<M>,
) -> Result<AisAlgorithm<X, M>>
where
    X: Clone + Send + Sync + Debug + 'static,
    M: Model<Latent = X> + 'static,
{
    if !kernel.satisfies_detailed_balance() {
        return Err(Error::invalid("MCMC kernel must satisfy detailed balance"));
    }
    let joint = Target::from_model(Arc::clone(&model));
    let schedule = AnnealingSchedule::constant(&joint, burn_in + 1)?;
    let sampler = AisSampler::new(init, schedule, vec![kernel; burn_in])?;
    Ok(AisAlgorithm::new(sampler, model))
}

type Sampler<X> = Arc<dyn Fn(&mut SimRng) -> X + Send + Sync>;
type Density<X> = Arc<dyn Fn(&X) -> f64 + Send + Sync>;

/// Algorithm with an evaluable output density and the empty trace;
/// `log xi(x) = log Z + log q(x)`.
pub struct ExactDensityAlgorithm<X> {
    sampler: Sampler<X>,
    log_density: Density<X>,
    log_z: f64,
}

impl<X> Clone for ExactDensityAlgorithm<X> {
    fn clone(&self) -> Self {
        Self {
            sampler: Arc::clone(&self.sampler),
            log_density: Arc::clone(&self.log_density),
            log_z: self.log_z,
        }
    }
}

impl<X: 'static> ExactDensityAlgorithm<X> {
    pub fn new(
        sampler: impl Fn(&mut SimRng) -> X + Send + Sync + 'static,
        log_density: impl Fn(&X) -> f64 + Send + Sync + 'static,
        log_z: f64,
    ) -> Self {
        Self {
            sampler: Arc::new(sampler),
            log_density: Arc::new(log_density),
            log_z,
        }
    }

    /// A normalized distribution used directly, e.g. a variational approximation.
    pub fn from_init(dist: Arc<dyn InitKernel<X>>, log_z: f64) -> Self {
        let d = Arc::clone(&dist);
        Self::new(
            move |rng| dist.sample(rng),
            move |x| d.log_density(x),
            log_z,
        )
    }

    pub fn log_density(&self, x: &X) -> f64 {
        (self.log_density)(x)
    }

    fn log_xi(&self, x: &X) -> f64 {
        self.log_z + (self.log_density)(x)
    }
}

pub fn make_exact_density_algorithm<X: 'static>(
    sampler: impl Fn(&mut SimRng) -> X + Send + Sync + 'static,
    log_density: impl Fn(&X) -> f64 + Send + Sync + 'static,
    log_z: f64,
) -> ExactDensityAlgorithm<X> {
    ExactDensityAlgorithm::new(sampler, log_density, log_z)
}

/// Exact posterior sampler with `Z = p(y)`, so `xi = p(x, y)`.
pub fn exact_posterior_algorithm<M>(model: Arc<M>) -> ExactDensityAlgorithm<M::Latent>
where
    M: ExactPosterior + 'static,
    M::Latent: 'static,
{
    let log_z = model.log_marginal();
    let m = Arc::clone(&model);
    ExactDensityAlgorithm::new(
        move |rng| model.sample_posterior(rng).0,
        move |x| m.log_posterior(x).unwrap_or(f64::NEG_INFINITY),
        log_z,
    )
}

impl<X: Clone + Send + Sync + 'static> InferenceAlgorithm<X> for ExactDensityAlgorithm<X> {
    fn simulate(&self, rng: &mut SimRng) -> Result<Simulation<X>> {
        let output = (self.sampler)(rng);
        let log_xi = self.log_xi(&output);
        Ok(Simulation {
            output,
            log_xi,
            log_ml: None,
            trace: None,
        })
    }

    fn meta_simulate(&self, x: &X, _rng: &mut SimRng) -> Result<MetaSimulation<X>> {
        Ok(MetaSimulation {
            log_xi: self.log_xi(x),
            log_ml: None,
            trace: None,
        })
    }

    fn log_z(&self) -> f64 {
        self.log_z
    }
}

/// Importance sampling with resampling written directly rather than as a
/// one-step SMC; meta-inference plants `x` at a uniform index.
pub struct SirAlgorithm<X, M> {
    proposal: Arc<dyn InitKernel<X>>,
    target: Target<X>,
    n_particles: usize,
    model: Arc<M>,
}

impl<X, M> Clone for SirAlgorithm<X, M> {
    fn clone(&self) -> Self {
        Self {
            proposal: Arc::clone(&self.proposal),
            target: self.target.clone(),
            n_particles: self.n_particles,
            model: Arc::clone(&self.model),
        }
    }
}

impl<X: 'static, M: Model<Latent = X> + 'static> SirAlgorithm<X, M> {
    pub fn new(
        proposal: Arc<dyn InitKernel<X>>,
        model: Arc<M>,
        n_particles: usize,
    ) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::invalid("SIR needs at least one particle"));
        }
        Ok(Self {
            proposal,
            target: Target::from_model(Arc::clone(&model)),
            n_particles,
            model,
        })
    }
}

impl<X, M> InferenceAlgorithm<X> for SirAlgorithm<X, M>
where
    X: Clone + Send + Sync + 'static,
    M: Model<Latent = X>,
{
    fn simulate(&self, rng: &mut SimRng) -> Result<Simulation<X>> {
        let run = sir_run(self.proposal.as_ref(), &self.target, self.n_particles, rng)?;
        let output = run.output().clone();
        let log_xi = self.model.log_joint(&output)? - run.log_ml;
        Ok(Simulation {
            output,
            log_xi,
            log_ml: Some(run.log_ml),
            trace: None,
        })
    }

    fn meta_simulate(&self, x: &X, rng: &mut SimRng) -> Result<MetaSimulation<X>> {
        let run = sir_meta(
            self.proposal.as_ref(),
            &self.target,
            self.n_particles,
            x,
            rng,
        )?;
        let log_xi = self.model.log_joint(x)? - run.log_ml;
        Ok(MetaSimulation {
            log_xi,
            log_ml: Some(run.log_ml),
            trace: None,
        })
    }

    fn log_z(&self) -> f64 {
        0.0
    }
}
