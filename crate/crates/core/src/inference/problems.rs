//! Concrete SMC problems: HMM particle filters, single-step importance
//! sampling with resampling, and fully tabulated problems on finite spaces.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use nalgebra::DVector;

use super::ais::AisSampler;
use super::smc::SmcProblem;
use crate::error::{Error, Result};
use crate::kernels::{
    AnnealingSchedule, Categorical, FiniteKernel, FnInit, GaussianRandomWalk, InitKernel,
    MarkovKernel, MetropolisHastings, Target,
};
use crate::math::{log_sum_exp, normalize_log_weights, sample_categorical};
use crate::model::{ConjugateLinReg, DiscreteHmm};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HmmProposal {
    /// Extend each particle by a draw from the transition matrix.
    Prior,
    /// Extend by the state's conditional given the next observation.
    Optimal,
}

impl std::fmt::Display for HmmProposal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HmmProposal::Prior => f.write_str("prior"),
            HmmProposal::Optimal => f.write_str("optimal"),
        }
    }
}

/// Particle filter for an HMM. The state at step `t` is the prefix
/// `x_0 .. x_t`; the backward kernel truncates the last state.
#[derive(Debug, Clone)]
pub struct HmmSmc {
    model: Arc<DiscreteHmm>,
    proposal: HmmProposal,
}

impl HmmSmc {
    pub fn new(model: Arc<DiscreteHmm>, proposal: HmmProposal) -> Self {
        Self { model, proposal }
    }

    pub fn model(&self) -> &Arc<DiscreteHmm> {
        &self.model
    }

    /// Unnormalized log weights over the next state given the previous one.
    fn step_log_weights(&self, t: usize, prev: Option<usize>) -> Vec<f64> {
        let m = &self.model;
        (0..m.n_states())
            .map(|s| {
                let base = match prev {
                    None => m.log_initial(s),
                    Some(r) => m.log_transition(r, s),
                };
                match self.proposal {
                    HmmProposal::Prior => base,
                    HmmProposal::Optimal => base + m.log_emission(s, t),
                }
            })
            .collect()
    }

    fn log_step_prob(&self, t: usize, prev: Option<usize>, s: usize) -> f64 {
        let w = self.step_log_weights(t, prev);
        let z = log_sum_exp(&w);
        if z == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            w[s] - z
        }
    }

    fn draw(&self, t: usize, prev: Option<usize>, rng: &mut SimRng) -> Result<usize> {
        let w = self.step_log_weights(t, prev);
        if w.iter().all(|&v| v == f64::NEG_INFINITY) {
            return Err(Error::DegenerateWeights { step: t });
        }
        Ok(sample_categorical(&normalize_log_weights(&w), rng))
    }

    /// Closed form of the weight for a prefix ending in `s` at step `t`.
    fn closed_form_weight(&self, t: usize, prev: Option<usize>, s: usize) -> f64 {
        match self.proposal {
            HmmProposal::Prior => self.model.log_emission(s, t),
            HmmProposal::Optimal => log_sum_exp(&self.step_log_weights(t, prev)),
        }
    }

    fn is_prefix(prev: &[usize], next: &[usize]) -> bool {
        next.len() == prev.len() + 1 && next[..prev.len()] == *prev
    }
}

impl SmcProblem for HmmSmc {
    type State = Vec<usize>;

    fn n_steps(&self) -> usize {
        self.model.n_steps()
    }

    fn log_target(&self, t: usize, x: &Vec<usize>) -> f64 {
        if x.len() != t + 1 {
            return f64::NEG_INFINITY;
        }
        self.model.log_joint_prefix(x).unwrap_or(f64::NEG_INFINITY)
    }

    fn sample_init(&self, rng: &mut SimRng) -> Result<Vec<usize>> {
        Ok(vec![self.draw(0, None, rng)?])
    }

    fn log_init(&self, x: &Vec<usize>) -> Option<f64> {
        Some(match x.as_slice() {
            [s] if *s < self.model.n_states() => self.log_step_prob(0, None, *s),
            _ => f64::NEG_INFINITY,
        })
    }

    fn sample_forward(&self, t: usize, prev: &Vec<usize>, rng: &mut SimRng) -> Result<Vec<usize>> {
        let s = self.draw(t, prev.last().copied(), rng)?;
        let mut next = Vec::with_capacity(prev.len() + 1);
        next.extend_from_slice(prev);
        next.push(s);
        Ok(next)
    }

    fn log_forward(&self, t: usize, next: &Vec<usize>, prev: &Vec<usize>) -> Option<f64> {
        if !Self::is_prefix(prev, next) || next.len() != t + 1 {
            return Some(f64::NEG_INFINITY);
        }
        let s = *next.last()?;
        if s >= self.model.n_states() {
            return Some(f64::NEG_INFINITY);
        }
        Some(self.log_step_prob(t, prev.last().copied(), s))
    }

    fn sample_backward(
        &self,
        _t: usize,
        next: &Vec<usize>,
        _rng: &mut SimRng,
    ) -> Result<Vec<usize>> {
        Ok(next[..next.len() - 1].to_vec())
    }

    fn log_backward(&self, _t: usize, prev: &Vec<usize>, next: &Vec<usize>) -> Option<f64> {
        Some(if Self::is_prefix(prev, next) {
            0.0
        } else {
            f64::NEG_INFINITY
        })
    }

    fn log_initial_weight(&self, x: &Vec<usize>) -> Result<f64> {
        let s = *x
            .first()
            .ok_or_else(|| Error::invalid("empty HMM prefix"))?;
        Ok(self.closed_form_weight(0, None, s))
    }

    // prefix extension makes the generic ratio collapse to a one-step quantity
    fn log_incremental_weight(
        &self,
        t: usize,
        prev: &Vec<usize>,
        next: &Vec<usize>,
    ) -> Result<f64> {
        let s = *next
            .last()
            .ok_or_else(|| Error::invalid("empty HMM prefix"))?;
        Ok(self.closed_form_weight(t, prev.last().copied(), s))
    }
}

/// Importance sampling with resampling as a one-step SMC problem.
pub struct SirProblem<X> {
    proposal: Arc<dyn InitKernel<X>>,
    target: Target<X>,
}

impl<X> Clone for SirProblem<X> {
    fn clone(&self) -> Self {
        Self {
            proposal: Arc::clone(&self.proposal),
            target: self.target.clone(),
        }
    }
}

impl<X> SirProblem<X> {
    pub fn new(proposal: Arc<dyn InitKernel<X>>, target: Target<X>) -> Self {
        Self { proposal, target }
    }
}

impl<X: Clone + Send + Sync + std::fmt::Debug + 'static> SmcProblem for SirProblem<X> {
    type State = X;

    fn n_steps(&self) -> usize {
        1
    }

    fn log_target(&self, _t: usize, x: &X) -> f64 {
        self.target.log_density(x)
    }

    fn sample_init(&self, rng: &mut SimRng) -> Result<X> {
        Ok(self.proposal.sample(rng))
    }

    fn log_init(&self, x: &X) -> Option<f64> {
        Some(self.proposal.log_density(x))
    }

    fn sample_forward(&self, _t: usize, _prev: &X, _rng: &mut SimRng) -> Result<X> {
        Err(Error::invalid("SIR has a single step"))
    }

    fn log_forward(&self, _t: usize, _next: &X, _prev: &X) -> Option<f64> {
        None
    }

    fn sample_backward(&self, _t: usize, _next: &X, _rng: &mut SimRng) -> Result<X> {
        Err(Error::invalid("SIR has a single step"))
    }

    fn log_backward(&self, _t: usize, _prev: &X, _next: &X) -> Option<f64> {
        None
    }
}

/// SMC problem on the finite space `0..n` with every kernel tabulated.
#[derive(Debug, Clone)]
pub struct FiniteSmcProblem {
    init: Categorical,
    /// `log p~_t(x)` for each step.
    log_targets: Vec<Vec<f64>>,
    /// `forward[t - 1]` is `k_t`, rows indexed by the previous state.
    forward: Vec<FiniteKernel>,
    /// `backward[t - 1]` is `l_t`, rows indexed by the later state.
    backward: Vec<FiniteKernel>,
}

impl FiniteSmcProblem {
    pub fn new(
        init: Categorical,
        log_targets: Vec<Vec<f64>>,
        forward: Vec<FiniteKernel>,
        backward: Vec<FiniteKernel>,
    ) -> Result<Self> {
        let n = init.probs().len();
        if log_targets.is_empty() {
            return Err(Error::invalid(
                "finite SMC problem needs at least one target",
            ));
        }
        if log_targets.iter().any(|t| t.len() != n) {
            return Err(Error::invalid("every target must cover the whole space"));
        }
        let steps = log_targets.len();
        if forward.len() + 1 != steps || backward.len() + 1 != steps {
            return Err(Error::invalid(
                "need one forward and one backward kernel per step after the first",
            ));
        }
        if forward.iter().chain(&backward).any(|k| k.size() != n) {
            return Err(Error::invalid("kernel size does not match the space"));
        }
        Ok(Self {
            init,
            log_targets,
            forward,
            backward,
        })
    }

    pub fn space_size(&self) -> usize {
        self.init.probs().len()
    }

    /// Final target as a table, i.e. the model joint.
    pub fn final_log_target(&self) -> &[f64] {
        self.log_targets.last().expect("nonempty")
    }
}

impl SmcProblem for FiniteSmcProblem {
    type State = usize;

    fn n_steps(&self) -> usize {
        self.log_targets.len()
    }

    fn log_target(&self, t: usize, x: &usize) -> f64 {
        self.log_targets[t]
            .get(*x)
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }

    fn sample_init(&self, rng: &mut SimRng) -> Result<usize> {
        Ok(self.init.sample(rng))
    }

    fn log_init(&self, x: &usize) -> Option<f64> {
        Some(self.init.log_density(x))
    }

    fn sample_forward(&self, t: usize, prev: &usize, rng: &mut SimRng) -> Result<usize> {
        self.forward[t - 1].sample(prev, rng)
    }

    fn log_forward(&self, t: usize, next: &usize, prev: &usize) -> Option<f64> {
        self.forward[t - 1].log_density(next, prev)
    }

    fn sample_backward(&self, t: usize, next: &usize, rng: &mut SimRng) -> Result<usize> {
        self.backward[t - 1].sample(next, rng)
    }

    fn log_backward(&self, t: usize, prev: &usize, next: &usize) -> Option<f64> {
        self.backward[t - 1].log_density(prev, next)
    }
}

/// The small instance used throughout the tests and the property suite:
/// two states, two steps, all kernels with full support.
pub fn two_point_two_step() -> FiniteSmcProblem {
    FiniteSmcProblem::new(
        Categorical::new(vec![0.7, 0.3]).expect("valid"),
        vec![
            vec![0.5f64.ln(), 0.5f64.ln()],
            vec![0.2f64.ln(), 0.8f64.ln()],
        ],
        vec![FiniteKernel::new(vec![vec![0.6, 0.4], vec![0.3, 0.7]]).expect("valid")],
        vec![FiniteKernel::new(vec![vec![0.5, 0.5], vec![0.2, 0.8]]).expect("valid")],
    )
    .expect("valid")
}

/// Data-tempered sampler for linear regression: step `t` targets the prior
/// times the likelihood of the first `round(t n / B)` rows, `t = 0 ..= B`.
/// Particles start at the prior and move by `mh_steps` random-walk
/// Metropolis-Hastings steps invariant for the previous target.
pub fn linreg_data_tempering(
    model: Arc<ConjugateLinReg>,
    n_batches: usize,
    step_size: f64,
    mh_steps: usize,
) -> Result<AisSampler<DVector<f64>>> {
    if n_batches == 0 {
        return Err(Error::invalid("data tempering needs at least one batch"));
    }
    let n = model.n_data();
    let cut = |t: usize| (t * n + n_batches / 2) / n_batches;
    let targets: Vec<Target<DVector<f64>>> = (0..=n_batches)
        .map(|t| {
            let m = Arc::clone(&model);
            let rows = cut(t);
            Target::new(move |x: &DVector<f64>| {
                if x.len() != m.dim() {
                    return f64::NEG_INFINITY;
                }
                m.log_prior(x) + m.log_likelihood_rows(x, 0..rows)
            })
        })
        .collect();
    let walk: Arc<dyn MarkovKernel<DVector<f64>>> = Arc::new(GaussianRandomWalk::new(step_size)?);
    let kernels = targets[..n_batches]
        .iter()
        .map(|t| {
            MetropolisHastings::new(t.clone(), Arc::clone(&walk), mh_steps)
                .map(|k| Arc::new(k) as Arc<dyn MarkovKernel<DVector<f64>>>)
        })
        .collect::<Result<Vec<_>>>()?;
    let (ms, md) = (Arc::clone(&model), Arc::clone(&model));
    let init: Arc<dyn InitKernel<DVector<f64>>> = Arc::new(FnInit::new(
        move |rng| ms.sample_prior(rng),
        move |x| md.log_prior(x),
    ));
    AisSampler::new(init, AnnealingSchedule::from_targets(targets)?, kernels)
}
