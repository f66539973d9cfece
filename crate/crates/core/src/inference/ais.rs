//! Annealed importance sampling and its reverse chain.

use std::fmt::Debug;
use std::sync::Arc;

use super::smc::{SmcProblem, Trace};
use crate::error::{Error, Result};
use crate::kernels::{AnnealingSchedule, InitKernel, MarkovKernel};
use crate::rng::SimRng;

/// AIS chain: initialization kernel, schedule of targets, and one transition
/// kernel per step after the first. `kernels[t - 1]` moves from step `t - 1`
/// to step `t` and must leave `p~_{t-1}` invariant with detailed balance.
///
/// As an [`SmcProblem`] it uses `l_t = k_t`, so any particle count works;
/// with one particle it is plain AIS.
pub struct AisSampler<X> {
    init: Arc<dyn InitKernel<X>>,
    schedule: AnnealingSchedule<X>,
    kernels: Vec<Arc<dyn MarkovKernel<X>>>,
}

impl<X> Clone for AisSampler<X> {
    fn clone(&self) -> Self {
        Self {
            init: Arc::clone(&self.init),
            schedule: self.schedule.clone(),
            kernels: self.kernels.clone(),
        }
    }
}

/// States visited by one AIS chain and its evidence estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct AisRun<X> {
    pub states: Vec<X>,
    pub log_ml: f64,
}

impl<X> AisRun<X> {
    pub fn output(&self) -> &X {
        self.states.last().expect("at least one state")
    }

    /// The run as a single-particle SMC trace.
    pub fn into_trace(self, log_weights: Vec<f64>) -> Trace<X> {
        let steps = self.states.len();
        Trace {
            particles: self.states.into_iter().map(|x| vec![x]).collect(),
            ancestors: vec![vec![0]; steps - 1],
            output_index: 0,
            log_weights: log_weights.into_iter().map(|w| vec![w]).collect(),
        }
    }
}

impl<X: Clone + Send + Sync + Debug + 'static> AisSampler<X> {
    pub fn new(
        init: Arc<dyn InitKernel<X>>,
        schedule: AnnealingSchedule<X>,
        kernels: Vec<Arc<dyn MarkovKernel<X>>>,
    ) -> Result<Self> {
        if kernels.len() + 1 != schedule.n_steps() {
            return Err(Error::invalid(format!(
                "{} kernels for a schedule of {} steps; need one per step after the first",
                kernels.len(),
                schedule.n_steps()
            )));
        }
        if let Some(t) = kernels.iter().position(|k| !k.satisfies_detailed_balance()) {
            return Err(Error::invalid(format!(
                "kernel {t} is not flagged as satisfying detailed balance"
            )));
        }
        Ok(Self {
            init,
            schedule,
            kernels,
        })
    }

    pub fn schedule(&self) -> &AnnealingSchedule<X> {
        &self.schedule
    }

    pub fn init(&self) -> &Arc<dyn InitKernel<X>> {
        &self.init
    }

    /// Per-step log weights of a chain: `log p~_1(x_1)/k_1(x_1)` then
    /// `log p~_t(x_t)/p~_{t-1}(x_t)`.
    pub fn chain_log_weights(&self, states: &[X]) -> Vec<f64> {
        let mut w = Vec::with_capacity(states.len());
        w.push(self.schedule.target(0).log_density(&states[0]) - self.init.log_density(&states[0]));
        for t in 1..states.len() {
            w.push(ratio(
                self.schedule.target(t).log_density(&states[t]),
                self.schedule.target(t - 1).log_density(&states[t]),
            ));
        }
        w
    }

    fn evidence(&self, states: &[X]) -> Result<f64> {
        let mut log_ml = 0.0;
        for (t, w) in self.chain_log_weights(states).into_iter().enumerate() {
            if w == f64::NEG_INFINITY || w.is_nan() {
                return Err(Error::DegenerateWeights { step: t });
            }
            log_ml += w;
        }
        Ok(log_ml)
    }

    /// Run the chain forward from `k_1`.
    pub fn forward(&self, rng: &mut SimRng) -> Result<AisRun<X>> {
        let steps = self.schedule.n_steps();
        let mut states = Vec::with_capacity(steps);
        let x = self.init.sample(rng);
        let w0 = self.schedule.target(0).log_density(&x) - self.init.log_density(&x);
        if w0 == f64::NEG_INFINITY || w0.is_nan() {
            return Err(Error::DegenerateWeights { step: 0 });
        }
        states.push(x);
        for t in 1..steps {
            let next = self.kernels[t - 1].sample(&states[t - 1], rng)?;
            states.push(next);
        }
        let log_ml = self.evidence(&states)?;
        Ok(AisRun { states, log_ml })
    }

    /// Run the kernels in reverse order starting from `x`.
    pub fn reverse(&self, x: &X, rng: &mut SimRng) -> Result<AisRun<X>> {
        let steps = self.schedule.n_steps();
        let lt = self.schedule.target(steps - 1).log_density(x);
        if lt == f64::NEG_INFINITY || lt.is_nan() {
            return Err(Error::invalid(
                "reverse AIS started where the final target is zero",
            ));
        }
        let mut rev = Vec::with_capacity(steps);
        rev.push(x.clone());
        for t in (1..steps).rev() {
            let prev = self.kernels[t - 1].sample(rev.last().expect("nonempty"), rng)?;
            rev.push(prev);
        }
        rev.reverse();
        let log_ml = self.evidence(&rev)?;
        Ok(AisRun {
            states: rev,
            log_ml,
        })
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        num - den
    }
}

impl<X: Clone + Send + Sync + Debug + 'static> SmcProblem for AisSampler<X> {
    type State = X;

    fn n_steps(&self) -> usize {
        self.schedule.n_steps()
    }

    fn log_target(&self, t: usize, x: &X) -> f64 {
        self.schedule.target(t).log_density(x)
    }

    fn sample_init(&self, rng: &mut SimRng) -> Result<X> {
        Ok(self.init.sample(rng))
    }

    fn log_init(&self, x: &X) -> Option<f64> {
        Some(self.init.log_density(x))
    }

    fn sample_forward(&self, t: usize, prev: &X, rng: &mut SimRng) -> Result<X> {
        self.kernels[t - 1].sample(prev, rng)
    }

    fn log_forward(&self, t: usize, next: &X, prev: &X) -> Option<f64> {
        self.kernels[t - 1].log_density(next, prev)
    }

    fn sample_backward(&self, t: usize, next: &X, rng: &mut SimRng) -> Result<X> {
        self.kernels[t - 1].sample(next, rng)
    }

    fn log_backward(&self, t: usize, prev: &X, next: &X) -> Option<f64> {
        self.kernels[t - 1].log_density(prev, next)
    }

    fn log_initial_weight(&self, x: &X) -> Result<f64> {
        Ok(self.schedule.target(0).log_density(x) - self.init.log_density(x))
    }

    fn log_incremental_weight(&self, t: usize, _prev: &X, next: &X) -> Result<f64> {
        Ok(ratio(
            self.schedule.target(t).log_density(next),
            self.schedule.target(t - 1).log_density(next),
        ))
    }
}
