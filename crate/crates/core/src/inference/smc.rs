//! Sequential Monte Carlo with multinomial resampling at every step, and the
//! generalized conditional SMC sweep that serves as its meta-inference sampler.
//!
//! Steps are 0-based here: step `t` carries target `p~_t`, particles `x_t`
//! and weights `w_t`; step 0 is initialized from `k_1`.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::math::{log_mean_exp, sample_uniform_index, LogCategorical};
use crate::model::Model;
use crate::rng::SimRng;

/// The ingredients of an SMC sampler: targets, initialization kernel,
/// forward proposals `k_t` and backward kernels `l_t`.
pub trait SmcProblem: Send + Sync {
    type State: Clone + Send + Sync + Debug;

    fn n_steps(&self) -> usize;

    /// `log p~_t(x)`. The last target must be the model joint `log p(x, y)`.
    fn log_target(&self, t: usize, x: &Self::State) -> f64;

    fn sample_init(&self, rng: &mut SimRng) -> Result<Self::State>;

    fn log_init(&self, x: &Self::State) -> Option<f64>;

    /// Draw `x_t ~ k_t(. ; x_{t-1})` for `t >= 1`.
    fn sample_forward(&self, t: usize, prev: &Self::State, rng: &mut SimRng)
        -> Result<Self::State>;

    fn log_forward(&self, t: usize, next: &Self::State, prev: &Self::State) -> Option<f64>;

    /// Draw `x_{t-1} ~ l_t(. ; x_t)` for `t >= 1`.
    fn sample_backward(
        &self,
        t: usize,
        next: &Self::State,
        rng: &mut SimRng,
    ) -> Result<Self::State>;

    fn log_backward(&self, t: usize, prev: &Self::State, next: &Self::State) -> Option<f64>;

    /// `log w_1(x) = log p~_1(x) - log k_1(x)`.
    fn log_initial_weight(&self, x: &Self::State) -> Result<f64> {
        let k = self
            .log_init(x)
            .ok_or_else(|| Error::Unsupported("initial kernel density is not evaluable".into()))?;
        Ok(self.log_target(0, x) - k)
    }

    /// `log w_t(x_{t-1}, x_t) = log [p~_t(x_t) l_t(x_{t-1}; x_t) / (p~_{t-1}(x_{t-1}) k_t(x_t; x_{t-1}))]`.
    ///
    /// Problems whose kernels are reversible with `l_t = k_t` override this
    /// with `p~_t(x_t) / p~_{t-1}(x_t)`, which needs no kernel densities.
    fn log_incremental_weight(
        &self,
        t: usize,
        prev: &Self::State,
        next: &Self::State,
    ) -> Result<f64> {
        let missing =
            || Error::Unsupported(format!("kernel densities at step {t} are not evaluable"));
        let k = self.log_forward(t, next, prev).ok_or_else(missing)?;
        let l = self.log_backward(t, prev, next).ok_or_else(missing)?;
        let num = self.log_target(t, next) + l;
        if num == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(num - self.log_target(t - 1, prev) - k)
    }
}

/// An SMC problem together with its particle count.
pub struct SmcSpec<P> {
    pub problem: Arc<P>,
    pub n_particles: usize,
}

impl<P> Clone for SmcSpec<P> {
    fn clone(&self) -> Self {
        Self {
            problem: Arc::clone(&self.problem),
            n_particles: self.n_particles,
        }
    }
}

impl<P: SmcProblem> SmcSpec<P> {
    pub fn new(problem: Arc<P>, n_particles: usize) -> Result<Self> {
        if n_particles == 0 {
            return Err(Error::invalid("SMC needs at least one particle"));
        }
        if problem.n_steps() == 0 {
            return Err(Error::invalid("SMC needs at least one step"));
        }
        Ok(Self {
            problem,
            n_particles,
        })
    }
}

/// Every random choice of one SMC run: particles, ancestors and output index.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<X> {
    /// `particles[t][i]`.
    pub particles: Vec<Vec<X>>,
    /// `ancestors[t][i]`: parent (at step `t`) of particle `i` at step `t + 1`.
    pub ancestors: Vec<Vec<usize>>,
    pub output_index: usize,
    /// `log_weights[t][i]`, cached from the run.
    pub log_weights: Vec<Vec<f64>>,
}

impl<X> Trace<X> {
    pub fn n_steps(&self) -> usize {
        self.particles.len()
    }

    pub fn n_particles(&self) -> usize {
        self.particles[0].len()
    }

    pub fn output(&self) -> &X {
        &self.particles[self.n_steps() - 1][self.output_index]
    }

    /// Indices `I_1 .. I_T` of the output particle's ancestral line.
    pub fn lineage(&self) -> Vec<usize> {
        let steps = self.n_steps();
        let mut idx = vec![0; steps];
        idx[steps - 1] = self.output_index;
        for t in (0..steps - 1).rev() {
            idx[t] = self.ancestors[t][idx[t + 1]];
        }
        idx
    }

    /// `log p^(y) = sum_t log((1/P) sum_i w_t^i)` from the cached weights.
    pub fn log_ml(&self) -> f64 {
        log_ml_from_log_weights(&self.log_weights)
    }
}

pub fn log_ml_from_log_weights(log_weights: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for w in log_weights {
        total += log_mean_exp(w).expect("at least one particle");
    }
    total
}

/// Recompute every weight of `trace` from its particles and ancestors.
pub fn recompute_log_weights<P: SmcProblem>(
    problem: &P,
    trace: &Trace<P::State>,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(trace.n_steps());
    out.push(
        trace.particles[0]
            .iter()
            .map(|x| problem.log_initial_weight(x))
            .collect::<Result<Vec<_>>>()?,
    );
    for t in 1..trace.n_steps() {
        let row = (0..trace.n_particles())
            .map(|i| {
                let parent = &trace.particles[t - 1][trace.ancestors[t - 1][i]];
                problem.log_incremental_weight(t, parent, &trace.particles[t][i])
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcRunResult<X> {
    pub output: X,
    pub trace: Trace<X>,
    pub log_ml: f64,
}

fn check_weights(step: usize, w: &[f64]) -> Result<()> {
    if w.iter().any(|v| v.is_nan()) || w.iter().all(|&v| v == f64::NEG_INFINITY) {
        return Err(Error::DegenerateWeights { step });
    }
    Ok(())
}

fn categorical(step: usize, log_weights: &[f64]) -> Result<LogCategorical> {
    LogCategorical::new(log_weights).ok_or(Error::DegenerateWeights { step })
}

fn finish<X: Clone>(
    particles: Vec<Vec<X>>,
    ancestors: Vec<Vec<usize>>,
    log_weights: Vec<Vec<f64>>,
    output_index: usize,
) -> SmcRunResult<X> {
    let trace = Trace {
        particles,
        ancestors,
        output_index,
        log_weights,
    };
    SmcRunResult {
        output: trace.output().clone(),
        log_ml: trace.log_ml(),
        trace,
    }
}

/// Run SMC and return one particle drawn from the final weighted approximation.
///
/// Draw order: `k_1` for particles `0..P`; then at each later step, for each
/// particle, its ancestor index followed by its proposal; finally the output
/// index. Categorical draws over a single particle consume no randomness.
pub fn smc_run<P: SmcProblem>(
    spec: &SmcSpec<P>,
    rng: &mut SimRng,
) -> Result<SmcRunResult<P::State>> {
    let problem = spec.problem.as_ref();
    let (n, steps) = (spec.n_particles, problem.n_steps());
    let mut particles: Vec<Vec<P::State>> = Vec::with_capacity(steps);
    let mut ancestors: Vec<Vec<usize>> = Vec::with_capacity(steps.saturating_sub(1));
    let mut log_weights: Vec<Vec<f64>> = Vec::with_capacity(steps);

    let first = (0..n)
        .map(|_| problem.sample_init(rng))
        .collect::<Result<Vec<_>>>()?;
    let w = first
        .iter()
        .map(|x| problem.log_initial_weight(x))
        .collect::<Result<Vec<_>>>()?;
    check_weights(0, &w)?;
    particles.push(first);
    log_weights.push(w);

    for t in 1..steps {
        let mut xs = Vec::with_capacity(n);
        let mut anc = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        let resample = categorical(t - 1, &log_weights[t - 1])?;
        for _ in 0..n {
            let a = resample.sample(rng);
            let parent = &particles[t - 1][a];
            let x = problem.sample_forward(t, parent, rng)?;
            w.push(problem.log_incremental_weight(t, parent, &x)?);
            anc.push(a);
            xs.push(x);
        }
        check_weights(t, &w)?;
        particles.push(xs);
        ancestors.push(anc);
        log_weights.push(w);
    }

    let output_index = categorical(steps - 1, &log_weights[steps - 1])?.sample(rng);
    Ok(finish(particles, ancestors, log_weights, output_index))
}

/// Generalized conditional SMC: sample a trace whose output particle is `x`.
///
/// Draw order: `I_T`, then for `t = T-1 .. 1` the index `I_t` followed by the
/// backward-kernel draw; then the free particles of step 0 in index order;
/// then, per later step and free particle, ancestor followed by proposal.
pub fn conditional_smc<P: SmcProblem>(
    spec: &SmcSpec<P>,
    x: &P::State,
    rng: &mut SimRng,
) -> Result<SmcRunResult<P::State>> {
    let problem = spec.problem.as_ref();
    let (n, steps) = (spec.n_particles, problem.n_steps());
    let lt = problem.log_target(steps - 1, x);
    if lt == f64::NEG_INFINITY || lt.is_nan() {
        return Err(Error::invalid(
            "conditioning value has zero density under the final target",
        ));
    }

    let mut lineage = vec![0; steps];
    let mut path: Vec<Option<P::State>> = vec![None; steps];
    lineage[steps - 1] = sample_uniform_index(n, rng);
    path[steps - 1] = Some(x.clone());
    for t in (0..steps - 1).rev() {
        lineage[t] = sample_uniform_index(n, rng);
        let next = path[t + 1].as_ref().expect("filled");
        path[t] = Some(problem.sample_backward(t + 1, next, rng)?);
    }
    let mut path = path.into_iter().map(|p| p.expect("filled"));

    let mut particles: Vec<Vec<P::State>> = Vec::with_capacity(steps);
    let mut ancestors: Vec<Vec<usize>> = Vec::with_capacity(steps.saturating_sub(1));
    let mut log_weights: Vec<Vec<f64>> = Vec::with_capacity(steps);

    let mut pinned = Some(path.next().expect("at least one step"));
    let mut first = Vec::with_capacity(n);
    for i in 0..n {
        if i == lineage[0] {
            first.push(pinned.take().expect("pinned once"));
        } else {
            first.push(problem.sample_init(rng)?);
        }
    }
    let w = first
        .iter()
        .map(|x| problem.log_initial_weight(x))
        .collect::<Result<Vec<_>>>()?;
    check_weights(0, &w)?;
    particles.push(first);
    log_weights.push(w);

    for t in 1..steps {
        let mut pinned = Some(path.next().expect("one value per step"));
        let mut xs = Vec::with_capacity(n);
        let mut anc = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        let resample = categorical(t - 1, &log_weights[t - 1])?;
        for i in 0..n {
            let (a, x) = if i == lineage[t] {
                (lineage[t - 1], pinned.take().expect("pinned once"))
            } else {
                let a = resample.sample(rng);
                (a, problem.sample_forward(t, &particles[t - 1][a], rng)?)
            };
            w.push(problem.log_incremental_weight(t, &particles[t - 1][a], &x)?);
            anc.push(a);
            xs.push(x);
        }
        check_weights(t, &w)?;
        particles.push(xs);
        ancestors.push(anc);
        log_weights.push(w);
    }

    Ok(finish(
        particles,
        ancestors,
        log_weights,
        lineage[steps - 1],
    ))
}

/// `log xi(u, x) = log p(x, y) - log p^(y)`, with `Z = 1`.
pub fn smc_log_xi<M: Model>(model: &M, result: &SmcRunResult<M::Latent>) -> Result<f64> {
    Ok(model.log_joint(&result.output)? - result.log_ml)
}
