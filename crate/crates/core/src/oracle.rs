//! Brute-force and closed-form references: exact output laws of small
//! samplers, explicit trace densities, and exact divergences.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;
use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::inference::{FiniteSmcProblem, HmmSmc, SmcProblem, Trace};
use crate::kernels::FiniteKernel;
use crate::math::{log_sum_exp, normalize_log_weights};
use crate::model::{DiscreteHmm, Model};

/// Largest number of terms any enumeration here will visit.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDistribution<T> {
    support: Vec<T>,
    probs: Vec<f64>,
}

impl<T: PartialEq + Clone + Debug> DiscreteDistribution<T> {
    /// Probabilities must be nonnegative and sum to 1 within `1e-12`.
    pub fn new(support: Vec<T>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() || support.is_empty() {
            return Err(Error::invalid(
                "support and probabilities must have the same nonzero length",
            ));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid(
                "probabilities must be finite and nonnegative",
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("probabilities sum to {total}")));
        }
        Ok(Self { support, probs })
    }

    /// Empirical law of `samples` over a fixed support; samples outside it are an error.
    pub fn from_samples(support: Vec<T>, samples: &[T]) -> Result<Self> {
        let mut counts = vec![0usize; support.len()];
        for s in samples {
            let i = support
                .iter()
                .position(|v| v == s)
                .ok_or_else(|| Error::invalid(format!("sample {s:?} outside the support")))?;
            counts[i] += 1;
        }
        let n = samples.len() as f64;
        Ok(Self {
            support,
            probs: counts.into_iter().map(|c| c as f64 / n).collect(),
        })
    }

    pub fn support(&self) -> &[T] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, x: &T) -> f64 {
        self.support
            .iter()
            .position(|v| v == x)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    fn check_support(&self, other: &Self) -> Result<()> {
        if self.support != other.support {
            return Err(Error::invalid(
                "distributions are defined on different support lists",
            ));
        }
        Ok(())
    }

    pub fn total_variation(&self, other: &Self) -> Result<f64> {
        self.check_support(other)?;
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }
}

/// `KL(p || q) + KL(q || p)`; `+inf` when either puts mass where the other has none.
pub fn symmetric_kl<T: PartialEq + Clone + Debug>(
    p: &DiscreteDistribution<T>,
    q: &DiscreteDistribution<T>,
) -> Result<f64> {
    p.check_support(q)?;
    let mut total = 0.0;
    for (&a, &b) in p.probs.iter().zip(&q.probs) {
        match (a > 0.0, b > 0.0) {
            (true, true) => total += (a - b) * (a / b).ln(),
            (false, false) => {}
            _ => return Ok(f64::INFINITY),
        }
    }
    Ok(total)
}

/// Closed-form symmetric KL between `N(m1, c1)` and `N(m2, c2)`.
pub fn gaussian_symmetric_kl(
    m1: &DVector<f64>,
    c1: &DMatrix<f64>,
    m2: &DVector<f64>,
    c2: &DMatrix<f64>,
) -> Result<f64> {
    let d = m1.len();
    if m2.len() != d || c1.shape() != (d, d) || c2.shape() != (d, d) {
        return Err(Error::invalid("mean and covariance dimensions disagree"));
    }
    let inv = |c: &DMatrix<f64>| {
        Cholesky::new(c.clone())
            .map(|ch| ch.inverse())
            .ok_or_else(|| Error::NumericalFailure("covariance is not positive definite".into()))
    };
    let (p1, p2) = (inv(c1)?, inv(c2)?);
    let diff = m1 - m2;
    let quad = diff.dot(&((&p1 + &p2) * &diff));
    // nonnegative in exact arithmetic
    Ok((0.5 * ((&p2 * c1).trace() + (&p1 * c2).trace() + quad) - d as f64).max(0.0))
}

/// Exact posterior of an HMM by enumerating every state sequence.
pub fn hmm_posterior_enumeration(hmm: &DiscreteHmm) -> Result<DiscreteDistribution<Vec<usize>>> {
    let (s, t) = (hmm.n_states(), hmm.n_steps());
    let terms = (s as u128).checked_pow(t as u32).unwrap_or(u128::MAX);
    if terms > ENUMERATION_BUDGET {
        return Err(Error::TooLarge {
            terms,
            budget: ENUMERATION_BUDGET,
        });
    }
    let seqs: Vec<Vec<usize>> = (0..terms as usize)
        .map(|k| digits(k as u128, s, t))
        .collect();
    let log_joint = seqs
        .iter()
        .map(|x| hmm.log_joint(x))
        .collect::<Result<Vec<_>>>()?;
    let probs = normalize_log_weights(&log_joint);
    DiscreteDistribution::new(seqs, probs)
}

/// Law of a chain after `steps` transitions of `kernel` from `init`.
pub fn finite_chain_law(init: &[f64], kernel: &FiniteKernel, steps: usize) -> Result<Vec<f64>> {
    if kernel.size() != init.len() {
        return Err(Error::invalid("kernel size does not match the initial law"));
    }
    let n = init.len();
    let mut law = init.to_vec();
    for _ in 0..steps {
        let mut next = vec![0.0; n];
        for (from, &p) in law.iter().enumerate() {
            for (to, slot) in next.iter_mut().enumerate() {
                *slot += p * kernel.prob(to, from);
            }
        }
        law = next;
    }
    Ok(law)
}

/// Most significant digit first.
fn digits(mut k: u128, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = (k % base as u128) as usize;
        k /= base as u128;
    }
    out
}

/// SMC problems whose per-step state spaces are finite and listable.
pub trait FiniteSupport: SmcProblem {
    fn step_support(&self, t: usize) -> Vec<Self::State>;
}

impl FiniteSupport for FiniteSmcProblem {
    fn step_support(&self, _t: usize) -> Vec<usize> {
        (0..self.space_size()).collect()
    }
}

impl FiniteSupport for HmmSmc {
    fn step_support(&self, t: usize) -> Vec<Vec<usize>> {
        let s = self.model().n_states();
        let count = (s as u128).pow(t as u32 + 1) as usize;
        (0..count).map(|k| digits(k as u128, s, t + 1)).collect()
    }
}

fn log_normalized(w: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(w);
    w.iter().map(|v| v - z).collect()
}

/// Log weights of a trace recomputed from its particles; `None` where a step
/// has no positive weight.
fn trace_weights<P: SmcProblem>(
    problem: &P,
    trace: &Trace<P::State>,
) -> Result<Option<Vec<Vec<f64>>>> {
    let w = crate::inference::recompute_log_weights(problem, trace)?;
    if w.iter().any(|row| log_sum_exp(row) == f64::NEG_INFINITY) {
        return Ok(None);
    }
    Ok(Some(w.iter().map(|row| log_normalized(row)).collect()))
}

fn kernel_term<P: SmcProblem>(
    problem: &P,
    trace: &Trace<P::State>,
    norm_w: &[Vec<f64>],
    t: usize,
    i: usize,
) -> Result<f64> {
    let a = trace.ancestors[t - 1][i];
    let k = problem
        .log_forward(t, &trace.particles[t][i], &trace.particles[t - 1][a])
        .ok_or_else(|| Error::Unsupported("forward kernel density required".into()))?;
    Ok(norm_w[t - 1][a] + k)
}

fn init_term<P: SmcProblem>(problem: &P, x: &P::State) -> Result<f64> {
    problem
        .log_init(x)
        .ok_or_else(|| Error::Unsupported("initial kernel density required".into()))
}

/// Whether every particle drawn from `k_1` or `k_t` (all of them, or those
/// off `lineage`) has positive proposal density. Weights are undefined otherwise.
fn proposals_possible<P: SmcProblem>(
    problem: &P,
    trace: &Trace<P::State>,
    lineage: Option<&[usize]>,
) -> Result<bool> {
    let free = |t: usize, i: usize| lineage.is_none_or(|l| l[t] != i);
    for (i, x) in trace.particles[0].iter().enumerate() {
        if free(0, i) && init_term(problem, x)? == f64::NEG_INFINITY {
            return Ok(false);
        }
    }
    for t in 1..trace.n_steps() {
        for i in 0..trace.n_particles() {
            if !free(t, i) {
                continue;
            }
            let a = trace.ancestors[t - 1][i];
            let k = problem
                .log_forward(t, &trace.particles[t][i], &trace.particles[t - 1][a])
                .ok_or_else(|| Error::Unsupported("forward kernel density required".into()))?;
            if k == f64::NEG_INFINITY {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `log q(u, x)` of an SMC trace at its own output: initial draws, resampling
/// and proposal factors, and the final output index.
pub fn smc_trace_log_joint<P: SmcProblem>(problem: &P, trace: &Trace<P::State>) -> Result<f64> {
    if !proposals_possible(problem, trace, None)? {
        return Ok(f64::NEG_INFINITY);
    }
    let Some(w) = trace_weights(problem, trace)? else {
        return Ok(f64::NEG_INFINITY);
    };
    let mut total = 0.0;
    for x in &trace.particles[0] {
        total += init_term(problem, x)?;
    }
    for t in 1..trace.n_steps() {
        for i in 0..trace.n_particles() {
            total += kernel_term(problem, trace, &w, t, i)?;
        }
    }
    Ok(total + w[trace.n_steps() - 1][trace.output_index])
}

/// `log r(u; x)` of the conditional SMC sampler at the trace's output: uniform
/// lineage indices, backward-kernel factors along the lineage, and the
/// factors of every particle off the lineage.
pub fn smc_trace_log_meta_density<P: SmcProblem>(
    problem: &P,
    trace: &Trace<P::State>,
) -> Result<f64> {
    let lineage = trace.lineage();
    if !proposals_possible(problem, trace, Some(&lineage))? {
        return Ok(f64::NEG_INFINITY);
    }
    let Some(w) = trace_weights(problem, trace)? else {
        return Ok(f64::NEG_INFINITY);
    };
    let (steps, n) = (trace.n_steps(), trace.n_particles());
    let mut total = -(steps as f64) * (n as f64).ln();
    for t in 1..steps {
        let l = problem
            .log_backward(
                t,
                &trace.particles[t - 1][lineage[t - 1]],
                &trace.particles[t][lineage[t]],
            )
            .ok_or_else(|| Error::Unsupported("backward kernel density required".into()))?;
        total += l;
    }
    for (i, x) in trace.particles[0].iter().enumerate() {
        if i != lineage[0] {
            total += init_term(problem, x)?;
        }
    }
    for t in 1..steps {
        for i in 0..n {
            if i != lineage[t] {
                total += kernel_term(problem, trace, &w, t, i)?;
            }
        }
    }
    Ok(total)
}

/// Number of `(x, a, I)` traces of an SMC run with `n` particles.
pub fn trace_count<P: FiniteSupport>(problem: &P, n: usize) -> u128 {
    let mut total: u128 = n as u128;
    for t in 0..problem.n_steps() {
        let s = problem.step_support(t).len() as u128;
        total = total.saturating_mul(s.saturating_pow(n as u32));
        if t > 0 {
            total = total.saturating_mul((n as u128).saturating_pow(n as u32));
        }
    }
    total
}

/// Every trace in lexicographic order of particles, then ancestors, then output index.
pub fn enumerate_traces<P: FiniteSupport>(problem: &P, n: usize) -> Result<Vec<Trace<P::State>>> {
    if n == 0 {
        return Err(Error::invalid("need at least one particle"));
    }
    let terms = trace_count(problem, n);
    if terms > ENUMERATION_BUDGET {
        return Err(Error::TooLarge {
            terms,
            budget: ENUMERATION_BUDGET,
        });
    }
    let steps = problem.n_steps();
    let supports: Vec<Vec<P::State>> = (0..steps).map(|t| problem.step_support(t)).collect();
    // radix of every digit, most significant first
    let mut radices = Vec::new();
    for s in &supports {
        radices.extend(std::iter::repeat_n(s.len(), n));
    }
    radices.extend(std::iter::repeat_n(n, n * (steps - 1)));
    radices.push(n);

    let mut out = Vec::with_capacity(terms as usize);
    let mut digit = vec![0usize; radices.len()];
    for _ in 0..terms {
        let mut pos = 0;
        let mut particles = Vec::with_capacity(steps);
        for s in &supports {
            particles.push(digit[pos..pos + n].iter().map(|&d| s[d].clone()).collect());
            pos += n;
        }
        let mut ancestors = Vec::with_capacity(steps - 1);
        for _ in 1..steps {
            ancestors.push(digit[pos..pos + n].to_vec());
            pos += n;
        }
        out.push(Trace {
            particles,
            ancestors,
            output_index: digit[pos],
            log_weights: Vec::new(),
        });
        for k in (0..radices.len()).rev() {
            digit[k] += 1;
            if digit[k] < radices[k] {
                break;
            }
            digit[k] = 0;
        }
    }
    for trace in &mut out {
        trace.log_weights = crate::inference::recompute_log_weights(problem, trace)?;
    }
    Ok(out)
}

/// Exact output law `q(x)` of SMC with `n` particles, summing `q(u, x)` over
/// every trace.
pub fn enumerate_smc_output<P>(problem: &P, n: usize) -> Result<DiscreteDistribution<P::State>>
where
    P: FiniteSupport,
    P::State: PartialEq,
{
    let support = problem.step_support(problem.n_steps() - 1);
    let mut probs = vec![0.0; support.len()];
    for trace in enumerate_traces(problem, n)? {
        let lq = smc_trace_log_joint(problem, &trace)?;
        if lq == f64::NEG_INFINITY {
            continue;
        }
        let i = support
            .iter()
            .position(|v| v == trace.output())
            .expect("output lies in the final support");
        probs[i] += lq.exp();
    }
    Ok(DiscreteDistribution { support, probs })
}

/// Exact law of the output of the posterior `model` on a finite space.
pub fn tabular_distribution<M: Model<Latent = usize>>(
    model: &M,
    n_states: usize,
) -> Result<DiscreteDistribution<usize>> {
    let lj = (0..n_states)
        .map(|x| model.log_joint(&x))
        .collect::<Result<Vec<_>>>()?;
    DiscreteDistribution::new((0..n_states).collect(), normalize_log_weights(&lj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::two_point_two_step;

    #[test]
    fn symmetric_kl_basic_cases() {
        let p = DiscreteDistribution::new(vec![0, 1], vec![0.6, 0.4]).unwrap();
        let q = DiscreteDistribution::new(vec![0, 1], vec![0.5, 0.5]).unwrap();
        assert_eq!(symmetric_kl(&p, &p).unwrap(), 0.0);
        let hand =
            0.6 * 1.2f64.ln() + 0.4 * 0.8f64.ln() + 0.5 * (5.0f64 / 6.0).ln() + 0.5 * 1.25f64.ln();
        assert!((symmetric_kl(&p, &q).unwrap() - hand).abs() < 1e-15);
        let a = DiscreteDistribution::new(vec![0, 1], vec![1.0, 0.0]).unwrap();
        let b = DiscreteDistribution::new(vec![0, 1], vec![0.0, 1.0]).unwrap();
        assert_eq!(symmetric_kl(&a, &b).unwrap(), f64::INFINITY);
        let c = DiscreteDistribution::new(vec![1, 0], vec![0.5, 0.5]).unwrap();
        assert!(symmetric_kl(&p, &c).is_err());
    }

    #[test]
    fn gaussian_symmetric_kl_textbook() {
        let m = DVector::from_vec(vec![0.5]);
        let c = DMatrix::from_element(1, 1, 2.0);
        assert_eq!(gaussian_symmetric_kl(&m, &c, &m, &c).unwrap(), 0.0);
        let m2 = DVector::from_vec(vec![2.0]);
        let expected = 1.5f64 * 1.5 / 2.0;
        assert!((gaussian_symmetric_kl(&m, &c, &m2, &c).unwrap() - expected).abs() < 1e-14);
        let bad = DMatrix::from_element(1, 1, -1.0);
        assert!(matches!(
            gaussian_symmetric_kl(&m, &bad, &m, &c),
            Err(Error::NumericalFailure(_))
        ));
    }

    #[test]
    fn single_particle_single_step_output_is_init() {
        let problem = FiniteSmcProblem::new(
            crate::kernels::Categorical::new(vec![0.2, 0.5, 0.3]).unwrap(),
            vec![vec![0.0, 0.0, 0.0]],
            vec![],
            vec![],
        )
        .unwrap();
        let q = enumerate_smc_output(&problem, 1).unwrap();
        for (a, b) in q.probs().iter().zip([0.2, 0.5, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_kernels_give_point_mass() {
        let problem = FiniteSmcProblem::new(
            crate::kernels::Categorical::new(vec![0.0, 1.0]).unwrap(),
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![FiniteKernel::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap()],
            vec![FiniteKernel::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap()],
        )
        .unwrap();
        let q = enumerate_smc_output(&problem, 2).unwrap();
        assert!((q.prob(&0) - 1.0).abs() < 1e-12);
        assert_eq!(q.prob(&1), 0.0);
    }

    #[test]
    fn enumeration_masses_sum_to_one() {
        let problem = two_point_two_step();
        for n in 1..=2 {
            let q = enumerate_smc_output(&problem, n).unwrap();
            assert!((q.total_mass() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn meta_density_sums_to_one_at_each_output() {
        let problem = two_point_two_step();
        let traces = enumerate_traces(&problem, 2).unwrap();
        for x in 0..2 {
            let total: f64 = traces
                .iter()
                .filter(|t| *t.output() == x)
                .map(|t| smc_trace_log_meta_density(&problem, t).unwrap().exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "output {x}: {total}");
        }
    }

    #[test]
    fn budget_is_enforced() {
        let problem = two_point_two_step();
        assert!(matches!(
            enumerate_traces(&problem, 6),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn chain_law_of_stationary_kernel_is_fixed() {
        let k = FiniteKernel::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let law = finite_chain_law(&[1.0, 0.0], &k, 3).unwrap();
        assert_eq!(law, vec![0.5, 0.5]);
    }
}
