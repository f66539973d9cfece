//! Targets, transition kernels and annealing schedules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::math::{normal_log_pdf, sample_categorical, sample_uniform_index};
use crate::model::{DiscreteHmm, Model};
use crate::rng::SimRng;

/// An unnormalized log-density `log p~(x)`.
pub struct Target<X> {
    log_density: Arc<dyn Fn(&X) -> f64 + Send + Sync>,
}

impl<X> Clone for Target<X> {
    fn clone(&self) -> Self {
        Self {
            log_density: Arc::clone(&self.log_density),
        }
    }
}

impl<X> fmt::Debug for Target<X> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Target")
    }
}

impl<X: 'static> Target<X> {
    pub fn new(f: impl Fn(&X) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            log_density: Arc::new(f),
        }
    }

    /// The model's joint `log p(x, y)`; errors map to `-inf`.
    pub fn from_model<M>(model: Arc<M>) -> Self
    where
        M: Model<Latent = X> + 'static,
    {
        Self::new(move |x| model.log_joint(x).unwrap_or(f64::NEG_INFINITY))
    }

    /// The normalized density of an initialization kernel.
    pub fn from_init(init: Arc<dyn InitKernel<X>>) -> Self {
        Self::new(move |x| init.log_density(x))
    }
}

impl<X> Target<X> {
    pub fn log_density(&self, x: &X) -> f64 {
        (self.log_density)(x)
    }
}

/// A normalized distribution that can be sampled and evaluated, used as the
/// initialization kernel `k_1` and for variational or proposal densities.
pub trait InitKernel<X>: Send + Sync {
    fn sample(&self, rng: &mut SimRng) -> X;
    fn log_density(&self, x: &X) -> f64;
}

/// A Markov transition kernel `k(x'; x)`.
pub trait MarkovKernel<X>: Send + Sync {
    fn sample(&self, from: &X, rng: &mut SimRng) -> Result<X>;

    /// `log k(to; from)` if the kernel has an evaluable density.
    fn log_density(&self, _to: &X, _from: &X) -> Option<f64> {
        None
    }

    /// `k(x'; x) = k(x; x')`; Metropolis-Hastings may then skip the proposal terms.
    fn is_symmetric(&self) -> bool {
        false
    }

    /// Whether the kernel satisfies detailed balance with respect to its
    /// invariant target, which makes it its own reversal.
    fn satisfies_detailed_balance(&self) -> bool {
        false
    }
}

/// Density and sampler given as closures.
pub struct FnInit<X> {
    sample: Arc<dyn Fn(&mut SimRng) -> X + Send + Sync>,
    log_density: Arc<dyn Fn(&X) -> f64 + Send + Sync>,
}

impl<X> FnInit<X> {
    pub fn new(
        sample: impl Fn(&mut SimRng) -> X + Send + Sync + 'static,
        log_density: impl Fn(&X) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            sample: Arc::new(sample),
            log_density: Arc::new(log_density),
        }
    }
}

impl<X> InitKernel<X> for FnInit<X> {
    fn sample(&self, rng: &mut SimRng) -> X {
        (self.sample)(rng)
    }

    fn log_density(&self, x: &X) -> f64 {
        (self.log_density)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normal1d {
    pub mean: f64,
    pub std: f64,
}

impl Normal1d {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(mean.is_finite() && std.is_finite() && std > 0.0) {
            return Err(Error::invalid(format!("invalid normal N({mean}, {std}^2)")));
        }
        Ok(Self { mean, std })
    }
}

impl InitKernel<f64> for Normal1d {
    fn sample(&self, rng: &mut SimRng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.std * z
    }

    fn log_density(&self, x: &f64) -> f64 {
        normal_log_pdf(*x, self.mean, self.std)
    }
}

/// Multivariate normal with full covariance.
#[derive(Debug, Clone)]
pub struct MvNormal {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det_cov: f64,
}

impl MvNormal {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::invalid("covariance shape does not match the mean"));
        }
        let chol = Cholesky::new(covariance)
            .ok_or_else(|| Error::NumericalFailure("covariance is not positive definite".into()))?;
        let log_det_cov = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        Ok(Self {
            mean,
            chol,
            log_det_cov,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
}

impl InitKernel<DVector<f64>> for MvNormal {
    fn sample(&self, rng: &mut SimRng) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| StandardNormal.sample(rng));
        &self.mean + self.chol.l() * z
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        if x.len() != self.mean.len() {
            return f64::NEG_INFINITY;
        }
        let diff = x - &self.mean;
        let w = self
            .chol
            .l()
            .solve_lower_triangular(&diff)
            .expect("nonsingular factor");
        -0.5 * w.dot(&w) - 0.5 * self.log_det_cov - 0.5 * x.len() as f64 * (2.0 * PI).ln()
    }
}

/// Categorical distribution over `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(
                "categorical probabilities must be nonnegative",
            ));
        }
        if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("categorical probabilities must sum to 1"));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

impl InitKernel<usize> for Categorical {
    fn sample(&self, rng: &mut SimRng) -> usize {
        sample_categorical(&self.probs, rng)
    }

    fn log_density(&self, x: &usize) -> f64 {
        self.probs.get(*x).map_or(f64::NEG_INFINITY, |p| p.ln())
    }
}

/// Gaussian random walk `x' = x + step * z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianRandomWalk {
    pub step: f64,
}

impl GaussianRandomWalk {
    pub fn new(step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid("random-walk step must be positive"));
        }
        Ok(Self { step })
    }
}

impl MarkovKernel<f64> for GaussianRandomWalk {
    fn sample(&self, from: &f64, rng: &mut SimRng) -> Result<f64> {
        let z: f64 = StandardNormal.sample(rng);
        Ok(from + self.step * z)
    }

    fn log_density(&self, to: &f64, from: &f64) -> Option<f64> {
        Some(normal_log_pdf(*to, *from, self.step))
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

impl MarkovKernel<DVector<f64>> for GaussianRandomWalk {
    fn sample(&self, from: &DVector<f64>, rng: &mut SimRng) -> Result<DVector<f64>> {
        Ok(DVector::from_fn(from.len(), |i, _| {
            let z: f64 = StandardNormal.sample(rng);
            from[i] + self.step * z
        }))
    }

    fn log_density(&self, to: &DVector<f64>, from: &DVector<f64>) -> Option<f64> {
        Some(
            to.iter()
                .zip(from.iter())
                .map(|(t, f)| normal_log_pdf(*t, *f, self.step))
                .sum(),
        )
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

/// `x' = x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityKernel;

impl<X: Clone + PartialEq> MarkovKernel<X> for IdentityKernel {
    fn sample(&self, from: &X, _rng: &mut SimRng) -> Result<X> {
        Ok(from.clone())
    }

    fn log_density(&self, to: &X, from: &X) -> Option<f64> {
        Some(if to == from { 0.0 } else { f64::NEG_INFINITY })
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn satisfies_detailed_balance(&self) -> bool {
        true
    }
}

/// Transition matrix on `0..n`; row `i` is the distribution of the next state from `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteKernel {
    matrix: Vec<Vec<f64>>,
    detailed_balance: bool,
}

impl FiniteKernel {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let n = matrix.len();
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n || row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::invalid(format!(
                    "kernel row {i} is not a probability vector of length {n}"
                )));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("kernel row {i} does not sum to 1")));
            }
        }
        Ok(Self {
            matrix,
            detailed_balance: false,
        })
    }

    /// The exact Metropolis-Hastings transition matrix for `log_target` under `proposal`.
    pub fn metropolis(log_target: &[f64], proposal: &FiniteKernel) -> Result<Self> {
        let n = log_target.len();
        if proposal.size() != n {
            return Err(Error::invalid("proposal size does not match the target"));
        }
        let q = &proposal.matrix;
        let mut matrix = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut off = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                if q[i][j] == 0.0 {
                    continue;
                }
                let log_ratio = log_target[j] + q[j][i].ln() - log_target[i] - q[i][j].ln();
                let accept = if log_ratio.is_nan() {
                    0.0
                } else {
                    log_ratio.min(0.0).exp()
                };
                matrix[i][j] = q[i][j] * accept;
                off += matrix[i][j];
            }
            matrix[i][i] = (1.0 - off).max(0.0);
        }
        Ok(Self {
            matrix,
            detailed_balance: true,
        })
    }

    /// Mark the kernel as reversible with respect to its invariant target.
    pub fn with_detailed_balance(mut self, flag: bool) -> Self {
        self.detailed_balance = flag;
        self
    }

    pub fn size(&self) -> usize {
        self.matrix.len()
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn prob(&self, to: usize, from: usize) -> f64 {
        self.matrix[from][to]
    }
}

impl MarkovKernel<usize> for FiniteKernel {
    fn sample(&self, from: &usize, rng: &mut SimRng) -> Result<usize> {
        let row = self
            .matrix
            .get(*from)
            .ok_or_else(|| Error::invalid(format!("state {from} outside kernel support")))?;
        Ok(sample_categorical(row, rng))
    }

    fn log_density(&self, to: &usize, from: &usize) -> Option<f64> {
        Some(match self.matrix.get(*from).and_then(|r| r.get(*to)) {
            Some(p) => p.ln(),
            None => f64::NEG_INFINITY,
        })
    }

    fn is_symmetric(&self) -> bool {
        let n = self.size();
        (0..n).all(|i| (0..n).all(|j| self.matrix[i][j] == self.matrix[j][i]))
    }

    fn satisfies_detailed_balance(&self) -> bool {
        self.detailed_balance
    }
}

/// One Metropolis-Hastings accept/reject step.
///
/// Draw order: the proposal's draws, then exactly one uniform.
pub fn mh_step<X: Clone>(
    target: &Target<X>,
    proposal: &dyn MarkovKernel<X>,
    x: &X,
    rng: &mut SimRng,
) -> Result<X> {
    let current = target.log_density(x);
    if current == f64::NEG_INFINITY || current.is_nan() {
        return Err(Error::InvalidState(
            "target density is zero at the current state".into(),
        ));
    }
    let proposed = proposal.sample(x, rng)?;
    let mut log_alpha = target.log_density(&proposed) - current;
    if !proposal.is_symmetric() {
        let missing = || Error::invalid("asymmetric proposal without an evaluable density");
        let forward = proposal.log_density(&proposed, x).ok_or_else(missing)?;
        let backward = proposal.log_density(x, &proposed).ok_or_else(missing)?;
        log_alpha += backward - forward;
    }
    let u: f64 = rng.random();
    if u.ln() < log_alpha {
        Ok(proposed)
    } else {
        Ok(x.clone())
    }
}

/// Repeated Metropolis-Hastings steps targeting `target`.
pub struct MetropolisHastings<X> {
    target: Target<X>,
    proposal: Arc<dyn MarkovKernel<X>>,
    n_steps: usize,
}

impl<X> Clone for MetropolisHastings<X> {
    fn clone(&self) -> Self {
        Self {
            target: self.target.clone(),
            proposal: Arc::clone(&self.proposal),
            n_steps: self.n_steps,
        }
    }
}

impl<X> MetropolisHastings<X> {
    pub fn new(
        target: Target<X>,
        proposal: Arc<dyn MarkovKernel<X>>,
        n_steps: usize,
    ) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid(
                "Metropolis-Hastings needs at least one step",
            ));
        }
        Ok(Self {
            target,
            proposal,
            n_steps,
        })
    }

    pub fn target(&self) -> &Target<X> {
        &self.target
    }
}

impl<X: Clone + Send + Sync> MarkovKernel<X> for MetropolisHastings<X> {
    fn sample(&self, from: &X, rng: &mut SimRng) -> Result<X> {
        let mut x = mh_step(&self.target, self.proposal.as_ref(), from, rng)?;
        for _ in 1..self.n_steps {
            x = mh_step(&self.target, self.proposal.as_ref(), &x, rng)?;
        }
        Ok(x)
    }

    fn satisfies_detailed_balance(&self) -> bool {
        // powers of a reversible kernel stay reversible
        true
    }
}

/// `log p~_beta(x) = (1 - beta) log start(x) + beta log end(x)`.
pub fn geometric_anneal<X: 'static>(
    start: &Target<X>,
    end: &Target<X>,
    beta: f64,
) -> Result<Target<X>> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(format!(
            "annealing beta {beta} outside [0, 1]"
        )));
    }
    if beta == 0.0 {
        return Ok(start.clone());
    }
    if beta == 1.0 {
        return Ok(end.clone());
    }
    let (start, end) = (start.clone(), end.clone());
    Ok(Target::new(move |x| {
        let a = start.log_density(x);
        let b = end.log_density(x);
        if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            (1.0 - beta) * a + beta * b
        }
    }))
}

/// Sequence of targets `p~_1 .. p~_T` whose last element is the model joint.
#[derive(Debug)]
pub struct AnnealingSchedule<X> {
    betas: Vec<f64>,
    targets: Vec<Target<X>>,
}

impl<X> Clone for AnnealingSchedule<X> {
    fn clone(&self) -> Self {
        Self {
            betas: self.betas.clone(),
            targets: self.targets.clone(),
        }
    }
}

impl<X: 'static> AnnealingSchedule<X> {
    /// Geometric bridge on an explicit, nondecreasing grid ending at 1.
    pub fn geometric(start: &Target<X>, end: &Target<X>, betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::invalid("annealing schedule needs at least one step"));
        }
        if betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("annealing betas must be nondecreasing"));
        }
        if *betas.last().unwrap() != 1.0 {
            return Err(Error::invalid("annealing schedule must end at beta = 1"));
        }
        let targets = betas
            .iter()
            .map(|&b| geometric_anneal(start, end, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { betas, targets })
    }

    /// `T` evenly spaced betas `(t - 1) / (T - 1)`; `T = 1` gives just the end target.
    pub fn evenly_spaced(start: &Target<X>, end: &Target<X>, n_steps: usize) -> Result<Self> {
        Self::geometric(start, end, even_betas(n_steps)?)
    }

    /// The same target repeated `n_steps` times (Markov chain without annealing).
    pub fn constant(target: &Target<X>, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("annealing schedule needs at least one step"));
        }
        Ok(Self {
            betas: vec![1.0; n_steps],
            targets: vec![target.clone(); n_steps],
        })
    }
}

impl<X> AnnealingSchedule<X> {
    /// Arbitrary target sequence; `betas` records the fractional position `t / (T - 1)`.
    pub fn from_targets(targets: Vec<Target<X>>) -> Result<Self> {
        let betas = even_betas(targets.len())?;
        Ok(Self { betas, targets })
    }

    pub fn n_steps(&self) -> usize {
        self.targets.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Target at 0-based step `t`.
    pub fn target(&self, t: usize) -> &Target<X> {
        &self.targets[t]
    }

    pub fn targets(&self) -> &[Target<X>] {
        &self.targets
    }
}

pub fn even_betas(n_steps: usize) -> Result<Vec<f64>> {
    match n_steps {
        0 => Err(Error::invalid("annealing schedule needs at least one step")),
        1 => Ok(vec![1.0]),
        n => Ok((0..n).map(|t| t as f64 / (n - 1) as f64).collect()),
    }
}

/// Full conditional of the state at `site` given the rest of `x`, normalized.
pub fn hmm_site_conditional(model: &DiscreteHmm, x: &[usize], site: usize) -> Result<Vec<f64>> {
    let steps = model.n_steps();
    if x.len() != steps {
        return Err(Error::invalid(format!(
            "state sequence has length {}, model has {steps} steps",
            x.len()
        )));
    }
    if site >= steps {
        return Err(Error::invalid(format!("site {site} outside 0..{steps}")));
    }
    let y = model.observations()[site];
    let mut w: Vec<f64> = (0..model.n_states())
        .map(|s| {
            let left = if site == 0 {
                model.initial()[s]
            } else {
                model.transition()[x[site - 1]][s]
            };
            let right = if site + 1 < steps {
                model.transition()[s][x[site + 1]]
            } else {
                1.0
            };
            left * right * model.emission()[s][y]
        })
        .collect();
    let z: f64 = w.iter().sum();
    if z <= 0.0 {
        return Err(Error::InvalidState(format!(
            "zero full conditional at site {site}"
        )));
    }
    w.iter_mut().for_each(|v| *v /= z);
    Ok(w)
}

/// Resample the state at `site` from its exact full conditional.
pub fn hmm_gibbs_step(
    model: &DiscreteHmm,
    x: &[usize],
    site: usize,
    rng: &mut SimRng,
) -> Result<Vec<usize>> {
    let cond = hmm_site_conditional(model, x, site)?;
    let mut next = x.to_vec();
    next[site] = sample_categorical(&cond, rng);
    Ok(next)
}

/// Random-scan single-site Gibbs kernel over HMM state sequences; reversible
/// with respect to `p(x | y)`.
#[derive(Debug, Clone)]
pub struct HmmGibbs {
    model: Arc<DiscreteHmm>,
}

impl HmmGibbs {
    pub fn new(model: Arc<DiscreteHmm>) -> Self {
        Self { model }
    }
}

impl MarkovKernel<Vec<usize>> for HmmGibbs {
    fn sample(&self, from: &Vec<usize>, rng: &mut SimRng) -> Result<Vec<usize>> {
        let site = sample_uniform_index(self.model.n_steps(), rng);
        hmm_gibbs_step(&self.model, from, site, rng)
    }

    fn log_density(&self, to: &Vec<usize>, from: &Vec<usize>) -> Option<f64> {
        let steps = self.model.n_steps();
        if to.len() != steps || from.len() != steps {
            return Some(f64::NEG_INFINITY);
        }
        let diff: Vec<usize> = (0..steps).filter(|&t| to[t] != from[t]).collect();
        let sites: Vec<usize> = match diff.len() {
            0 => (0..steps).collect(),
            1 => diff,
            _ => return Some(f64::NEG_INFINITY),
        };
        let mut p = 0.0;
        for t in sites {
            let cond = hmm_site_conditional(&self.model, from, t).ok()?;
            p += cond[to[t]] / steps as f64;
        }
        Some(p.ln())
    }

    fn satisfies_detailed_balance(&self) -> bool {
        true
    }
}
