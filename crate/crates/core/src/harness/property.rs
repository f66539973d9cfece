use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::check_positive;
use crate::aide::{aide, AideConfig, AideEstimate};
use crate::error::{Error, Result};
use crate::inference::{
    exact_posterior_algorithm, log_ml_from_log_weights, recompute_log_weights, two_point_two_step,
    ExactDensityAlgorithm, FiniteSmcProblem, HmmProposal, HmmSmc, InferenceAlgorithm,
    MetaSimulation, Simulation, SmcAlgorithm, SmcSpec,
};
use crate::kernels::Normal1d;
use crate::math::{ks_critical_value, ks_statistic, mean, sample_variance, std_error};
use crate::model::{DiscreteHmm, ExactPosterior, HmmParams, Model, TabularModel};
use crate::oracle::{enumerate_smc_output, symmetric_kl, tabular_distribution};
use crate::rng::{derive_seed, stream_rng, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropertySuiteConfig {
    /// Runs per side for the mean-based checks.
    pub replications: usize,
    /// Independent estimates per side for the distributional symmetry checks.
    pub symmetry_replications: usize,
    /// Level of the Kolmogorov-Smirnov tests.
    pub alpha: f64,
    /// Multiply every `xi` of the algorithm in the gold role by 2, to check
    /// that the suite notices a role-dependent fault.
    pub inject_bias: bool,
}

impl Default for PropertySuiteConfig {
    fn default() -> Self {
        Self {
            replications: 20_000,
            symmetry_replications: 10_000,
            alpha: 0.001,
            inject_bias: false,
        }
    }
}

impl PropertySuiteConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        check_positive(&format!("{path}.replications"), self.replications)?;
        check_positive(
            &format!("{path}.symmetry_replications"),
            self.symmetry_replications,
        )?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("{path}.alpha"), "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Outcome of one check: it passes when `statistic <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub detail: String,
}

impl PropertyCheck {
    fn new(name: &str, statistic: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed: statistic <= threshold,
            statistic,
            threshold,
            detail,
        }
    }

    fn errored(name: &str, err: &Error) -> Self {
        Self {
            name: name.to_string(),
            passed: false,
            statistic: f64::NAN,
            threshold: f64::NAN,
            detail: format!("error: {err}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub seed: u64,
    pub inject_bias: bool,
    pub passed: bool,
    pub checks: Vec<PropertyCheck>,
}

/// `xi` of `inner` scaled by a constant.
struct ShiftedXi<X> {
    inner: Arc<dyn InferenceAlgorithm<X>>,
    log_factor: f64,
}

impl<X> InferenceAlgorithm<X> for ShiftedXi<X> {
    fn simulate(&self, rng: &mut SimRng) -> Result<Simulation<X>> {
        let mut s = self.inner.simulate(rng)?;
        s.log_xi += self.log_factor;
        Ok(s)
    }

    fn meta_simulate(&self, x: &X, rng: &mut SimRng) -> Result<MetaSimulation<X>> {
        let mut m = self.inner.meta_simulate(x, rng)?;
        m.log_xi += self.log_factor;
        Ok(m)
    }

    fn log_z(&self) -> f64 {
        self.inner.log_z() + self.log_factor
    }
}

struct Fixture {
    problem: Arc<FiniteSmcProblem>,
    model: Arc<TabularModel>,
    /// SMC with two particles.
    smc: Arc<dyn InferenceAlgorithm<usize>>,
    exact: Arc<dyn InferenceAlgorithm<usize>>,
    log_factor: f64,
}

impl Fixture {
    fn new(inject_bias: bool) -> Result<Self> {
        let problem = Arc::new(two_point_two_step());
        let model = Arc::new(TabularModel::new(problem.final_log_target().to_vec())?);
        let log_factor = if inject_bias {
            std::f64::consts::LN_2
        } else {
            0.0
        };
        Ok(Self {
            smc: Arc::new(SmcAlgorithm::new(
                SmcSpec::new(Arc::clone(&problem), 2)?,
                Arc::clone(&model),
            )),
            exact: Arc::new(exact_posterior_algorithm(Arc::clone(&model))),
            problem,
            model,
            log_factor,
        })
    }

    /// `alg` as seen when it plays the gold role.
    fn gold<X: 'static>(
        &self,
        alg: &Arc<dyn InferenceAlgorithm<X>>,
    ) -> Arc<dyn InferenceAlgorithm<X>> {
        biased(Arc::clone(alg), self.log_factor)
    }

    fn true_divergence(&self) -> Result<f64> {
        let q = enumerate_smc_output(self.problem.as_ref(), 2)?;
        let p = tabular_distribution(self.model.as_ref(), self.model.n_states())?;
        symmetric_kl(&p, &q)
    }
}

fn biased<X: 'static>(
    alg: Arc<dyn InferenceAlgorithm<X>>,
    log_factor: f64,
) -> Arc<dyn InferenceAlgorithm<X>> {
    if log_factor == 0.0 {
        alg
    } else {
        Arc::new(ShiftedXi {
            inner: alg,
            log_factor,
        })
    }
}

/// Paired mean difference `b - a` of two estimates sharing random streams, and its standard error.
pub(crate) fn paired_difference(a: &AideEstimate, b: &AideEstimate) -> (f64, f64) {
    let dg: Vec<f64> = b
        .gold_terms
        .iter()
        .zip(&a.gold_terms)
        .map(|(x, y)| x - y)
        .collect();
    let dt: Vec<f64> = b
        .target_terms
        .iter()
        .zip(&a.target_terms)
        .map(|(x, y)| x - y)
        .collect();
    let se =
        (sample_variance(&dg) / dg.len() as f64 + sample_variance(&dt) / dt.len() as f64).sqrt();
    (b.estimate - a.estimate, se)
}

fn upper_bound(f: &Fixture, cfg: &PropertySuiteConfig, seed: u64) -> Result<PropertyCheck> {
    let truth = f.true_divergence()?;
    let n = cfg.replications;
    let est = aide(
        f.gold(&f.exact).as_ref(),
        f.smc.as_ref(),
        &AideConfig::new(n, n, 1, 1, seed)?,
    )?;
    // passes when truth - estimate <= 3 SE
    Ok(PropertyCheck::new(
        "upper_bound",
        truth - est.estimate,
        3.0 * est.std_error,
        format!(
            "estimate {:.6} +- {:.6}, enumerated divergence {truth:.6}",
            est.estimate, est.std_error
        ),
    ))
}

fn monotone(
    name: &str,
    f: &Fixture,
    cfg: &PropertySuiteConfig,
    seed: u64,
    in_gold: bool,
) -> Result<PropertyCheck> {
    let n = cfg.replications;
    let ms = [1usize, 2, 4, 8, 16];
    let ests = ms
        .iter()
        .map(|&m| {
            if in_gold {
                aide(
                    f.gold(&f.smc).as_ref(),
                    f.exact.as_ref(),
                    &AideConfig::new(n, n, m, 1, seed)?,
                )
            } else {
                aide(
                    f.gold(&f.exact).as_ref(),
                    f.smc.as_ref(),
                    &AideConfig::new(n, n, 1, m, seed)?,
                )
            }
        })
        .collect::<Result<Vec<_>>>()?;
    // worst standardized increase over consecutive doublings
    let mut worst = f64::NEG_INFINITY;
    let mut detail = Vec::new();
    for k in 1..ests.len() {
        let (diff, se) = paired_difference(&ests[k - 1], &ests[k]);
        worst = worst.max(diff - 3.0 * se);
        detail.push(format!(
            "M {}->{}: {:+.6} (paired SE {:.6})",
            ms[k - 1],
            ms[k],
            diff,
            se
        ));
    }
    Ok(PropertyCheck::new(name, worst, 0.0, detail.join("; ")))
}

fn empty_trace_unbiased(
    cfg: &PropertySuiteConfig,
    seed: u64,
    log_factor: f64,
) -> Result<PropertyCheck> {
    let (mu, delta, sigma) = (0.0, 0.5, 1.0);
    let gold = biased(
        Arc::new(ExactDensityAlgorithm::from_init(
            Arc::new(Normal1d::new(mu, sigma)?),
            0.0,
        )),
        log_factor,
    );
    let target = ExactDensityAlgorithm::from_init(Arc::new(Normal1d::new(mu + delta, sigma)?), 0.0);
    let n = cfg.replications;
    let est = aide(gold.as_ref(), &target, &AideConfig::new(n, n, 1, 1, seed)?)?;
    let truth = delta * delta / (sigma * sigma);
    Ok(PropertyCheck::new(
        "empty_trace_unbiased",
        (est.estimate - truth).abs(),
        3.0 * est.std_error,
        format!(
            "estimate {:.6} +- {:.6}, closed form {truth:.6}",
            est.estimate, est.std_error
        ),
    ))
}

/// Estimates of `aide(a, b, cfg)` and `aide(b, a, swapped cfg)` on independent seeds.
fn symmetry_samples(
    f: &Fixture,
    cfg: &PropertySuiteConfig,
    seed: u64,
) -> Result<(Vec<AideEstimate>, Vec<AideEstimate>)> {
    let r = cfg.symmetry_replications;
    let base = AideConfig::new(1, 1, 2, 1, 0)?;
    let (gold_smc, gold_exact) = (f.gold(&f.smc), f.gold(&f.exact));
    let forward: Vec<Result<AideEstimate>> = (0..r)
        .into_par_iter()
        .map(|i| {
            let c = AideConfig {
                seed: derive_seed(seed, i as u64),
                ..base
            };
            aide(gold_smc.as_ref(), f.exact.as_ref(), &c)
        })
        .collect();
    let swapped: Vec<Result<AideEstimate>> = (0..r)
        .into_par_iter()
        .map(|i| {
            let c = AideConfig {
                seed: derive_seed(seed, (r + i) as u64),
                ..base.swapped()
            };
            aide(gold_exact.as_ref(), f.smc.as_ref(), &c)
        })
        .collect();
    Ok((
        forward.into_iter().collect::<Result<_>>()?,
        swapped.into_iter().collect::<Result<_>>()?,
    ))
}

fn symmetry_checks(
    f: &Fixture,
    cfg: &PropertySuiteConfig,
    seed: u64,
) -> Result<Vec<PropertyCheck>> {
    let (fwd, swp) = symmetry_samples(f, cfg, seed)?;
    let r = cfg.symmetry_replications;
    let crit = ks_critical_value(cfg.alpha, r, r);
    let col =
        |v: &[AideEstimate], g: fn(&AideEstimate) -> f64| v.iter().map(g).collect::<Vec<f64>>();
    let d_est = ks_statistic(&col(&fwd, |e| e.estimate), &col(&swp, |e| e.estimate));
    // the half driven by each algorithm's own runs must match across the swap
    let d_a = ks_statistic(
        &col(&fwd, |e| mean(&e.gold_terms)),
        &col(&swp, |e| mean(&e.target_terms)),
    );
    let d_b = ks_statistic(
        &col(&fwd, |e| mean(&e.target_terms)),
        &col(&swp, |e| mean(&e.gold_terms)),
    );
    Ok(vec![
        PropertyCheck::new(
            "symmetry_estimate",
            d_est,
            crit,
            format!("KS statistic over {r} estimates per side"),
        ),
        PropertyCheck::new(
            "symmetry_halves",
            d_a.max(d_b),
            crit,
            format!("KS statistics {d_a:.5} and {d_b:.5} over {r} estimates per side"),
        ),
    ])
}

fn small_hmm() -> Result<DiscreteHmm> {
    DiscreteHmm::new(HmmParams {
        initial: vec![0.6, 0.4],
        transition: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        emission: vec![vec![0.9, 0.1], vec![0.25, 0.75]],
        observations: vec![0, 1, 1],
    })
}

fn evidence_unbiased(cfg: &PropertySuiteConfig, seed: u64) -> Result<PropertyCheck> {
    let hmm = Arc::new(small_hmm()?);
    let spec = SmcSpec::new(
        Arc::new(HmmSmc::new(Arc::clone(&hmm), HmmProposal::Prior)),
        2,
    )?;
    let n = cfg.replications;
    let runs: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            Ok(
                crate::inference::smc_run(&spec, &mut stream_rng(seed, i as u64))?
                    .log_ml
                    .exp(),
            )
        })
        .collect();
    let z = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let truth = hmm.log_marginal().exp();
    let (m, se) = (mean(&z), std_error(&z));
    Ok(PropertyCheck::new(
        "evidence_unbiased",
        (m - truth).abs(),
        3.0 * se,
        format!("mean evidence {m:.6e} +- {se:.3e}, exact {truth:.6e}"),
    ))
}

fn xi_identity(f: &Fixture, seed: u64) -> Result<PropertyCheck> {
    let hmm = Arc::new(small_hmm()?);
    let hmm_problem = Arc::new(HmmSmc::new(Arc::clone(&hmm), HmmProposal::Optimal));
    let hmm_alg = SmcAlgorithm::new(SmcSpec::new(Arc::clone(&hmm_problem), 3)?, Arc::clone(&hmm));
    let raw = SmcAlgorithm::new(
        SmcSpec::new(Arc::clone(&f.problem), 2)?,
        Arc::clone(&f.model),
    );
    let mut worst: f64 = 0.0;
    for i in 0..500u64 {
        let mut rng = stream_rng(seed, i);
        let s = raw.simulate(&mut rng)?;
        let m = raw.meta_simulate(&s.output, &mut rng)?;
        for (xi, trace) in [(s.log_xi, s.trace.as_ref()), (m.log_xi, m.trace.as_ref())] {
            let trace = trace.expect("SMC records traces");
            let lml = log_ml_from_log_weights(&recompute_log_weights(f.problem.as_ref(), trace)?);
            worst = worst.max((xi - (f.model.log_joint(trace.output())? - lml)).abs());
        }
        let s = hmm_alg.simulate(&mut rng)?;
        let m = hmm_alg.meta_simulate(&s.output, &mut rng)?;
        for (xi, trace) in [(s.log_xi, s.trace.as_ref()), (m.log_xi, m.trace.as_ref())] {
            let trace = trace.expect("SMC records traces");
            let lml = log_ml_from_log_weights(&recompute_log_weights(hmm_problem.as_ref(), trace)?);
            worst = worst.max((xi - (hmm.log_joint(trace.output())? - lml)).abs());
        }
    }
    Ok(PropertyCheck::new(
        "xi_identity",
        worst,
        1e-9,
        "max deviation over 2000 runs".into(),
    ))
}

fn determinism(f: &Fixture, seed: u64) -> Result<PropertyCheck> {
    let cfg = AideConfig::new(200, 200, 2, 3, seed)?;
    let run = |threads: usize| -> Result<AideEstimate> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidState(e.to_string()))?;
        pool.install(|| aide(f.smc.as_ref(), f.exact.as_ref(), &cfg))
    };
    let (a, b) = (run(1)?, run(4)?);
    let same = a == b && a.estimate.to_bits() == b.estimate.to_bits();
    Ok(PropertyCheck::new(
        "determinism",
        if same { 0.0 } else { 1.0 },
        0.0,
        "one thread versus four".into(),
    ))
}

/// Run every check; failures are collected, not short-circuited.
pub fn run_property_suite(cfg: &PropertySuiteConfig, seed: u64) -> Result<PropertyReport> {
    cfg.validate("property")?;
    let f = Fixture::new(cfg.inject_bias)?;
    let mut checks = Vec::new();
    let mut push = |name: &str, r: Result<PropertyCheck>| {
        checks.push(r.unwrap_or_else(|e| PropertyCheck::errored(name, &e)));
    };
    push("upper_bound", upper_bound(&f, cfg, seed));
    push(
        "monotone_m_target",
        monotone("monotone_m_target", &f, cfg, seed, false),
    );
    push(
        "monotone_m_gold",
        monotone("monotone_m_gold", &f, cfg, seed, true),
    );
    push(
        "empty_trace_unbiased",
        empty_trace_unbiased(cfg, seed, f.log_factor),
    );
    match symmetry_checks(&f, cfg, seed) {
        Ok(v) => checks.extend(v),
        Err(e) => {
            checks.push(PropertyCheck::errored("symmetry_estimate", &e));
            checks.push(PropertyCheck::errored("symmetry_halves", &e));
        }
    }
    let mut push = |name: &str, r: Result<PropertyCheck>| {
        checks.push(r.unwrap_or_else(|e| PropertyCheck::errored(name, &e)));
    };
    push("evidence_unbiased", evidence_unbiased(cfg, seed));
    push("xi_identity", xi_identity(&f, seed));
    push("determinism", determinism(&f, seed));
    Ok(PropertyReport {
        seed,
        inject_bias: cfg.inject_bias,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
