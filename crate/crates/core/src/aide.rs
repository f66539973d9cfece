//! The auxiliary inference divergence estimator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;

use crate::error::{Error, Result, Side};
use crate::inference::{AisAlgorithm, InferenceAlgorithm};
use crate::kernels::InitKernel;
use crate::math::{log_mean_exp, mean, sample_variance};
use crate::model::Model;
use crate::rng::{stream_rng, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AideConfig {
    pub n_gold: usize,
    pub n_target: usize,
    pub m_gold: usize,
    pub m_target: usize,
    pub seed: u64,
}

impl AideConfig {
    pub fn new(
        n_gold: usize,
        n_target: usize,
        m_gold: usize,
        m_target: usize,
        seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            n_gold,
            n_target,
            m_gold,
            m_target,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_gold", self.n_gold),
            ("n_target", self.n_target),
            ("m_gold", self.m_gold),
            ("m_target", self.m_target),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// The same configuration with the roles of the two algorithms exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            n_gold: self.n_target,
            n_target: self.n_gold,
            m_gold: self.m_target,
            m_target: self.m_gold,
            seed: self.seed,
        }
    }
}

/// `estimate = mean(gold_terms) + mean(target_terms)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AideEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_gold: usize,
    pub n_target: usize,
    pub m_gold: usize,
    pub m_target: usize,
    pub seed: u64,
    /// Per gold run: `lme(gold xi) - lme(target xi)` at the gold output.
    #[serde(skip)]
    pub gold_terms: Vec<f64>,
    /// Per target run: `lme(target xi) - lme(gold xi)` at the target output.
    #[serde(skip)]
    pub target_terms: Vec<f64>,
}

impl AideEstimate {
    /// Assemble the estimate and its standard error
    /// `sqrt(var(gold_terms) / N_gold + var(target_terms) / N_target)`.
    pub fn from_terms(
        gold_terms: Vec<f64>,
        target_terms: Vec<f64>,
        m_gold: usize,
        m_target: usize,
        seed: u64,
    ) -> Self {
        let (ng, nt) = (gold_terms.len(), target_terms.len());
        let estimate = mean(&gold_terms) + mean(&target_terms);
        let var =
            sample_variance(&gold_terms) / ng as f64 + sample_variance(&target_terms) / nt as f64;
        Self {
            estimate,
            std_error: var.sqrt(),
            n_gold: ng,
            n_target: nt,
            m_gold,
            m_target,
            seed,
            gold_terms,
            target_terms,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Header and one data row in CSV form.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(self)?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Random stream of gold run `n`.
pub fn gold_stream(seed: u64, n: usize) -> SimRng {
    stream_rng(seed, 2 * n as u64)
}

/// Random stream of target run `n`.
pub fn target_stream(seed: u64, n: usize) -> SimRng {
    stream_rng(seed, 2 * n as u64 + 1)
}

fn group_mean(side: Side, run: usize, xi: &[f64]) -> Result<f64> {
    let v = log_mean_exp(xi)?;
    if v == f64::NEG_INFINITY || v.is_nan() {
        return Err(Error::InfiniteEstimate { side, run });
    }
    Ok(v)
}

/// One outer iteration: run `own`, then `m_own - 1` meta-runs of `own` and
/// `m_other` meta-runs of `other` at its output, all on `rng` in that order.
fn one_term<X>(
    own: &dyn InferenceAlgorithm<X>,
    other: &dyn InferenceAlgorithm<X>,
    m_own: usize,
    m_other: usize,
    side: Side,
    run: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    let sim = own.simulate(rng)?;
    let mut own_xi = Vec::with_capacity(m_own);
    own_xi.push(sim.log_xi);
    for _ in 1..m_own {
        own_xi.push(own.meta_simulate(&sim.output, rng)?.log_xi);
    }
    let other_xi = (0..m_other)
        .map(|_| other.meta_simulate(&sim.output, rng).map(|m| m.log_xi))
        .collect::<Result<Vec<_>>>()?;
    Ok(group_mean(side, run, &own_xi)? - group_mean(side, run, &other_xi)?)
}

/// First error in index order, so the reported run does not depend on scheduling.
fn collect_in_order(results: Vec<Result<f64>>) -> Result<Vec<f64>> {
    results.into_iter().collect()
}

/// Estimate an upper bound on `KL(gold || target) + KL(target || gold)`.
///
/// Gold run `n` draws from [`gold_stream`] and target run `n` from
/// [`target_stream`]; runs execute on the current rayon pool and are reduced
/// in index order, so the result does not depend on the number of threads.
pub fn aide<X>(
    gold: &dyn InferenceAlgorithm<X>,
    target: &dyn InferenceAlgorithm<X>,
    cfg: &AideConfig,
) -> Result<AideEstimate> {
    cfg.validate()?;
    let gold_terms = collect_in_order(
        (0..cfg.n_gold)
            .into_par_iter()
            .map(|n| {
                one_term(
                    gold,
                    target,
                    cfg.m_gold,
                    cfg.m_target,
                    Side::Gold,
                    n,
                    &mut gold_stream(cfg.seed, n),
                )
            })
            .collect(),
    )?;
    let target_terms = collect_in_order(
        (0..cfg.n_target)
            .into_par_iter()
            .map(|n| {
                one_term(
                    target,
                    gold,
                    cfg.m_target,
                    cfg.m_gold,
                    Side::Target,
                    n,
                    &mut target_stream(cfg.seed, n),
                )
            })
            .collect(),
    )?;
    Ok(AideEstimate::from_terms(
        gold_terms,
        target_terms,
        cfg.m_gold,
        cfg.m_target,
        cfg.seed,
    ))
}

/// AIDE between an AIS gold standard and a variational approximation `q`,
/// with one AIS run per gold sample and one reverse AIS run per `q` sample:
///
/// `D = mean_n log(p(x_n, y) / (q(x_n) p^_n)) - mean_n log(p(x'_n, y) / (q(x'_n) p^'_n))`.
///
/// Uses the same random streams as [`aide`] with the AIS algorithm as gold.
pub fn aide_ais_vs_variational<X, M>(
    ais: &AisAlgorithm<X, M>,
    q: &dyn InitKernel<X>,
    n_gold: usize,
    n_target: usize,
    seed: u64,
) -> Result<AideEstimate>
where
    X: Clone + Send + Sync + Debug + 'static,
    M: Model<Latent = X>,
{
    AideConfig::new(n_gold, n_target, 1, 1, seed)?;
    let model = ais.model();
    let sampler = ais.sampler();
    let check = |side, run, v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InfiniteEstimate { side, run })
        }
    };
    let gold_terms = collect_in_order(
        (0..n_gold)
            .into_par_iter()
            .map(|n| {
                let run = sampler.forward(&mut gold_stream(seed, n))?;
                let x = run.output();
                let log_xi = check(Side::Gold, n, model.log_joint(x)? - run.log_ml)?;
                Ok(log_xi - check(Side::Gold, n, q.log_density(x))?)
            })
            .collect(),
    )?;
    let target_terms = collect_in_order(
        (0..n_target)
            .into_par_iter()
            .map(|n| {
                let mut rng = target_stream(seed, n);
                let x = q.sample(&mut rng);
                let log_q = check(Side::Target, n, q.log_density(&x))?;
                let run = sampler.reverse(&x, &mut rng)?;
                Ok(log_q - check(Side::Target, n, model.log_joint(&x)? - run.log_ml)?)
            })
            .collect(),
    )?;
    Ok(AideEstimate::from_terms(
        gold_terms,
        target_terms,
        1,
        1,
        seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::ExactDensityAlgorithm;
    use crate::kernels::Normal1d;
    use std::sync::Arc;

    fn gaussian(mean: f64, std: f64, log_z: f64) -> ExactDensityAlgorithm<f64> {
        ExactDensityAlgorithm::from_init(Arc::new(Normal1d::new(mean, std).unwrap()), log_z)
    }

    #[test]
    fn rejects_zero_counts() {
        assert!(AideConfig::new(0, 1, 1, 1, 0).is_err());
        assert!(AideConfig::new(1, 1, 1, 0, 0).is_err());
    }

    #[test]
    fn same_empty_trace_algorithm_gives_exact_zero() {
        let a = gaussian(0.3, 1.2, -1.7);
        let est = aide(&a, &a, &AideConfig::new(50, 40, 3, 2, 9).unwrap()).unwrap();
        assert_eq!(est.estimate, 0.0);
        assert_eq!(est.std_error, 0.0);
        assert!(est
            .gold_terms
            .iter()
            .chain(&est.target_terms)
            .all(|&t| t == 0.0));
    }

    #[test]
    fn terms_match_simple_monte_carlo_for_empty_traces() {
        let (a, b) = (gaussian(0.0, 1.0, 0.0), gaussian(1.0, 1.0, 0.0));
        let cfg = AideConfig::new(20, 20, 1, 1, 4).unwrap();
        let est = aide(&a, &b, &cfg).unwrap();
        for n in 0..20 {
            let x = a.simulate(&mut gold_stream(4, n)).unwrap().output;
            let direct = a.log_density(&x) - b.log_density(&x);
            assert!((est.gold_terms[n] - direct).abs() < 1e-12);
            let x = b.simulate(&mut target_stream(4, n)).unwrap().output;
            let direct = b.log_density(&x) - a.log_density(&x);
            assert!((est.target_terms[n] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_density_surfaces_as_infinite_estimate() {
        let wide = gaussian(0.0, 1.0, 0.0);
        let narrow = ExactDensityAlgorithm::new(
            |_rng: &mut SimRng| 0.5,
            |x: &f64| if *x == 0.5 { 0.0 } else { f64::NEG_INFINITY },
            0.0,
        );
        let err = aide(&wide, &narrow, &AideConfig::new(3, 3, 1, 1, 0).unwrap()).unwrap_err();
        assert!(matches!(
            err,
            Error::InfiniteEstimate {
                side: Side::Gold,
                run: 0
            }
        ));
    }

    #[test]
    fn serializes_counts_and_seed() {
        let est = AideEstimate::from_terms(vec![1.0, 2.0], vec![0.5], 1, 4, 77);
        let json: serde_json::Value = serde_json::from_str(&est.to_json().unwrap()).unwrap();
        assert_eq!(json["estimate"], 2.0);
        assert_eq!(json["m_target"], 4);
        assert_eq!(json["seed"], 77);
        assert!(json.get("gold_terms").is_none());
        let csv = est.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "estimate,std_error,n_gold,n_target,m_gold,m_target,seed"
        );
        assert!(lines.next().unwrap().ends_with(",2,1,1,4,77"));
    }

    #[test]
    fn standard_error_uses_independent_sums() {
        let est = AideEstimate::from_terms(vec![1.0, 3.0], vec![0.0, 1.0, 2.0], 1, 1, 0);
        let expected = (2.0f64 / 2.0 + 1.0 / 3.0).sqrt();
        assert!((est.std_error - expected).abs() < 1e-15);
        assert_eq!(est.estimate, 3.0);
    }
}
