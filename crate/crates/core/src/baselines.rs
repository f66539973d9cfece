//! Diagnostics that AIDE is compared against: evidence estimates and probe
//! function expectations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::inference::InferenceAlgorithm;
use crate::math::{mean, std_error};
use crate::rng::stream_rng;

/// Scalar function of the latent state.
pub struct ProbeFunction<X> {
    eval: Arc<dyn Fn(&X) -> f64 + Send + Sync>,
}

impl<X> Clone for ProbeFunction<X> {
    fn clone(&self) -> Self {
        Self {
            eval: Arc::clone(&self.eval),
        }
    }
}

impl<X> ProbeFunction<X> {
    pub fn new(eval: impl Fn(&X) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
        }
    }

    pub fn eval(&self, x: &X) -> f64 {
        (self.eval)(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub gold_value: f64,
    pub target_value: f64,
    pub gold_se: f64,
    pub target_se: f64,
    pub n_runs: usize,
}

impl DiagnosticReport {
    pub fn gap(&self) -> f64 {
        self.target_value - self.gold_value
    }
}

/// Stream of run `n` for side `side` (0 gold, 1 target) in the diagnostics.
fn diag_stream(seed: u64, side: u64, n: usize) -> crate::rng::SimRng {
    stream_rng(seed, 2 * n as u64 + side)
}

fn evidence_samples<X>(
    alg: &dyn InferenceAlgorithm<X>,
    n: usize,
    seed: u64,
    side: u64,
) -> Result<Vec<f64>> {
    let out: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            alg.simulate(&mut diag_stream(seed, side, i))?
                .log_ml
                .ok_or_else(|| {
                    Error::Unsupported("algorithm does not estimate the marginal likelihood".into())
                })
        })
        .collect();
    out.into_iter().collect()
}

/// Mean and standard error of one algorithm's log evidence estimates over `n` runs.
pub fn log_evidence_summary<X>(
    alg: &dyn InferenceAlgorithm<X>,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::invalid("need at least one run"));
    }
    let v = evidence_samples(alg, n, seed, 0)?;
    Ok((mean(&v), std_error(&v)))
}

/// Mean log evidence estimate of each algorithm over `n` runs.
pub fn lml_compare<X>(
    gold: &dyn InferenceAlgorithm<X>,
    target: &dyn InferenceAlgorithm<X>,
    n: usize,
    seed: u64,
) -> Result<DiagnosticReport> {
    if n == 0 {
        return Err(Error::invalid("need at least one run"));
    }
    let g = evidence_samples(gold, n, seed, 0)?;
    let t = evidence_samples(target, n, seed, 1)?;
    Ok(DiagnosticReport {
        gold_value: mean(&g),
        target_value: mean(&t),
        gold_se: std_error(&g),
        target_se: std_error(&t),
        n_runs: n,
    })
}

/// Sample mean and standard error of `probe` over `n` outputs of `alg`.
pub fn probe_expectation<X>(
    alg: &dyn InferenceAlgorithm<X>,
    probe: &ProbeFunction<X>,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::invalid("probe expectation needs at least two runs"));
    }
    let out: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| Ok(probe.eval(&alg.simulate(&mut stream_rng(seed, i as u64))?.output)))
        .collect();
    let values = out.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((mean(&values), std_error(&values)))
}

/// Gold and target probe expectations side by side.
pub fn probe_compare<X>(
    gold: &dyn InferenceAlgorithm<X>,
    target: &dyn InferenceAlgorithm<X>,
    probe: &ProbeFunction<X>,
    n: usize,
    seed: u64,
) -> Result<DiagnosticReport> {
    let (gold_value, gold_se) = probe_expectation(gold, probe, n, seed)?;
    let (target_value, target_se) = probe_expectation(target, probe, n, seed.wrapping_add(1))?;
    Ok(DiagnosticReport {
        gold_value,
        target_value,
        gold_se,
        target_se,
        n_runs: n,
    })
}
