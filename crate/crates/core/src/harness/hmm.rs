use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::{check_grid, check_positive};
use crate::aide::{aide, AideConfig};
use crate::baselines::{log_evidence_summary, probe_expectation, ProbeFunction};
use crate::error::{Error, Result};
use crate::inference::{
    exact_posterior_algorithm, HmmProposal, HmmSmc, InferenceAlgorithm, SmcAlgorithm, SmcSpec,
};
use crate::model::{DiscreteHmm, ExactPosterior, HmmParams};
use crate::rng::stream_rng;

/// Four sticky states, four symbols each favoring its own state, and ten
/// observations simulated from the model with a fixed seed.
pub fn default_hmm_params() -> HmmParams {
    let n = 4;
    let transition: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.7 } else { 0.1 }).collect())
        .collect();
    let emission: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.55 } else { 0.15 }).collect())
        .collect();
    let initial = vec![0.25; n];
    let (_, observations) = DiscreteHmm::simulate(
        &initial,
        &transition,
        &emission,
        10,
        &mut stream_rng(2017, 0),
    );
    HmmParams {
        initial,
        transition,
        emission,
        observations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldKind {
    /// Forward filtering, backward sampling.
    Exact,
    /// SMC with the optimal proposal and many particles.
    Smc,
}

impl std::fmt::Display for GoldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GoldKind::Exact => "exact",
            GoldKind::Smc => "smc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmSweepConfig {
    pub model: HmmParams,
    pub n_gold: usize,
    pub n_target: usize,
    pub proposals: Vec<HmmProposal>,
    pub particles: Vec<usize>,
    pub m_target: Vec<usize>,
    pub golds: Vec<GoldKind>,
    pub gold_particles: usize,
    /// Include the exact posterior as a target.
    pub include_exact: bool,
}

impl Default for HmmSweepConfig {
    fn default() -> Self {
        Self {
            model: default_hmm_params(),
            n_gold: 200,
            n_target: 200,
            proposals: vec![HmmProposal::Prior, HmmProposal::Optimal],
            particles: vec![1, 10, 100],
            m_target: vec![1, 10],
            golds: vec![GoldKind::Exact, GoldKind::Smc],
            gold_particles: 1000,
            include_exact: true,
        }
    }
}

impl HmmSweepConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        DiscreteHmm::new(self.model.clone())
            .map_err(|e| Error::config(format!("{path}.model"), e.to_string()))?;
        check_positive(&format!("{path}.n_gold"), self.n_gold)?;
        check_positive(&format!("{path}.n_target"), self.n_target)?;
        check_grid(&format!("{path}.particles"), &self.particles)?;
        check_grid(&format!("{path}.m_target"), &self.m_target)?;
        check_positive(&format!("{path}.gold_particles"), self.gold_particles)?;
        if self.golds.is_empty() {
            return Err(Error::config(
                format!("{path}.golds"),
                "must list at least one gold standard",
            ));
        }
        if self.proposals.is_empty() && !self.include_exact {
            return Err(Error::config(
                format!("{path}.proposals"),
                "no targets to evaluate",
            ));
        }
        Ok(())
    }
}

/// One estimate of a target against one gold standard. `proposal` is
/// `exact` for the exact posterior as target, with `particles` 0.
/// `lml_*` summarize the target's evidence estimates and `probe_*` its
/// probability that the first state is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmRow {
    pub proposal: String,
    pub particles: usize,
    pub gold: GoldKind,
    pub gold_particles: usize,
    pub n_gold: usize,
    pub n_target: usize,
    pub m_gold: usize,
    pub m_target: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub lml_mean: Option<f64>,
    pub lml_se: Option<f64>,
    pub true_log_evidence: f64,
    pub probe_mean: f64,
    pub probe_se: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    /// `None` is the exact posterior.
    proposal: Option<HmmProposal>,
    particles: usize,
    m_target: usize,
    gold: GoldKind,
}

fn cells(cfg: &HmmSweepConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    if cfg.include_exact {
        for &gold in &cfg.golds {
            out.push(Cell {
                proposal: None,
                particles: 0,
                m_target: 1,
                gold,
            });
        }
    }
    for &proposal in &cfg.proposals {
        for &particles in &cfg.particles {
            for &m_target in &cfg.m_target {
                for &gold in &cfg.golds {
                    out.push(Cell {
                        proposal: Some(proposal),
                        particles,
                        m_target,
                        gold,
                    });
                }
            }
        }
    }
    out
}

type Alg = Arc<dyn InferenceAlgorithm<Vec<usize>>>;

fn smc(model: &Arc<DiscreteHmm>, proposal: HmmProposal, particles: usize) -> Result<Alg> {
    let spec = SmcSpec::new(
        Arc::new(HmmSmc::new(Arc::clone(model), proposal)),
        particles,
    )?;
    Ok(Arc::new(SmcAlgorithm::new(spec, Arc::clone(model))))
}

/// Particle filters with prior and optimal proposals against an exact gold
/// standard and an SMC gold standard.
pub fn run_hmm_sweep(cfg: &HmmSweepConfig, seed: u64) -> Result<Vec<HmmRow>> {
    cfg.validate("hmm")?;
    let model = Arc::new(DiscreteHmm::new(cfg.model.clone())?);
    let exact: Alg = Arc::new(exact_posterior_algorithm(Arc::clone(&model)));
    let smc_gold = smc(&model, HmmProposal::Optimal, cfg.gold_particles)?;
    let probe = ProbeFunction::new(|x: &Vec<usize>| if x[0] == 0 { 1.0 } else { 0.0 });
    let n_diag = cfg.n_target.max(2);

    let run_cell = |cell: &Cell| -> Result<HmmRow> {
        let target = match cell.proposal {
            None => Arc::clone(&exact),
            Some(p) => smc(&model, p, cell.particles)?,
        };
        let (gold, gold_particles) = match cell.gold {
            GoldKind::Exact => (Arc::clone(&exact), 0),
            GoldKind::Smc => (Arc::clone(&smc_gold), cfg.gold_particles),
        };
        let est = aide(
            gold.as_ref(),
            target.as_ref(),
            &AideConfig::new(cfg.n_gold, cfg.n_target, 1, cell.m_target, seed)?,
        )?;
        let lml = match cell.proposal {
            None => None,
            Some(_) => Some(log_evidence_summary(target.as_ref(), n_diag, seed)?),
        };
        let (probe_mean, probe_se) = probe_expectation(target.as_ref(), &probe, n_diag, seed)?;
        Ok(HmmRow {
            proposal: cell.proposal.map_or("exact".to_string(), |p| p.to_string()),
            particles: cell.particles,
            gold: cell.gold,
            gold_particles,
            n_gold: est.n_gold,
            n_target: est.n_target,
            m_gold: est.m_gold,
            m_target: est.m_target,
            estimate: est.estimate,
            std_error: est.std_error,
            lml_mean: lml.map(|r| r.0),
            lml_se: lml.map(|r| r.1),
            true_log_evidence: model.log_marginal(),
            probe_mean,
            probe_se,
            seed,
        })
    };

    let rows: Vec<Result<HmmRow>> = cells(cfg).par_iter().map(run_cell).collect();
    rows.into_iter().collect()
}
