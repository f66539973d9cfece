use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::{check_finite_positive, check_grid, check_positive};
use crate::aide::{aide, AideConfig};
use crate::baselines::{log_evidence_summary, probe_expectation, ProbeFunction};
use crate::error::{Error, Result};
use crate::inference::{exact_posterior_algorithm, SirProblem, SmcAlgorithm, SmcSpec};
use crate::kernels::{InitKernel, Normal1d, Target};
use crate::model::{BimodalParams, BimodalTarget, ExactPosterior};

/// Gaussian importance proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalSpec {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BimodalConfig {
    pub target: BimodalParams,
    pub proposals: Vec<ProposalSpec>,
    pub particles: Vec<usize>,
    pub n_gold: usize,
    pub n_target: usize,
    pub m_target: usize,
    /// Runs used for the evidence and probe summaries.
    pub n_diagnostic: usize,
}

impl Default for BimodalConfig {
    fn default() -> Self {
        Self {
            target: BimodalParams::default(),
            proposals: vec![
                ProposalSpec {
                    name: "broad".into(),
                    mean: 0.0,
                    std: 5.0,
                },
                ProposalSpec {
                    name: "offset".into(),
                    mean: 2.5,
                    std: 1.0,
                },
            ],
            particles: vec![1, 4, 16, 64, 256],
            n_gold: 1000,
            n_target: 1000,
            m_target: 1,
            n_diagnostic: 1000,
        }
    }
}

impl BimodalConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        BimodalTarget::new(self.target)
            .map_err(|e| Error::config(format!("{path}.target"), e.to_string()))?;
        if self.proposals.is_empty() {
            return Err(Error::config(
                format!("{path}.proposals"),
                "must list at least one proposal",
            ));
        }
        for (i, p) in self.proposals.iter().enumerate() {
            check_finite_positive(&format!("{path}.proposals[{i}].std"), p.std)?;
            if !p.mean.is_finite() {
                return Err(Error::config(
                    format!("{path}.proposals[{i}].mean"),
                    "must be finite",
                ));
            }
        }
        check_grid(&format!("{path}.particles"), &self.particles)?;
        check_positive(&format!("{path}.n_gold"), self.n_gold)?;
        check_positive(&format!("{path}.n_target"), self.n_target)?;
        check_positive(&format!("{path}.m_target"), self.m_target)?;
        if self.n_diagnostic < 2 {
            return Err(Error::config(
                format!("{path}.n_diagnostic"),
                "must be at least 2",
            ));
        }
        Ok(())
    }
}

/// Importance sampling with resampling against the exact mixture sampler.
/// `probe_*` is the target's probability of `x < 0`, the left mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimodalRow {
    pub proposal: String,
    pub proposal_mean: f64,
    pub proposal_std: f64,
    pub particles: usize,
    pub n_gold: usize,
    pub n_target: usize,
    pub m_gold: usize,
    pub m_target: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub lml_mean: f64,
    pub lml_se: f64,
    pub true_log_evidence: f64,
    pub probe_mean: f64,
    pub probe_se: f64,
    pub gold_probe: f64,
    pub seed: u64,
}

/// The SIR algorithm for one proposal and particle count.
pub(crate) fn sir_algorithm(
    model: &Arc<BimodalTarget>,
    proposal: &ProposalSpec,
    particles: usize,
) -> Result<SmcAlgorithm<SirProblem<f64>, BimodalTarget>> {
    let q: Arc<dyn InitKernel<f64>> = Arc::new(Normal1d::new(proposal.mean, proposal.std)?);
    let problem = SirProblem::new(q, Target::from_model(Arc::clone(model)));
    Ok(SmcAlgorithm::new(
        SmcSpec::new(Arc::new(problem), particles)?,
        Arc::clone(model),
    ))
}

/// AIDE and evidence estimates for each proposal and particle count.
pub fn run_bimodal(cfg: &BimodalConfig, seed: u64) -> Result<Vec<BimodalRow>> {
    cfg.validate("bimodal")?;
    let model = Arc::new(BimodalTarget::new(cfg.target)?);
    let gold = exact_posterior_algorithm(Arc::clone(&model));
    let probe = ProbeFunction::new(|x: &f64| if *x < 0.0 { 1.0 } else { 0.0 });
    let gold_probe = model.mass_below(0.0);

    let grid: Vec<(&ProposalSpec, usize)> = cfg
        .proposals
        .iter()
        .flat_map(|p| cfg.particles.iter().map(move |&n| (p, n)))
        .collect();
    let rows: Vec<Result<BimodalRow>> = grid
        .par_iter()
        .map(|&(proposal, particles)| {
            let target = sir_algorithm(&model, proposal, particles)?;
            let est = aide(
                &gold,
                &target,
                &AideConfig::new(cfg.n_gold, cfg.n_target, 1, cfg.m_target, seed)?,
            )?;
            let (lml_mean, lml_se) = log_evidence_summary(&target, cfg.n_diagnostic, seed)?;
            let (probe_mean, probe_se) =
                probe_expectation(&target, &probe, cfg.n_diagnostic, seed)?;
            Ok(BimodalRow {
                proposal: proposal.name.clone(),
                proposal_mean: proposal.mean,
                proposal_std: proposal.std,
                particles,
                n_gold: est.n_gold,
                n_target: est.n_target,
                m_gold: est.m_gold,
                m_target: est.m_target,
                estimate: est.estimate,
                std_error: est.std_error,
                lml_mean,
                lml_se,
                true_log_evidence: model.log_marginal(),
                probe_mean,
                probe_se,
                gold_probe,
                seed,
            })
        })
        .collect();
    rows.into_iter().collect()
}
