use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::{check_finite_positive, check_grid, check_positive, settings_string};
use crate::aide::{aide, AideConfig};
use crate::error::{Error, Result};
use crate::inference::{
    exact_posterior_algorithm, fit_meanfield_gaussian, linreg_data_tempering, make_mh_algorithm,
    ExactDensityAlgorithm, InferenceAlgorithm, SmcAlgorithm, SmcSpec,
};
use crate::kernels::{
    FnInit, GaussianRandomWalk, InitKernel, MarkovKernel, MetropolisHastings, Target,
};
use crate::model::{ConjugateLinReg, LinRegParams};
use crate::oracle::gaussian_symmetric_kl;

/// Two weights (intercept and slope), ten rows with uncentered inputs so the
/// posterior is strongly correlated.
pub fn default_linreg_params() -> LinRegParams {
    let noise = [
        0.12, -0.31, 0.05, 0.22, -0.18, 0.09, -0.04, 0.27, -0.15, 0.03,
    ];
    let xs: Vec<f64> = (0..10).map(|i| 0.5 + 1.5 * i as f64 / 9.0).collect();
    LinRegParams {
        prior_mean: vec![0.0, 0.0],
        prior_precision: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        noise_variance: 0.25,
        design: xs.iter().map(|&x| vec![1.0, x]).collect(),
        response: xs
            .iter()
            .zip(noise)
            .map(|(&x, e)| 0.5 + 1.5 * x + e)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinregSweepConfig {
    pub model: LinRegParams,
    pub n_gold: usize,
    pub n_target: usize,
    /// Include the gold standard measured against itself.
    pub include_exact: bool,
    pub smc_particles: Vec<usize>,
    pub smc_batches: usize,
    pub smc_step_size: f64,
    pub smc_mh_steps: usize,
    pub smc_m_target: Vec<usize>,
    pub mh_burn_in: Vec<usize>,
    pub mh_step_size: f64,
    pub mh_m_target: Vec<usize>,
    pub variational: bool,
}

impl Default for LinregSweepConfig {
    fn default() -> Self {
        Self {
            model: default_linreg_params(),
            n_gold: 1000,
            n_target: 1000,
            include_exact: true,
            smc_particles: vec![1, 4, 16, 64],
            smc_batches: 10,
            smc_step_size: 0.3,
            smc_mh_steps: 2,
            smc_m_target: vec![1],
            mh_burn_in: vec![0, 2, 10, 50],
            mh_step_size: 0.3,
            mh_m_target: vec![1, 10, 100],
            variational: true,
        }
    }
}

impl LinregSweepConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        ConjugateLinReg::new(self.model.clone())
            .map_err(|e| Error::config(format!("{path}.model"), e.to_string()))?;
        check_positive(&format!("{path}.n_gold"), self.n_gold)?;
        check_positive(&format!("{path}.n_target"), self.n_target)?;
        check_grid(&format!("{path}.smc_particles"), &self.smc_particles)?;
        check_positive(&format!("{path}.smc_batches"), self.smc_batches)?;
        check_finite_positive(&format!("{path}.smc_step_size"), self.smc_step_size)?;
        check_positive(&format!("{path}.smc_mh_steps"), self.smc_mh_steps)?;
        check_grid(&format!("{path}.smc_m_target"), &self.smc_m_target)?;
        if self.mh_burn_in.is_empty() {
            return Err(Error::config(
                format!("{path}.mh_burn_in"),
                "grid must not be empty",
            ));
        }
        check_finite_positive(&format!("{path}.mh_step_size"), self.mh_step_size)?;
        check_grid(&format!("{path}.mh_m_target"), &self.mh_m_target)?;
        Ok(())
    }
}

/// One estimate. `parameter` is the particle count for `smc` and the burn-in
/// for `mh`; `reference` is the exact divergence where it is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinregRow {
    pub algorithm: String,
    pub parameter_name: String,
    pub parameter: usize,
    pub n_gold: usize,
    pub n_target: usize,
    pub m_gold: usize,
    pub m_target: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub reference: Option<f64>,
    pub seed: u64,
    pub settings: String,
}

#[derive(Debug, Clone, Copy)]
enum Cell {
    Exact,
    Smc { particles: usize, m_target: usize },
    Mh { burn_in: usize, m_target: usize },
    Variational,
}

fn cells(cfg: &LinregSweepConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    if cfg.include_exact {
        out.push(Cell::Exact);
    }
    for &particles in &cfg.smc_particles {
        for &m_target in &cfg.smc_m_target {
            out.push(Cell::Smc {
                particles,
                m_target,
            });
        }
    }
    for &burn_in in &cfg.mh_burn_in {
        for &m_target in &cfg.mh_m_target {
            out.push(Cell::Mh { burn_in, m_target });
        }
    }
    if cfg.variational {
        out.push(Cell::Variational);
    }
    out
}

/// Exact gold versus SMC, Metropolis-Hastings and mean-field variational
/// targets on conjugate linear regression.
pub fn run_linreg_sweep(cfg: &LinregSweepConfig, seed: u64) -> Result<Vec<LinregRow>> {
    cfg.validate("linreg")?;
    let model = Arc::new(ConjugateLinReg::new(cfg.model.clone())?);
    let gold = exact_posterior_algorithm(Arc::clone(&model));
    let post = model.posterior().clone();
    let settings = settings_string(&[
        ("smc_batches", cfg.smc_batches.to_string()),
        ("smc_step_size", cfg.smc_step_size.to_string()),
        ("smc_mh_steps", cfg.smc_mh_steps.to_string()),
        ("mh_step_size", cfg.mh_step_size.to_string()),
        ("mh_init", "prior".to_string()),
    ]);

    let run_cell = |cell: &Cell| -> Result<LinregRow> {
        let (name, pname, param, m_target, reference, target): (
            &str,
            &str,
            usize,
            usize,
            Option<f64>,
            Box<dyn InferenceAlgorithm<DVector<f64>>>,
        ) = match *cell {
            Cell::Exact => ("exact", "none", 0, 1, Some(0.0), Box::new(gold.clone())),
            Cell::Smc {
                particles,
                m_target,
            } => {
                let sampler = linreg_data_tempering(
                    Arc::clone(&model),
                    cfg.smc_batches,
                    cfg.smc_step_size,
                    cfg.smc_mh_steps,
                )?;
                let spec = SmcSpec::new(Arc::new(sampler), particles)?;
                (
                    "smc",
                    "particles",
                    particles,
                    m_target,
                    None,
                    Box::new(SmcAlgorithm::new(spec, Arc::clone(&model))),
                )
            }
            Cell::Mh { burn_in, m_target } => {
                let (ms, md) = (Arc::clone(&model), Arc::clone(&model));
                let init: Arc<dyn InitKernel<DVector<f64>>> = Arc::new(FnInit::new(
                    move |rng| ms.sample_prior(rng),
                    move |x| md.log_prior(x),
                ));
                let walk: Arc<dyn MarkovKernel<DVector<f64>>> =
                    Arc::new(GaussianRandomWalk::new(cfg.mh_step_size)?);
                let kernel = Arc::new(MetropolisHastings::new(
                    Target::from_model(Arc::clone(&model)),
                    walk,
                    1,
                )?);
                let alg = make_mh_algorithm(init, kernel, burn_in, Arc::clone(&model))?;
                ("mh", "burn_in", burn_in, m_target, None, Box::new(alg))
            }
            Cell::Variational => {
                let q = fit_meanfield_gaussian(&post.mean, &post.covariance)?;
                let truth = gaussian_symmetric_kl(
                    &post.mean,
                    &post.covariance,
                    &DVector::from_vec(q.mean.clone()),
                    &q.covariance(),
                )?;
                (
                    "variational",
                    "none",
                    0,
                    1,
                    Some(truth),
                    Box::new(ExactDensityAlgorithm::from_init(Arc::new(q), 0.0)),
                )
            }
        };
        let aide_cfg = AideConfig::new(cfg.n_gold, cfg.n_target, 1, m_target, seed)?;
        let est = aide(&gold, target.as_ref(), &aide_cfg)?;
        Ok(LinregRow {
            algorithm: name.to_string(),
            parameter_name: pname.to_string(),
            parameter: param,
            n_gold: est.n_gold,
            n_target: est.n_target,
            m_gold: est.m_gold,
            m_target: est.m_target,
            estimate: est.estimate,
            std_error: est.std_error,
            reference,
            seed,
            settings: settings.clone(),
        })
    };

    let rows: Vec<Result<LinregRow>> = cells(cfg).par_iter().map(run_cell).collect();
    rows.into_iter().collect()
}
