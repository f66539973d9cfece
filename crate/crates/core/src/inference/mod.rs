//! Inference algorithms and their meta-inference samplers.

mod ais;
mod algorithm;
mod problems;
mod sir;
mod smc;
mod variational;

pub use ais::{AisRun, AisSampler};
pub use algorithm::{
    exact_posterior_algorithm, make_exact_density_algorithm, make_mh_algorithm, make_smc_algorithm,
    AisAlgorithm, ExactDensityAlgorithm, InferenceAlgorithm, MetaSimulation, Simulation,
    SirAlgorithm, SmcAlgorithm,
};
pub use problems::{
    linreg_data_tempering, two_point_two_step, FiniteSmcProblem, HmmProposal, HmmSmc, SirProblem,
};
pub use sir::{sir_meta, sir_run, SirRun};
pub use smc::{
    conditional_smc, log_ml_from_log_weights, recompute_log_weights, smc_log_xi, smc_run,
    SmcProblem, SmcRunResult, SmcSpec, Trace,
};
pub use variational::{fit_meanfield_gaussian, MeanFieldGaussian};
