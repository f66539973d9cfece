//! Benchmark fixtures shared by the criterion benches.

use std::sync::Arc;

use aide_core::harness::default_hmm_params;
use aide_core::inference::{
    exact_posterior_algorithm, ExactDensityAlgorithm, HmmProposal, HmmSmc, SmcAlgorithm, SmcSpec,
};
use aide_core::model::DiscreteHmm;

pub fn hmm() -> Arc<DiscreteHmm> {
    Arc::new(DiscreteHmm::new(default_hmm_params()).expect("default parameters are valid"))
}

pub fn hmm_smc(proposal: HmmProposal, particles: usize) -> SmcAlgorithm<HmmSmc, DiscreteHmm> {
    let model = hmm();
    let spec = SmcSpec::new(
        Arc::new(HmmSmc::new(Arc::clone(&model), proposal)),
        particles,
    )
    .expect("particles > 0");
    SmcAlgorithm::new(spec, model)
}

pub fn hmm_exact() -> ExactDensityAlgorithm<Vec<usize>> {
    exact_posterior_algorithm(hmm())
}
