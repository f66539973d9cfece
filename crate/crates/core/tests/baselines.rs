mod common;

use std::sync::Arc;

use aide_core::baselines::{lml_compare, probe_compare, probe_expectation, ProbeFunction};
use aide_core::inference::{
    exact_posterior_algorithm, FiniteSmcProblem, HmmProposal, HmmSmc, SirAlgorithm, SmcAlgorithm,
    SmcSpec,
};
use aide_core::kernels::{Categorical, InitKernel, Normal1d};
use aide_core::model::{ExactPosterior, TabularModel};
use aide_core::oracle::hmm_posterior_enumeration;
use aide_core::Error;

use common::*;

#[test]
fn single_step_smc_with_exact_proposal_reports_exact_evidence() {
    let weights = [0.2, 0.5, 0.3];
    let log_joint: Vec<f64> = weights.iter().map(|w: &f64| w.ln() - 2.0).collect();
    let model = Arc::new(TabularModel::new(log_joint.clone()).unwrap());
    let problem = FiniteSmcProblem::new(
        Categorical::new(weights.to_vec()).unwrap(),
        vec![log_joint],
        vec![],
        vec![],
    )
    .unwrap();
    let alg = SmcAlgorithm::new(
        SmcSpec::new(Arc::new(problem), 4).unwrap(),
        Arc::clone(&model),
    );
    let report = lml_compare(&alg, &alg, 500, 1).unwrap();
    assert!((report.gold_value + 2.0).abs() < 1e-12);
    assert!((report.target_value + 2.0).abs() < 1e-12);
    assert!(report.gold_se < 1e-12 && report.target_se < 1e-12);
}

#[test]
fn large_smc_gold_evidence_matches_forward_algorithm() {
    let hmm = small_hmm();
    let gold = SmcAlgorithm::new(
        SmcSpec::new(
            Arc::new(HmmSmc::new(Arc::clone(&hmm), HmmProposal::Optimal)),
            500,
        )
        .unwrap(),
        Arc::clone(&hmm),
    );
    let target = SmcAlgorithm::new(
        SmcSpec::new(
            Arc::new(HmmSmc::new(Arc::clone(&hmm), HmmProposal::Prior)),
            2,
        )
        .unwrap(),
        Arc::clone(&hmm),
    );
    let report = lml_compare(&gold, &target, 400, 2).unwrap();
    assert!((report.gold_value - hmm.log_marginal()).abs() <= 3.0 * report.gold_se.max(1e-4));
    // Jensen: the mean log estimate sits below log p(y) for a small particle count
    assert!(report.gap() < 0.0);

    let other = SmcAlgorithm::new(
        SmcSpec::new(
            Arc::new(HmmSmc::new(Arc::clone(&hmm), HmmProposal::Optimal)),
            7,
        )
        .unwrap(),
        Arc::clone(&hmm),
    );
    let again = lml_compare(&gold, &other, 400, 2).unwrap();
    assert_eq!(report.gold_value.to_bits(), again.gold_value.to_bits());
}

#[test]
fn evidence_comparison_needs_an_evidence_estimate() {
    let hmm = small_hmm();
    let exact = exact_posterior_algorithm(Arc::clone(&hmm));
    assert!(matches!(
        lml_compare(&exact, &exact, 10, 0),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn constant_probe_has_zero_error() {
    let alg = exact_posterior_algorithm(small_hmm());
    let (m, se) =
        probe_expectation(&alg, &ProbeFunction::new(|_: &Vec<usize>| 2.5), 50, 0).unwrap();
    assert_eq!((m, se), (2.5, 0.0));
    assert!(probe_expectation(&alg, &ProbeFunction::new(|_: &Vec<usize>| 0.0), 1, 0).is_err());
}

#[test]
fn indicator_probe_matches_enumerated_marginal() {
    let hmm = small_hmm();
    let post = hmm_posterior_enumeration(&hmm).unwrap();
    let marginal: f64 = post
        .support()
        .iter()
        .zip(post.probs())
        .filter(|(x, _)| x[0] == 0)
        .map(|(_, p)| p)
        .sum();
    let alg = exact_posterior_algorithm(Arc::clone(&hmm));
    let (m, se) = probe_expectation(
        &alg,
        &ProbeFunction::new(|x: &Vec<usize>| (x[0] == 0) as u8 as f64),
        20_000,
        4,
    )
    .unwrap();
    assert!(
        (m - marginal).abs() <= 3.0 * se,
        "{m} +- {se} vs {marginal}"
    );
}

#[test]
fn probe_error_scales_as_inverse_root_n() {
    let alg = exact_posterior_algorithm(small_hmm());
    let probe = ProbeFunction::new(|x: &Vec<usize>| x.iter().sum::<usize>() as f64);
    let (_, small) = probe_expectation(&alg, &probe, 100, 5).unwrap();
    let (_, large) = probe_expectation(&alg, &probe, 10_000, 5).unwrap();
    let ratio = small / large;
    assert!((5.0..=20.0).contains(&ratio), "{ratio}");
}

#[test]
fn sign_probe_separates_offset_proposal_from_broad_one() {
    let model = bimodal();
    let gold = exact_posterior_algorithm(Arc::clone(&model));
    let probe = ProbeFunction::new(|x: &f64| (*x < 0.0) as u8 as f64);
    let truth = model.mass_below(0.0);
    let sir = |mean: f64, std: f64| {
        let q: Arc<dyn InitKernel<f64>> = Arc::new(Normal1d::new(mean, std).unwrap());
        SirAlgorithm::new(q, Arc::clone(&model), 1024).unwrap()
    };
    let broad = probe_compare(&gold, &sir(0.0, 5.0), &probe, 4000, 6).unwrap();
    let offset = probe_compare(&gold, &sir(2.5, 1.0), &probe, 4000, 6).unwrap();
    assert!((broad.gold_value - truth).abs() <= 3.0 * broad.gold_se);
    assert!(
        broad.gap().abs() <= 3.0 * (broad.gold_se + broad.target_se),
        "{broad:?}"
    );
    assert!(
        offset.gap().abs() > 10.0 * (offset.gold_se + offset.target_se),
        "{offset:?}"
    );
}
