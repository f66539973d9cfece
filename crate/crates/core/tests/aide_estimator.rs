mod common;

use std::sync::Arc;

use aide_core::inference::{
    fit_meanfield_gaussian, make_mh_algorithm, AisAlgorithm, AisSampler, ExactDensityAlgorithm,
    InferenceAlgorithm,
};
use aide_core::kernels::{
    AnnealingSchedule, Categorical, FiniteKernel, InitKernel, MvNormal, Normal1d, Target,
};
use aide_core::math::normal_log_pdf;
use aide_core::model::Model;
use aide_core::oracle::{finite_chain_law, symmetric_kl, DiscreteDistribution};
use aide_core::{aide, aide_ais_vs_variational, AideConfig, AideEstimate, Result};
use proptest::prelude::*;

use common::*;

/// `p(x, y) = Z N(x; 1, 0.5^2)` with `log Z = -1.5`.
struct Gaussian1d;

const MU: f64 = 1.0;
const SIGMA: f64 = 0.5;
const LOG_Z: f64 = -1.5;

impl Model for Gaussian1d {
    type Latent = f64;

    fn log_joint(&self, x: &f64) -> Result<f64> {
        Ok(LOG_Z + normal_log_pdf(*x, MU, SIGMA))
    }
}

fn gaussian_ais_algorithm(steps: usize) -> AisAlgorithm<f64, Gaussian1d> {
    let model = Arc::new(Gaussian1d);
    AisAlgorithm::new(
        gaussian_ais(Target::from_model(Arc::clone(&model)), steps, 5),
        model,
    )
}

#[test]
fn specialized_estimator_equals_generic_one_bit_for_bit() {
    let model = linreg();
    let ais = AisAlgorithm::new(linreg_ais(), Arc::clone(&model));
    let post = model.posterior();
    let q = fit_meanfield_gaussian(&post.mean, &post.covariance).unwrap();
    let special = aide_ais_vs_variational(&ais, &q, 300, 200, 17).unwrap();
    let target = ExactDensityAlgorithm::from_init(Arc::new(q), 0.0);
    let generic = aide(&ais, &target, &AideConfig::new(300, 200, 1, 1, 17).unwrap()).unwrap();
    assert_eq!(special, generic);
    assert_eq!(special.estimate.to_bits(), generic.estimate.to_bits());

    let ais = gaussian_ais_algorithm(10);
    let q = Normal1d::new(1.3, 0.6).unwrap();
    let special = aide_ais_vs_variational(&ais, &q, 100, 100, 3).unwrap();
    let generic = aide(
        &ais,
        &ExactDensityAlgorithm::from_init(Arc::new(q), 0.0),
        &AideConfig::new(100, 100, 1, 1, 3).unwrap(),
    )
    .unwrap();
    assert_eq!(special.estimate.to_bits(), generic.estimate.to_bits());
}

#[test]
fn exact_variational_and_exact_single_step_ais_give_zero() {
    let model = linreg();
    let post = model.posterior();
    let exact: Arc<dyn InitKernel<_>> =
        Arc::new(MvNormal::new(post.mean.clone(), post.covariance.clone()).unwrap());
    let schedule =
        AnnealingSchedule::from_targets(vec![Target::from_model(Arc::clone(&model))]).unwrap();
    let ais = AisAlgorithm::new(
        AisSampler::new(Arc::clone(&exact), schedule, vec![]).unwrap(),
        Arc::clone(&model),
    );
    let est = aide_ais_vs_variational(&ais, exact.as_ref(), 200, 200, 1).unwrap();
    for t in est.gold_terms.iter().chain(&est.target_terms) {
        assert!(t.abs() < 1e-9, "{t}");
    }
}

#[test]
fn fine_schedule_ais_recovers_the_closed_form_divergence() {
    let delta = 0.5;
    let q = Normal1d::new(MU + delta, SIGMA).unwrap();
    let truth = delta * delta / (SIGMA * SIGMA);
    let n = 2000;
    let ests: Vec<AideEstimate> = [5, 20, 200]
        .iter()
        .map(|&t| aide_ais_vs_variational(&gaussian_ais_algorithm(t), &q, n, n, 5).unwrap())
        .collect();
    let fine = &ests[2];
    assert!(
        (fine.estimate - truth).abs() <= 3.0 * fine.std_error,
        "{} +- {} vs {truth}",
        fine.estimate,
        fine.std_error
    );
    for w in ests.windows(2) {
        assert!(w[1].estimate <= w[0].estimate + 3.0 * (w[0].std_error + w[1].std_error));
    }
    assert!(ests[0].estimate > ests[2].estimate);
}

/// MH on the five-point target from a uniform start, and its exact output law.
fn five_point_mh(burn_in: usize) -> (impl InferenceAlgorithm<usize>, DiscreteDistribution<usize>) {
    let (log_target, proposal) = five_point();
    let kernel = FiniteKernel::metropolis(&log_target, &proposal)
        .unwrap()
        .with_detailed_balance(true);
    let law = finite_chain_law(&[0.2; 5], &kernel, burn_in).unwrap();
    let init: Arc<dyn InitKernel<usize>> = Arc::new(Categorical::new(vec![0.2; 5]).unwrap());
    let alg = make_mh_algorithm(init, Arc::new(kernel), burn_in, five_point_model()).unwrap();
    (
        alg,
        DiscreteDistribution::new((0..5).collect(), law).unwrap(),
    )
}

#[test]
fn mh_estimates_upper_bound_the_enumerated_divergence() {
    let model = five_point_model();
    let gold = aide_core::inference::exact_posterior_algorithm(Arc::clone(&model));
    let post = DiscreteDistribution::new((0..5).collect(), model.posterior().to_vec()).unwrap();
    for burn_in in [0, 1, 3] {
        let (mh, law) = five_point_mh(burn_in);
        let truth = symmetric_kl(&post, &law).unwrap();
        for m in [1, 10] {
            let est = aide(&gold, &mh, &AideConfig::new(5000, 5000, 1, m, 2).unwrap()).unwrap();
            assert!(
                est.estimate >= truth - 3.0 * est.std_error,
                "burn-in {burn_in}, M {m}: {} < {truth}",
                est.estimate
            );
        }
    }
}

fn gaussian(mean: f64, std: f64) -> ExactDensityAlgorithm<f64> {
    ExactDensityAlgorithm::from_init(Arc::new(Normal1d::new(mean, std).unwrap()), 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn self_comparison_of_an_empty_trace_algorithm_is_exactly_zero(
        n_gold in 1usize..20, n_target in 1usize..20, m_gold in 1usize..4, m_target in 1usize..4, seed in any::<u64>(),
    ) {
        let a = gaussian(0.3, 1.2);
        let est = aide(&a, &a, &AideConfig::new(n_gold, n_target, m_gold, m_target, seed).unwrap()).unwrap();
        prop_assert_eq!(est.estimate, 0.0);
        prop_assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn estimate_and_error_are_the_documented_reductions(
        n_gold in 2usize..30, n_target in 2usize..30, m_target in 1usize..4, seed in any::<u64>(),
    ) {
        let gold = gaussian(0.0, 1.0);
        let target = gaussian(0.7, 1.4);
        let est = aide(&gold, &target, &AideConfig::new(n_gold, n_target, 1, m_target, seed).unwrap()).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let (g, t) = (&est.gold_terms, &est.target_terms);
        prop_assert!((est.estimate - (mean(g) + mean(t))).abs() < 1e-12);
        let se = (var(g) / g.len() as f64 + var(t) / t.len() as f64).sqrt();
        prop_assert!((est.std_error - se).abs() < 1e-12);
        prop_assert!(est.std_error >= 0.0);
    }

    #[test]
    fn result_does_not_depend_on_thread_count(seed in any::<u64>(), threads in 2usize..5) {
        let gold = gaussian(0.0, 1.0);
        let target = gaussian(0.4, 0.9);
        let cfg = AideConfig::new(64, 48, 2, 3, seed).unwrap();
        let run = |n: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| aide(&gold, &target, &cfg).unwrap())
        };
        let (a, b) = (run(1), run(threads));
        prop_assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn swapping_twice_is_the_identity(n_gold in 1usize..50, n_target in 1usize..50, m_gold in 1usize..9, m_target in 1usize..9) {
        let cfg = AideConfig::new(n_gold, n_target, m_gold, m_target, 0).unwrap();
        let s = cfg.swapped();
        prop_assert_eq!((s.n_gold, s.n_target, s.m_gold, s.m_target), (n_target, n_gold, m_target, m_gold));
        prop_assert_eq!(s.swapped(), cfg);
    }
}
