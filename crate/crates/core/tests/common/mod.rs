#![allow(dead_code)]

use std::sync::Arc;

use aide_core::harness::default_linreg_params;
use aide_core::inference::{linreg_data_tempering, AisSampler};
use aide_core::kernels::{
    AnnealingSchedule, Categorical, FiniteKernel, GaussianRandomWalk, InitKernel,
    MetropolisHastings, Normal1d, Target,
};
use aide_core::model::{
    BimodalParams, BimodalTarget, ConjugateLinReg, DiscreteHmm, HmmParams, TabularModel,
};

/// Two hidden states, three observations.
pub fn small_hmm() -> Arc<DiscreteHmm> {
    Arc::new(
        DiscreteHmm::new(HmmParams {
            initial: vec![0.6, 0.4],
            transition: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            emission: vec![vec![0.9, 0.1], vec![0.25, 0.75]],
            observations: vec![0, 1, 1],
        })
        .unwrap(),
    )
}

pub fn linreg() -> Arc<ConjugateLinReg> {
    Arc::new(ConjugateLinReg::new(default_linreg_params()).unwrap())
}

pub fn linreg_ais() -> AisSampler<nalgebra::DVector<f64>> {
    linreg_data_tempering(linreg(), 5, 0.3, 2).unwrap()
}

pub fn bimodal() -> Arc<BimodalTarget> {
    Arc::new(BimodalTarget::new(BimodalParams::default()).unwrap())
}

/// Five-point target and the nearest-neighbour random-walk proposal on it.
pub fn five_point() -> (Vec<f64>, FiniteKernel) {
    let w = [0.05, 0.1, 0.4, 0.3, 0.15];
    let log_target: Vec<f64> = w.iter().map(|p: &f64| p.ln() + 1.3).collect();
    let n = w.len();
    let rows = (0..n)
        .map(|i| {
            let mut r = vec![0.0; n];
            r[(i + n - 1) % n] += 0.5;
            r[(i + 1) % n] += 0.5;
            r
        })
        .collect();
    (log_target, FiniteKernel::new(rows).unwrap())
}

pub fn five_point_model() -> Arc<TabularModel> {
    Arc::new(TabularModel::new(five_point().0).unwrap())
}

/// Finite AIS chain from uniform to the five-point target.
pub fn five_point_ais(steps: usize) -> AisSampler<usize> {
    let (log_target, proposal) = five_point();
    let init: Arc<dyn InitKernel<usize>> = Arc::new(Categorical::new(vec![0.2; 5]).unwrap());
    let start = Target::from_init(init.clone());
    let end = Target::new(move |x: &usize| log_target[*x]);
    let schedule = AnnealingSchedule::evenly_spaced(&start, &end, steps).unwrap();
    let kernels = (0..steps - 1)
        .map(|t| {
            let table: Vec<f64> = (0..5).map(|x| schedule.target(t).log_density(&x)).collect();
            Arc::new(
                FiniteKernel::metropolis(&table, &proposal)
                    .unwrap()
                    .with_detailed_balance(true),
            ) as _
        })
        .collect();
    AisSampler::new(init, schedule, kernels).unwrap()
}

/// Geometric AIS on a 1D Gaussian target from `N(0, 2^2)`, random-walk MH moves.
pub fn gaussian_ais(log_joint: Target<f64>, steps: usize, mh_steps: usize) -> AisSampler<f64> {
    let init: Arc<dyn InitKernel<f64>> = Arc::new(Normal1d::new(0.0, 2.0).unwrap());
    let schedule =
        AnnealingSchedule::evenly_spaced(&Target::from_init(init.clone()), &log_joint, steps)
            .unwrap();
    let kernels = (0..steps - 1)
        .map(|t| {
            let walk = Arc::new(GaussianRandomWalk::new(0.8).unwrap());
            Arc::new(MetropolisHastings::new(schedule.target(t).clone(), walk, mh_steps).unwrap())
                as _
        })
        .collect();
    AisSampler::new(init, schedule, kernels).unwrap()
}
