use serde::{Deserialize, Serialize};

use super::{ExactPosterior, Model};
use crate::error::{Error, Result};
use crate::math::sample_categorical;
use crate::rng::SimRng;

const ROW_TOL: f64 = 1e-12;

/// Raw HMM parameters as they appear in config files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HmmParams {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<f64>>,
    pub observations: Vec<usize>,
}

/// Discrete hidden Markov model with a fixed observation sequence.
///
/// Latent values are state sequences; `x[t]` is the state at step `t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "HmmParams", into = "HmmParams")]
pub struct DiscreteHmm {
    params: HmmParams,
    log_initial: Vec<f64>,
    log_transition: Vec<Vec<f64>>,
    log_emission: Vec<Vec<f64>>,
    forward: HmmForward,
}

/// Output of the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmForward {
    pub log_evidence: f64,
    /// `p(x_t | y_1..y_t)` for each step.
    pub filtering: Vec<Vec<f64>>,
}

fn check_stochastic(name: &str, rows: &[Vec<f64>], width: usize) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::invalid(format!(
                "{name}[{i}] has length {}, expected {width}",
                row.len()
            )));
        }
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(format!(
                "{name}[{i}] has a negative or non-finite entry"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_TOL {
            return Err(Error::invalid(format!("{name}[{i}] sums to {sum}, not 1")));
        }
    }
    Ok(())
}

fn ln_all(v: &[f64]) -> Vec<f64> {
    v.iter().map(|p| p.ln()).collect()
}

impl TryFrom<HmmParams> for DiscreteHmm {
    type Error = Error;

    fn try_from(params: HmmParams) -> Result<Self> {
        let n = params.initial.len();
        if n == 0 {
            return Err(Error::invalid("HMM needs at least one state"));
        }
        if params.observations.is_empty() {
            return Err(Error::invalid("HMM needs at least one observation"));
        }
        check_stochastic("initial", std::slice::from_ref(&params.initial), n)?;
        if params.transition.len() != n {
            return Err(Error::invalid("transition must have one row per state"));
        }
        check_stochastic("transition", &params.transition, n)?;
        if params.emission.len() != n {
            return Err(Error::invalid("emission must have one row per state"));
        }
        let n_symbols = params.emission[0].len();
        if n_symbols == 0 {
            return Err(Error::invalid("emission alphabet is empty"));
        }
        check_stochastic("emission", &params.emission, n_symbols)?;
        if let Some(bad) = params.observations.iter().find(|&&y| y >= n_symbols) {
            return Err(Error::invalid(format!(
                "observation symbol {bad} outside alphabet of size {n_symbols}"
            )));
        }
        let log_initial = ln_all(&params.initial);
        let log_transition = params.transition.iter().map(|r| ln_all(r)).collect();
        let log_emission = params.emission.iter().map(|r| ln_all(r)).collect();
        let forward = forward_pass(&params);
        Ok(Self {
            params,
            log_initial,
            log_transition,
            log_emission,
            forward,
        })
    }
}

impl From<DiscreteHmm> for HmmParams {
    fn from(hmm: DiscreteHmm) -> Self {
        hmm.params
    }
}

fn forward_pass(p: &HmmParams) -> HmmForward {
    let n = p.initial.len();
    let mut filtering = Vec::with_capacity(p.observations.len());
    let mut log_evidence = 0.0;
    let mut prev: Option<Vec<f64>> = None;
    for &y in &p.observations {
        let mut alpha: Vec<f64> = match &prev {
            None => (0..n).map(|s| p.initial[s] * p.emission[s][y]).collect(),
            Some(f) => (0..n)
                .map(|s| {
                    let pred: f64 = (0..n).map(|r| f[r] * p.transition[r][s]).sum();
                    pred * p.emission[s][y]
                })
                .collect(),
        };
        let c: f64 = alpha.iter().sum();
        if c > 0.0 {
            alpha.iter_mut().for_each(|a| *a /= c);
            log_evidence += c.ln();
        } else {
            log_evidence = f64::NEG_INFINITY;
        }
        filtering.push(alpha.clone());
        prev = Some(alpha);
    }
    HmmForward {
        log_evidence,
        filtering,
    }
}

impl DiscreteHmm {
    pub fn new(params: HmmParams) -> Result<Self> {
        Self::try_from(params)
    }

    pub fn params(&self) -> &HmmParams {
        &self.params
    }

    pub fn n_states(&self) -> usize {
        self.params.initial.len()
    }

    pub fn n_steps(&self) -> usize {
        self.params.observations.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.params.emission[0].len()
    }

    pub fn observations(&self) -> &[usize] {
        &self.params.observations
    }

    pub fn initial(&self) -> &[f64] {
        &self.params.initial
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.params.transition
    }

    pub fn emission(&self) -> &[Vec<f64>] {
        &self.params.emission
    }

    pub fn log_initial(&self, s: usize) -> f64 {
        self.log_initial[s]
    }

    pub fn log_transition(&self, from: usize, to: usize) -> f64 {
        self.log_transition[from][to]
    }

    pub fn log_emission(&self, s: usize, t: usize) -> f64 {
        self.log_emission[s][self.params.observations[t]]
    }

    /// Forward filtering: `log p(y)` and the filtering distributions.
    pub fn forward(&self) -> &HmmForward {
        &self.forward
    }

    /// `log p(x_1..x_k, y_1..y_k)` for a prefix of length `k = x.len()`.
    pub fn log_joint_prefix(&self, x: &[usize]) -> Result<f64> {
        if x.is_empty() || x.len() > self.n_steps() {
            return Err(Error::invalid(format!(
                "state prefix of length {} for an HMM with {} steps",
                x.len(),
                self.n_steps()
            )));
        }
        if let Some(bad) = x.iter().find(|&&s| s >= self.n_states()) {
            return Err(Error::invalid(format!(
                "state {bad} outside 0..{}",
                self.n_states()
            )));
        }
        let mut lp = self.log_initial[x[0]] + self.log_emission(x[0], 0);
        for t in 1..x.len() {
            lp += self.log_transition[x[t - 1]][x[t]] + self.log_emission(x[t], t);
        }
        Ok(lp)
    }

    /// Sample a state sequence from `p(x | y)` by forward filtering, backward
    /// sampling. Returns the sequence and its exact log posterior probability.
    pub fn posterior_sample(&self, rng: &mut SimRng) -> Result<(Vec<usize>, f64)> {
        if self.forward.log_evidence == f64::NEG_INFINITY {
            return Err(Error::InvalidState(
                "observations have zero probability".into(),
            ));
        }
        let n = self.n_states();
        let steps = self.n_steps();
        let mut x = vec![0; steps];
        let last = &self.forward.filtering[steps - 1];
        x[steps - 1] = sample_categorical(last, rng);
        let mut log_prob = last[x[steps - 1]].ln();
        for t in (0..steps - 1).rev() {
            let next = x[t + 1];
            let mut w: Vec<f64> = (0..n)
                .map(|s| self.forward.filtering[t][s] * self.params.transition[s][next])
                .collect();
            let z: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= z);
            x[t] = sample_categorical(&w, rng);
            log_prob += w[x[t]].ln();
        }
        Ok((x, log_prob))
    }

    /// Simulate `(states, observations)` of length `n_steps` from the generative process.
    pub fn simulate(
        initial: &[f64],
        transition: &[Vec<f64>],
        emission: &[Vec<f64>],
        n_steps: usize,
        rng: &mut SimRng,
    ) -> (Vec<usize>, Vec<usize>) {
        let mut states: Vec<usize> = Vec::with_capacity(n_steps);
        let mut obs = Vec::with_capacity(n_steps);
        for t in 0..n_steps {
            let s = if t == 0 {
                sample_categorical(initial, rng)
            } else {
                sample_categorical(&transition[states[t - 1]], rng)
            };
            states.push(s);
            obs.push(sample_categorical(&emission[s], rng));
        }
        (states, obs)
    }
}

impl Model for DiscreteHmm {
    type Latent = Vec<usize>;

    fn log_joint(&self, x: &Vec<usize>) -> Result<f64> {
        if x.len() != self.n_steps() {
            return Err(Error::invalid(format!(
                "state sequence has length {}, model has {} steps",
                x.len(),
                self.n_steps()
            )));
        }
        self.log_joint_prefix(x)
    }

    fn exact_log_marginal(&self) -> Option<f64> {
        Some(self.forward.log_evidence)
    }
}

impl ExactPosterior for DiscreteHmm {
    fn log_marginal(&self) -> f64 {
        self.forward.log_evidence
    }

    fn sample_posterior(&self, rng: &mut SimRng) -> (Vec<usize>, f64) {
        self.posterior_sample(rng)
            .expect("exact posterior sampling requires observations with positive probability")
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn random_stochastic(rng: &mut SimRng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| {
                let raw: Vec<f64> = (0..cols).map(|_| rng.random::<f64>() + 0.05).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            })
            .collect()
    }

    pub(crate) fn random_hmm(
        seed: u64,
        n_states: usize,
        n_steps: usize,
        n_symbols: usize,
    ) -> DiscreteHmm {
        let mut rng = stream_rng(seed, 0);
        let initial = random_stochastic(&mut rng, 1, n_states).remove(0);
        let transition = random_stochastic(&mut rng, n_states, n_states);
        let emission = random_stochastic(&mut rng, n_states, n_symbols);
        let observations = (0..n_steps)
            .map(|_| rng.random_range(0..n_symbols))
            .collect();
        DiscreteHmm::new(HmmParams {
            initial,
            transition,
            emission,
            observations,
        })
        .unwrap()
    }

    /// Every state sequence with its joint probability, by direct table products.
    pub(crate) fn enumerate_joint(hmm: &DiscreteHmm) -> Vec<(Vec<usize>, f64)> {
        let p = hmm.params();
        let (n, t) = (hmm.n_states(), hmm.n_steps());
        let mut out = Vec::new();
        for code in 0..n.pow(t as u32) {
            let mut c = code;
            let x: Vec<usize> = (0..t)
                .map(|_| {
                    let s = c % n;
                    c /= n;
                    s
                })
                .collect();
            let mut prob = p.initial[x[0]] * p.emission[x[0]][p.observations[0]];
            for k in 1..t {
                prob *= p.transition[x[k - 1]][x[k]] * p.emission[x[k]][p.observations[k]];
            }
            out.push((x, prob));
        }
        out
    }

    #[test]
    fn single_state_degenerate() {
        let hmm = DiscreteHmm::new(HmmParams {
            initial: vec![1.0],
            transition: vec![vec![1.0]],
            emission: vec![vec![1.0]],
            observations: vec![0, 0, 0],
        })
        .unwrap();
        assert_eq!(hmm.log_joint(&vec![0, 0, 0]).unwrap(), 0.0);
        assert_eq!(hmm.forward().log_evidence, 0.0);
        let mut rng = stream_rng(0, 0);
        let (x, lp) = hmm.posterior_sample(&mut rng).unwrap();
        assert_eq!(x, vec![0, 0, 0]);
        assert_eq!(lp, 0.0);
    }

    #[test]
    fn single_state_evidence_is_sum_of_emissions() {
        let hmm = DiscreteHmm::new(HmmParams {
            initial: vec![1.0],
            transition: vec![vec![1.0]],
            emission: vec![vec![0.2, 0.5, 0.3]],
            observations: vec![0, 2, 1, 1],
        })
        .unwrap();
        let expected = 0.2f64.ln() + 0.3f64.ln() + 0.5f64.ln() + 0.5f64.ln();
        assert!((hmm.forward().log_evidence - expected).abs() < 1e-14);
    }

    #[test]
    fn uniform_hmm_evidence() {
        let emission = vec![vec![0.7, 0.3], vec![0.1, 0.9]];
        let hmm = DiscreteHmm::new(HmmParams {
            initial: vec![0.5, 0.5],
            transition: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            emission: emission.clone(),
            observations: vec![0, 1, 1],
        })
        .unwrap();
        let expected: f64 = [0usize, 1, 1]
            .iter()
            .map(|&y| (0.5 * emission[0][y] + 0.5 * emission[1][y]).ln())
            .sum();
        assert!((hmm.forward().log_evidence - expected).abs() < 1e-14);
    }

    #[test]
    fn two_state_log_joint_is_table_product() {
        let hmm = DiscreteHmm::new(HmmParams {
            initial: vec![0.3, 0.7],
            transition: vec![vec![0.9, 0.1], vec![0.4, 0.6]],
            emission: vec![vec![0.8, 0.2], vec![0.25, 0.75]],
            observations: vec![1, 0],
        })
        .unwrap();
        // x = (1, 0): 0.7 * 0.75 * 0.4 * 0.8
        let expected = (0.7f64 * 0.75 * 0.4 * 0.8).ln();
        assert!((hmm.log_joint(&vec![1, 0]).unwrap() - expected).abs() < 1e-12);
        assert!(hmm.log_joint(&vec![1]).is_err());
        assert!(hmm.log_joint(&vec![1, 2]).is_err());
    }

    #[test]
    fn forward_matches_enumeration() {
        for seed in 0..5 {
            let hmm = random_hmm(seed, 3, 4, 3);
            let total: f64 = enumerate_joint(&hmm).iter().map(|(_, p)| p).sum();
            assert!((hmm.forward().log_evidence - total.ln()).abs() < 1e-10);
        }
        let hmm = random_hmm(99, 4, 6, 5);
        let total: f64 = enumerate_joint(&hmm).iter().map(|(_, p)| p).sum();
        assert!((hmm.forward().log_evidence - total.ln()).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_parameters() {
        let ok = HmmParams {
            initial: vec![0.5, 0.5],
            transition: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            emission: vec![vec![1.0], vec![1.0]],
            observations: vec![0],
        };
        assert!(DiscreteHmm::new(ok.clone()).is_ok());
        let mut bad = ok.clone();
        bad.observations = vec![1];
        assert!(DiscreteHmm::new(bad).is_err());
        let mut bad = ok.clone();
        bad.transition[0] = vec![0.6, 0.5];
        assert!(DiscreteHmm::new(bad).is_err());
        let mut bad = ok;
        bad.initial = vec![1.2, -0.2];
        assert!(DiscreteHmm::new(bad).is_err());
    }

    #[test]
    fn ffbs_log_prob_is_exact() {
        let hmm = random_hmm(3, 3, 5, 4);
        let mut rng = stream_rng(1, 0);
        for _ in 0..50 {
            let (x, lp) = hmm.posterior_sample(&mut rng).unwrap();
            let direct = hmm.log_joint(&x).unwrap() - hmm.forward().log_evidence;
            assert!((lp - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn ffbs_deterministic_model_returns_unique_sequence() {
        let hmm = DiscreteHmm::new(HmmParams {
            initial: vec![1.0, 0.0],
            transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            emission: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            observations: vec![0, 1, 0, 1],
        })
        .unwrap();
        let mut rng = stream_rng(2, 0);
        let (x, lp) = hmm.posterior_sample(&mut rng).unwrap();
        assert_eq!(x, vec![0, 1, 0, 1]);
        assert_eq!(lp, 0.0);
    }

    #[test]
    fn ffbs_chi_square_goodness_of_fit() {
        let hmm = random_hmm(11, 2, 3, 2);
        let joint = enumerate_joint(&hmm);
        let total: f64 = joint.iter().map(|(_, p)| p).sum();
        let n = 100_000;
        let mut counts = vec![0usize; joint.len()];
        let mut rng = stream_rng(5, 0);
        for _ in 0..n {
            let (x, _) = hmm.posterior_sample(&mut rng).unwrap();
            let idx = joint.iter().position(|(s, _)| *s == x).unwrap();
            counts[idx] += 1;
        }
        let chi2: f64 = joint
            .iter()
            .zip(&counts)
            .map(|((_, p), &c)| {
                let e = n as f64 * p / total;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let dist = ChiSquared::new((joint.len() - 1) as f64).unwrap();
        assert!(1.0 - dist.cdf(chi2) > 0.001, "chi2 = {chi2}");
    }

    #[test]
    fn config_round_trip() {
        let hmm = random_hmm(1, 2, 3, 2);
        let json = serde_json::to_string(&hmm).unwrap();
        let back: DiscreteHmm = serde_json::from_str(&json).unwrap();
        assert_eq!(back.params(), hmm.params());
        let bad = r#"{"initial":[1.0],"transition":[[1.0]],"emission":[[1.0]],"observations":[0],"extra":1}"#;
        assert!(serde_json::from_str::<DiscreteHmm>(bad).is_err());
    }
}
