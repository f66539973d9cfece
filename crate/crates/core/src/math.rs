//! Log-space arithmetic and small statistics helpers.

use rand::Rng;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// `log(sum(exp(v)))` with a max shift. All `-inf` input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log((1/M) sum(exp(v)))` with a max shift; a constant list returns its value exactly.
pub fn log_mean_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("log_mean_exp of an empty list"));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Ok(max);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + (sum / values.len() as f64).ln())
}

/// Normalized weights `exp(v - logsumexp(v))`. `-inf` entries map to exactly 0.
pub fn normalize_log_weights(log_weights: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_weights);
    log_weights
        .iter()
        .map(|&w| {
            if w == f64::NEG_INFINITY {
                0.0
            } else {
                (w - lse).exp()
            }
        })
        .collect()
}

/// Inverse-CDF draw from a categorical given by unnormalized log weights.
///
/// Returns `None` if every weight is `-inf`. A single-entry vector returns
/// index 0 without consuming randomness.
pub fn sample_log_categorical(log_weights: &[f64], rng: &mut SimRng) -> Option<usize> {
    LogCategorical::new(log_weights).map(|c| c.sample(rng))
}

/// Inverse-CDF draw from normalized probabilities, strict comparison `u < cdf`.
pub fn sample_categorical(probs: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let mut cdf = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cdf += p;
        if p > 0.0 && u < cdf {
            return i;
        }
    }
    // rounding left the cdf just short of 1
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Categorical over unnormalized log weights, prepared for repeated draws.
///
/// Each draw consumes the same randomness and returns the same index as
/// [`sample_categorical`] on the normalized weights, in `O(log n)`.
#[derive(Debug, Clone)]
pub struct LogCategorical {
    cdf: Vec<f64>,
    last_positive: usize,
}

impl LogCategorical {
    /// `None` if every weight is `-inf`.
    pub fn new(log_weights: &[f64]) -> Option<Self> {
        let probs = normalize_log_weights(log_weights);
        let last_positive = probs.iter().rposition(|&p| p > 0.0)?;
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect();
        Some(Self { cdf, last_positive })
    }

    pub fn sample(&self, rng: &mut SimRng) -> usize {
        if self.cdf.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        // the first index with u < cdf has positive mass since the cdf is nondecreasing
        let i = self.cdf.partition_point(|&c| c <= u);
        if i < self.cdf.len() {
            i
        } else {
            self.last_positive
        }
    }
}

/// Uniform index in `0..n`; consumes no randomness when `n == 1`.
pub fn sample_uniform_index(n: usize, rng: &mut SimRng) -> usize {
    if n == 1 {
        0
    } else {
        rng.random_range(0..n)
    }
}

pub fn normal_log_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * PI).ln()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// Standard error of the sample mean.
pub fn std_error(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (sample_variance(values) / values.len() as f64).sqrt()
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at level `alpha`.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn log_mean_exp_edge_cases() {
        assert_eq!(log_mean_exp(&[1.5]).unwrap(), 1.5);
        assert!((log_mean_exp(&[-3.0, -3.0, -3.0]).unwrap() + 3.0).abs() < 1e-15);
        assert_eq!(
            log_mean_exp(&[f64::NEG_INFINITY; 3]).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(log_mean_exp(&[]).is_err());
        let v = log_mean_exp(&[f64::NEG_INFINITY, 0.0]).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_mean_exp_no_overflow() {
        let v = log_mean_exp(&[1000.0, 1000.0]).unwrap();
        assert!((v - 1000.0).abs() < 1e-12);
        let v = log_mean_exp(&[-1000.0, -1000.0 + 2f64.ln()]).unwrap();
        assert!((v - (-1000.0 + 1.5f64.ln())).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn log_mean_exp_shift_invariant(
            v in prop::collection::vec(-30.0f64..30.0, 1..20),
            a in -50.0f64..50.0,
        ) {
            let shifted: Vec<f64> = v.iter().map(|x| x + a).collect();
            let lhs = log_mean_exp(&shifted).unwrap();
            let rhs = log_mean_exp(&v).unwrap() + a;
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn log_mean_exp_matches_direct(v in prop::collection::vec(-20.0f64..20.0, 1..20)) {
            let direct = (v.iter().map(|x| x.exp()).sum::<f64>() / v.len() as f64).ln();
            prop_assert!((log_mean_exp(&v).unwrap() - direct).abs() < 1e-12);
        }

        #[test]
        fn prepared_categorical_matches_linear_scan(
            v in prop::collection::vec(prop_oneof![Just(f64::NEG_INFINITY), -10.0f64..10.0], 1..12),
            seed in any::<u64>(),
        ) {
            let probs = normalize_log_weights(&v);
            if let Some(c) = LogCategorical::new(&v) {
                let (mut a, mut b) = (stream_rng(seed, 0), stream_rng(seed, 0));
                for _ in 0..50 {
                    let expect = if v.len() == 1 { 0 } else { sample_categorical(&probs, &mut b) };
                    prop_assert_eq!(c.sample(&mut a), expect);
                }
            } else {
                prop_assert!(v.iter().all(|&w| w == f64::NEG_INFINITY));
            }
        }
    }

    #[test]
    fn categorical_never_picks_zero_weight() {
        let mut rng = stream_rng(1, 0);
        let lw = [f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, 1.0];
        for _ in 0..10_000 {
            let i = sample_log_categorical(&lw, &mut rng).unwrap();
            assert!(i == 1 || i == 3);
        }
        assert_eq!(
            sample_log_categorical(&[f64::NEG_INFINITY; 2], &mut rng),
            None
        );
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = stream_rng(2, 0);
        let probs = [0.1, 0.6, 0.3];
        let lw: Vec<f64> = probs.iter().map(|p: &f64| p.ln() + 4.0).collect();
        let n = 200_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_log_categorical(&lw, &mut rng).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.005);
        }
    }

    #[test]
    fn single_entry_draws_nothing() {
        let mut a = stream_rng(3, 0);
        let mut b = stream_rng(3, 0);
        assert_eq!(sample_log_categorical(&[-2.0], &mut a), Some(0));
        assert_eq!(sample_uniform_index(1, &mut a), 0);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn ks_detects_shift_only() {
        let mut rng = stream_rng(4, 0);
        let a: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let c: Vec<f64> = b.iter().map(|x| x + 0.2).collect();
        let crit = ks_critical_value(0.001, 2000, 2000);
        assert!(ks_statistic(&a, &b) < crit);
        assert!(ks_statistic(&a, &c) > crit);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
    }
}
