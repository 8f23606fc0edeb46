//! Exponential fitting, Kolmogorov-Smirnov tests and proportionality scoring.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coefficient of the asymptotic KS critical value at the 1% level.
pub const KS_C_1PCT: f64 = 1.63;

pub const MIN_FIT_SAMPLES: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample {index} is not positive ({value})")]
    NonPositive { index: usize, value: f64 },
    #[error("length mismatch: {0} powers vs {1} rewards")]
    LengthMismatch(usize, usize),
    #[error("totals must be positive")]
    ZeroTotal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub rate: f64,
    pub ks_statistic: f64,
    pub sample_count: usize,
}

impl FitResult {
    pub fn ks_critical(&self) -> f64 {
        ks_critical_one(self.sample_count)
    }

    pub fn passes_ks(&self) -> bool {
        self.ks_statistic < self.ks_critical()
    }
}

pub fn ks_critical_one(n: usize) -> f64 {
    KS_C_1PCT / (n as f64).sqrt()
}

pub fn ks_critical_two(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    KS_C_1PCT * ((n + m) / (n * m)).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One-sample KS statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let xs = sorted(samples);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample KS statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Maximum-likelihood exponential fit plus KS distance to the fitted CDF.
pub fn fit_exponential(samples: &[f64]) -> Result<FitResult, StatsError> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(StatsError::TooFewSamples {
            needed: MIN_FIT_SAMPLES,
            got: samples.len(),
        });
    }
    if let Some((index, &value)) = samples.iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
        return Err(StatsError::NonPositive { index, value });
    }
    let rate = 1.0 / mean(samples);
    Ok(FitResult {
        rate,
        ks_statistic: ks_statistic(samples, |x| 1.0 - (-rate * x).exp()),
        sample_count: samples.len(),
    })
}

/// Largest relative gap between reward share and power share, over entries
/// holding at least 3% of the power.
pub fn proportionality_score(power: &[f64], reward: &[f64]) -> Result<f64, StatsError> {
    if power.len() != reward.len() {
        return Err(StatsError::LengthMismatch(power.len(), reward.len()));
    }
    let (tp, tr): (f64, f64) = (power.iter().sum(), reward.iter().sum());
    if !(tp > 0.0 && tr > 0.0) {
        return Err(StatsError::ZeroTotal);
    }
    Ok(power
        .iter()
        .zip(reward)
        .filter(|(p, _)| **p / tp >= 0.03)
        .map(|(p, r)| {
            let ps = p / tp;
            (r / tr - ps).abs() / ps
        })
        .fold(0.0, f64::max))
}

/// Counts of `xs` per unit-width bin `floor(x)`, from 0 to the max bin.
pub fn integer_histogram(xs: impl IntoIterator<Item = f64>) -> Vec<u64> {
    let mut bins: Vec<u64> = Vec::new();
    for x in xs {
        let b = x.floor().max(0.0) as usize;
        if b >= bins.len() {
            bins.resize(b + 1, 0);
        }
        bins[b] += 1;
    }
    bins
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp};

    fn exp_samples(rate: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Exp::new(rate).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn fit_recovers_rate() {
        let fit = fit_exponential(&exp_samples(0.05, 100_000, 1)).unwrap();
        assert!((0.0495..=0.0505).contains(&fit.rate), "{}", fit.rate);
        assert!(fit.passes_ks());
    }

    #[test]
    fn fit_recovers_rate_across_magnitudes() {
        for (i, rate) in [1e-2, 1e-1, 1.0, 10.0, 100.0].into_iter().enumerate() {
            let fit = fit_exponential(&exp_samples(rate, 100_000, 10 + i as u64)).unwrap();
            assert!((fit.rate / rate - 1.0).abs() < 0.01, "{rate}: {}", fit.rate);
        }
    }

    #[test]
    fn constant_samples_rejected_by_ks() {
        let fit = fit_exponential(&[5.0; 1000]).unwrap();
        assert!(fit.ks_statistic > 10.0 * fit.ks_critical());
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            fit_exponential(&[1.0; 29]),
            Err(StatsError::TooFewSamples { got: 29, .. })
        ));
        let mut xs = vec![1.0; 40];
        xs[3] = 0.0;
        assert!(matches!(fit_exponential(&xs), Err(StatsError::NonPositive { index: 3, .. })));
    }

    #[test]
    fn ks_against_hand_computed() {
        // uniform CDF on [0,1]; samples 0.1, 0.5, 0.9
        // D = max(0.1, 1/3-0.1, 0.5-1/3, 2/3-0.5, 0.9-2/3, 1-0.9) = 0.2333..
        let d = ks_statistic(&[0.9, 0.1, 0.5], |x| x);
        assert!((d - (0.9 - 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn two_sample_ks() {
        let a = exp_samples(1.0, 20_000, 2);
        let b = exp_samples(1.0, 20_000, 3);
        assert!(ks_two_sample(&a, &b) < ks_critical_two(a.len(), b.len()));
        let c = exp_samples(1.5, 20_000, 4);
        assert!(ks_two_sample(&a, &c) > ks_critical_two(a.len(), c.len()));
        assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn proportionality_examples() {
        assert_eq!(proportionality_score(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 0.0);
        // power shares 1/4 each; first account takes 2/5 of the reward
        let s = proportionality_score(&[1.0; 4], &[2.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((s - 0.6).abs() < 1e-12);
        // one account at double its fair share
        let s = proportionality_score(&[10.0, 90.0], &[20.0, 80.0]).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        // shares under 3% are ignored
        let s = proportionality_score(&[1.0, 99.0], &[50.0, 50.0]).unwrap();
        assert!(s < 0.5);
        assert!(proportionality_score(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn std_uses_bessel() {
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn histogram_bins_by_floor() {
        assert_eq!(integer_histogram([0.2, 0.9, 2.5]), vec![2, 0, 1]);
    }

    proptest::proptest! {
        #[test]
        fn ks_permutation_invariant(mut xs in proptest::collection::vec(0.001f64..100.0, 30..200), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let a = fit_exponential(&xs).unwrap().ks_statistic;
            xs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let b = fit_exponential(&xs).unwrap().ks_statistic;
            proptest::prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
