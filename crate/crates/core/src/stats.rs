//! Interval estimates and two-sample tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.575_829_303_548_900_4;

/// Wilson score interval for `successes` out of `trials` at quantile `z`.
pub fn wilson(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        let (ci_low, ci_high) = wilson(successes, trials, Z99);
        let estimate = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        Self {
            successes,
            trials,
            estimate,
            ci_low: ci_low.min(estimate),
            ci_high: ci_high.max(estimate),
        }
    }

    /// Whether `p` is within `k` binomial standard deviations (computed at
    /// `p`) of the estimate.
    pub fn within_sigmas(&self, p: f64, k: f64) -> bool {
        let sd = (p * (1.0 - p) / self.trials as f64).sqrt();
        (self.estimate - p).abs() <= k * sd
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Two-sample chi-square homogeneity test on paired category counts.
///
/// Categories whose combined count is below `min_pooled` are merged into a
/// single bin before the statistic is formed.
pub fn chi_square_two_sample(pairs: &[(u64, u64)], min_pooled: u64) -> ChiSquareOutcome {
    let n1: u64 = pairs.iter().map(|p| p.0).sum();
    let n2: u64 = pairs.iter().map(|p| p.1).sum();
    let mut bins: Vec<(u64, u64)> = Vec::new();
    let mut pooled = (0u64, 0u64);
    for &(a, b) in pairs {
        if a + b >= min_pooled {
            bins.push((a, b));
        } else {
            pooled.0 += a;
            pooled.1 += b;
        }
    }
    if pooled.0 + pooled.1 > 0 {
        bins.push(pooled);
    }
    if bins.len() < 2 || n1 == 0 || n2 == 0 {
        return ChiSquareOutcome {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
        };
    }
    let (f1, f2) = (n1 as f64, n2 as f64);
    let k1 = (f2 / f1).sqrt();
    let k2 = (f1 / f2).sqrt();
    let statistic: f64 = bins
        .iter()
        .map(|&(a, b)| {
            let d = k1 * a as f64 - k2 * b as f64;
            d * d / (a + b) as f64
        })
        .sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    ChiSquareOutcome {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
    }
}

/// Total-variation distance between two empirical distributions.
pub fn total_variation(pairs: &[(u64, u64)]) -> f64 {
    let n1: u64 = pairs.iter().map(|p| p.0).sum();
    let n2: u64 = pairs.iter().map(|p| p.1).sum();
    if n1 == 0 || n2 == 0 {
        return 0.0;
    }
    0.5 * pairs
        .iter()
        .map(|&(a, b)| (a as f64 / n1 as f64 - b as f64 / n2 as f64).abs())
        .sum::<f64>()
}

/// One-sample Kolmogorov-Smirnov test against Uniform(0, 1). Returns
/// `(D, p)` using the asymptotic Kolmogorov distribution with the
/// Stephens small-sample correction.
pub fn ks_uniform(samples: &[f64]) -> (f64, f64) {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0f64, f64::max);
    let sn = n.sqrt();
    (d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d))
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..200 {
        let term = (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
