//! Goodness-of-fit statistics.

use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

impl TestResult {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// Pearson chi-square test of observed counts against expected counts.
/// Cells with zero expectation must have zero observations and are skipped.
pub fn chi_square(observed: &[u64], expected: &[f64], ddof: usize) -> TestResult {
    assert_eq!(observed.len(), expected.len());
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &e) in observed.iter().zip(expected) {
        if e <= 0.0 {
            continue;
        }
        let d = o as f64 - e;
        stat += d * d / e;
        cells += 1;
    }
    let df = cells.saturating_sub(1 + ddof).max(1) as f64;
    TestResult {
        statistic: stat,
        p_value: chi_square_sf(stat, df),
    }
}

/// Chi-square test of `counts` against the uniform distribution.
pub fn chi_square_uniform(counts: &[u64]) -> TestResult {
    let total: u64 = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    chi_square(counts, &vec![e; counts.len()], 0)
}

/// Survival function of the chi-square distribution.
pub fn chi_square_sf(stat: f64, df: f64) -> f64 {
    let dist = ChiSquared::new(df).expect("positive degrees of freedom");
    (1.0 - dist.cdf(stat)).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> TestResult {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN samples"));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    TestResult {
        statistic: d,
        p_value: kolmogorov_sf(d, xs.len()),
    }
}

/// Asymptotic survival function of the KS statistic with the Stephens
/// small-sample correction.
pub fn kolmogorov_sf(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Standardised excess of `observed` over a binomial expectation with `n`
/// trials and success probability `p`.
pub fn binomial_z(observed: u64, n: u64, p: f64) -> f64 {
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    if sd == 0.0 {
        return 0.0;
    }
    (observed as f64 - mean) / sd
}

/// `H_n = 1 + 1/2 + … + 1/n`.
pub fn harmonic(n: u64) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_known_value() {
        // scipy.stats.chisquare([10, 20, 30]) -> statistic 10.0, p 0.006737946999085467
        let r = chi_square_uniform(&[10, 20, 30]);
        assert!((r.statistic - 10.0).abs() < 1e-12);
        assert!((r.p_value - 0.006_737_946_999_085_467).abs() < 1e-9);
    }

    #[test]
    fn kolmogorov_tail() {
        // large lambda: sf ~ 2 exp(-2 lambda^2)
        let n = 10_000;
        let d = 1.36 / (n as f64).sqrt();
        let p = kolmogorov_sf(d, n);
        assert!((p - 0.05).abs() < 0.005, "{p}");
    }

    #[test]
    fn ks_detects_wrong_distribution() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).p_value > 0.99);
        assert!(ks_one_sample(&xs, |x| (x * x).clamp(0.0, 1.0)).p_value < 1e-6);
    }

    #[test]
    fn harmonic_numbers() {
        assert_eq!(harmonic(1), 1.0);
        assert!((harmonic(10) - 2.928_968_253_968_254).abs() < 1e-12);
    }
}
